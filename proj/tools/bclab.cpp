// bclab: configuration-driven laboratory for boundary-control experiments on
// a 1-D interval with a rank-n Hermitian bundle.
#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "bcl/accept.hpp"
#include "bcl/blago.hpp"
#include "bcl/config.hpp"
#include "bcl/cylinder.hpp"
#include "bcl/gauge.hpp"
#include "bcl/recon.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "bclab 1.0.0";

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    bool deterministic = false;
    bool oracle = false;
};

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bcl::ExperimentConfig load(const GlobalArgs& g, std::string& raw_text) {
    std::ifstream in(g.config_path);
    if (!in) throw std::invalid_argument("config: cannot open " + g.config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    raw_text = buf.str();
    bcl::ExperimentConfig cfg = bcl::parse_config(raw_text);
    if (g.seed_set) cfg.seed = g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    return cfg;
}

int effective_workers(const GlobalArgs& g) {
    if (g.deterministic) return 1;
    if (g.workers > 0) return g.workers;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

void finish_manifest(const bcl::ExperimentConfig& cfg, const std::string& raw_text,
                     bcl::RunManifest m) {
    m.config_hash = bcl::config_hash(raw_text);
    m.version = kVersion;
    bcl::write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), m);
}

// ---- frame persistence: text header, blank line, complex128 LE payload ----

void write_complex(std::ofstream& out, const bcl::Mat& m) {
    std::vector<double> row(2 * m.cols());
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            row[2 * c] = m(r, c).real();
            row[2 * c + 1] = m(r, c).imag();
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
}

bcl::Mat read_complex(std::ifstream& in, int rows, int cols) {
    bcl::Mat m(rows, cols);
    std::vector<double> row(2 * cols);
    for (int r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw std::runtime_error("frame blob: truncated payload");
        for (int c = 0; c < cols; ++c) m(r, c) = bcl::cplx(row[2 * c], row[2 * c + 1]);
    }
    return m;
}

void write_frame(const std::string& path, const bcl::FrameData& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "bclab-frame 1\n";
    out.precision(17);
    out << "L " << f.grid.L << "\nnx " << f.grid.nx << "\nhorizon " << f.tg.horizon << "\nnt "
        << f.tg.nt << "\nrank " << f.n << "\nnq " << f.nq << "\nntau " << f.ntau
        << "\ndtau_steps " << f.dtau_steps << "\nnodes";
    for (const auto& loc : f.nodes)
        if (loc.ok) out << ' ' << loc.node;
    out << "\n\n";
    write_complex(out, f.r_left);
    write_complex(out, f.r_right);
    write_complex(out, f.end_mismatch);
    for (const auto& loc : f.nodes)
        if (loc.ok) write_complex(out, loc.r);
    if (!out) throw std::runtime_error("write failed for " + path);
}

bcl::FrameData read_frame(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "bclab-frame 1")
        throw std::runtime_error("frame blob: bad magic in " + path);
    bcl::FrameData f;
    double L = 0.0, horizon = 0.0;
    int nx = 0, nt = 0;
    std::vector<int> nodes;
    while (std::getline(in, line) && !line.empty()) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "L") ls >> L;
        else if (key == "nx") ls >> nx;
        else if (key == "horizon") ls >> horizon;
        else if (key == "nt") ls >> nt;
        else if (key == "rank") ls >> f.n;
        else if (key == "nq") ls >> f.nq;
        else if (key == "ntau") ls >> f.ntau;
        else if (key == "dtau_steps") ls >> f.dtau_steps;
        else if (key == "nodes") {
            int v;
            while (ls >> v) nodes.push_back(v);
        } else {
            throw std::runtime_error("frame blob: unknown header key '" + key + "'");
        }
    }
    f.grid = bcl::Grid1D(L, nx);
    f.tg = bcl::TimeGrid(horizon, nt);
    int cols = f.nq * f.ntau;
    f.r_left = read_complex(in, f.n, cols);
    f.r_right = read_complex(in, f.n, cols);
    f.end_mismatch = read_complex(in, f.n, f.n);
    for (int node : nodes) {
        bcl::Localizer loc;
        loc.node = node;
        loc.x = f.grid.x(node);
        loc.ok = true;
        loc.r = read_complex(in, f.n, cols);
        f.nodes.push_back(std::move(loc));
    }
    return f;
}

// ---- shared pipeline pieces ------------------------------------------------

bcl::DtnOperator synth_with_noise(const bcl::ExperimentConfig& cfg, int workers) {
    bcl::ConnectionField a = cfg.make_connection();
    bcl::PotentialField v = cfg.make_potential();
    bcl::DtnOperator dtn = bcl::synthesize_dtn(a, v, cfg.gamma, cfg.timegrid(), workers);
    if (cfg.noise_level > 0.0) {
        std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
        std::normal_distribution<double> gauss(0.0, 1.0);
        double scale = cfg.noise_level * dtn.m.cwiseAbs().mean();
        for (int c = 0; c < dtn.m.cols(); ++c)
            for (int r = 0; r < dtn.m.rows(); ++r)
                dtn.m(r, c) += scale * bcl::cplx(gauss(rng), gauss(rng));
    }
    return dtn;
}

json localizer_json(const bcl::Localizer& loc) {
    json j;
    j["node"] = loc.node;
    j["x"] = loc.x;
    j["near"] = bcl::endpoint_name(loc.near);
    j["s"] = loc.s;
    j["ok"] = loc.ok;
    if (!loc.ok) j["error"] = loc.error;
    j["gram_dev"] = loc.gram_dev;
    json slots = json::array();
    for (const auto& s : loc.slots) {
        json sj;
        sj["k"] = s.k;
        sj["alpha"] = s.alpha;
        sj["leakage"] = s.leakage;
        sj["volume"] = s.vol;
        sj["sources"] = s.big_ids.size();
        slots.push_back(sj);
    }
    j["slots"] = slots;
    return j;
}

// ---- subcommands -----------------------------------------------------------

int cmd_simulate(const GlobalArgs& g) {
    std::string raw;
    bcl::ExperimentConfig cfg = load(g, raw);
    fs::create_directories(cfg.out_dir);
    auto t0 = std::chrono::steady_clock::now();
    bcl::ConnectionField a = cfg.make_connection();
    bcl::PotentialField v = cfg.make_potential();
    bcl::TimeGrid tg = cfg.timegrid();
    bcl::BoundarySignal src = bcl::pulse_signal(cfg.gamma.front(), tg, cfg.rank, 0,
                                                tg.T() - cfg.ref_offsets.front(), cfg.ref_width);
    bcl::WaveField w = bcl::solve_ibvp(a, v, {src}, tg);
    bcl::SectionField wf = bcl::final_state(w);

    std::string csv = (fs::path(cfg.out_dir) / "final_state.csv").string();
    std::ofstream out(csv);
    out << "x";
    for (int k = 0; k < cfg.rank; ++k) out << ",Re_u" << k << ",Im_u" << k;
    out << "\n";
    out.precision(17);
    for (int i = 0; i < cfg.grid.nx; ++i) {
        out << cfg.grid.x(i);
        for (int k = 0; k < cfg.rank; ++k)
            out << ',' << wf.values[i](k).real() << ',' << wf.values[i](k).imag();
        out << "\n";
    }

    bcl::RunManifest m;
    m.artifacts = {csv};
    m.timings["simulate"] = now_seconds(t0);
    m.metrics["final_energy"] = bcl::energy(w, a, v, tg.mid());
    finish_manifest(cfg, raw, m);
    return 0;
}

int cmd_synthesize(const GlobalArgs& g) {
    std::string raw;
    bcl::ExperimentConfig cfg = load(g, raw);
    fs::create_directories(cfg.out_dir);
    auto t0 = std::chrono::steady_clock::now();
    bcl::DtnOperator dtn = synth_with_noise(cfg, effective_workers(g));
    std::string path = (fs::path(cfg.out_dir) / "dtn.bin").string();
    bcl::write_dtn(path, dtn);
    bcl::RunManifest m;
    m.artifacts = {path};
    m.timings["synthesize_dtn"] = now_seconds(t0);
    m.metrics["dtn_norm"] = dtn.m.norm();
    finish_manifest(cfg, raw, m);
    return 0;
}

int cmd_blago(const GlobalArgs& g) {
    std::string raw;
    bcl::ExperimentConfig cfg = load(g, raw);
    fs::create_directories(cfg.out_dir);
    auto t0 = std::chrono::steady_clock::now();
    bcl::DtnOperator dtn = synth_with_noise(cfg, effective_workers(g));
    bcl::ConnectingOperator conn(dtn);
    bcl::ReferenceSet refs = bcl::make_reference_set(dtn, cfg.ref_offsets, cfg.ref_width,
                                                     cfg.ntau, cfg.dtau_steps);
    bcl::GramTable table = bcl::gram_table(conn, refs.cols);

    json rep;
    rep["sources"] = refs.cols.cols();
    rep["gram_asymmetry"] = table.asymmetry;
    rep["gram_clipped"] = table.clipped;
    rep["clip_warning"] = table.clip_warning;

    if (g.oracle) {
        bcl::ConnectionField a = cfg.make_connection();
        bcl::PotentialField v = cfg.make_potential();
        double worst = 0.0;
        for (int q = 0; q < std::min(refs.nq, 4); ++q)
            for (int p = 0; p <= q; ++p) {
                bcl::WaveField wq = bcl::solve_ibvp(a, v, {refs.sources[q]}, dtn.tg);
                bcl::WaveField wp = bcl::solve_ibvp(a, v, {refs.sources[p]}, dtn.tg);
                bcl::cplx oracle =
                    bcl::section_inner(bcl::final_state(wp), bcl::final_state(wq));
                bcl::cplx data = table.g(refs.col(p, 0), refs.col(q, 0));
                double scale = std::sqrt(std::abs(table.g(refs.col(p, 0), refs.col(p, 0)) *
                                                  table.g(refs.col(q, 0), refs.col(q, 0)))) +
                               1e-300;
                worst = std::max(worst, std::abs(data - oracle) / scale);
            }
        rep["oracle_rel_error"] = worst;
    }

    std::string path = (fs::path(cfg.out_dir) / "blago.json").string();
    write_json(path, rep);
    bcl::RunManifest m;
    m.artifacts = {path};
    m.timings["blago_check"] = now_seconds(t0);
    m.metrics["gram_asymmetry"] = table.asymmetry;
    finish_manifest(cfg, raw, m);
    if (table.clip_warning) {
        std::cerr << "blago-check: Gram clipping beyond quadrature tolerance\n";
        return 3;
    }
    return 0;
}

struct PipelineOut {
    bcl::FrameData frame;
    std::vector<bcl::Localizer>* nodes = nullptr;
};

bcl::FrameData run_control_pipeline(const bcl::ExperimentConfig& cfg, int workers,
                                    bcl::RunManifest& m) {
    auto t0 = std::chrono::steady_clock::now();
    bcl::DtnOperator dtn = synth_with_noise(cfg, workers);
    m.timings["synthesize_dtn"] = now_seconds(t0);
    t0 = std::chrono::steady_clock::now();
    bcl::ConnectingOperator conn(dtn);
    bcl::SourceBasis basis = bcl::make_hat_basis(dtn, cfg.basis_stride, 0.0);
    bcl::ReferenceSet refs = bcl::make_reference_set(dtn, cfg.ref_offsets, cfg.ref_width,
                                                     cfg.ntau, cfg.dtau_steps);
    bcl::GramData gd = bcl::make_gram_data(conn, basis, refs);
    m.timings["gram"] = now_seconds(t0);
    t0 = std::chrono::steady_clock::now();
    std::vector<int> nodes = bcl::default_evaluation_nodes(cfg.grid, dtn.tg,
                                                           cfg.schedule.ks.back(),
                                                           cfg.node_stride);
    bcl::FrameData frame = bcl::build_frame(gd, nodes, cfg.schedule);
    m.timings["frame"] = now_seconds(t0);
    return frame;
}

int cmd_localize(const GlobalArgs& g) {
    std::string raw;
    bcl::ExperimentConfig cfg = load(g, raw);
    fs::create_directories(cfg.out_dir);
    bcl::RunManifest m;
    bcl::FrameData frame = run_control_pipeline(cfg, effective_workers(g), m);

    json rep = json::array();
    int ok_count = 0;
    for (const auto& loc : frame.nodes) {
        rep.push_back(localizer_json(loc));
        if (loc.ok) ++ok_count;
    }
    std::string jpath = (fs::path(cfg.out_dir) / "localizers.json").string();
    write_json(jpath, rep);
    std::string fpath = (fs::path(cfg.out_dir) / "frame.bin").string();
    write_frame(fpath, frame);

    m.artifacts = {jpath, fpath};
    m.metrics["nodes_ok"] = ok_count;
    m.metrics["nodes_total"] = static_cast<double>(frame.nodes.size());
    finish_manifest(cfg, raw, m);
    if (ok_count == 0) {
        std::cerr << "localize: no node produced a usable localizer\n";
        return 3;
    }
    return 0;
}

int cmd_reconstruct(const GlobalArgs& g) {
    std::string raw;
    bcl::ExperimentConfig cfg = load(g, raw);
    fs::create_directories(cfg.out_dir);
    bcl::RunManifest m;

    bcl::WaveTable table;
    std::string fpath = (fs::path(cfg.out_dir) / "frame.bin").string();
    if (g.oracle) {
        bcl::ConnectionField a = cfg.make_connection();
        bcl::PotentialField v = cfg.make_potential();
        bcl::TimeGrid tg = cfg.timegrid();
        bcl::DtnOperator layout;
        layout.grid = cfg.grid;
        layout.tg = tg;
        layout.gamma = cfg.gamma;
        layout.n = cfg.rank;
        bcl::ReferenceSet refs = bcl::make_reference_set(layout, cfg.ref_offsets, cfg.ref_width,
                                                         cfg.ntau, cfg.dtau_steps);
        std::vector<int> nodes = bcl::default_evaluation_nodes(cfg.grid, tg,
                                                               cfg.schedule.ks.back(),
                                                               cfg.node_stride);
        table = bcl::oracle_wave_table(a, v, refs, tg, nodes);
    } else if (fs::exists(fpath)) {
        table = bcl::assemble_wave_table(read_frame(fpath));
    } else {
        table = bcl::assemble_wave_table(run_control_pipeline(cfg, effective_workers(g), m));
    }

    auto t0 = std::chrono::steady_clock::now();
    bcl::ReconResult rec = bcl::recover_fields(table);
    bcl::ConnectionField a = cfg.make_connection();
    bcl::PotentialField v = cfg.make_potential();
    bcl::ReconReport rep = bcl::recon_report(rec, &a, &v);
    m.timings["reconstruct"] = now_seconds(t0);

    std::string csv = (fs::path(cfg.out_dir) / "recon.csv").string();
    bcl::write_recon_csv(csv, rec);
    json sum;
    sum["nodes"] = rec.nodes.size();
    sum["max_residual"] = rep.max_residual;
    sum["max_condition"] = rep.max_cond;
    sum["max_v_herm_dev"] = rep.max_v_herm_dev;
    sum["orbit_distance"] = rep.orbit.distance;
    sum["orbit_wilson_term"] = rep.orbit.wilson_term;
    sum["orbit_potential_term"] = rep.orbit.potential_term;
    sum["orbit_connection_term"] = rep.orbit.connection_term;
    sum["a_direct_error"] = rep.a_direct_err;
    sum["v_direct_error"] = rep.v_direct_err;
    std::string jpath = (fs::path(cfg.out_dir) / "recon.json").string();
    write_json(jpath, sum);

    m.artifacts = {csv, jpath};
    m.metrics["orbit_distance"] = rep.orbit.distance;
    m.metrics["max_residual"] = rep.max_residual;
    finish_manifest(cfg, raw, m);
    return 0;
}

int cmd_gauge_compare(const GlobalArgs& g, const std::string& a_path, const std::string& va_path,
                      const std::string& b_path, const std::string& vb_path) {
    bcl::MatrixField ar = bcl::read_matrix_field_csv(a_path);
    bcl::MatrixField var = bcl::read_matrix_field_csv(va_path);
    bcl::MatrixField br = bcl::read_matrix_field_csv(b_path);
    bcl::MatrixField vbr = bcl::read_matrix_field_csv(vb_path);
    bcl::ConnectionField a = bcl::ConnectionField::make(ar.grid, ar.n, ar.coeff);
    bcl::PotentialField va = bcl::PotentialField::make(var.grid, var.n, var.coeff);
    bcl::ConnectionField b = bcl::ConnectionField::make(br.grid, br.n, br.coeff);
    bcl::PotentialField vb = bcl::PotentialField::make(vbr.grid, vbr.n, vbr.coeff);

    bcl::GaugeDecision dec = bcl::gauge_equivalent(a, va, b, vb);
    std::string out_dir = g.out_dir.empty() ? "out" : g.out_dir;
    fs::create_directories(out_dir);
    json j;
    j["equivalent"] = dec.equivalent;
    j["distance"] = dec.distance;
    j["wilson_term"] = dec.wilson_term;
    j["potential_term"] = dec.potential_term;
    j["connection_term"] = dec.connection_term;
    std::string jpath = (fs::path(out_dir) / "gauge.json").string();
    write_json(jpath, j);
    std::string wpath = (fs::path(out_dir) / "witness.csv").string();
    bcl::write_matrix_field_csv(wpath, dec.witness);
    std::cout << (dec.equivalent ? "equivalent" : "inequivalent") << " distance "
              << dec.distance << "\n";
    return 0;
}

int cmd_cylinder(const GlobalArgs& g) {
    std::string raw;
    bcl::ExperimentConfig cfg = load(g, raw);
    fs::create_directories(cfg.out_dir);
    auto t0 = std::chrono::steady_clock::now();
    bcl::ConnectionField a0 = cfg.make_connection();
    bcl::TransversalOperator op = bcl::make_transversal(a0);
    double lam1 = bcl::dirichlet_spectrum(op, 1)(0);
    bcl::Vec h = bcl::Vec::Zero(2 * cfg.rank);
    h(0) = 1.0;
    bcl::CylinderReport rep =
        bcl::cylinder_relation_check(op, 0.5 * lam1, {0.0, 0.5, 1.0, 2.0}, h);

    json j;
    j["lambda1"] = rep.lambda1;
    j["max_cross_gap"] = rep.max_cross_gap;
    j["max_route_gap"] = rep.max_route_gap;
    j["max_pde_residual"] = rep.max_pde_residual;
    j["ok"] = rep.ok;
    std::string jpath = (fs::path(cfg.out_dir) / "cylinder.json").string();
    write_json(jpath, j);

    bcl::RunManifest m;
    m.artifacts = {jpath};
    m.timings["cylinder_check"] = now_seconds(t0);
    m.metrics["lambda1"] = rep.lambda1;
    finish_manifest(cfg, raw, m);
    return rep.ok ? 0 : 3;
}

int cmd_accept(const GlobalArgs& g, bool quick) {
    bcl::AcceptOptions opt;
    opt.workers = effective_workers(g);
    opt.quick = quick;
    std::vector<bcl::CriterionResult> results = bcl::run_acceptance(opt, std::cerr);
    bool ok = bcl::report_acceptance(results, std::cout);
    if (!g.out_dir.empty()) {
        fs::create_directories(g.out_dir);
        json j = json::array();
        for (const auto& r : results) {
            json rj;
            rj["name"] = r.name;
            rj["pass"] = r.pass;
            rj["skipped"] = r.skipped;
            rj["metric"] = r.metric;
            rj["detail"] = r.detail;
            j.push_back(rj);
        }
        write_json((fs::path(g.out_dir) / "acceptance.json").string(), j);
    }
    return ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) +
                 " - boundary control laboratory (env override prefix: BCLAB_)"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "experiment config (JSON)")
        ->envname("BCLAB_CONFIG");
    app.add_option("--out", g.out_dir, "output directory override")->envname("BCLAB_OUT");
    auto* seed_opt =
        app.add_option("--seed", g.seed, "seed override")->envname("BCLAB_SEED");
    app.add_option("--workers", g.workers, "worker threads (0 = all cores)")
        ->envname("BCLAB_WORKERS");
    app.add_flag("--deterministic", g.deterministic, "force sequential execution");
    app.add_flag("--oracle", g.oracle, "enable interior-field cross-checks");

    auto* sim = app.add_subcommand("simulate", "forward solve, final state CSV");
    auto* syn = app.add_subcommand("synthesize-dtn", "DtN operator synthesis");
    auto* bla = app.add_subcommand("blago-check", "Blagovestchenskii Gram diagnostics");
    auto* locz = app.add_subcommand("localize", "localizer/frame construction");
    auto* recc = app.add_subcommand("reconstruct", "connection/potential recovery");
    auto* gcmp = app.add_subcommand("gauge-compare", "gauge orbit decision on field files");
    std::string pa, pva, pb, pvb;
    gcmp->add_option("--a", pa, "connection A CSV")->required();
    gcmp->add_option("--va", pva, "potential V_A CSV")->required();
    gcmp->add_option("--b", pb, "connection B CSV")->required();
    gcmp->add_option("--vb", pvb, "potential V_B CSV")->required();
    auto* cyl = app.add_subcommand("cylinder-check", "elliptic DtN / cylinder relation");
    auto* acc = app.add_subcommand("accept", "run the acceptance suite");
    bool quick = false;
    acc->add_flag("--quick", quick, "reduced pair counts (smoke run)");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        for (auto* cmd : {sim, syn, bla, locz, recc, cyl})
            if (cmd->parsed() && g.config_path.empty())
                throw std::invalid_argument("--config is required for this subcommand");
        if (sim->parsed()) return cmd_simulate(g);
        if (syn->parsed()) return cmd_synthesize(g);
        if (bla->parsed()) return cmd_blago(g);
        if (locz->parsed()) return cmd_localize(g);
        if (recc->parsed()) return cmd_reconstruct(g);
        if (gcmp->parsed()) return cmd_gauge_compare(g, pa, pva, pb, pvb);
        if (cyl->parsed()) return cmd_cylinder(g);
        if (acc->parsed()) return cmd_accept(g, quick);
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
