#include "bcl/config.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bcl {

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: field '" + field + "': " + why);
}

void reject_unknown(const json& j, const std::string& scope,
                    const std::vector<std::string>& known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) ok = ok || it.key() == k;
        if (!ok) bad_field(scope.empty() ? it.key() : scope + "." + it.key(), "unknown key");
    }
}

FieldSpec parse_field_spec(const json& j, const std::string& scope) {
    reject_unknown(j, scope, {"preset", "params", "table", "amplitude", "modes"});
    FieldSpec f;
    if (j.contains("preset")) f.preset = j["preset"].get<std::string>();
    const std::vector<std::string> presets = {"zero",    "constant", "gaussian_bump",
                                              "fourier", "random",   "table"};
    bool ok = false;
    for (const auto& p : presets) ok = ok || p == f.preset;
    if (!ok) bad_field(scope + ".preset", "unknown preset '" + f.preset + "'");
    if (j.contains("params")) f.params = j["params"].get<std::vector<double>>();
    if (j.contains("table")) f.table_path = j["table"].get<std::string>();
    if (j.contains("amplitude")) f.amplitude = j["amplitude"].get<double>();
    if (j.contains("modes")) f.modes = j["modes"].get<int>();
    if (f.preset == "table" && f.table_path.empty())
        bad_field(scope + ".table", "required for the table preset");
    if (f.modes < 1) bad_field(scope + ".modes", "must be >= 1");
    return f;
}

std::vector<Mat> build_raw(const FieldSpec& f, const Grid1D& g, int n, bool connection,
                           std::uint64_t seed, const std::string& scope) {
    auto connection_dir = [&](const Mat& h) { return connection ? Mat(cplx(0, 1) * h) : h; };
    if (f.preset == "zero") return std::vector<Mat>(g.nx, Mat::Zero(n, n));
    if (f.preset == "constant") {
        Mat raw;
        if (f.params.size() == static_cast<std::size_t>(2 * n * n)) {
            raw.resize(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    raw(a, b) = cplx(f.params[2 * (a * n + b)], f.params[2 * (a * n + b) + 1]);
        } else if (f.params.size() == 1) {
            raw = connection_dir(f.params[0] * Mat::Identity(n, n));
        } else {
            bad_field(scope + ".params", "constant preset needs 1 or 2 n^2 values");
        }
        return std::vector<Mat>(g.nx, raw);
    }
    if (f.preset == "gaussian_bump") {
        if (f.params.size() != 2) bad_field(scope + ".params", "gaussian_bump needs {center, width}");
        double c = f.params[0], w = f.params[1];
        if (!(w > 0.0)) bad_field(scope + ".params", "width must be positive");
        Mat dir = connection_dir(Mat::Ones(n, n));
        return sample_matrix_function(g, n, [&](double x) {
            double s = (x - c) / w;
            return Mat(f.amplitude * std::exp(-s * s) * dir);
        });
    }
    if (f.preset == "fourier") {
        std::vector<double> cs = f.params.empty() ? std::vector<double>{1.0} : f.params;
        return sample_matrix_function(g, n, [&](double x) {
            Mat h = Mat::Zero(n, n);
            for (std::size_t m = 0; m < cs.size(); ++m) {
                double j = static_cast<double>(m + 1);
                Mat hj(n, n);
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) hj(a, b) = std::cos(0.7 * j + a + b);
                h += (f.amplitude * cs[m] / (j * j)) * std::sin(j * M_PI * x / g.L) * hj;
            }
            return Mat(connection_dir(h));
        });
    }
    if (f.preset == "random") {
        if (connection)
            return random_connection(g, n, seed, f.amplitude, f.modes).coeff;
        return random_potential(g, n, seed + 1, f.amplitude, f.modes).coeff;
    }
    // table
    MatrixField t = read_matrix_field_csv(f.table_path);
    if (!t.grid.same(g) || t.n != n)
        bad_field(scope + ".table", "table grid/rank does not match the config");
    return t.coeff;
}

}  // namespace

ConnectionField ExperimentConfig::make_connection() const {
    return ConnectionField::make(grid, rank,
                                 build_raw(connection, grid, rank, true, seed, "connection"));
}

PotentialField ExperimentConfig::make_potential() const {
    return PotentialField::make(grid, rank,
                                build_raw(potential, grid, rank, false, seed, "potential"));
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    reject_unknown(j, "",
                   {"grid", "T", "cfl", "rank", "gamma", "connection", "potential", "schedule",
                    "basis_stride", "node_stride", "ref_offsets", "ref_width", "ntau",
                    "dtau_steps", "noise_level", "seed", "out_dir"});
    ExperimentConfig c;
    if (j.contains("grid")) {
        reject_unknown(j["grid"], "grid", {"L", "nx"});
        double L = j["grid"].value("L", 1.0);
        int nx = j["grid"].value("nx", 201);
        if (!(L > 0.0)) bad_field("grid.L", "must be positive");
        if (nx < 3) bad_field("grid.nx", "must be >= 3");
        c.grid = Grid1D(L, nx);
    }
    if (j.contains("T")) c.T = j["T"].get<double>();
    if (!(c.T > 0.0)) bad_field("T", "must be positive");
    if (j.contains("cfl")) c.cfl = j["cfl"].get<double>();
    if (!(c.cfl > 0.0 && c.cfl <= 0.9)) bad_field("cfl", "must lie in (0, 0.9]");
    if (j.contains("rank")) c.rank = j["rank"].get<int>();
    if (c.rank < 1) bad_field("rank", "must be >= 1");
    if (j.contains("gamma")) {
        c.gamma.clear();
        for (const auto& e : j["gamma"]) {
            std::string name = e.get<std::string>();
            if (name == "left")
                c.gamma.push_back(Endpoint::Left);
            else if (name == "right")
                c.gamma.push_back(Endpoint::Right);
            else
                bad_field("gamma", "entries must be 'left' or 'right'");
        }
        if (c.gamma.empty() || c.gamma.size() > 2 ||
            (c.gamma.size() == 2 && c.gamma[0] == c.gamma[1]))
            bad_field("gamma", "must list one or two distinct endpoints");
    }
    if (j.contains("connection")) c.connection = parse_field_spec(j["connection"], "connection");
    if (j.contains("potential")) c.potential = parse_field_spec(j["potential"], "potential");
    if (j.contains("schedule")) {
        const json& s = j["schedule"];
        reject_unknown(s, "schedule",
                       {"ks", "alphas", "subspace", "leak_factor", "not_localizable"});
        if (s.contains("ks")) c.schedule.ks = s["ks"].get<std::vector<int>>();
        if (s.contains("alphas")) c.schedule.alphas = s["alphas"].get<std::vector<double>>();
        if (s.contains("subspace")) c.schedule.subspace = s["subspace"].get<int>();
        if (s.contains("leak_factor")) c.schedule.leak_factor = s["leak_factor"].get<double>();
        if (s.contains("not_localizable"))
            c.schedule.not_localizable = s["not_localizable"].get<double>();
        if (c.schedule.ks.empty()) bad_field("schedule.ks", "must be nonempty");
        for (std::size_t i = 0; i < c.schedule.ks.size(); ++i)
            if (c.schedule.ks[i] < 1 || (i > 0 && c.schedule.ks[i] <= c.schedule.ks[i - 1]))
                bad_field("schedule.ks", "must be increasing positive integers");
        for (double a : c.schedule.alphas)
            if (!(a > 0.0)) bad_field("schedule.alphas", "entries must be positive");
        if (c.schedule.subspace < 1) bad_field("schedule.subspace", "must be >= 1");
    }
    if (j.contains("basis_stride")) c.basis_stride = j["basis_stride"].get<int>();
    if (c.basis_stride < 1) bad_field("basis_stride", "must be >= 1");
    if (j.contains("node_stride")) c.node_stride = j["node_stride"].get<int>();
    if (c.node_stride < 1) bad_field("node_stride", "must be >= 1");
    if (j.contains("ref_offsets")) c.ref_offsets = j["ref_offsets"].get<std::vector<double>>();
    if (c.ref_offsets.empty()) bad_field("ref_offsets", "must be nonempty");
    if (j.contains("ref_width")) c.ref_width = j["ref_width"].get<double>();
    if (!(c.ref_width > 0.0)) bad_field("ref_width", "must be positive");
    for (double o : c.ref_offsets)
        if (o < c.ref_width || o > c.T) bad_field("ref_offsets", "entries must lie in [ref_width, T]");
    if (j.contains("ntau")) c.ntau = j["ntau"].get<int>();
    if (c.ntau < 3) bad_field("ntau", "must be >= 3");
    if (j.contains("dtau_steps")) c.dtau_steps = j["dtau_steps"].get<int>();
    if (c.dtau_steps < 1) bad_field("dtau_steps", "must be >= 1");
    if (j.contains("noise_level")) c.noise_level = j["noise_level"].get<double>();
    if (c.noise_level < 0.0) bad_field("noise_level", "must be >= 0");
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_hash(const std::string& json_text) {
    // FNV-1a over the canonical (parsed + re-serialized) form
    std::string canon = json::parse(json_text).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_manifest(const std::string& path, const RunManifest& m) {
    json j;
    j["config_hash"] = m.config_hash;
    j["version"] = m.version;
    j["artifacts"] = m.artifacts;
    j["timings"] = m.timings;
    j["metrics"] = m.metrics;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("write_manifest: cannot open " + tmp);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("write_manifest: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace bcl
