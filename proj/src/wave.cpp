#include "bcl/wave.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace bcl {

namespace {

using SpMat = Eigen::SparseMatrix<cplx>;

/// Spatial operator L = d_x^2 + 2 A1 d_x + (dA1 + A1^2 - V) acting on the
/// node-major stacked state (index = node * n + fiber). Rows for the two
/// boundary nodes are left empty; the Dirichlet data overwrites them.
SpMat spatial_operator(const ConnectionField& a, const PotentialField& v) {
    const Grid1D& g = a.grid;
    const int n = a.n;
    const int nx = g.nx;
    const double h = g.h();
    std::vector<Mat> da = derivative4(g, a.coeff);

    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<std::size_t>(nx) * n * (3 + 3 * n));
    Mat id = Mat::Identity(n, n);
    for (int i = 1; i + 1 < nx; ++i) {
        Mat zero_order = da[i] + a.coeff[i] * a.coeff[i] - v.coeff[i];
        Mat left = id / (h * h) - a.coeff[i] / h;   // 2 A1 * (-1/(2h))
        Mat center = -2.0 * id / (h * h) + zero_order;
        Mat right = id / (h * h) + a.coeff[i] / h;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (left(r, c) != 0.0) trip.emplace_back(i * n + r, (i - 1) * n + c, left(r, c));
                if (center(r, c) != 0.0) trip.emplace_back(i * n + r, i * n + c, center(r, c));
                if (right(r, c) != 0.0) trip.emplace_back(i * n + r, (i + 1) * n + c, right(r, c));
            }
        }
    }
    SpMat op(nx * n, nx * n);
    op.setFromTriplets(trip.begin(), trip.end());
    op.makeCompressed();
    return op;
}

void apply_dirichlet(Mat& u, const std::vector<BoundarySignal>& sources, int j, int nx) {
    u.col(0).setZero();
    u.col(nx - 1).setZero();
    for (const auto& s : sources) {
        int col = s.endpoint == Endpoint::Left ? 0 : nx - 1;
        u.col(col) = s.samples.col(j);
    }
}

}  // namespace

BoundarySignal pulse_signal(Endpoint ep, const TimeGrid& tg, int n, int dir,
                            double t0, double width, double sharpness) {
    if (dir < 0 || dir >= n) throw std::invalid_argument("pulse_signal: fiber index out of range");
    if (!(width > 0.0)) throw std::invalid_argument("pulse_signal: width must be positive");
    BoundarySignal sig(ep, n, tg.nt);
    for (int j = 0; j < tg.nt; ++j) {
        double s = (tg.t(j) - t0) / width;
        if (s <= 0.0 || s >= 1.0) continue;
        sig.samples(dir, j) = std::exp(4.0 * sharpness - sharpness / (s * (1.0 - s)));
    }
    return sig;
}

WaveField solve_ibvp(const ConnectionField& a, const PotentialField& v,
                     const std::vector<BoundarySignal>& sources, const TimeGrid& tg) {
    if (!a.compatible(v)) throw std::invalid_argument("solve_ibvp: coefficient mismatch");
    tg.require_stable(a.grid);
    bool seen[2] = {false, false};
    for (const auto& s : sources) {
        if (s.rank() != a.n || s.nt() != tg.nt)
            throw std::invalid_argument("solve_ibvp: signal shape mismatch");
        int idx = s.endpoint == Endpoint::Left ? 0 : 1;
        if (seen[idx]) throw std::invalid_argument("solve_ibvp: duplicate endpoint source");
        seen[idx] = true;
    }

    const int n = a.n;
    const int nx = a.grid.nx;
    const double dt = tg.dt();
    SpMat op = spatial_operator(a, v);

    WaveField w;
    w.grid = a.grid;
    w.tg = tg;
    w.n = n;
    w.u.assign(tg.nt, Mat::Zero(n, nx));
    apply_dirichlet(w.u[0], sources, 0, nx);
    if (tg.nt > 1) apply_dirichlet(w.u[1], sources, 1, nx);  // interior stays 0 (zero Cauchy data)

    Vec lu(nx * n);
    for (int j = 1; j + 1 < tg.nt; ++j) {
        Eigen::Map<const Vec> cur(w.u[j].data(), nx * n);  // column-major n x nx == node-major
        lu.noalias() = op * cur;
        Eigen::Map<const Mat> lmat(lu.data(), n, nx);
        w.u[j + 1] = 2.0 * w.u[j] - w.u[j - 1] + (dt * dt) * lmat;
        apply_dirichlet(w.u[j + 1], sources, j + 1, nx);
    }
    return w;
}

std::vector<BoundarySignal> covariant_neumann_trace(const WaveField& w, const ConnectionField& a) {
    if (!w.grid.same(a.grid) || w.n != a.n)
        throw std::invalid_argument("covariant_neumann_trace: mismatch");
    const int nx = w.grid.nx;
    const double h = w.grid.h();
    BoundarySignal left(Endpoint::Left, w.n, w.tg.nt);
    BoundarySignal right(Endpoint::Right, w.n, w.tg.nt);
    const Mat& a0 = a.coeff.front();
    const Mat& aL = a.coeff.back();
    for (int j = 0; j < w.tg.nt; ++j) {
        const Mat& u = w.u[j];
        left.samples.col(j) =
            (-3.0 * u.col(0) + 4.0 * u.col(1) - u.col(2)) / (2.0 * h) + a0 * u.col(0);
        right.samples.col(j) =
            -(3.0 * u.col(nx - 1) - 4.0 * u.col(nx - 2) + u.col(nx - 3)) / (2.0 * h) -
            aL * u.col(nx - 1);
    }
    return {left, right};
}

Vec DtnOperator::stack(const std::vector<BoundarySignal>& sig) const {
    Vec v = Vec::Zero(size());
    for (const auto& s : sig) {
        for (int ep = 0; ep < channels(); ++ep) {
            if (gamma[ep] != s.endpoint) continue;
            for (int j = 0; j < tg.nt; ++j)
                for (int k = 0; k < n; ++k) v(index(ep, j, k)) = s.samples(k, j);
        }
    }
    return v;
}

std::vector<BoundarySignal> DtnOperator::unstack(const Vec& v) const {
    if (v.size() != size()) throw std::invalid_argument("DtnOperator::unstack: size mismatch");
    std::vector<BoundarySignal> out;
    for (int ep = 0; ep < channels(); ++ep) {
        BoundarySignal s(gamma[ep], n, tg.nt);
        for (int j = 0; j < tg.nt; ++j)
            for (int k = 0; k < n; ++k) s.samples(k, j) = v(index(ep, j, k));
        out.push_back(std::move(s));
    }
    return out;
}

DtnOperator synthesize_dtn(const ConnectionField& a, const PotentialField& v,
                           const std::vector<Endpoint>& gamma, const TimeGrid& tg,
                           int workers) {
    if (gamma.empty() || gamma.size() > 2)
        throw std::invalid_argument("synthesize_dtn: gamma must hold 1 or 2 endpoints");
    if (gamma.size() == 2 && gamma[0] == gamma[1])
        throw std::invalid_argument("synthesize_dtn: duplicate endpoint in gamma");
    if (workers < 1) workers = 1;

    DtnOperator dtn;
    dtn.grid = a.grid;
    dtn.tg = tg;
    dtn.gamma = gamma;
    dtn.n = a.n;
    const int total = static_cast<int>(gamma.size()) * tg.nt * a.n;
    dtn.m = Mat::Zero(total, total);
    dtn.weights = RVec::Constant(total, tg.dt());
    for (int ep = 0; ep < dtn.channels(); ++ep)
        for (int k = 0; k < a.n; ++k) {
            dtn.weights(dtn.index(ep, 0, k)) *= 0.5;
            dtn.weights(dtn.index(ep, tg.nt - 1, k)) *= 0.5;
        }

    auto run_column = [&](int col) {
        int k = col % a.n;
        int j = (col / a.n) % tg.nt;
        int ep = col / (a.n * tg.nt);
        BoundarySignal hat(gamma[ep], a.n, tg.nt);
        hat.samples(k, j) = 1.0;  // raw nodal hat
        WaveField w = solve_ibvp(a, v, {hat}, tg);
        auto traces = covariant_neumann_trace(w, a);
        std::vector<BoundarySignal> kept;
        for (const auto& t : traces)
            for (Endpoint e : gamma)
                if (t.endpoint == e) kept.push_back(t);
        dtn.m.col(col) = dtn.stack(kept);
    };

    if (workers == 1) {
        for (int col = 0; col < total; ++col) run_column(col);
    } else {
        std::vector<std::thread> pool;
        for (int wkr = 0; wkr < workers; ++wkr)
            pool.emplace_back([&, wkr] {
                for (int col = wkr; col < total; col += workers) run_column(col);
            });
        for (auto& t : pool) t.join();
    }
    return dtn;
}

double energy(const WaveField& w, const ConnectionField& a, const PotentialField& v,
              int time_node) {
    if (time_node < 0 || time_node >= w.tg.nt)
        throw std::invalid_argument("energy: time node out of range");
    const int nx = w.grid.nx;
    const double h = w.grid.h();
    const double dt = w.tg.dt();

    Mat ut(w.n, nx);
    if (time_node == 0)
        ut = (-3.0 * w.u[0] + 4.0 * w.u[1] - w.u[2]) / (2.0 * dt);
    else if (time_node == w.tg.nt - 1)
        ut = (3.0 * w.u[time_node] - 4.0 * w.u[time_node - 1] + w.u[time_node - 2]) / (2.0 * dt);
    else
        ut = (w.u[time_node + 1] - w.u[time_node - 1]) / (2.0 * dt);

    const Mat& u = w.u[time_node];
    double e = 0.0;
    for (int i = 0; i < nx; ++i) {
        Vec ux;
        if (i == 0)
            ux = (-3.0 * u.col(0) + 4.0 * u.col(1) - u.col(2)) / (2.0 * h);
        else if (i == nx - 1)
            ux = (3.0 * u.col(nx - 1) - 4.0 * u.col(nx - 2) + u.col(nx - 3)) / (2.0 * h);
        else
            ux = (u.col(i + 1) - u.col(i - 1)) / (2.0 * h);
        Vec dxu = ux + a.coeff[i] * u.col(i);
        double wgt = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
        double val = ut.col(i).squaredNorm() + dxu.squaredNorm() +
                     std::real(u.col(i).dot(v.coeff[i] * u.col(i)));
        e += wgt * h * val;
    }
    return e;
}

SectionField final_state(const WaveField& w) {
    SectionField s(w.grid, w.n);
    const Mat& u = w.u[w.tg.mid()];
    for (int i = 0; i < w.grid.nx; ++i) s.values[i] = u.col(i);
    return s;
}

cplx section_inner(const SectionField& f, const SectionField& g) {
    if (!f.grid.same(g.grid) || f.n != g.n)
        throw std::invalid_argument("section_inner: mismatch");
    const double h = f.grid.h();
    cplx acc = 0.0;
    for (int i = 0; i < f.grid.nx; ++i) {
        double wgt = (i == 0 || i == f.grid.nx - 1) ? 0.5 : 1.0;
        acc += wgt * h * f.values[i].dot(g.values[i]);  // Eigen dot conjugates the first factor
    }
    return acc;
}

void write_dtn(const std::string& path, const DtnOperator& dtn) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_dtn: cannot open " + path);
    out << "bclab-dtn 1\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", dtn.grid.L);
    out << "L " << buf << "\nnx " << dtn.grid.nx << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", dtn.tg.horizon);
    out << "horizon " << buf << "\nnt " << dtn.tg.nt << "\nrank " << dtn.n << "\ngamma";
    for (Endpoint e : dtn.gamma) out << ' ' << endpoint_name(e);
    out << "\n\n";
    const int total = dtn.size();
    std::vector<double> row(2 * total);
    for (int r = 0; r < total; ++r) {
        for (int c = 0; c < total; ++c) {
            row[2 * c] = dtn.m(r, c).real();
            row[2 * c + 1] = dtn.m(r, c).imag();
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write_dtn: write failed for " + path);
}

DtnOperator read_dtn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_dtn: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "bclab-dtn 1")
        throw std::runtime_error("read_dtn: bad magic in " + path);
    double L = 0.0, horizon = 0.0;
    int nx = 0, nt = 0, rank = 0;
    std::vector<Endpoint> gamma;
    while (std::getline(in, line) && !line.empty()) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "L") ls >> L;
        else if (key == "nx") ls >> nx;
        else if (key == "horizon") ls >> horizon;
        else if (key == "nt") ls >> nt;
        else if (key == "rank") ls >> rank;
        else if (key == "gamma") {
            std::string name;
            while (ls >> name) gamma.push_back(name == "left" ? Endpoint::Left : Endpoint::Right);
        } else {
            throw std::runtime_error("read_dtn: unknown header key '" + key + "'");
        }
    }
    if (nx < 3 || nt < 3 || rank < 1 || gamma.empty())
        throw std::runtime_error("read_dtn: incomplete header in " + path);

    DtnOperator dtn;
    dtn.grid = Grid1D(L, nx);
    dtn.tg = TimeGrid(horizon, nt);
    dtn.gamma = gamma;
    dtn.n = rank;
    const int total = static_cast<int>(gamma.size()) * nt * rank;
    dtn.m.resize(total, total);
    dtn.weights = RVec::Constant(total, dtn.tg.dt());
    for (int ep = 0; ep < dtn.channels(); ++ep)
        for (int k = 0; k < rank; ++k) {
            dtn.weights(dtn.index(ep, 0, k)) *= 0.5;
            dtn.weights(dtn.index(ep, nt - 1, k)) *= 0.5;
        }
    std::vector<double> row(2 * total);
    for (int r = 0; r < total; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw std::runtime_error("read_dtn: truncated payload in " + path);
        for (int c = 0; c < total; ++c) dtn.m(r, c) = cplx(row[2 * c], row[2 * c + 1]);
    }
    return dtn;
}

}  // namespace bcl
