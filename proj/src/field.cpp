#include "bcl/field.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace bcl {

namespace {

void check_shape(const Grid1D& g, int rank, const std::vector<Mat>& raw, const char* what) {
    if (static_cast<int>(raw.size()) != g.nx)
        throw std::invalid_argument(std::string(what) + ": sample count does not match grid");
    for (const auto& m : raw)
        if (m.rows() != rank || m.cols() != rank)
            throw std::invalid_argument(std::string(what) + ": matrix size does not match rank");
}

}  // namespace

ConnectionField ConnectionField::make(const Grid1D& g, int rank, const std::vector<Mat>& raw) {
    check_shape(g, rank, raw, "ConnectionField");
    ConnectionField f;
    static_cast<MatrixField&>(f) = MatrixField(g, rank);
    double res = 0.0;
    for (int i = 0; i < g.nx; ++i) {
        f.coeff[i] = skew_part(raw[i]);
        res = std::max(res, (f.coeff[i] - raw[i]).norm());
    }
    f.projection_residual = res;
    return f;
}

PotentialField PotentialField::make(const Grid1D& g, int rank, const std::vector<Mat>& raw) {
    check_shape(g, rank, raw, "PotentialField");
    PotentialField f;
    static_cast<MatrixField&>(f) = MatrixField(g, rank);
    double res = 0.0;
    for (int i = 0; i < g.nx; ++i) {
        f.coeff[i] = herm_part(raw[i]);
        res = std::max(res, (f.coeff[i] - raw[i]).norm());
    }
    f.projection_residual = res;
    return f;
}

GaugeTransform GaugeTransform::make(const Grid1D& g, int rank, const std::vector<Mat>& samples) {
    check_shape(g, rank, samples, "GaugeTransform");
    GaugeTransform u;
    static_cast<MatrixField&>(u) = MatrixField(g, rank);
    for (int i = 0; i < g.nx; ++i) {
        double defect = unitarity_defect(samples[i]);
        if (defect > kUnitaryTol)
            throw std::invalid_argument("GaugeTransform: non-unitary sample at node " +
                                        std::to_string(i) + " (defect " + std::to_string(defect) + ")");
        u.coeff[i] = samples[i];
    }
    return u;
}

GaugeTransform GaugeTransform::inverse() const {
    std::vector<Mat> inv(coeff.size());
    for (size_t i = 0; i < coeff.size(); ++i) inv[i] = coeff[i].adjoint();
    return make(grid, n, inv);
}

std::vector<Mat> sample_matrix_function(const Grid1D& g, int rank,
                                        const std::function<Mat(double)>& f) {
    std::vector<Mat> out(g.nx);
    for (int i = 0; i < g.nx; ++i) {
        out[i] = f(g.x(i));
        if (out[i].rows() != rank || out[i].cols() != rank)
            throw std::invalid_argument("sample_matrix_function: wrong matrix size");
    }
    return out;
}

namespace {

/// Random Hermitian matrix with entries ~ N(0, scale^2).
Mat random_hermitian(int n, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    Mat m(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) m(r, c) = cplx(nd(rng), nd(rng));
    return herm_part(m);
}

std::vector<Mat> random_smooth_hermitian_field(const Grid1D& g, int rank, std::uint64_t seed,
                                               double amplitude, int modes) {
    std::mt19937_64 rng(seed);
    std::vector<Mat> mode_cos(modes + 1), mode_sin(modes + 1);
    for (int j = 0; j <= modes; ++j) {
        double decay = 1.0 / (1.0 + j * j);
        mode_cos[j] = random_hermitian(rank, rng, decay);
        mode_sin[j] = random_hermitian(rank, rng, decay);
    }
    auto sample = [&](double x) {
        Mat m = mode_cos[0];
        for (int j = 1; j <= modes; ++j)
            m += std::cos(2 * M_PI * j * x) * mode_cos[j] + std::sin(2 * M_PI * j * x) * mode_sin[j];
        return m;
    };
    // Normalize against a fixed fine sampling so the field is a function of
    // the seed alone: resampling on a refined grid reproduces it exactly.
    double sup = 0.0;
    const int fine = 4096;
    for (int i = 0; i <= fine; ++i) sup = std::max(sup, sample(double(i) / fine).norm());
    std::vector<Mat> out(g.nx, Mat::Zero(rank, rank));
    for (int i = 0; i < g.nx; ++i) {
        out[i] = sample(g.x(i) / g.L);
        if (sup > 0.0) out[i] *= amplitude / sup;
    }
    return out;
}

}  // namespace

ConnectionField random_connection(const Grid1D& g, int rank, std::uint64_t seed,
                                  double amplitude, int modes) {
    auto herm = random_smooth_hermitian_field(g, rank, seed ^ 0x9e3779b97f4a7c15ull, amplitude, modes);
    for (auto& m : herm) m = cplx(0, 1) * m;  // i * Hermitian = skew-Hermitian
    return ConnectionField::make(g, rank, herm);
}

PotentialField random_potential(const Grid1D& g, int rank, std::uint64_t seed,
                                double amplitude, int modes) {
    return PotentialField::make(
        g, rank, random_smooth_hermitian_field(g, rank, seed ^ 0xc2b2ae3d27d4eb4full, amplitude, modes));
}

GaugeTransform random_boundary_gauge(const Grid1D& g, int rank, std::uint64_t seed,
                                     double amplitude, int modes) {
    std::mt19937_64 rng(seed ^ 0x165667b19e3779f9ull);
    std::vector<Mat> gens(modes);
    for (int j = 0; j < modes; ++j)
        gens[j] = cplx(0, 1) * random_hermitian(rank, rng, amplitude / ((j + 1) * (j + 1)));
    std::vector<Mat> u(g.nx);
    for (int i = 0; i < g.nx; ++i) {
        double x = g.x(i) / g.L;
        Mat s = Mat::Zero(rank, rank);
        for (int j = 0; j < modes; ++j) s += std::sin((j + 1) * M_PI * x) * gens[j];
        u[i] = skew_exp(s);
    }
    // endpoints exactly Id: sin vanishes there, exp(0) = Id up to round-off
    u.front() = Mat::Identity(rank, rank);
    u.back() = Mat::Identity(rank, rank);
    return GaugeTransform::make(g, rank, u);
}

void write_matrix_field_csv(const std::string& path, const MatrixField& f) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.precision(17);
    os << "x";
    for (int r = 0; r < f.n; ++r)
        for (int c = 0; c < f.n; ++c) os << ",Re_" << r << c << ",Im_" << r << c;
    os << "\n";
    for (int i = 0; i < f.grid.nx; ++i) {
        os << f.grid.x(i);
        for (int r = 0; r < f.n; ++r)
            for (int c = 0; c < f.n; ++c)
                os << "," << f.coeff[i](r, c).real() << "," << f.coeff[i](r, c).imag();
        os << "\n";
    }
}

MatrixField read_matrix_field_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string header;
    std::getline(is, header);
    int cols = 1;
    for (char ch : header)
        if (ch == ',') ++cols;
    int n2 = (cols - 1) / 2;
    int n = static_cast<int>(std::lround(std::sqrt(double(n2))));
    if (n * n != n2) throw std::runtime_error("read_matrix_field_csv: bad column count in " + path);

    std::vector<double> xs;
    std::vector<Mat> mats;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        xs.push_back(std::stod(tok));
        Mat m(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                std::getline(ss, tok, ',');
                double re = std::stod(tok);
                std::getline(ss, tok, ',');
                double im = std::stod(tok);
                m(r, c) = cplx(re, im);
            }
        mats.push_back(m);
    }
    if (xs.size() < 3) throw std::runtime_error("read_matrix_field_csv: too few rows");
    // uniform grid check
    double h = xs[1] - xs[0];
    for (size_t i = 1; i < xs.size(); ++i)
        if (std::abs(xs[i] - xs[i - 1] - h) > 1e-9 * (std::abs(h) + 1))
            throw std::runtime_error("read_matrix_field_csv: nonuniform grid rejected");
    MatrixField f(Grid1D(xs.back(), static_cast<int>(xs.size())), n);
    f.coeff = std::move(mats);
    return f;
}

}  // namespace bcl
