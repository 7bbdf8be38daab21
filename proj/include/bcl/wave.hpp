#pragma once

#include <string>
#include <vector>

#include "bcl/bundle.hpp"
#include "bcl/grid.hpp"

namespace bcl {

enum class Endpoint { Left, Right };

inline const char* endpoint_name(Endpoint e) { return e == Endpoint::Left ? "left" : "right"; }
inline double endpoint_x(Endpoint e, const Grid1D& g) { return e == Endpoint::Left ? 0.0 : g.L; }

/// Time-sampled Dirichlet data at one endpoint, values in C^n.
struct BoundarySignal {
    Endpoint endpoint = Endpoint::Left;
    Mat samples;  // n x nt

    BoundarySignal() = default;
    BoundarySignal(Endpoint e, int n, int nt) : endpoint(e), samples(Mat::Zero(n, nt)) {}

    int rank() const { return static_cast<int>(samples.rows()); }
    int nt() const { return static_cast<int>(samples.cols()); }
};

/// Smooth compactly supported pulse exp(-p/(s(1-s))) on (t0, t0+width),
/// normalized to peak 1, in fiber direction dir.
BoundarySignal pulse_signal(Endpoint ep, const TimeGrid& tg, int n, int dir,
                            double t0, double width, double sharpness = 1.0);

/// Solution samples u(t_j, x_i) in C^n.
struct WaveField {
    Grid1D grid;
    TimeGrid tg;
    int n = 1;
    std::vector<Mat> u;  // per time node, n x nx

    const Mat& at(int j) const { return u[j]; }
};

/// Dense matrix of the restricted DtN operator over the window (0, 2T).
/// Index layout for rows and columns: endpoint-major, then time node, then
/// fiber index: idx = (ep * nt + j) * n + k.
struct DtnOperator {
    Grid1D grid;
    TimeGrid tg;
    std::vector<Endpoint> gamma;
    int n = 1;
    Mat m;            // N x N, N = |gamma| nt n
    RVec weights;     // trapezoid quadrature weights per row (time weight)

    int channels() const { return static_cast<int>(gamma.size()); }
    int size() const { return channels() * tg.nt * n; }
    int index(int ep, int j, int k) const { return (ep * tg.nt + j) * n + k; }

    /// Stack boundary signals on gamma into a column vector (missing
    /// endpoints padded with zeros).
    Vec stack(const std::vector<BoundarySignal>& sig) const;
    std::vector<BoundarySignal> unstack(const Vec& v) const;
};

/// Leapfrog solve of (d_t^2 + P + V) u = 0 with Dirichlet data from the
/// given signals (at most one per endpoint) and zero initial data.
WaveField solve_ibvp(const ConnectionField& a, const PotentialField& v,
                     const std::vector<BoundarySignal>& sources, const TimeGrid& tg);

/// Covariant Neumann traces at both endpoints (interior normal at the left,
/// exterior sign flip at the right).
std::vector<BoundarySignal> covariant_neumann_trace(const WaveField& u, const ConnectionField& a);

/// One independent simulation per basis column (time hat x fiber basis x
/// endpoint); columns merged in deterministic order regardless of workers.
DtnOperator synthesize_dtn(const ConnectionField& a, const PotentialField& v,
                           const std::vector<Endpoint>& gamma, const TimeGrid& tg,
                           int workers = 1);

/// ||d_t u(t)||^2 + ||covariant_dx u(t)||^2 + <V u(t), u(t)>, trapezoid in x.
double energy(const WaveField& u, const ConnectionField& a, const PotentialField& v,
              int time_node);

/// Final state Wf = u(T) on the grid.
SectionField final_state(const WaveField& u);

/// L^2(0,L) inner product of two sections, trapezoid weights;
/// conjugate-linear in the first argument.
cplx section_inner(const SectionField& f, const SectionField& g);

// ---- persistence -------------------------------------------------------
// UTF-8 text header terminated by a blank line, then row-major complex128
// little-endian payload.

void write_dtn(const std::string& path, const DtnOperator& dtn);
DtnOperator read_dtn(const std::string& path);

}  // namespace bcl
