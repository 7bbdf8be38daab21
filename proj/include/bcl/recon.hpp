#pragma once

#include "bcl/control.hpp"
#include "bcl/gauge.hpp"

namespace bcl {

/// Lattice of interior wave representations r_q(T - tau, x) ready for
/// finite differencing: uniform in both the shift index and the node index.
struct WaveTable {
    std::vector<int> nodes;   // grid node indices, uniform stride
    std::vector<double> x;
    int n = 1;
    int nq = 0;
    int ntau = 0;
    double dtau = 0.0;        // physical shift step
    double dx = 0.0;          // node spacing
    std::vector<std::vector<Mat>> values;  // [itau][node] -> n x nq
};

/// Data path: read the table out of a constructed frame.
WaveTable assemble_wave_table(const FrameData& frame);

/// Oracle path: interior fields read directly from the simulator in the
/// standard frame, bypassing the control machinery.
WaveTable oracle_wave_table(const ConnectionField& a, const PotentialField& v,
                            const ReferenceSet& refs, const TimeGrid& tg,
                            const std::vector<int>& nodes);

struct ReconResult {
    std::vector<int> nodes;   // accepted interior nodes
    std::vector<double> x;
    int n = 1;
    std::vector<Mat> a_rec;   // skew-Hermitian by constraint
    std::vector<Mat> w_rec;   // unconstrained zeroth-order block
    std::vector<Mat> v_rec;   // Hermitian-projected
    std::vector<double> residual;
    std::vector<double> cond;
    std::vector<double> v_herm_dev;

    /// Recovered fields resampled onto a uniform sub-grid for gauge
    /// comparison.
    ConnectionField connection() const;
    PotentialField potential() const;
    Grid1D subgrid() const;
};

/// Constrained least squares per node: d_t^2 r - d_x^2 r = 2 A (d_x r) + W r
/// with A restricted to skew-Hermitian matrices; V = d_x A + A^2 - W.
ReconResult recover_fields(const WaveTable& table);

struct ReconReport {
    double max_residual = 0.0;
    double max_cond = 0.0;
    double max_v_herm_dev = 0.0;
    bool truth_available = false;
    GaugeDecision orbit;      // against the supplied truth, on the sub-grid
    double a_direct_err = 0.0;  // plain relative error in the standard frame
    double v_direct_err = 0.0;
};

ReconReport recon_report(const ReconResult& r,
                         const ConnectionField* truth_a = nullptr,
                         const PotentialField* truth_v = nullptr,
                         double orbit_tol = 0.1);

void write_recon_csv(const std::string& path, const ReconResult& r);

}  // namespace bcl
