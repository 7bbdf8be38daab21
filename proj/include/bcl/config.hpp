#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bcl/control.hpp"
#include "bcl/field.hpp"

namespace bcl {

/// Named analytic preset for a matrix field, or a CSV table path.
struct FieldSpec {
    std::string preset = "zero";  // zero | constant | gaussian_bump | fourier | random | table
    std::vector<double> params;   // preset-dependent
    std::string table_path;
    double amplitude = 0.8;
    int modes = 3;
};

struct ExperimentConfig {
    Grid1D grid{1.0, 201};
    double T = 1.5;
    double cfl = 0.5;
    int rank = 1;
    std::vector<Endpoint> gamma = {Endpoint::Left, Endpoint::Right};
    FieldSpec connection;
    FieldSpec potential;
    ControlSchedule schedule;
    int basis_stride = 8;
    int node_stride = 4;
    std::vector<double> ref_offsets = {0.3, 0.6, 0.9};
    double ref_width = 0.1;
    int ntau = 7;
    int dtau_steps = 4;
    double noise_level = 0.0;
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    TimeGrid timegrid() const { return TimeGrid::make(T, grid, cfl); }
    ConnectionField make_connection() const;
    PotentialField make_potential() const;
};

/// Parse from JSON text; unknown keys rejected, violations reported with
/// the offending field name.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_hash(const std::string& json_text);

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::vector<std::string> artifacts;
    std::map<std::string, double> timings;
    std::map<std::string, double> metrics;
};

/// Written atomically (temp file + rename).
void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace bcl
