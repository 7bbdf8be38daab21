#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bcl {

struct CriterionResult {
    std::string name;
    bool pass = false;
    bool skipped = false;
    double metric = 0.0;
    std::string detail;
};

struct AcceptOptions {
    int workers = 1;
    bool quick = false;  // reduced pair counts for CI smoke runs
};

/// Runs criteria A-H at desk scale; one result per criterion (plus
/// sub-criteria where the criterion bundles several checks).
std::vector<CriterionResult> run_acceptance(const AcceptOptions& opt, std::ostream& log);

/// Prints one pass/fail line per criterion; returns false if any
/// non-skipped criterion failed.
bool report_acceptance(const std::vector<CriterionResult>& results, std::ostream& out);

}  // namespace bcl
