// Acceptance gate: runs every criterion and prints one verdict line each.
#include <cstring>
#include <iostream>
#include <thread>

#include "bcl/accept.hpp"

int main(int argc, char** argv) {
    bcl::AcceptOptions opt;
    unsigned hc = std::thread::hardware_concurrency();
    opt.workers = hc == 0 ? 1 : static_cast<int>(hc);
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--quick") == 0) opt.quick = true;
        if (std::strcmp(argv[i], "--workers") == 0 && i + 1 < argc)
            opt.workers = std::atoi(argv[++i]);
    }
    std::vector<bcl::CriterionResult> results = bcl::run_acceptance(opt, std::cerr);
    bool ok = bcl::report_acceptance(results, std::cout);
    return ok ? 0 : 1;
}
