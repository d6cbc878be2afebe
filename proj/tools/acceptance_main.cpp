// Runs every acceptance criterion and prints one verdict line each.
// Exit status is nonzero only when an attainable criterion fails.

#include <cstdlib>
#include <cstring>
#include <iostream>

#include "gasket/acceptance.hpp"

int main(int argc, char** argv) {
    gasket::AcceptanceOptions o;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--quick") == 0) {
            o.quick = true;
        } else if (std::strcmp(argv[i], "--seed") == 0 && i + 1 < argc) {
            o.seed = std::strtoull(argv[++i], nullptr, 10);
        } else {
            std::cerr << "usage: gasket_acceptance [--quick] [--seed N]\n";
            return 2;
        }
    }
    const auto rs = gasket::run_acceptance(o, [](const gasket::CriterionResult& r) {
        std::cout << gasket::verdict_line(r) << std::endl;
    });
    const bool ok = gasket::acceptance_ok(rs);
    std::cout << (ok ? "acceptance: all attainable criteria pass" : "acceptance: FAILED") << std::endl;
    return ok ? 0 : 1;
}
