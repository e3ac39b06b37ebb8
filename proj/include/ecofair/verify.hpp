#pragma once

// Self-check oracles behind `ecofair verify`: brute-force and grid searches
// compared against the closed forms.

#include <cstdint>
#include <string>
#include <vector>

namespace ecofair {

struct CheckResult {
    std::string suite;
    std::string name;
    bool pass = false;
    std::string detail;
};

// suite: all | frechet | worst-case | lp | dpc | edc
std::vector<CheckResult> run_verify_suite(const std::string& suite, std::uint64_t seed, double tolerance = 1e-12);

std::vector<std::string> verify_suite_names();

}  // namespace ecofair
