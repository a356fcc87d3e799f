#pragma once

#include <string>
#include <vector>

namespace svgpkan {

struct CheckResult {
    std::string name;
    bool pass;
    std::string detail;
};

// Deterministic oracle suite: finite-difference gradients (per op family and
// through the full heteroscedastic ELBO), dense KL cross-check plus a
// sign-flip mutation probe, moment matching against Monte Carlo and
// Gauss-Hermite quadrature, prior reversion far from the inducing set, and
// the conservation / maximum-principle / mode-decay properties of the PDE
// step. full_scale raises the Monte Carlo effort (50 edges x 1e6 samples)
// for acceptance runs; the quick level finishes in seconds.
std::vector<CheckResult> run_property_checks(bool full_scale);

}  // namespace svgpkan
