#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmf3/tensor.hpp"

namespace mmf3 {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t entries = 0;
};

// Relative error floor: |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline constexpr double kGradCheckFloor = 1e-4;

// Compares backward() against central differences for every entry of every
// leaf in `inputs`. `f` must rebuild the graph from the leaves' current values.
GradCheckResult check_gradients(const std::string& name, const std::function<nc::Var()>& f,
                                const std::vector<nc::Var>& inputs, double step = 1e-5);

// The layer-by-layer suite at desk dimensions (d = 16, L = 8), ending with the
// full encoder -> fusion -> decoder loss for every fusion mode.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 7);

} // namespace mmf3
