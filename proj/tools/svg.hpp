#pragma once

#include <string>
#include <vector>

#include "hdt/mlp.hpp"

namespace hdt::cli {

/// Scatter of (p_0, q_0) for each snapshot, colour-graded from blue (t = 0)
/// to red (last time), over a grey reference cloud. One `<g class="time">`
/// per snapshot. Output depends only on the inputs (no timestamp).
std::string sweep_svg(const std::vector<double>& times, const std::vector<Matrix>& snapshots,
                      const Matrix& reference);

}  // namespace hdt::cli
