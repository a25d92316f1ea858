// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every layer kind and of the full encoder,
// projection head and contrastive loss.
#pragma once

#include <string>
#include <vector>

#include "memdecode/neuralcore.hpp"

namespace memdecode {

struct NamedGradCheck {
  std::string name;
  nn::GradCheckResult result;
  double tolerance = 0.0;
  bool passed() const { return result.max_rel_error < tolerance; }
};

/// Small stacks exercising each layer kind (parameterless kinds sit behind a
/// parameterized layer), checked in full against tolerance 1e-4.
std::vector<NamedGradCheck> layer_grad_checks(std::uint64_t seed = 0);

/// Encoder + projection head + variant contrastive loss on a random batch of
/// `batch` segments (pairs per concept), in double precision; tolerance 1e-3.
NamedGradCheck composite_grad_check(std::uint64_t seed = 0, std::size_t batch = 12,
                                    std::size_t min_params = 200, std::size_t channels = 14,
                                    std::size_t window = 100);

}  // namespace memdecode
