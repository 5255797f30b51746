// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aqtc/autodiff.hpp"
#include "aqtc/features.hpp"
#include "aqtc/rng.hpp"
#include "aqtc/step_network.hpp"

namespace aqtc {

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates at a kink
  double max_rel_error = 0;
  double max_abs_error = 0;
  double analytic_at_worst = 0;
  double numeric_at_worst = 0;
  Index worst_row = 0;
  Index worst_col = 0;
};

struct GradReport {
  std::vector<GradCheckEntry> parameters;
  std::string failure;  // set when a perturbed loss was not finite

  double max_rel_error() const;
  double max_abs_error() const;
  bool passed(double tolerance) const;

  /// Entries merged by parameter group (name prefix before the first '.'),
  /// in first-appearance order.
  std::vector<GradCheckEntry> by_group() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  int coords_per_tensor = 10;
  std::uint64_t seed = 0;
  // One-sided differences disagreeing by more than this (relative) mark a kink.
  double kink_tolerance = 1e-2;
};

using LossClosure = std::function<Var<double>(Graph<double>&)>;

/// Central finite differences (f(p+h) - f(p-h)) / 2h on sampled coordinates of
/// every parameter, compared with the reverse-mode gradient. 64-bit only.
GradReport grad_check(const LossClosure& loss, ParameterSet<double>& params, const GradCheckOptions& options = {});

/// Loss with coordinate `flat` of parameter `param` set to `value` and every
/// other parameter at the checked point.
using ReferenceLoss = std::function<long double(std::size_t param, std::size_t flat, long double value)>;

/// As above, with the finite differences taken on `reference` instead of
/// `loss`, e.g. an extended-precision evaluation of the same function.
GradReport grad_check(const LossClosure& loss, const ReferenceLoss& reference, ParameterSet<double>& params,
                      const GradCheckOptions& options = {});

struct GradCheckConfig {
  int d_in = 16;
  int d_h = 16;
  int heads = 2;
  int frames = 5;
  int sentences = 4;
  int candidates = 3;
  int steps = 2;
  StepVariant step_variant = StepVariant::kGru;
  std::uint64_t seed = 1;
  double step = 1e-5;
  int coords_per_tensor = 10;
  double tolerance = 1e-4;
};

/// Standard-normal features of the given shape; truths drawn uniformly.
FeatureBundle random_bundle(Rng& rng, int d_v, int d_t, int frames, int sentences, int candidates, int steps);

/// Builds a freshly initialised 64-bit model and a random sample from the
/// config and checks the teacher-forced sample loss. Throws ConfigError for
/// an invalid configuration.
GradReport model_grad_check(const GradCheckConfig& config);

}  // namespace aqtc
