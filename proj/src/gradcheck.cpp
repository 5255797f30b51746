// SPDX-License-Identifier: Apache-2.0

#include "aqtc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "aqtc/error.hpp"
#include "aqtc/model.hpp"

namespace aqtc {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double GradReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : parameters) m = std::max(m, e.max_rel_error);
  return m;
}

double GradReport::max_abs_error() const {
  double m = 0;
  for (const auto& e : parameters) m = std::max(m, e.max_abs_error);
  return m;
}

bool GradReport::passed(double tolerance) const {
  if (!failure.empty() || parameters.empty()) return false;
  for (const auto& e : parameters)
    if (!(e.max_rel_error < tolerance)) return false;
  return true;
}

std::vector<GradCheckEntry> GradReport::by_group() const {
  std::vector<GradCheckEntry> groups;
  for (const auto& e : parameters) {
    const std::string group = e.name.substr(0, e.name.find('.'));
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.name == group; });
    if (it == groups.end()) {
      groups.push_back(e);
      groups.back().name = group;
      continue;
    }
    it->checked += e.checked;
    it->skipped += e.skipped;
    it->max_abs_error = std::max(it->max_abs_error, e.max_abs_error);
    if (e.max_rel_error > it->max_rel_error) {
      it->max_rel_error = e.max_rel_error;
      it->analytic_at_worst = e.analytic_at_worst;
      it->numeric_at_worst = e.numeric_at_worst;
      it->worst_row = e.worst_row;
      it->worst_col = e.worst_col;
    }
  }
  return groups;
}

GradReport grad_check(const LossClosure& loss, ParameterSet<double>& params, const GradCheckOptions& options) {
  auto reference = [&](std::size_t param, std::size_t flat, long double value) -> long double {
    double& x = params[param].value.data()[flat];
    const double saved = x;
    x = static_cast<double>(value);
    try {
      Graph<double> g(GradMode::kInference);
      auto l = loss(g);
      x = saved;
      if (l.rows() != 1 || l.cols() != 1) throw ContractError("grad_check: loss must be 1x1");
      return l.value()(0, 0);
    } catch (...) {
      x = saved;
      throw;
    }
  };
  return grad_check(loss, reference, params, options);
}

GradReport grad_check(const LossClosure& loss, const ReferenceLoss& reference, ParameterSet<double>& params,
                      const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ConfigError("grad_check: step must be positive");
  if (options.coords_per_tensor < 1) throw ConfigError("grad_check: coords_per_tensor must be positive");

  params.zero_grad();
  {
    Graph<double> g(GradMode::kRecord);
    auto l = loss(g);
    if (l.rows() != 1 || l.cols() != 1) throw ContractError("grad_check: loss must be 1x1");
    g.backward(l);
  }

  GradReport report;
  Rng rng(options.seed);
  const long double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    GradCheckEntry entry;
    entry.name = p.name;
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> coords = rng.permutation(n);
    coords.resize(std::min(n, static_cast<std::size_t>(options.coords_per_tensor)));
    for (std::size_t flat : coords) {
      const long double x = p.value.data()[flat];
      long double base = 0, plus = 0, minus = 0;
      try {
        base = reference(pi, flat, x);
        plus = reference(pi, flat, x + h);
        minus = reference(pi, flat, x - h);
      } catch (const NonFiniteError& e) {
        report.failure = "non-finite loss while perturbing '" + p.name + "': " + e.what();
        report.parameters.push_back(entry);
        return report;
      }
      const long double right = (plus - base) / h;
      const long double left = (base - minus) / h;
      if (std::abs(right - left) > options.kink_tolerance * std::max({1.0L, std::abs(right), std::abs(left)})) {
        ++entry.skipped;
        continue;
      }
      const double numeric = static_cast<double>((plus - minus) / (2 * h));
      const double analytic = p.grad.data()[flat];
      const double rel = relative_error(analytic, numeric);
      ++entry.checked;
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic - numeric));
      if (rel >= entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.analytic_at_worst = analytic;
        entry.numeric_at_worst = numeric;
        entry.worst_row = static_cast<Index>(flat) / p.value.cols();
        entry.worst_col = static_cast<Index>(flat) % p.value.cols();
      }
    }
    report.parameters.push_back(entry);
  }
  return report;
}

FeatureBundle random_bundle(Rng& rng, int d_v, int d_t, int frames, int sentences, int candidates, int steps) {
  auto normal = [&](Index rows, Index cols) {
    FeatureMatrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
    return m;
  };
  FeatureBundle b;
  b.id = "random";
  b.button_count = candidates;
  b.V = normal(frames, d_v);
  b.S = normal(sentences, d_t);
  b.Q = normal(1, d_t);
  for (int t = 0; t < steps; ++t) {
    StepCandidates s;
    s.A = normal(candidates, d_t);
    s.I = normal(candidates, d_v);
    s.truth = static_cast<int>(rng.below(static_cast<std::size_t>(candidates)));
    b.steps.push_back(std::move(s));
  }
  return b;
}

GradReport model_grad_check(const GradCheckConfig& config) {
  if (config.frames < 1 || config.sentences < 1 || config.candidates < 1 || config.steps < 1 || config.d_in < 1)
    throw ConfigError("gradcheck: frames, sentences, candidates, steps and d_in must be positive");
  ModelConfig mc;
  mc.d_v = config.d_in;
  mc.d_t = config.d_in;
  mc.d_h = config.d_h;
  mc.heads = config.heads;
  mc.step_variant = config.step_variant;
  mc.validate();
  Model<double> model(mc, config.seed);
  Rng rng(config.seed + 1);
  const auto bundle =
      random_bundle(rng, config.d_in, config.d_in, config.frames, config.sentences, config.candidates, config.steps);
  GradCheckOptions options;
  options.step = config.step;
  options.coords_per_tensor = config.coords_per_tensor;
  options.seed = config.seed + 2;
  // Finite differences of a double-precision loss carry ~1e-11 of rounding
  // noise at h = 1e-5, which swamps the smallest gradients at initialisation.
  // The reference loss is therefore evaluated on an extended-precision copy.
  Model<long double> mirror(mc, config.seed);
  auto& wide = mirror.params();
  const auto& narrow = model.params();
  for (std::size_t i = 0; i < narrow.size(); ++i) wide[i].value = narrow[i].value.cast<long double>();
  auto reference = [&](std::size_t param, std::size_t flat, long double value) -> long double {
    long double& x = wide[param].value.data()[flat];
    const long double saved = x;
    x = value;
    try {
      Graph<long double> g(GradMode::kInference);
      const long double l = sample_loss(g, mirror, bundle).value()(0, 0);
      x = saved;
      return l;
    } catch (...) {
      x = saved;
      throw;
    }
  };
  return grad_check([&](Graph<double>& g) { return sample_loss(g, model, bundle); }, reference, model.params(),
                    options);
}

}  // namespace aqtc
