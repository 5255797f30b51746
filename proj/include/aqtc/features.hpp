// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "aqtc/autodiff.hpp"

namespace aqtc {

/// Features are stored and exchanged at 32-bit precision regardless of the
/// precision a model computes in.
using FeatureMatrix = Matrix<float>;

/// One answer step: candidate answer texts, candidate button images, truth.
struct StepCandidates {
  FeatureMatrix A;  // j x d_t
  FeatureMatrix I;  // j x d_v
  int truth = 0;

  Index count() const { return A.rows(); }
};

/// One question sample with its video, script and question features.
struct FeatureBundle {
  std::string id;
  int button_count = 0;
  FeatureMatrix V;  // f x d_v, one row per sampled frame
  FeatureMatrix S;  // e x d_t, one row per script sentence
  FeatureMatrix Q;  // 1 x d_t
  std::vector<StepCandidates> steps;
};

struct Dataset {
  int d_v = 0;
  int d_t = 0;
  std::vector<FeatureBundle> samples;
};

/// Checks the shape invariants of a bundle against declared feature widths.
/// Throws ShapeError / IndexError naming the sample.
void validate_bundle(const FeatureBundle& bundle, int d_v, int d_t);

}  // namespace aqtc
