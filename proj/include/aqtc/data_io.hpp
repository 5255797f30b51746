// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aqtc/features.hpp"
#include "aqtc/metrics.hpp"

namespace aqtc {

inline constexpr int kManifestVersion = 1;

// Raw tensor files: little-endian IEEE-754 values, row-major, no header.
// Shape lives only in the document that references the file.

void write_tensor(const std::filesystem::path& path, const Matrix<float>& m);
void write_tensor(const std::filesystem::path& path, const Matrix<double>& m);

/// Throws DataError(kMissingFile) or DataError(kByteLength) naming the path.
Matrix<float> read_tensor_f32(const std::filesystem::path& path, Index rows, Index cols);
Matrix<double> read_tensor_f64(const std::filesystem::path& path, Index rows, Index cols);

/// Writes `dir/manifest.json` and `dir/tensors/...`. Returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

/// Loads and validates every sample referenced by a manifest. Each failure is
/// a DataError whose kind identifies the problem and whose message names the
/// sample.
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct SyntheticConfig {
  int n_samples = 80;
  int frames = 8;
  int frame_multiplier = 1;  // sampling-rate ablation: frames per base frame
  int sentences = 6;
  int steps = 3;
  int candidates = 0;  // 0: one candidate per device button
  int d = 64;
  double noise_sigma = 0.05;
  std::vector<double> bucket_mix{0.4875, 0.3625, 0.15};
  BucketScheme buckets;
  int max_buttons = 30;
  std::uint64_t seed = 7;

  /// Throws ConfigError.
  void validate() const;
};

struct SyntheticDataset {
  Dataset data;
  Matrix<double> secret_map;  // d x d planted linear map
};

/// Samples per bucket by largest-remainder rounding of n * fractions.
std::vector<int> bucket_counts(int n, const std::vector<double>& fractions);

/// Deterministic planted-signal dataset. For each step the truth candidate's
/// text row is M (Q + mean S) + noise and its image row is M mean(V) + noise;
/// every other candidate is a fresh standard normal draw.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// Scores each candidate by cos(A_c, M (Q + mean S)) and ranks the truth.
std::vector<RankRecord> nearest_candidate_oracle(const SyntheticDataset& dataset, const BucketScheme& scheme);

}  // namespace aqtc
