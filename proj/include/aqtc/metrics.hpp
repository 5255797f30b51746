// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace aqtc {

/// Rank of one ground-truth candidate within one step.
struct RankRecord {
  std::string sample_id;
  int step = 0;
  int candidates = 0;
  int rank = 0;  // 1-based
  std::string bucket;
};

/// 1 + #{k : s_k > s_truth} + #{k < truth : s_k == s_truth}.
/// Throws IndexError when truth is outside [0, scores.size()).
int rank_of_truth(std::span<const double> scores, int truth);

/// R@1, R@3, MR, MRR over a set of rank records. Backed by the exact rank
/// histogram, so merging reports is exact.
class MetricsReport {
 public:
  MetricsReport() = default;

  /// counts[r - 1] = number of records with rank r.
  static MetricsReport from_histogram(std::vector<std::int64_t> counts);

  std::int64_t count() const { return count_; }
  double r_at_1() const { return r1_; }
  double r_at_3() const { return r3_; }
  double mr() const { return mr_; }
  double mrr() const { return mrr_; }
  const std::vector<std::int64_t>& histogram() const { return counts_; }

  std::int64_t hits_at(int k) const;
  std::int64_t rank_sum() const;

  MetricsReport merged(const MetricsReport& other) const;

  bool operator==(const MetricsReport& other) const { return counts_ == other.counts_; }

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t count_ = 0;
  double r1_ = 0;
  double r3_ = 0;
  double mr_ = 0;
  double mrr_ = 0;
};

/// Throws ContractError on an empty record list.
MetricsReport compute_metrics(std::span<const RankRecord> records);

/// Button-count buckets. Upper bounds are inclusive: {10, 20} gives
/// "<=10", "11-20", ">20".
struct BucketScheme {
  std::vector<int> upper_bounds{10, 20};

  std::vector<std::string> labels() const;
  std::string label_for(int button_count) const;
  void validate() const;
};

struct BucketRow {
  std::string label;
  MetricsReport report;
};

struct BucketReport {
  std::vector<BucketRow> buckets;    // nonempty buckets, in scheme order
  std::vector<std::string> omitted;  // labels of empty buckets
  MetricsReport overall;
};

inline constexpr const char* kAllSamplesLabel = "all samples";

BucketReport bucket_report(std::span<const RankRecord> records, const BucketScheme& scheme);

/// "R@1 0.3750  R@3 0.7500  MR 2.6900  MRR 0.5000" style line, four decimals.
std::string format_report(const MetricsReport& report);

/// Bucket grid: one row per nonempty bucket then "all samples".
std::string format_bucket_grid(const BucketReport& report);

/// Side-by-side table of named runs (e.g. step-network variants).
std::string format_comparison(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace aqtc
