// SPDX-License-Identifier: Apache-2.0

#include "aqtc/metrics.hpp"

#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "aqtc/error.hpp"

namespace aqtc {

int rank_of_truth(std::span<const double> scores, int truth) {
  if (truth < 0 || static_cast<std::size_t>(truth) >= scores.size())
    throw IndexError("rank_of_truth: truth " + std::to_string(truth) + " outside [0, " +
                     std::to_string(scores.size()) + ")");
  const double t = scores[static_cast<std::size_t>(truth)];
  int rank = 1;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k] > t || (scores[k] == t && k < static_cast<std::size_t>(truth))) ++rank;
  }
  return rank;
}

MetricsReport MetricsReport::from_histogram(std::vector<std::int64_t> counts) {
  while (!counts.empty() && counts.back() == 0) counts.pop_back();
  MetricsReport m;
  m.counts_ = std::move(counts);
  for (auto c : m.counts_) {
    if (c < 0) throw ContractError("rank histogram has a negative count");
    m.count_ += c;
  }
  if (m.count_ == 0) throw ContractError("metrics need at least one rank record");
  const auto n = static_cast<double>(m.count_);
  double reciprocal = 0;
  for (std::size_t r = 0; r < m.counts_.size(); ++r)
    reciprocal += static_cast<double>(m.counts_[r]) / static_cast<double>(r + 1);
  m.r1_ = static_cast<double>(m.hits_at(1)) / n;
  m.r3_ = static_cast<double>(m.hits_at(3)) / n;
  m.mr_ = static_cast<double>(m.rank_sum()) / n;
  m.mrr_ = reciprocal / n;

  // R@1 <= R@3 <= 1, and 1/MR <= MRR (arithmetic vs harmonic mean).
  if (!(m.r1_ <= m.r3_ && m.r3_ <= 1.0) || m.mrr_ * m.mr_ < 1.0 - 1e-12)
    throw std::logic_error("metrics invariant violated");
  return m;
}

std::int64_t MetricsReport::hits_at(int k) const {
  std::int64_t hits = 0;
  for (std::size_t r = 0; r < counts_.size() && static_cast<int>(r) < k; ++r) hits += counts_[r];
  return hits;
}

std::int64_t MetricsReport::rank_sum() const {
  std::int64_t s = 0;
  for (std::size_t r = 0; r < counts_.size(); ++r) s += counts_[r] * static_cast<std::int64_t>(r + 1);
  return s;
}

MetricsReport MetricsReport::merged(const MetricsReport& other) const {
  std::vector<std::int64_t> counts(std::max(counts_.size(), other.counts_.size()), 0);
  for (std::size_t r = 0; r < counts_.size(); ++r) counts[r] += counts_[r];
  for (std::size_t r = 0; r < other.counts_.size(); ++r) counts[r] += other.counts_[r];
  return from_histogram(std::move(counts));
}

MetricsReport compute_metrics(std::span<const RankRecord> records) {
  if (records.empty()) throw ContractError("compute_metrics: no rank records");
  std::vector<std::int64_t> counts;
  for (const auto& rec : records) {
    if (rec.rank < 1 || (rec.candidates > 0 && rec.rank > rec.candidates))
      throw ContractError("rank record for '" + rec.sample_id + "' has rank " + std::to_string(rec.rank) +
                          " outside [1, " + std::to_string(rec.candidates) + "]");
    if (counts.size() < static_cast<std::size_t>(rec.rank)) counts.resize(static_cast<std::size_t>(rec.rank), 0);
    ++counts[static_cast<std::size_t>(rec.rank - 1)];
  }
  return MetricsReport::from_histogram(std::move(counts));
}

void BucketScheme::validate() const {
  for (std::size_t i = 1; i < upper_bounds.size(); ++i)
    if (upper_bounds[i] <= upper_bounds[i - 1]) throw ConfigError("bucket bounds must be strictly increasing");
}

std::vector<std::string> BucketScheme::labels() const {
  std::vector<std::string> out;
  int lo = 0;
  for (int ub : upper_bounds) {
    out.push_back(lo == 0 ? "<=" + std::to_string(ub) : std::to_string(lo + 1) + "-" + std::to_string(ub));
    lo = ub;
  }
  out.push_back(upper_bounds.empty() ? "all" : ">" + std::to_string(lo));
  return out;
}

std::string BucketScheme::label_for(int button_count) const {
  const auto names = labels();
  for (std::size_t i = 0; i < upper_bounds.size(); ++i)
    if (button_count <= upper_bounds[i]) return names[i];
  return names.back();
}

BucketReport bucket_report(std::span<const RankRecord> records, const BucketScheme& scheme) {
  BucketReport out;
  out.overall = compute_metrics(records);
  std::map<std::string, std::vector<RankRecord>> by_bucket;
  for (const auto& r : records) by_bucket[r.bucket].push_back(r);
  for (const auto& label : scheme.labels()) {
    auto it = by_bucket.find(label);
    if (it == by_bucket.end()) {
      out.omitted.push_back(label);
      continue;
    }
    out.buckets.push_back({label, compute_metrics(it->second)});
    by_bucket.erase(it);
  }
  if (!by_bucket.empty())
    throw ContractError("rank record carries unknown bucket label '" + by_bucket.begin()->first + "'");
  return out;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string grid_row(const std::string& label, const MetricsReport& m, std::size_t width) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s  %6lld\n", static_cast<int>(width), label.c_str(),
                fixed4(m.r_at_1()).c_str(), fixed4(m.r_at_3()).c_str(), fixed4(m.mr()).c_str(),
                fixed4(m.mrr()).c_str(), static_cast<long long>(m.count()));
  return buf;
}

std::string grid_header(const std::string& first, std::size_t width) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s  %6s\n", static_cast<int>(width), first.c_str(), "R@1",
                "R@3", "MR", "MRR", "n");
  return buf;
}

}  // namespace

std::string format_report(const MetricsReport& m) {
  return "R@1 " + fixed4(m.r_at_1()) + "  R@3 " + fixed4(m.r_at_3()) + "  MR " + fixed4(m.mr()) + "  MRR " +
         fixed4(m.mrr());
}

std::string format_bucket_grid(const BucketReport& report) {
  std::size_t width = std::string("# of buttons").size();
  for (const auto& b : report.buckets) width = std::max(width, b.label.size());
  std::ostringstream os;
  os << grid_header("# of buttons", width);
  for (const auto& b : report.buckets) os << grid_row(b.label, b.report, width);
  os << grid_row(kAllSamplesLabel, report.overall, width);
  for (const auto& label : report.omitted) os << "(bucket " << label << " has no samples)\n";
  return os.str();
}

std::string format_comparison(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 12;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::ostringstream os;
  os << grid_header("step network", width);
  for (const auto& [name, m] : rows) os << grid_row(name, m, width);
  return os.str();
}

}  // namespace aqtc
