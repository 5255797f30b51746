// SPDX-License-Identifier: Apache-2.0

#include "aqtc/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "aqtc/error.hpp"
#include "aqtc/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aqtc {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void write_raw(const fs::path& path, const Matrix<T>& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot open '" + path.string() + "' for writing");
  for (Index i = 0; i < m.size(); ++i) {
    const T v = to_little(m.data()[i]);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  if (!out) throw DataError(DataError::Kind::kIo, "failed writing '" + path.string() + "'");
}

template <typename T>
Matrix<T> read_raw(const fs::path& path, Index rows, Index cols) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec))
    throw DataError(DataError::Kind::kMissingFile, "missing tensor file '" + path.string() + "'");
  const auto bytes = fs::file_size(path, ec);
  const auto expected = static_cast<std::uintmax_t>(rows * cols) * sizeof(T);
  if (ec || bytes != expected)
    throw DataError(DataError::Kind::kByteLength, "tensor file '" + path.string() + "' has " + std::to_string(bytes) +
                                                      " bytes, expected " + std::to_string(expected) + " for " +
                                                      shape_str(rows, cols));
  std::ifstream in(path, std::ios::binary);
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    m.data()[i] = to_little(v);
  }
  if (!in) throw DataError(DataError::Kind::kIo, "failed reading '" + path.string() + "'");
  return m;
}

json descriptor(const std::string& rel, const FeatureMatrix& m) {
  return {{"path", rel}, {"rows", m.rows()}, {"cols", m.cols()}};
}

std::string sample_context(const std::string& id) { return "sample '" + id + "': "; }

FeatureMatrix load_descriptor(const fs::path& root, const json& d, const std::string& id, const char* what) {
  try {
    const auto rows = d.at("rows").get<Index>();
    const auto cols = d.at("cols").get<Index>();
    if (rows < 1 || cols < 1)
      throw DataError(DataError::Kind::kParse,
                      sample_context(id) + what + " descriptor has non-positive shape " + shape_str(rows, cols));
    return read_raw<float>(root / d.at("path").get<std::string>(), rows, cols);
  } catch (const DataError& e) {
    if (std::string(e.what()).rfind("sample '", 0) == 0) throw;
    throw DataError(e.kind(), sample_context(id) + what + ": " + e.what());
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::kParse, sample_context(id) + what + " descriptor: " + e.what());
  }
}

}  // namespace

void write_tensor(const fs::path& path, const Matrix<float>& m) { write_raw(path, m); }
void write_tensor(const fs::path& path, const Matrix<double>& m) { write_raw(path, m); }

Matrix<float> read_tensor_f32(const fs::path& path, Index rows, Index cols) { return read_raw<float>(path, rows, cols); }
Matrix<double> read_tensor_f64(const fs::path& path, Index rows, Index cols) {
  return read_raw<double>(path, rows, cols);
}

void validate_bundle(const FeatureBundle& b, int d_v, int d_t) {
  const std::string ctx = sample_context(b.id);
  auto check = [&](const char* what, const FeatureMatrix& m, Index want_cols) {
    if (m.rows() < 1 || m.cols() < 1) throw ShapeError(ctx + what + " is empty");
    if (m.cols() != want_cols)
      throw ShapeError(ctx + what + " is " + shape_str(m) + ", expected width " + std::to_string(want_cols));
  };
  check("V", b.V, d_v);
  check("S", b.S, d_t);
  check("Q", b.Q, d_t);
  if (b.Q.rows() != 1) throw ShapeError(ctx + "Q must have one row, got " + shape_str(b.Q));
  if (b.steps.empty()) throw ShapeError(ctx + "no steps");
  for (std::size_t t = 0; t < b.steps.size(); ++t) {
    const auto& s = b.steps[t];
    check("A", s.A, d_t);
    check("I", s.I, d_v);
    if (s.A.rows() != s.I.rows())
      throw ShapeError(ctx + "step " + std::to_string(t) + " has " + std::to_string(s.A.rows()) +
                       " answer rows but " + std::to_string(s.I.rows()) + " image rows");
    if (s.truth < 0 || s.truth >= s.A.rows())
      throw IndexError(ctx + "step " + std::to_string(t) + " truth " + std::to_string(s.truth) + " outside [0, " +
                       std::to_string(s.A.rows()) + ")");
  }
}

fs::path save_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir / "tensors");
  json samples = json::array();
  std::set<std::string> seen;
  for (const auto& b : dataset.samples) {
    validate_bundle(b, dataset.d_v, dataset.d_t);
    if (!seen.insert(b.id).second)
      throw DataError(DataError::Kind::kDuplicateId, "duplicate sample id '" + b.id + "'");
    const std::string base = "tensors/" + b.id + "/";
    json entry = {{"id", b.id}, {"button_count", b.button_count}};
    auto put = [&](const std::string& name, const FeatureMatrix& m) {
      write_raw(dir / (base + name + ".bin"), m);
      return descriptor(base + name + ".bin", m);
    };
    entry["V"] = put("V", b.V);
    entry["S"] = put("S", b.S);
    entry["Q"] = put("Q", b.Q);
    json steps = json::array();
    for (std::size_t t = 0; t < b.steps.size(); ++t) {
      const auto& s = b.steps[t];
      const std::string tag = "step" + std::to_string(t);
      steps.push_back({{"A", put(tag + "_A", s.A)}, {"I", put(tag + "_I", s.I)}, {"truth", s.truth}});
    }
    entry["steps"] = std::move(steps);
    samples.push_back(std::move(entry));
  }
  json doc = {{"format", "aqtc-manifest"},
              {"format_version", kManifestVersion},
              {"d_v", dataset.d_v},
              {"d_t", dataset.d_t},
              {"samples", std::move(samples)}};
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot write '" + manifest.string() + "'");
  out << doc.dump(2) << '\n';
  return manifest;
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "missing manifest '" + manifest_path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::kParse, "manifest '" + manifest_path.string() + "': " + e.what());
  }
  const fs::path root = manifest_path.parent_path();
  Dataset ds;
  std::vector<json> entries;
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kManifestVersion)
      throw DataError(DataError::Kind::kVersion, "manifest version " + std::to_string(version) + " is not supported");
    ds.d_v = doc.at("d_v").get<int>();
    ds.d_t = doc.at("d_t").get<int>();
    entries = doc.at("samples").get<std::vector<json>>();
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::kParse, "manifest '" + manifest_path.string() + "': " + e.what());
  }
  std::set<std::string> seen;
  for (const auto& entry : entries) {
    FeatureBundle b;
    try {
      b.id = entry.at("id").get<std::string>();
      b.button_count = entry.at("button_count").get<int>();
    } catch (const json::exception& e) {
      throw DataError(DataError::Kind::kParse, "manifest sample entry: " + std::string(e.what()));
    }
    if (!seen.insert(b.id).second)
      throw DataError(DataError::Kind::kDuplicateId, "duplicate sample id '" + b.id + "'");
    const std::string ctx = sample_context(b.id);
    try {
      b.V = load_descriptor(root, entry.at("V"), b.id, "V");
      b.S = load_descriptor(root, entry.at("S"), b.id, "S");
      b.Q = load_descriptor(root, entry.at("Q"), b.id, "Q");
      if (!entry.contains("steps") || !entry["steps"].is_array() || entry["steps"].empty())
        throw DataError(DataError::Kind::kParse, ctx + "no steps");
      for (const auto& st : entry["steps"]) {
        StepCandidates s;
        s.A = load_descriptor(root, st.at("A"), b.id, "A");
        s.I = load_descriptor(root, st.at("I"), b.id, "I");
        s.truth = st.at("truth").get<int>();
        if (s.truth < 0 || s.truth >= s.A.rows())
          throw DataError(DataError::Kind::kTruthRange, ctx + "truth " + std::to_string(s.truth) + " outside [0, " +
                                                            std::to_string(s.A.rows()) + ")");
        b.steps.push_back(std::move(s));
      }
    } catch (const json::exception& e) {
      throw DataError(DataError::Kind::kParse, ctx + e.what());
    }
    try {
      validate_bundle(b, ds.d_v, ds.d_t);
    } catch (const Error& e) {
      throw DataError(DataError::Kind::kDimMismatch, e.what());
    }
    ds.samples.push_back(std::move(b));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_samples < 1) throw ConfigError("n_samples must be at least 1");
  if (frames < 1 || frame_multiplier < 1 || sentences < 1 || steps < 1 || d < 1)
    throw ConfigError("frames, frame_multiplier, sentences, steps and d must be positive");
  if (candidates < 0) throw ConfigError("candidates must be >= 0 (0 = one per button)");
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be finite and >= 0");
  buckets.validate();
  if (bucket_mix.size() != buckets.upper_bounds.size() + 1)
    throw ConfigError("bucket_mix has " + std::to_string(bucket_mix.size()) + " entries but there are " +
                      std::to_string(buckets.upper_bounds.size() + 1) + " buckets");
  double total = 0;
  for (double f : bucket_mix) {
    if (!(f >= 0)) throw ConfigError("bucket_mix fractions must be >= 0");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("bucket_mix sums to " + std::to_string(total) + ", not 1");
  if (!buckets.upper_bounds.empty() && buckets.upper_bounds.front() < 2)
    throw ConfigError("smallest bucket must admit at least 2 buttons");
  if (!buckets.upper_bounds.empty() && max_buttons <= buckets.upper_bounds.back())
    throw ConfigError("max_buttons must exceed the last bucket bound");
}

std::vector<int> bucket_counts(int n, const std::vector<double>& fractions) {
  std::vector<int> counts(fractions.size(), 0);
  std::vector<double> remainder(fractions.size(), 0.0);
  int assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = n * fractions[i];
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    remainder[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n && k < order.size(); ++k, ++assigned) ++counts[order[k]];
  return counts;
}

namespace {

Eigen::RowVectorXd normal_row(Rng& rng, Index d) {
  Eigen::RowVectorXd r(d);
  for (Index c = 0; c < d; ++c) r(c) = rng.normal();
  return r;
}

Eigen::MatrixXd normal_matrix(Rng& rng, Index rows, Index d) {
  Eigen::MatrixXd m(rows, d);
  for (Index r = 0; r < rows; ++r) m.row(r) = normal_row(rng, d);
  return m;
}

}  // namespace

// Draw order, all from one Rng(seed):
//   1. M, row-major, entries N(0, 1/d)
//   2. bucket label list (largest-remainder counts), shuffled
//   3. per sample: button count, Q, S, base frames (+ jittered repeats), then
//      per step: truth index, then candidate rows in index order (A row, I row)
SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const Index d = config.d;
  SyntheticDataset out;
  out.data.d_v = config.d;
  out.data.d_t = config.d;
  out.secret_map = normal_matrix(rng, d, d) / std::sqrt(static_cast<double>(d));
  const Eigen::MatrixXd& M = out.secret_map;

  const auto counts = bucket_counts(config.n_samples, config.bucket_mix);
  std::vector<int> bucket_of;
  for (std::size_t b = 0; b < counts.size(); ++b) bucket_of.insert(bucket_of.end(), counts[b], static_cast<int>(b));
  rng.shuffle(bucket_of);

  const auto& bounds = config.buckets.upper_bounds;
  for (int i = 0; i < config.n_samples; ++i) {
    const auto b = static_cast<std::size_t>(bucket_of[static_cast<std::size_t>(i)]);
    const int lo = b == 0 ? 2 : bounds[b - 1] + 1;
    const int hi = b < bounds.size() ? bounds[b] : config.max_buttons;
    FeatureBundle bundle;
    char id[32];
    std::snprintf(id, sizeof id, "s%04d", i);
    bundle.id = id;
    bundle.button_count = lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));

    const Eigen::RowVectorXd q = normal_row(rng, d);
    const Eigen::MatrixXd s = normal_matrix(rng, config.sentences, d);
    Eigen::MatrixXd v(config.frames * config.frame_multiplier, d);
    for (int f = 0; f < config.frames; ++f) {
      const Eigen::RowVectorXd base = normal_row(rng, d);
      v.row(f * config.frame_multiplier) = base;
      for (int r = 1; r < config.frame_multiplier; ++r)
        v.row(f * config.frame_multiplier + r) = base + 0.1 * normal_row(rng, d);
    }
    const Eigen::RowVectorXd text_target = (q + s.colwise().mean()) * M.transpose();
    const Eigen::RowVectorXd image_target = v.colwise().mean() * M.transpose();

    bundle.Q = q.cast<float>();
    bundle.S = s.cast<float>();
    bundle.V = v.cast<float>();
    for (int t = 0; t < config.steps; ++t) {
      const int j = config.candidates > 0 ? config.candidates : bundle.button_count;
      StepCandidates step;
      step.truth = static_cast<int>(rng.below(static_cast<std::size_t>(j)));
      Eigen::MatrixXd A(j, d), I(j, d);
      for (int c = 0; c < j; ++c) {
        if (c == step.truth) {
          A.row(c) = text_target + config.noise_sigma * normal_row(rng, d);
          I.row(c) = image_target + config.noise_sigma * normal_row(rng, d);
        } else {
          A.row(c) = normal_row(rng, d);
          I.row(c) = normal_row(rng, d);
        }
      }
      step.A = A.cast<float>();
      step.I = I.cast<float>();
      bundle.steps.push_back(std::move(step));
    }
    out.data.samples.push_back(std::move(bundle));
  }
  return out;
}

std::vector<RankRecord> nearest_candidate_oracle(const SyntheticDataset& dataset, const BucketScheme& scheme) {
  std::vector<RankRecord> records;
  const Eigen::MatrixXd& M = dataset.secret_map;
  for (const auto& b : dataset.data.samples) {
    const Eigen::RowVectorXd target =
        (b.Q.cast<double>().row(0) + b.S.cast<double>().colwise().mean()) * M.transpose();
    for (std::size_t t = 0; t < b.steps.size(); ++t) {
      const auto& s = b.steps[t];
      std::vector<double> scores;
      for (Index c = 0; c < s.A.rows(); ++c) {
        const Eigen::RowVectorXd a = s.A.row(c).cast<double>();
        scores.push_back(a.dot(target) / (a.norm() * target.norm()));
      }
      records.push_back({b.id, static_cast<int>(t), static_cast<int>(s.A.rows()), rank_of_truth(scores, s.truth),
                         scheme.label_for(b.button_count)});
    }
  }
  return records;
}

}  // namespace aqtc
