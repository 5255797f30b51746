// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "aqtc/data_io.hpp"
#include "aqtc/model.hpp"

namespace aqtc {

inline constexpr int kCheckpointVersion = 1;

struct TensorDescriptor {
  std::string name;
  std::string path;  // relative to the checkpoint directory
  Index rows = 0;
  Index cols = 0;
};

struct CheckpointInfo {
  std::string dtype;  // "f32" or "f64"
  ModelConfig model;
  nlohmann::json train_config;  // echo of the training configuration, may be null
  int best_epoch = 0;
  std::uint64_t seed = 0;
  std::vector<TensorDescriptor> parameters;
};

/// Writes `dir/checkpoint.json` (keys sorted, parameters in registration
/// order) and one raw tensor file per parameter under `dir/params/`.
void write_checkpoint_document(const std::filesystem::path& dir, const CheckpointInfo& info);

/// Throws DataError(kVersion / kParse / kMissingFile).
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

template <typename Scalar>
constexpr const char* dtype_name() {
  return std::is_same_v<Scalar, float> ? "f32" : "f64";
}

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& dir,
                     const nlohmann::json& train_config = nullptr, int best_epoch = 0, std::uint64_t seed = 0) {
  CheckpointInfo info;
  info.dtype = dtype_name<Scalar>();
  info.model = model.config();
  info.train_config = train_config;
  info.best_epoch = best_epoch;
  info.seed = seed;
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    TensorDescriptor d{p.name, "params/" + p.name + ".bin", p.value.rows(), p.value.cols()};
    write_tensor(dir / d.path, p.value);
    info.parameters.push_back(std::move(d));
  }
  write_checkpoint_document(dir, info);
}

/// Loads parameter values into an existing model. The checkpoint's model
/// configuration and every tensor shape must match the model's.
template <typename Scalar>
CheckpointInfo load_checkpoint(Model<Scalar>& model, const std::filesystem::path& dir) {
  auto info = read_checkpoint_info(dir);
  if (info.dtype != dtype_name<Scalar>())
    throw DataError(DataError::Kind::kDimMismatch,
                    "checkpoint stores " + info.dtype + " parameters but the model computes in " + dtype_name<Scalar>());
  const auto& want = model.config();
  const auto& got = info.model;
  if (!(got == want)) {
    throw DataError(DataError::Kind::kDimMismatch,
                    "checkpoint model (d_v=" + std::to_string(got.d_v) + ", d_t=" + std::to_string(got.d_t) +
                        ", d_h=" + std::to_string(got.d_h) + ", heads=" + std::to_string(got.heads) + ", " +
                        to_string(got.step_variant) + ") does not match the configured model (d_v=" +
                        std::to_string(want.d_v) + ", d_t=" + std::to_string(want.d_t) + ", d_h=" +
                        std::to_string(want.d_h) + ", heads=" + std::to_string(want.heads) + ", " +
                        to_string(want.step_variant) + ")");
  }
  auto& params = model.params();
  if (info.parameters.size() != params.size())
    throw DataError(DataError::Kind::kDimMismatch, "checkpoint has " + std::to_string(info.parameters.size()) +
                                                       " parameters, model has " + std::to_string(params.size()));
  std::vector<Matrix<Scalar>> values;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& d = info.parameters[i];
    const auto& p = params[i];
    if (d.name != p.name || d.rows != p.value.rows() || d.cols != p.value.cols())
      throw DataError(DataError::Kind::kDimMismatch, "checkpoint parameter '" + d.name + "' " +
                                                         shape_str(d.rows, d.cols) + " does not match model parameter '" +
                                                         p.name + "' " + shape_str(p.value));
    if constexpr (std::is_same_v<Scalar, float>) {
      values.push_back(read_tensor_f32(dir / d.path, d.rows, d.cols));
    } else {
      values.push_back(read_tensor_f64(dir / d.path, d.rows, d.cols));
    }
  }
  params.restore(values);
  return info;
}

/// Builds a model from the configuration stored in the checkpoint.
template <typename Scalar>
std::unique_ptr<Model<Scalar>> load_model(const std::filesystem::path& dir) {
  const auto info = read_checkpoint_info(dir);
  auto model = std::make_unique<Model<Scalar>>(info.model, 0);
  load_checkpoint(*model, dir);
  return model;
}

}  // namespace aqtc
