// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Named-tensor container used for checkpoints and attention records.
//
// Layout (all integers unsigned 32-bit little-endian):
//
//   "S2TP"                       magic, 4 bytes
//   version                      currently 1
//   config_len, config bytes     UTF-8 `key = value` snapshot (may be empty)
//   tensor_count
//   per tensor:
//     name_len, name bytes
//     rank, dims[rank]
//     values                     product(dims) IEEE-754 binary32, LE, row-major

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "s2tp/dla.hpp"
#include "s2tp/model.hpp"
#include "s2tp/tensor.hpp"

namespace s2tp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;

  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
/// Throws IncompatibleCheckpointError on bad magic, version or truncation.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of a model's parameters plus its configuration text.
Checkpoint make_checkpoint(const Model<float>& model,
                           const std::string& config_text);
/// Restores parameter values into an architecture-compatible model.
void restore_parameters(const Checkpoint& checkpoint, Model<float>& model);

/// Elementwise mean of every tensor. All inputs must hold the same names and
/// shapes; the config text of the first input is kept. Each coordinate is
/// summed in sorted order so the result does not depend on argument order.
Checkpoint average_checkpoints(std::span<const Checkpoint> checkpoints);
Checkpoint average_checkpoint_files(std::span<const std::string> paths);

/// Attention records hold tensors "Z" (n x d), "A" (n x m) and "frame_mask"
/// (m values, 1 = valid frame).
Checkpoint make_attention_record(const dla::AttentionRecord<float>& record);
dla::AttentionRecord<float> read_attention_record(const Checkpoint& container);

}  // namespace s2tp
