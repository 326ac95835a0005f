// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "s2tp/errors.hpp"

namespace s2tp {
namespace {

constexpr std::array<char, 4> kMagic = {'S', '2', 'T', 'P'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF),
                         static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF),
                         static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw IncompatibleCheckpointError(std::string("truncated checkpoint while "
                                                  "reading ") + what);
  }
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

std::string get_bytes(std::istream& in, std::uint32_t n, const char* what) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) {
    throw IncompatibleCheckpointError(std::string("truncated checkpoint while "
                                                  "reading ") + what);
  }
  return s;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) {
    throw ContractError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(checkpoint.config_text.size(), "config"));
  out.write(checkpoint.config_text.data(),
            static_cast<std::streamsize>(checkpoint.config_text.size()));
  put_u32(out, checked_u32(checkpoint.tensors.size(), "tensor count"));
  for (const NamedTensor& t : checkpoint.tensors) {
    put_u32(out, checked_u32(t.name.size(), "tensor name"));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, checked_u32(t.value.rank(), "rank"));
    for (std::size_t dim : t.value.shape()) put_u32(out, checked_u32(dim, "dim"));
    for (float v : t.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IncompatibleCheckpointError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpointError(
        "checkpoint format version " + std::to_string(version) +
        " is not supported (expected " + std::to_string(kCheckpointVersion) +
        ")");
  }
  Checkpoint ck;
  ck.config_text = get_bytes(in, get_u32(in, "config length"), "config");
  const std::uint32_t count = get_u32(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_bytes(in, get_u32(in, "name length"), "name");
    const std::uint32_t rank = get_u32(in, "rank");
    if (rank > 8) {
      throw IncompatibleCheckpointError("tensor " + t.name + " has rank " +
                                        std::to_string(rank));
    }
    Shape shape(rank);
    for (std::size_t& d : shape) d = get_u32(in, "dims");
    std::vector<float> values(shape_size(shape));
    for (float& v : values) v = std::bit_cast<float>(get_u32(in, "values"));
    t.value = Tensor<float>(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

Checkpoint make_checkpoint(const Model<float>& model,
                           const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  for (const Parameter<float>* p : model.parameters()) {
    ck.tensors.push_back({p->name, p->value});
  }
  return ck;
}

void restore_parameters(const Checkpoint& checkpoint, Model<float>& model) {
  ParameterList<float> params = model.parameters();
  if (params.size() != checkpoint.tensors.size()) {
    throw IncompatibleCheckpointError(
        "checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
        " tensors, model expects " + std::to_string(params.size()));
  }
  for (Parameter<float>* p : params) {
    const NamedTensor* t = checkpoint.find(p->name);
    if (t == nullptr) {
      throw IncompatibleCheckpointError("checkpoint lacks tensor " + p->name);
    }
    if (t->value.shape() != p->value.shape()) {
      throw IncompatibleCheckpointError(
          "tensor " + p->name + " has shape " + shape_string(t->value.shape()) +
          ", model expects " + shape_string(p->value.shape()));
    }
    p->value = t->value;
  }
}

Checkpoint average_checkpoints(std::span<const Checkpoint> checkpoints) {
  if (checkpoints.empty()) throw ContractError("no checkpoints to average");
  const Checkpoint& first = checkpoints.front();
  for (const Checkpoint& ck : checkpoints) {
    if (ck.tensors.size() != first.tensors.size()) {
      throw IncompatibleCheckpointError("checkpoints hold different tensor sets");
    }
    for (const NamedTensor& t : first.tensors) {
      const NamedTensor* other = ck.find(t.name);
      if (other == nullptr || other->value.shape() != t.value.shape()) {
        throw IncompatibleCheckpointError("tensor " + t.name +
                                          " is missing or differs in shape");
      }
    }
  }
  Checkpoint out;
  out.config_text = first.config_text;
  const double count = static_cast<double>(checkpoints.size());
  std::vector<const NamedTensor*> group(checkpoints.size());
  std::vector<double> column(checkpoints.size());
  for (const NamedTensor& t : first.tensors) {
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      group[c] = checkpoints[c].find(t.name);
    }
    Tensor<float> mean(t.value.shape());
    for (std::size_t i = 0; i < mean.size(); ++i) {
      for (std::size_t c = 0; c < group.size(); ++c) {
        column[c] = group[c]->value[i];
      }
      std::sort(column.begin(), column.end());
      double total = 0.0;
      for (double v : column) total += v;
      mean[i] = static_cast<float>(total / count);
    }
    out.tensors.push_back({t.name, std::move(mean)});
  }
  return out;
}

Checkpoint average_checkpoint_files(std::span<const std::string> paths) {
  std::vector<Checkpoint> cks;
  cks.reserve(paths.size());
  for (const std::string& p : paths) cks.push_back(load_checkpoint(p));
  return average_checkpoints(cks);
}

Checkpoint make_attention_record(const dla::AttentionRecord<float>& record) {
  Checkpoint ck;
  ck.tensors.push_back({"Z", record.z});
  ck.tensors.push_back({"A", record.attention});
  std::vector<float> mask(record.frame_mask.begin(), record.frame_mask.end());
  ck.tensors.push_back({"frame_mask", Tensor<float>({mask.size()}, mask)});
  return ck;
}

dla::AttentionRecord<float> read_attention_record(const Checkpoint& container) {
  const NamedTensor* z = container.find("Z");
  const NamedTensor* a = container.find("A");
  const NamedTensor* mask = container.find("frame_mask");
  if (!z || !a || !mask) {
    throw IncompatibleCheckpointError(
        "attention record needs tensors Z, A and frame_mask");
  }
  if (z->value.rank() != 2 || a->value.rank() != 2 ||
      z->value.rows() != a->value.rows() || mask->value.size() != a->value.cols()) {
    throw IncompatibleCheckpointError("attention record shapes are inconsistent");
  }
  dla::AttentionRecord<float> rec;
  rec.z = z->value;
  rec.attention = a->value;
  rec.frame_mask.reserve(mask->value.size());
  for (float v : mask->value.values()) rec.frame_mask.push_back(v != 0.0f);
  return rec;
}

}  // namespace s2tp
