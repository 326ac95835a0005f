// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/instrument.hpp"

#include <numeric>

namespace s2tp {
namespace {

thread_local MacCounts* active_counts = nullptr;
thread_local Component active_component = Component::kUnattributed;

}  // namespace

std::string_view component_name(Component c) noexcept {
  switch (c) {
    case Component::kInputProcessor: return "input_processor";
    case Component::kEncoderCross: return "encoder_cross_attention";
    case Component::kEncoderSelf: return "encoder_self_attention";
    case Component::kDecoder: return "decoder";
    case Component::kOutputProjection: return "output_projection";
    case Component::kUnattributed: return "unattributed";
  }
  return "unknown";
}

std::uint64_t MacCounts::total() const noexcept {
  return std::accumulate(macs.begin(), macs.end(), std::uint64_t{0});
}

MacCountingScope::MacCountingScope() noexcept : previous_(active_counts) {
  active_counts = &counts_;
}

MacCountingScope::~MacCountingScope() { active_counts = previous_; }

ComponentScope::ComponentScope(Component c) noexcept
    : previous_(active_component) {
  active_component = c;
}

ComponentScope::~ComponentScope() { active_component = previous_; }

void record_macs(std::uint64_t count) noexcept {
  if (active_counts != nullptr) {
    active_counts->macs[static_cast<std::size_t>(active_component)] += count;
  }
}

}  // namespace s2tp
