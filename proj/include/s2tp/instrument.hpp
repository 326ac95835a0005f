// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Runtime multiply-add counter. Every forward matrix product reports its
// multiply-adds to the counter installed on the calling thread, attributed to
// the model component that is currently in scope. Backward passes are not
// counted.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace s2tp {

enum class Component : std::size_t {
  kInputProcessor = 0,
  kEncoderCross,
  kEncoderSelf,
  kDecoder,
  kOutputProjection,
  kUnattributed,
};

inline constexpr std::size_t kComponentCount = 6;

std::string_view component_name(Component c) noexcept;

struct MacCounts {
  std::array<std::uint64_t, kComponentCount> macs{};

  std::uint64_t operator[](Component c) const noexcept {
    return macs[static_cast<std::size_t>(c)];
  }
  std::uint64_t total() const noexcept;
};

/// Installs a counter on the current thread for the lifetime of the scope.
class MacCountingScope {
 public:
  MacCountingScope() noexcept;
  ~MacCountingScope();
  MacCountingScope(const MacCountingScope&) = delete;
  MacCountingScope& operator=(const MacCountingScope&) = delete;

  const MacCounts& counts() const noexcept { return counts_; }

 private:
  MacCounts counts_;
  MacCounts* previous_;
};

/// Attributes multiply-adds recorded inside the scope to `c`.
class ComponentScope {
 public:
  explicit ComponentScope(Component c) noexcept;
  ~ComponentScope();
  ComponentScope(const ComponentScope&) = delete;
  ComponentScope& operator=(const ComponentScope&) = delete;

 private:
  Component previous_;
};

void record_macs(std::uint64_t count) noexcept;

}  // namespace s2tp
