#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "mmu/constants.hpp"
#include "mmu/core.hpp"
#include "mmu/loss.hpp"

namespace mmu {

// ww - wv (vv)^-1 vw, computed against the factored -vv.
inline Matrix total_ww(const HessianBlocks& h) { return detail::schur_ww(h); }

// vv - vw (ww)^-1 wv.
inline Matrix total_vv(const HessianBlocks& h) { return detail::schur_vv(h); }

struct MemoryVariables {
  Matrix d_ww;
  Matrix d_vv;
  PrimalDualPoint anchor;
  std::size_t n = 0;
};

template <MinimaxLoss Loss>
MemoryVariables memory_variables(const Loss& loss, const Dataset& data, const PrimalDualPoint& point) {
  const HessianBlocks h = avg_hessian_blocks(loss, point, data);
  return {total_ww(h), total_vv(h), point, data.size()};
}

// How the total Hessians of the retained set are obtained during unlearning.
enum class HessianMode {
  kCombined,       // n*memory minus per-sample totals of the deleted samples
  kExactRecompute,  // Schur complement of the retained-set average blocks
};

inline std::string_view hessian_mode_name(HessianMode m) {
  return m == HessianMode::kCombined ? "combined" : "exact";
}

inline HessianMode parse_hessian_mode(std::string_view s) {
  if (s == "combined") return HessianMode::kCombined;
  if (s == "exact") return HessianMode::kExactRecompute;
  throw ConfigError("unknown hessian mode '" + std::string(s) + "'");
}

struct RemainingTotals {
  Matrix d_ww;
  Matrix d_vv;
};

// (n * D F_S - sum over deleted of D f_i) / (n - m), all at the anchor. Only the
// deleted samples are touched.
template <MinimaxLoss Loss>
RemainingTotals combine_remaining(const MemoryVariables& memory, std::span<const Sample> deleted,
                                  const Loss& loss) {
  const std::size_t n = memory.n, m = deleted.size();
  if (m >= n) throw InvalidArgument(detail::concat("cannot delete m=", m, " of n=", n, " samples"));
  if (m == 0) return {memory.d_ww, memory.d_vv};
  Matrix sww = static_cast<double>(n) * memory.d_ww;
  Matrix svv = static_cast<double>(n) * memory.d_vv;
  for (const auto& z : deleted) {
    const HessianBlocks h = loss.hessian(memory.anchor, z);
    sww -= total_ww(h);
    svv -= total_vv(h);
  }
  const double inv = 1.0 / static_cast<double>(n - m);
  return {symmetrize(sww * inv), symmetrize(svv * inv)};
}

template <MinimaxLoss Loss>
RemainingTotals recompute_remaining(const MemoryVariables& memory, const Dataset& data,
                                    std::span<const std::size_t> deleted, const Loss& loss) {
  if (deleted.size() >= data.size()) {
    throw InvalidArgument(detail::concat("cannot delete m=", deleted.size(), " of n=", data.size(), " samples"));
  }
  if (deleted.empty()) return {memory.d_ww, memory.d_vv};
  const Dataset kept = remove_indices(data, deleted);
  const HessianBlocks h = avg_hessian_blocks(loss, memory.anchor, kept);
  return {total_ww(h), total_vv(h)};
}

}  // namespace mmu
