#pragma once

// 20 MHz channel grid of the U-NII-1/U-NII-2 span (8 basic channels,
// 0-based) and the dynamic channel bonding policies that pick a bond from
// the channels sensed idle at the end of a backoff.

#include "cbnet/rng.hpp"

#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cbnet {

inline constexpr int kNumChannels = 8;

class ChannelId {
public:
  /// Throws InvalidArgument outside [0, 7].
  explicit ChannelId(int index);
  int index() const { return index_; }
  friend bool operator==(ChannelId, ChannelId) = default;
  friend auto operator<=>(ChannelId a, ChannelId b) { return a.index_ <=> b.index_; }

private:
  int index_;
};

class ChannelRange {
public:
  /// Throws InvalidArgument unless lo <= hi.
  ChannelRange(ChannelId lo, ChannelId hi);
  ChannelRange(int lo, int hi) : ChannelRange(ChannelId(lo), ChannelId(hi)) {}

  ChannelId min() const { return min_; }
  ChannelId max() const { return max_; }
  int width() const { return max_.index() - min_.index() + 1; }
  bool contains(ChannelId c) const { return min_ <= c && c <= max_; }
  /// Power-of-two width whose lowest channel is a multiple of the width.
  bool is_aligned_bond() const;
  friend bool operator==(const ChannelRange &, const ChannelRange &) = default;

private:
  ChannelId min_;
  ChannelId max_;
};

/// Idle/busy state of the 8 channels; bit i set means channel i sensed idle.
using FreeMask = std::bitset<kNumChannels>;

/// Contiguous, aligned group of 1, 2, 4 or 8 basic channels.
class BondSet {
public:
  /// Throws InvalidArgument if (lowest, width) is not a legal bond.
  BondSet(int lowest, int width);
  /// Build from an explicit channel list; throws if it is not a legal bond.
  static BondSet from_channels(const std::vector<int> &channels);

  int lowest() const { return lowest_; }
  int highest() const { return lowest_ + width_ - 1; }
  int width() const { return width_; }
  std::vector<int> channels() const;
  FreeMask mask() const;
  bool contains(ChannelId c) const { return c.index() >= lowest_ && c.index() <= highest(); }
  bool overlaps(const BondSet &other) const { return lowest_ <= other.highest() && other.lowest_ <= highest(); }
  std::string to_string() const;
  friend bool operator==(const BondSet &, const BondSet &) = default;

private:
  int lowest_;
  int width_;
};

enum class Policy { SCB, AM, PU };

std::string to_string(Policy p);
/// Accepts "SCB", "AM", "PU" (case-insensitive).
Policy parse_policy(const std::string &s);

/// Every legal bond containing `primary` inside `range`, by width then lowest channel.
std::vector<BondSet> enumerate_valid_bonds(ChannelId primary, const ChannelRange &range);

/// Throws ConfigError if static bonding cannot use `range` as a bond.
void require_scb_range(const ChannelRange &range);

/// Static channel bonding: the whole range or nothing.
std::optional<BondSet> select_scb(ChannelId primary, const ChannelRange &range, FreeMask free);

/// Always-max: widest legal bond whose channels are all idle.
std::optional<BondSet> select_am(ChannelId primary, const ChannelRange &range, FreeMask free);

/// Probabilistic uniform: one of the legal all-idle bonds, equiprobable.
/// Consumes exactly one value from `rng` on every call.
std::optional<BondSet> select_pu(ChannelId primary, const ChannelRange &range, FreeMask free, Rng &rng);

/// Dispatch on `policy`; `rng` is only touched by PU.
std::optional<BondSet> select(Policy policy, ChannelId primary, const ChannelRange &range, FreeMask free, Rng &rng);

} // namespace cbnet
