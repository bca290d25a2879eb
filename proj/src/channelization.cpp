#include "cbnet/channelization.hpp"

#include "cbnet/error.hpp"

#include <algorithm>
#include <cctype>

namespace cbnet {

namespace {

bool legal_width(int w) { return w == 1 || w == 2 || w == 4 || w == 8; }

void require_primary_in_range(ChannelId primary, const ChannelRange &range) {
  if (!range.contains(primary))
    throw InvalidArgument("primary channel " + std::to_string(primary.index()) + " outside range [" +
                          std::to_string(range.min().index()) + "," + std::to_string(range.max().index()) + "]");
}

std::vector<BondSet> free_candidates(ChannelId primary, const ChannelRange &range, FreeMask free) {
  std::vector<BondSet> out;
  for (const BondSet &b : enumerate_valid_bonds(primary, range))
    if ((b.mask() & free) == b.mask()) out.push_back(b);
  return out;
}

} // namespace

ChannelId::ChannelId(int index) : index_(index) {
  if (index < 0 || index >= kNumChannels) throw InvalidArgument("channel index " + std::to_string(index) + " not in [0,7]");
}

ChannelRange::ChannelRange(ChannelId lo, ChannelId hi) : min_(lo), max_(hi) {
  if (hi < lo)
    throw InvalidArgument("channel range [" + std::to_string(lo.index()) + "," + std::to_string(hi.index()) +
                          "] has min > max");
}

bool ChannelRange::is_aligned_bond() const {
  const int w = width();
  return legal_width(w) && min_.index() % w == 0;
}

BondSet::BondSet(int lowest, int width) : lowest_(lowest), width_(width) {
  if (!legal_width(width)) throw InvalidArgument("bond width " + std::to_string(width) + " not in {1,2,4,8}");
  if (lowest < 0 || lowest + width > kNumChannels)
    throw InvalidArgument("bond starting at " + std::to_string(lowest) + " exceeds the channel grid");
  if (lowest % width != 0)
    throw InvalidArgument("bond starting at " + std::to_string(lowest) + " is not aligned to width " +
                          std::to_string(width));
}

BondSet BondSet::from_channels(const std::vector<int> &channels) {
  if (channels.empty()) throw InvalidArgument("empty bond");
  std::vector<int> sorted = channels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1] + 1) throw InvalidArgument("bond channels are not contiguous");
  return BondSet(sorted.front(), static_cast<int>(sorted.size()));
}

std::vector<int> BondSet::channels() const {
  std::vector<int> out(width_);
  for (int i = 0; i < width_; ++i) out[i] = lowest_ + i;
  return out;
}

FreeMask BondSet::mask() const {
  FreeMask m;
  for (int i = 0; i < width_; ++i) m.set(lowest_ + i);
  return m;
}

std::string BondSet::to_string() const {
  if (width_ == 1) return "{" + std::to_string(lowest_) + "}";
  return "{" + std::to_string(lowest_) + ".." + std::to_string(highest()) + "}";
}

std::string to_string(Policy p) {
  switch (p) {
  case Policy::SCB: return "SCB";
  case Policy::AM: return "AM";
  case Policy::PU: return "PU";
  }
  return "?";
}

Policy parse_policy(const std::string &s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "SCB") return Policy::SCB;
  if (u == "AM") return Policy::AM;
  if (u == "PU") return Policy::PU;
  throw InvalidArgument("unknown policy '" + s + "' (expected SCB, AM or PU)");
}

std::vector<BondSet> enumerate_valid_bonds(ChannelId primary, const ChannelRange &range) {
  require_primary_in_range(primary, range);
  std::vector<BondSet> out;
  for (int w = 1; w <= kNumChannels; w *= 2) {
    const int lo = primary.index() - primary.index() % w;
    if (lo >= range.min().index() && lo + w - 1 <= range.max().index()) out.emplace_back(lo, w);
  }
  return out;
}

void require_scb_range(const ChannelRange &range) {
  if (!range.is_aligned_bond())
    throw ConfigError("static bonding needs a power-of-two, aligned channel range; got [" +
                      std::to_string(range.min().index()) + "," + std::to_string(range.max().index()) + "]");
}

std::optional<BondSet> select_scb(ChannelId primary, const ChannelRange &range, FreeMask free) {
  require_primary_in_range(primary, range);
  require_scb_range(range);
  BondSet full(range.min().index(), range.width());
  if ((full.mask() & free) != full.mask()) return std::nullopt;
  return full;
}

std::optional<BondSet> select_am(ChannelId primary, const ChannelRange &range, FreeMask free) {
  require_primary_in_range(primary, range);
  auto cands = free_candidates(primary, range, free);
  if (cands.empty()) return std::nullopt;
  return cands.back(); // candidates are nested and sorted by width
}

std::optional<BondSet> select_pu(ChannelId primary, const ChannelRange &range, FreeMask free, Rng &rng) {
  require_primary_in_range(primary, range);
  const std::uint64_t draw = rng.next();
  auto cands = free_candidates(primary, range, free);
  if (cands.empty()) return std::nullopt;
  // Multiply-shift maps the draw onto [0, n); bias is at most n / 2^64.
  const auto pick = static_cast<std::size_t>((static_cast<unsigned __int128>(draw) * cands.size()) >> 64);
  return cands[pick];
}

std::optional<BondSet> select(Policy policy, ChannelId primary, const ChannelRange &range, FreeMask free, Rng &rng) {
  switch (policy) {
  case Policy::SCB: return select_scb(primary, range, free);
  case Policy::AM: return select_am(primary, range, free);
  case Policy::PU: return select_pu(primary, range, free, rng);
  }
  return std::nullopt;
}

} // namespace cbnet
