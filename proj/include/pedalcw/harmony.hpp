#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/score.hpp"

// Chord and tempo token streams. 60 chord types = 12 roots x 5 qualities,
// 56 tempo kinds = BPM 32..252 in steps of 4.

namespace pedalcw {

enum class ChordQuality : std::uint8_t { maj = 0, min, dim, aug, dom7 };

inline constexpr int kChordQualities = 5;
inline constexpr int kChordTypes = 60;
inline constexpr std::array<std::string_view, 5> kQualityNames = {"maj", "min", "dim", "aug",
                                                                  "dom7"};
inline constexpr std::array<std::string_view, 12> kPitchClassNames = {
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"};

struct ChordLabel {
  int root = 0;  // pitch class 0..11
  ChordQuality quality = ChordQuality::maj;

  int code() const { return root * kChordQualities + static_cast<int>(quality); }

  static ChordLabel from_code(int code) {
    if (code < 0 || code >= kChordTypes)
      raise(Errc::out_of_range, "chord code " + std::to_string(code));
    return {code / kChordQualities, static_cast<ChordQuality>(code % kChordQualities)};
  }

  std::string name() const {
    return std::string(kPitchClassNames[root]) + ":" +
           std::string(kQualityNames[static_cast<int>(quality)]);
  }

  static std::optional<ChordLabel> parse(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    std::string_view root_name = text.substr(0, colon);
    std::string_view quality_name = text.substr(colon + 1);
    for (int r = 0; r < 12; ++r) {
      if (kPitchClassNames[r] != root_name) continue;
      for (int q = 0; q < kChordQualities; ++q) {
        if (kQualityNames[q] == quality_name) return ChordLabel{r, static_cast<ChordQuality>(q)};
      }
    }
    return std::nullopt;
  }

  friend bool operator==(const ChordLabel&, const ChordLabel&) = default;
};

/// Chord tone intervals above the root, per quality.
inline const std::array<std::vector<int>, 5>& chord_templates() {
  static const std::array<std::vector<int>, 5> templates = {{
      {0, 4, 7},      // maj
      {0, 3, 7},      // min
      {0, 3, 6},      // dim
      {0, 4, 8},      // aug
      {0, 4, 7, 10},  // dom7
  }};
  return templates;
}

inline constexpr int kChordWindowTicks = kTicksPerBar / 2;  // 960: half-bar windows

/// Template-matching chord detection over half-bar windows.
///
/// For each 960-tick window, the pitch-class weight vector counts overlap
/// ticks of every sounding note; each of the 60 templates scores
/// (weight on chord tones) - (weight off chord tones). The argmax label is
/// emitted at the window start, ties resolved toward the lower code, and
/// consecutive repeats are collapsed to their first occurrence. Windows with
/// no sounding notes emit nothing.
inline std::vector<std::pair<int, ChordLabel>> detect_chords(const Score& score) {
  std::vector<std::pair<int, ChordLabel>> out;
  int end = score.end_tick();

  // Notes sorted by onset; advance a window over them.
  std::size_t first = 0;
  for (int window = 0; window < end; window += kChordWindowTicks) {
    int window_end = window + kChordWindowTicks;
    while (first < score.notes.size() && score.notes[first].end() <= window) ++first;

    std::array<std::int64_t, 12> weight{};
    std::int64_t total = 0;
    for (std::size_t i = first; i < score.notes.size(); ++i) {
      const Note& n = score.notes[i];
      if (n.onset >= window_end) break;
      int overlap = std::min(n.end(), window_end) - std::max(n.onset, window);
      if (overlap <= 0) continue;
      weight[n.pitch % 12] += overlap;
      total += overlap;
    }
    if (total == 0) continue;

    int best_code = 0;
    std::int64_t best_score = std::numeric_limits<std::int64_t>::min();
    for (int code = 0; code < kChordTypes; ++code) {
      int root = code / kChordQualities;
      const auto& intervals = chord_templates()[code % kChordQualities];
      std::int64_t on = 0;
      for (int iv : intervals) on += weight[(root + iv) % 12];
      std::int64_t s = 2 * on - total;  // on-template minus off-template
      if (s > best_score) {
        best_score = s;
        best_code = code;
      }
    }
    ChordLabel label = ChordLabel::from_code(best_code);
    if (out.empty() || !(out.back().second == label)) out.emplace_back(window, label);
  }
  return out;
}

struct TempoClass {
  int code = 0;  // 0..55

  int bpm() const { return 32 + 4 * code; }

  static TempoClass from_code(int code) {
    if (code < 0 || code >= 56) raise(Errc::out_of_range, "tempo code " + std::to_string(code));
    return {code};
  }

  friend bool operator==(const TempoClass&, const TempoClass&) = default;
};

inline constexpr int kTempoKinds = 56;
inline constexpr int kTempoMinBpm = 32;
inline constexpr int kTempoMaxBpm = 252;

/// Clamp to [32, 252] and round to the nearest multiple of 4, ties down.
inline TempoClass quantize_tempo(double bpm) {
  if (bpm <= 0) raise(Errc::out_of_range, "non-positive tempo");
  double clamped = std::clamp(bpm, double(kTempoMinBpm), double(kTempoMaxBpm));
  double steps = (clamped - kTempoMinBpm) / 4.0;
  int code = static_cast<int>(std::floor(steps + 0.5));
  if (steps - std::floor(steps) == 0.5) code = static_cast<int>(std::floor(steps));
  return {std::clamp(code, 0, kTempoKinds - 1)};
}

}  // namespace pedalcw
