#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/score.hpp"

// Sustain-pedal processing: CC64 stream -> discrete spans -> the 10 duration
// classes and the 120-tick subbeat grid.

namespace pedalcw {

/// The admitted pedal durations in ticks, from an eighth note to 8 beats.
inline constexpr std::array<int, 10> kPedalClasses = {240,  480,  720,  960,  1440,
                                                      1920, 2400, 2880, 3360, 3840};

/// Pedal is considered down while the CC64 value is >= this.
inline constexpr int kPedalDownThreshold = 64;

/// One sustain-pedal engagement. `onset` and `duration_class` are the
/// quantized values the tokenizer consumes; the raw fields keep the
/// pre-quantization measurement for corpus statistics.
struct PedalSpan {
  int onset = 0;           // multiple of 120
  int duration_class = 0;  // one of kPedalClasses, in ticks
  int raw_onset = 0;
  int raw_duration = 0;

  friend bool operator==(const PedalSpan&, const PedalSpan&) = default;
};

/// Maximal down-intervals of a CC64 stream as (onset, duration) pairs in raw
/// ticks. A span still down when the stream ends closes at `end_tick` (the
/// last event tick of the score); zero-length spans are dropped.
inline std::vector<std::pair<int, int>> extract_spans(const std::vector<CcEvent>& raw_pedal,
                                                      int end_tick) {
  std::vector<std::pair<int, int>> spans;
  int down_since = -1;
  int last_tick = 0;
  for (const CcEvent& e : raw_pedal) {
    last_tick = std::max(last_tick, e.tick);
    if (e.value >= kPedalDownThreshold) {
      if (down_since < 0) down_since = e.tick;
    } else if (down_since >= 0) {
      if (e.tick > down_since) spans.emplace_back(down_since, e.tick - down_since);
      down_since = -1;
    }
  }
  if (down_since >= 0) {
    int close = std::max(end_tick, last_tick);
    if (close > down_since) spans.emplace_back(down_since, close - down_since);
  }
  return spans;
}

inline std::vector<std::pair<int, int>> extract_spans(const std::vector<CcEvent>& raw_pedal) {
  return extract_spans(raw_pedal, 0);
}

/// Nearest duration class to `raw`, ties toward the smaller class. Values
/// beyond the longest class saturate to 3840.
inline int quantize_duration(int raw) {
  if (raw <= 0) raise(Errc::non_positive_duration, "pedal duration " + std::to_string(raw));
  // Class i wins while raw is at or below the midpoint to class i+1.
  for (std::size_t i = 0; i + 1 < kPedalClasses.size(); ++i) {
    int midpoint = (kPedalClasses[i] + kPedalClasses[i + 1]) / 2;
    if (raw <= midpoint) return kPedalClasses[i];
  }
  return kPedalClasses.back();
}

/// Nearest multiple of 120 (the subbeat grid); midpoints round down.
inline int quantize_onset(int tick) { return snap_to_grid(tick, kTicksPerSubbeat); }

/// Quantize raw (onset, duration) spans onto the grid and duration classes.
inline std::vector<PedalSpan> quantize_spans(const std::vector<std::pair<int, int>>& raw) {
  std::vector<PedalSpan> spans;
  spans.reserve(raw.size());
  for (const auto& [onset, duration] : raw) {
    spans.push_back({quantize_onset(onset), quantize_duration(duration), onset, duration});
  }
  return spans;
}

/// Collapse spans sharing a quantized onset, keeping the longest class.
/// Input must be sorted by onset; output onsets are strictly increasing.
inline std::vector<PedalSpan> dedupe(const std::vector<PedalSpan>& spans) {
  std::vector<PedalSpan> out;
  for (const PedalSpan& s : spans) {
    if (!out.empty() && out.back().onset == s.onset) {
      if (s.duration_class > out.back().duration_class) out.back() = s;
    } else {
      out.push_back(s);
    }
  }
  return out;
}

/// CC64 stream -> deduplicated quantized spans.
inline std::vector<PedalSpan> pedal_pipeline(const std::vector<CcEvent>& raw_pedal,
                                             int end_tick) {
  auto spans = quantize_spans(extract_spans(raw_pedal, end_tick));
  std::stable_sort(spans.begin(), spans.end(),
                   [](const PedalSpan& a, const PedalSpan& b) { return a.onset < b.onset; });
  return dedupe(spans);
}

/// Index of a class value in kPedalClasses, or -1.
inline int pedal_class_index(int class_ticks) {
  for (std::size_t i = 0; i < kPedalClasses.size(); ++i) {
    if (kPedalClasses[i] == class_ticks) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace pedalcw
