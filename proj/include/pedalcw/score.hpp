#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "pedalcw/error.hpp"

namespace pedalcw {

// Time is measured in ticks at a fixed resolution of 480 ticks per quarter
// note. Everything downstream assumes 4/4, so a bar is 1920 ticks and the
// 16-bin subbeat grid has a step of 120 ticks.
inline constexpr int kTicksPerBeat = 480;
inline constexpr int kTicksPerBar = 1920;
inline constexpr int kSubbeatsPerBar = 16;
inline constexpr int kTicksPerSubbeat = kTicksPerBar / kSubbeatsPerBar;  // 120

/// Snap a non-negative tick to the nearest multiple of `grid`.
/// Exact midpoints round toward the smaller multiple.
constexpr int snap_to_grid(int tick, int grid) {
  return (tick + grid / 2 - 1) / grid * grid;
}

struct Note {
  int onset = 0;     // ticks, >= 0
  int pitch = 0;     // MIDI pitch 0..127
  int duration = 0;  // ticks, > 0

  int end() const { return onset + duration; }
  friend bool operator==(const Note&, const Note&) = default;
};

struct TempoEvent {
  int tick = 0;
  std::int64_t uspq = 500000;  // microseconds per quarter note

  double bpm() const { return 60000000.0 / static_cast<double>(uspq); }

  static TempoEvent from_bpm(int tick, double bpm) {
    return {tick, static_cast<std::int64_t>(60000000.0 / bpm + 0.5)};
  }

  friend bool operator==(const TempoEvent&, const TempoEvent&) = default;
};

/// One control-change event after track merging. The pipeline only retains
/// controller 64 (sustain pedal), so the controller number is implicit.
struct CcEvent {
  int tick = 0;
  int value = 0;  // 0..127

  friend bool operator==(const CcEvent&, const CcEvent&) = default;
};

/// In-memory piano performance at the fixed 480-tick resolution.
/// Bar boundaries are implicit: bar b spans [b*1920, (b+1)*1920).
struct Score {
  static constexpr int kResolution = kTicksPerBeat;

  std::vector<Note> notes;          // sorted by (onset, pitch)
  std::vector<TempoEvent> tempo;    // sorted by tick
  std::vector<CcEvent> raw_pedal;   // raw CC64 stream, sorted by tick

  /// Last tick touched by any note or event; 0 for an empty score.
  int end_tick() const {
    int end = 0;
    for (const Note& n : notes) end = std::max(end, n.end());
    if (!tempo.empty()) end = std::max(end, tempo.back().tick);
    if (!raw_pedal.empty()) end = std::max(end, raw_pedal.back().tick);
    return end;
  }

  void sort_events() {
    std::stable_sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
      return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
    });
    std::stable_sort(tempo.begin(), tempo.end(),
                     [](const TempoEvent& a, const TempoEvent& b) { return a.tick < b.tick; });
    std::stable_sort(raw_pedal.begin(), raw_pedal.end(),
                     [](const CcEvent& a, const CcEvent& b) { return a.tick < b.tick; });
  }
};

}  // namespace pedalcw
