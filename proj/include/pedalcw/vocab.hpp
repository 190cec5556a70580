#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "pedalcw/error.hpp"
#include "pedalcw/harmony.hpp"
#include "pedalcw/pedal.hpp"

// Field alphabets of the compound-word representation and their integer
// codings. Every field except family reserves code 0 for IGNORE, the filler
// a super token carries in fields its family does not use.

namespace pedalcw {

enum class Family : std::uint8_t { metrical = 0, note = 1, eos = 2 };

enum class Field : int {
  family = 0,
  position,
  tempo,
  chord,
  pedal,
  pitch,
  duration,
};

inline constexpr int kFieldCount = 7;
inline constexpr int kIgnore = 0;

inline constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "family", "position", "tempo", "chord", "pedal", "pitch", "duration"};

namespace vocab {

// Alphabet sizes, IGNORE excluded.
inline constexpr int kFamilies = 3;
inline constexpr int kPositions = 17;     // Bar + Subbeat0..15
inline constexpr int kTempos = kTempoKinds;       // 56
inline constexpr int kChords = kChordTypes;       // 60
inline constexpr int kPedals = int(kPedalClasses.size());  // 10
inline constexpr int kPitches = 128;
inline constexpr int kDurations = 64;     // 1..64 32nd notes, 60-tick steps

/// Per-field head size: alphabet plus IGNORE; family carries no IGNORE.
inline constexpr std::array<int, kFieldCount> kHeadSizes = {
    kFamilies, kPositions + 1, kTempos + 1, kChords + 1,
    kPedals + 1, kPitches + 1, kDurations + 1};

// position field
inline constexpr int kPositionBar = 1;
constexpr int position_subbeat(int k) { return 2 + k; }           // k in 0..15
constexpr bool position_is_subbeat(int code) { return code >= 2; }
constexpr int position_subbeat_index(int code) { return code - 2; }

// tempo field
inline int tempo_code(TempoClass t) { return t.code + 1; }
inline TempoClass tempo_from_code(int code) { return TempoClass::from_code(code - 1); }

// chord field
inline int chord_code(const ChordLabel& c) { return c.code() + 1; }
inline ChordLabel chord_from_code(int code) { return ChordLabel::from_code(code - 1); }

// pedal field: codes 1..10 index kPedalClasses
inline int pedal_code(int class_ticks) {
  int idx = pedal_class_index(class_ticks);
  if (idx < 0) raise(Errc::out_of_range, "not a pedal class: " + std::to_string(class_ticks));
  return idx + 1;
}
inline int pedal_class_from_code(int code) {
  if (code < 1 || code > kPedals) raise(Errc::out_of_range, "pedal code " + std::to_string(code));
  return kPedalClasses[code - 1];
}

// pitch field
inline int pitch_code(int midi_pitch) {
  if (midi_pitch < 0 || midi_pitch > 127)
    raise(Errc::out_of_range, "pitch " + std::to_string(midi_pitch));
  return midi_pitch + 1;
}
inline int pitch_from_code(int code) {
  if (code < 1 || code > kPitches) raise(Errc::out_of_range, "pitch code " + std::to_string(code));
  return code - 1;
}

// duration field: multiples of 60 ticks in [60, 3840]
inline constexpr int kDurationStep = 60;
inline int duration_code(int ticks) {
  if (ticks < kDurationStep || ticks > kDurationStep * kDurations || ticks % kDurationStep != 0)
    raise(Errc::out_of_range, "note duration " + std::to_string(ticks) + " ticks");
  return ticks / kDurationStep;
}
inline int duration_ticks_from_code(int code) {
  if (code < 1 || code > kDurations)
    raise(Errc::out_of_range, "duration code " + std::to_string(code));
  return code * kDurationStep;
}

}  // namespace vocab
}  // namespace pedalcw
