#pragma once

#include <span>
#include <utility>
#include <vector>

#include "pedalcw/harmony.hpp"
#include "pedalcw/midi_io.hpp"
#include "pedalcw/pedal.hpp"
#include "pedalcw/score.hpp"
#include "pedalcw/tokens.hpp"

// End-to-end plumbing between the modules: grid quantization of a parsed
// score and the full MIDI <-> token conversions the CLI exposes.

namespace pedalcw {

/// Snap a score onto the token grids: note onsets and tempo ticks to the
/// nearest 120-tick subbeat (ties down), note durations to the nearest
/// multiple of 60 clamped to [60, 3840]. The raw CC64 stream is kept as-is;
/// pedal quantization happens in the pedal module.
inline Score quantize_score(const Score& score) {
  Score q;
  q.notes.reserve(score.notes.size());
  for (const Note& n : score.notes) {
    int onset = snap_to_grid(n.onset, kTicksPerSubbeat);
    int duration = snap_to_grid(n.duration, vocab::kDurationStep);
    duration = std::clamp(duration, vocab::kDurationStep,
                          vocab::kDurationStep * vocab::kDurations);
    q.notes.push_back({onset, n.pitch, duration});
  }
  q.tempo.reserve(score.tempo.size());
  for (const TempoEvent& t : score.tempo)
    q.tempo.push_back({snap_to_grid(t.tick, kTicksPerSubbeat), t.uspq});
  q.raw_pedal = score.raw_pedal;
  q.sort_events();
  return q;
}

struct EncodedSong {
  Score quantized;
  std::vector<PedalSpan> spans;
  std::vector<std::pair<int, ChordLabel>> chords;
  std::vector<std::pair<int, TempoClass>> tempi;
  std::vector<SuperToken> tokens;
};

/// parse -> pedal spans -> chords -> tempo classes -> super tokens.
inline EncodedSong encode_score(const Score& raw) {
  EncodedSong song;
  song.quantized = quantize_score(raw);
  song.spans = pedal_pipeline(raw.raw_pedal, raw.end_tick());
  song.chords = detect_chords(song.quantized);

  int last_tempo_tick = -1;
  for (const TempoEvent& t : song.quantized.tempo) {
    TempoClass klass = quantize_tempo(t.bpm());
    if (t.tick == last_tempo_tick) {
      song.tempi.back().second = klass;  // several events on one grid point: last wins
    } else {
      song.tempi.emplace_back(t.tick, klass);
      last_tempo_tick = t.tick;
    }
  }

  song.tokens = encode(song.quantized, song.spans, song.chords, song.tempi);
  return song;
}

inline EncodedSong encode_midi(std::span<const std::uint8_t> midi_bytes) {
  return encode_score(parse_midi(midi_bytes));
}

/// Tokens -> playable MIDI bytes (notes at velocity 64, CC64 pedal events).
inline std::vector<std::uint8_t> decode_to_midi(std::span<const SuperToken> tokens) {
  Decoded decoded = decode(tokens);
  return write_midi(decoded.score, decoded.pedal);
}

}  // namespace pedalcw
