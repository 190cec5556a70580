#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/harmony.hpp"
#include "pedalcw/pedal.hpp"
#include "pedalcw/score.hpp"
#include "pedalcw/vocab.hpp"

// The compound-word codec. A super token is one rectangular record of seven
// field codes sharing a timestamp; tokens with similar musical meaning share
// a family. Metrical tokens carry the time grid plus tempo, chord and pedal
// context; note tokens carry pitch and duration; a single EOS closes every
// sequence. Pedal tokens live inside metrical tokens: a non-IGNORE pedal
// field marks the onset of a sustain press whose length is the field's
// duration class.

namespace pedalcw {

struct SuperToken {
  std::uint8_t family = 0;    // Family enum value
  std::uint8_t position = 0;  // 0 ignore, 1 bar, 2+k subbeat k
  std::uint8_t tempo = 0;     // 0 ignore, 1..56
  std::uint8_t chord = 0;     // 0 ignore, 1..60
  std::uint8_t pedal = 0;     // 0 ignore, 1..10
  std::uint8_t pitch = 0;     // 0 ignore, 1..128
  std::uint8_t duration = 0;  // 0 ignore, 1..64

  int get(Field f) const {
    switch (f) {
      case Field::family: return family;
      case Field::position: return position;
      case Field::tempo: return tempo;
      case Field::chord: return chord;
      case Field::pedal: return pedal;
      case Field::pitch: return pitch;
      case Field::duration: return duration;
    }
    return 0;
  }

  void set(Field f, int v) {
    auto u8 = static_cast<std::uint8_t>(v);
    switch (f) {
      case Field::family: family = u8; break;
      case Field::position: position = u8; break;
      case Field::tempo: tempo = u8; break;
      case Field::chord: chord = u8; break;
      case Field::pedal: pedal = u8; break;
      case Field::pitch: pitch = u8; break;
      case Field::duration: duration = u8; break;
    }
  }

  Family fam() const { return static_cast<Family>(family); }

  static SuperToken bar() {
    SuperToken t;
    t.family = std::uint8_t(Family::metrical);
    t.position = vocab::kPositionBar;
    return t;
  }

  static SuperToken subbeat(int k, int tempo_code = kIgnore, int chord_code = kIgnore,
                            int pedal_code = kIgnore) {
    SuperToken t;
    t.family = std::uint8_t(Family::metrical);
    t.position = std::uint8_t(vocab::position_subbeat(k));
    t.tempo = std::uint8_t(tempo_code);
    t.chord = std::uint8_t(chord_code);
    t.pedal = std::uint8_t(pedal_code);
    return t;
  }

  static SuperToken note(int midi_pitch, int duration_ticks) {
    SuperToken t;
    t.family = std::uint8_t(Family::note);
    t.pitch = std::uint8_t(vocab::pitch_code(midi_pitch));
    t.duration = std::uint8_t(vocab::duration_code(duration_ticks));
    return t;
  }

  static SuperToken eos() {
    SuperToken t;
    t.family = std::uint8_t(Family::eos);
    return t;
  }

  friend bool operator==(const SuperToken&, const SuperToken&) = default;
};

/// Family/field validity: metrical tokens need a position and no note
/// fields; note tokens need pitch and duration and nothing else; EOS is all
/// IGNORE. Field codes must also be in range.
inline bool token_valid(const SuperToken& t) {
  for (int f = 0; f < kFieldCount; ++f) {
    if (t.get(Field(f)) >= vocab::kHeadSizes[f]) return false;
  }
  switch (t.fam()) {
    case Family::metrical:
      return t.position != kIgnore && t.pitch == kIgnore && t.duration == kIgnore;
    case Family::note:
      return t.pitch != kIgnore && t.duration != kIgnore && t.position == kIgnore &&
             t.tempo == kIgnore && t.chord == kIgnore && t.pedal == kIgnore;
    case Family::eos:
      return t.position == kIgnore && t.tempo == kIgnore && t.chord == kIgnore &&
             t.pedal == kIgnore && t.pitch == kIgnore && t.duration == kIgnore;
  }
  return false;
}

// ---------------------------------------------------------------------------
// encode

namespace token_detail {

inline void require_grid(int tick, int grid, const char* what) {
  if (tick < 0 || tick % grid != 0)
    raise(Errc::unquantized_input,
          std::string(what) + " tick " + std::to_string(tick) + " off the " +
              std::to_string(grid) + "-tick grid");
}

}  // namespace token_detail

/// Score (+ pedal spans, chords, tempo classes) -> super token sequence.
///
/// Preconditions: note onsets, span onsets, chord ticks and tempo ticks on
/// the 120-tick grid; note durations multiples of 60 in [60, 3840]; span
/// classes valid. The sequence walks bars in order, emitting a Bar token per
/// bar and a Subbeat token per occupied grid point (plus Subbeat 0 of bar 1,
/// always emitted so the initial tempo has somewhere to live), followed by
/// the note tokens at that point in ascending pitch order.
inline std::vector<SuperToken> encode(const Score& score, const std::vector<PedalSpan>& pedal,
                                      const std::vector<std::pair<int, ChordLabel>>& chords,
                                      const std::vector<std::pair<int, TempoClass>>& tempi) {
  using token_detail::require_grid;

  int last_tick = 0;
  std::map<int, std::vector<const Note*>> notes_at;
  for (const Note& n : score.notes) {
    require_grid(n.onset, kTicksPerSubbeat, "note onset");
    if (n.duration > vocab::kDurationStep * vocab::kDurations)
      raise(Errc::out_of_range, "note duration " + std::to_string(n.duration) + " ticks");
    if (n.duration < vocab::kDurationStep || n.duration % vocab::kDurationStep != 0)
      raise(Errc::unquantized_input,
            "note duration " + std::to_string(n.duration) + " ticks off the 60-tick grid");
    notes_at[n.onset].push_back(&n);
    last_tick = std::max(last_tick, n.onset);
  }
  std::map<int, int> tempo_at;  // tick -> tempo code (last one wins)
  for (const auto& [tick, klass] : tempi) {
    require_grid(tick, kTicksPerSubbeat, "tempo");
    tempo_at[tick] = vocab::tempo_code(klass);
    last_tick = std::max(last_tick, tick);
  }
  std::map<int, int> chord_at;
  for (const auto& [tick, label] : chords) {
    require_grid(tick, kTicksPerSubbeat, "chord");
    chord_at[tick] = vocab::chord_code(label);
    last_tick = std::max(last_tick, tick);
  }
  std::map<int, int> pedal_at;
  for (const PedalSpan& s : pedal) {
    require_grid(s.onset, kTicksPerSubbeat, "pedal onset");
    pedal_at[s.onset] = vocab::pedal_code(s.duration_class);
    last_tick = std::max(last_tick, s.onset);
  }

  std::vector<SuperToken> out;
  int bars = last_tick / kTicksPerBar + 1;
  for (int bar = 0; bar < bars; ++bar) {
    out.push_back(SuperToken::bar());
    for (int k = 0; k < kSubbeatsPerBar; ++k) {
      int tick = bar * kTicksPerBar + k * kTicksPerSubbeat;
      auto tempo_it = tempo_at.find(tick);
      auto chord_it = chord_at.find(tick);
      auto pedal_it = pedal_at.find(tick);
      auto notes_it = notes_at.find(tick);
      bool occupied = tempo_it != tempo_at.end() || chord_it != chord_at.end() ||
                      pedal_it != pedal_at.end() || notes_it != notes_at.end();
      bool anchor = bar == 0 && k == 0;
      if (!occupied && !anchor) continue;

      out.push_back(SuperToken::subbeat(
          k, tempo_it != tempo_at.end() ? tempo_it->second : kIgnore,
          chord_it != chord_at.end() ? chord_it->second : kIgnore,
          pedal_it != pedal_at.end() ? pedal_it->second : kIgnore));
      if (notes_it != notes_at.end()) {
        auto group = notes_it->second;
        std::stable_sort(group.begin(), group.end(),
                         [](const Note* a, const Note* b) { return a->pitch < b->pitch; });
        for (const Note* n : group) out.push_back(SuperToken::note(n->pitch, n->duration));
      }
    }
  }
  out.push_back(SuperToken::eos());
  return out;
}

// ---------------------------------------------------------------------------
// decode

struct Decoded {
  Score score;
  std::vector<PedalSpan> pedal;
  std::vector<std::pair<int, ChordLabel>> chords;
  bool truncated = false;  // sequence ended without EOS; decoded best-effort
};

/// Token sequence -> quantized score. The running clock starts undefined;
/// each Bar token advances it to the next bar start and each Subbeat k token
/// moves it to bar start + 120k, strictly forward within the bar. Note tokens
/// attach at the current tick. A non-IGNORE pedal field opens a PedalSpan at
/// the current tick.
inline Decoded decode(std::span<const SuperToken> tokens) {
  if (tokens.empty()) raise(Errc::malformed_sequence, "empty token sequence");
  Decoded result;
  int bar = -1;
  int last_subbeat = -1;
  int tick = -1;
  bool closed = false;

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const SuperToken& t = tokens[i];
    auto fail = [&](const std::string& why) {
      raise(Errc::malformed_sequence, "token " + std::to_string(i) + ": " + why);
    };
    if (!token_valid(t)) fail("family/field validity violated");
    if (closed) fail("token after EOS");
    if (i == 0 && !(t.fam() == Family::metrical && t.position == vocab::kPositionBar))
      fail("sequence must begin with a Bar token");

    switch (t.fam()) {
      case Family::metrical:
        if (t.position == vocab::kPositionBar) {
          ++bar;
          last_subbeat = -1;
          tick = bar * kTicksPerBar;
        } else {
          int k = vocab::position_subbeat_index(t.position);
          if (bar < 0) fail("subbeat before any bar");
          if (k <= last_subbeat) fail("position moves backward within bar");
          last_subbeat = k;
          tick = bar * kTicksPerBar + k * kTicksPerSubbeat;
        }
        if (t.tempo != kIgnore)
          result.score.tempo.push_back(
              TempoEvent::from_bpm(tick, vocab::tempo_from_code(t.tempo).bpm()));
        if (t.chord != kIgnore)
          result.chords.emplace_back(tick, vocab::chord_from_code(t.chord));
        if (t.pedal != kIgnore) {
          int klass = vocab::pedal_class_from_code(t.pedal);
          result.pedal.push_back({tick, klass, tick, klass});
        }
        break;
      case Family::note: {
        if (tick < 0) fail("note before any metrical token");
        result.score.notes.push_back(
            {tick, vocab::pitch_from_code(t.pitch), vocab::duration_ticks_from_code(t.duration)});
        break;
      }
      case Family::eos:
        closed = true;
        break;
    }
  }
  result.truncated = !closed;
  result.score.sort_events();
  return result;
}

// ---------------------------------------------------------------------------
// text forms

inline constexpr std::string_view kTokenFileHeader = "pedalcw-tokens v1";

enum class TokenTextForm {
  names,  // one token per line, 7 tab-separated readable fields
  codes,  // header line, then 7 comma-separated integer codes per line
};

namespace token_detail {

inline std::string field_text(const SuperToken& t, Field f) {
  int v = t.get(f);
  if (f != Field::family && v == kIgnore) return "_";
  switch (f) {
    case Field::family:
      return std::string(1, "MNE"[v]);
    case Field::position:
      return v == vocab::kPositionBar ? "B"
                                      : "S" + std::to_string(vocab::position_subbeat_index(v));
    case Field::tempo: return std::to_string(vocab::tempo_from_code(v).bpm());
    case Field::chord: return vocab::chord_from_code(v).name();
    case Field::pedal: return std::to_string(vocab::pedal_class_from_code(v));
    case Field::pitch: return std::to_string(vocab::pitch_from_code(v));
    case Field::duration: return std::to_string(vocab::duration_ticks_from_code(v));
  }
  return "_";
}

inline std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline int parse_field_text(std::string_view s, Field f, int line) {
  auto fail = [&]() -> int {
    raise(Errc::parse_error, "line " + std::to_string(line) + ": bad " +
                                 std::string(kFieldNames[int(f)]) + " field '" + std::string(s) +
                                 "'");
  };
  if (f == Field::family) {
    if (s == "M") return int(Family::metrical);
    if (s == "N") return int(Family::note);
    if (s == "E") return int(Family::eos);
    return fail();
  }
  if (s == "_") return kIgnore;
  switch (f) {
    case Field::position: {
      if (s == "B") return vocab::kPositionBar;
      if (s.size() >= 2 && s[0] == 'S') {
        auto k = parse_int(s.substr(1));
        if (k && *k >= 0 && *k < kSubbeatsPerBar) return vocab::position_subbeat(*k);
      }
      return fail();
    }
    case Field::tempo: {
      auto bpm = parse_int(s);
      if (bpm && *bpm >= kTempoMinBpm && *bpm <= kTempoMaxBpm && (*bpm - kTempoMinBpm) % 4 == 0)
        return vocab::tempo_code(TempoClass{(*bpm - kTempoMinBpm) / 4});
      return fail();
    }
    case Field::chord: {
      auto label = ChordLabel::parse(s);
      if (label) return vocab::chord_code(*label);
      return fail();
    }
    case Field::pedal: {
      auto ticks = parse_int(s);
      if (ticks && pedal_class_index(*ticks) >= 0) return vocab::pedal_code(*ticks);
      return fail();
    }
    case Field::pitch: {
      auto p = parse_int(s);
      if (p && *p >= 0 && *p <= 127) return vocab::pitch_code(*p);
      return fail();
    }
    case Field::duration: {
      auto ticks = parse_int(s);
      if (ticks && *ticks >= vocab::kDurationStep &&
          *ticks <= vocab::kDurationStep * vocab::kDurations && *ticks % vocab::kDurationStep == 0)
        return vocab::duration_code(*ticks);
      return fail();
    }
    default:
      return fail();
  }
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace token_detail

inline std::string serialize_tokens(std::span<const SuperToken> tokens,
                                    TokenTextForm form = TokenTextForm::names) {
  std::string out;
  if (form == TokenTextForm::codes) {
    out.append(kTokenFileHeader);
    out.push_back('\n');
  }
  for (const SuperToken& t : tokens) {
    for (int f = 0; f < kFieldCount; ++f) {
      if (f > 0) out.push_back(form == TokenTextForm::codes ? ',' : '\t');
      if (form == TokenTextForm::codes) {
        out.append(std::to_string(t.get(Field(f))));
      } else {
        out.append(token_detail::field_text(t, Field(f)));
      }
    }
    out.push_back('\n');
  }
  return out;
}

/// Inverse of serialize_tokens; the integer form is recognized by its header
/// line. Raises parse_error naming the offending 1-based line.
inline std::vector<SuperToken> parse_tokens(std::string_view text) {
  auto lines = token_detail::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();

  bool codes = !lines.empty() && lines.front() == kTokenFileHeader;
  std::size_t start = codes ? 1 : 0;

  std::vector<SuperToken> out;
  out.reserve(lines.size());
  for (std::size_t li = start; li < lines.size(); ++li) {
    std::string_view line = lines[li];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    int line_no = int(li) + 1;
    auto fields = token_detail::split(line, codes ? ',' : '\t');
    if (fields.size() != kFieldCount)
      raise(Errc::parse_error, "line " + std::to_string(line_no) + ": expected 7 fields, got " +
                                   std::to_string(fields.size()));
    SuperToken t;
    for (int f = 0; f < kFieldCount; ++f) {
      int v;
      if (codes) {
        auto parsed = token_detail::parse_int(fields[f]);
        if (!parsed || *parsed < 0 || *parsed >= vocab::kHeadSizes[f])
          raise(Errc::parse_error, "line " + std::to_string(line_no) + ": bad " +
                                       std::string(kFieldNames[f]) + " code '" +
                                       std::string(fields[f]) + "'");
        v = *parsed;
      } else {
        v = token_detail::parse_field_text(fields[f], Field(f), line_no);
      }
      t.set(Field(f), v);
    }
    if (!token_valid(t))
      raise(Errc::parse_error,
            "line " + std::to_string(line_no) + ": family/field validity violated");
    out.push_back(t);
  }
  return out;
}

}  // namespace pedalcw
