#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/pedal.hpp"
#include "pedalcw/score.hpp"

// Standard MIDI File reader/writer for the slice of the format this pipeline
// needs: note on/off, CC64, set-tempo and time-signature metas. Reading
// accepts format 0 and 1 and rescales any PPQ division to 480 ticks per
// quarter; writing always emits a single-track format 0 file at division 480.
//
// Policy on input irregularities:
//  - NoteOn with velocity 0 is a NoteOff.
//  - A NoteOn on an already-sounding pitch closes the earlier note at the
//    new onset (last-on-wins).
//  - Notes still open at end of file close at the last event tick.
//  - Any time signature other than 4/4 rejects the file.
//  - All other events (other CCs, pitch bend, sysex, other metas) are skipped.

namespace pedalcw {

struct RawEvent {
  enum class Kind : std::uint8_t {
    note_on,
    note_off,
    control_change64,
    set_tempo,
    time_signature,
  };

  std::int64_t tick = 0;  // absolute; source ticks until rescaled
  Kind kind = Kind::note_on;
  int a = 0;              // pitch / CC value / numerator
  int b = 0;              // velocity / denominator
  std::int64_t uspq = 0;  // set_tempo payload
};

namespace midi_detail {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u16() {
    need(2);
    std::uint32_t v = (std::uint32_t(bytes_[pos_]) << 8) | bytes_[pos_ + 1];
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  /// Variable-length quantity, at most four bytes per the SMF spec.
  std::uint32_t varint() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t byte = u8();
      v = (v << 7) | (byte & 0x7f);
      if ((byte & 0x80) == 0) return v;
    }
    raise(Errc::malformed_file, "variable-length quantity longer than 4 bytes");
  }

  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  std::array<char, 4> fourcc() {
    need(4);
    std::array<char, 4> s;
    for (int i = 0; i < 4; ++i) s[i] = static_cast<char>(bytes_[pos_ + i]);
    pos_ += 4;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) raise(Errc::malformed_file, "unexpected end of file");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline bool is(const std::array<char, 4>& cc, const char* s) {
  return cc[0] == s[0] && cc[1] == s[1] && cc[2] == s[2] && cc[3] == s[3];
}

/// Parse one MTrk body, appending the events of interest.
inline void parse_track(ByteReader& r, std::size_t track_end, std::vector<RawEvent>& out) {
  std::int64_t tick = 0;
  int running_status = -1;
  while (r.pos() < track_end) {
    tick += r.varint();
    std::uint8_t first = r.u8();
    int pending = -1;  // data byte already consumed under running status
    std::uint8_t status;
    if (first & 0x80) {
      status = first;
    } else {
      if (running_status < 0)
        raise(Errc::malformed_file, "data byte with no running status");
      status = static_cast<std::uint8_t>(running_status);
      pending = first;
    }
    auto data = [&]() -> int {
      if (pending >= 0) return std::exchange(pending, -1);
      std::uint8_t d = r.u8();
      if (d & 0x80) raise(Errc::malformed_file, "status byte where data byte expected");
      return d;
    };

    switch (status & 0xf0) {
      case 0x80: {
        int pitch = data();
        (void)data();
        out.push_back({tick, RawEvent::Kind::note_off, pitch, 0, 0});
        running_status = status;
        break;
      }
      case 0x90: {
        int pitch = data();
        int vel = data();
        out.push_back({tick, vel == 0 ? RawEvent::Kind::note_off : RawEvent::Kind::note_on,
                       pitch, vel, 0});
        running_status = status;
        break;
      }
      case 0xb0: {
        int controller = data();
        int value = data();
        if (controller == 64)
          out.push_back({tick, RawEvent::Kind::control_change64, value, 0, 0});
        running_status = status;
        break;
      }
      case 0xa0:
      case 0xe0:
        (void)data();
        (void)data();
        running_status = status;
        break;
      case 0xc0:
      case 0xd0:
        (void)data();
        running_status = status;
        break;
      case 0xf0: {
        running_status = -1;  // sysex and meta cancel running status
        if (status == 0xff) {
          std::uint8_t type = r.u8();
          std::uint32_t len = r.varint();
          if (type == 0x51) {
            if (len < 3) raise(Errc::malformed_file, "set-tempo meta shorter than 3 bytes");
            std::int64_t uspq = 0;
            for (int i = 0; i < 3; ++i) uspq = (uspq << 8) | r.u8();
            r.skip(len - 3);
            out.push_back({tick, RawEvent::Kind::set_tempo, 0, 0, uspq});
          } else if (type == 0x58) {
            if (len < 2) raise(Errc::malformed_file, "time-signature meta shorter than 2 bytes");
            int numerator = r.u8();
            int denom_log2 = r.u8();
            r.skip(len - 2);
            if (numerator != 4 || denom_log2 != 2)
              raise(Errc::unsupported_meter,
                    std::to_string(numerator) + "/" + std::to_string(1 << denom_log2) +
                        " time signature (only 4/4 supported)");
            out.push_back({tick, RawEvent::Kind::time_signature, numerator, denom_log2, 0});
          } else if (type == 0x2f) {
            r.skip(len);
            return;  // end of track
          } else {
            r.skip(len);
          }
        } else if (status == 0xf0 || status == 0xf7) {
          r.skip(r.varint());
        } else {
          raise(Errc::malformed_file, "unexpected system message in file");
        }
        break;
      }
      default:
        raise(Errc::malformed_file, "bad status byte");
    }
  }
}

inline void vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  do {
    buf[n++] = v & 0x7f;
    v >>= 7;
  } while (v != 0);
  for (int i = n - 1; i > 0; --i) out.push_back(buf[i] | 0x80);
  out.push_back(buf[0]);
}

}  // namespace midi_detail

/// Parse a format 0/1 SMF into a Score at resolution 480. Throws Error with
/// codes malformed_file, unsupported_division, unsupported_meter or
/// empty_score.
inline Score parse_midi(std::span<const std::uint8_t> bytes) {
  using midi_detail::ByteReader;
  ByteReader r(bytes);

  if (!midi_detail::is(r.fourcc(), "MThd")) raise(Errc::malformed_file, "missing MThd header");
  std::uint32_t header_len = r.u32();
  if (header_len < 6) raise(Errc::malformed_file, "MThd shorter than 6 bytes");
  std::uint32_t format = r.u16();
  std::uint32_t declared_tracks = r.u16();
  std::uint32_t division = r.u16();
  r.skip(header_len - 6);

  if (format > 1) raise(Errc::malformed_file, "only SMF format 0 and 1 supported");
  if (division & 0x8000) raise(Errc::unsupported_division, "SMPTE division unsupported");
  if (division == 0) raise(Errc::malformed_file, "zero ticks-per-quarter division");

  std::vector<RawEvent> events;
  std::uint32_t tracks_parsed = 0;
  while (tracks_parsed < declared_tracks) {
    if (r.remaining() == 0) raise(Errc::malformed_file, "fewer tracks than header declares");
    auto cc = r.fourcc();
    std::uint32_t len = r.u32();
    if (len > r.remaining()) raise(Errc::malformed_file, "chunk length past end of file");
    std::size_t chunk_end = r.pos() + len;
    if (midi_detail::is(cc, "MTrk")) {
      midi_detail::parse_track(r, chunk_end, events);
      ++tracks_parsed;
    }
    if (r.pos() > chunk_end) raise(Errc::malformed_file, "track data past chunk length");
    r.skip(chunk_end - r.pos());
  }

  // Rescale to 480 ticks per quarter, rounding to nearest.
  for (RawEvent& e : events) {
    e.tick = (e.tick * kTicksPerBeat * 2 + division) / (2 * std::int64_t(division));
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.tick < b.tick; });

  Score score;
  std::array<std::int64_t, 128> open;
  open.fill(-1);
  std::int64_t last_tick = 0;
  for (const RawEvent& e : events) {
    last_tick = std::max(last_tick, e.tick);
    switch (e.kind) {
      case RawEvent::Kind::note_on: {
        std::int64_t& slot = open[e.a & 0x7f];
        if (slot >= 0 && e.tick > slot)
          score.notes.push_back({int(slot), e.a & 0x7f, int(e.tick - slot)});
        slot = e.tick;
        break;
      }
      case RawEvent::Kind::note_off: {
        std::int64_t& slot = open[e.a & 0x7f];
        if (slot >= 0) {
          if (e.tick > slot) score.notes.push_back({int(slot), e.a & 0x7f, int(e.tick - slot)});
          slot = -1;
        }
        break;
      }
      case RawEvent::Kind::control_change64:
        score.raw_pedal.push_back({int(e.tick), e.a});
        break;
      case RawEvent::Kind::set_tempo:
        score.tempo.push_back({int(e.tick), e.uspq});
        break;
      case RawEvent::Kind::time_signature:
        break;  // validated during track parse
    }
  }
  for (int pitch = 0; pitch < 128; ++pitch) {
    if (open[pitch] >= 0 && last_tick > open[pitch])
      score.notes.push_back({int(open[pitch]), pitch, int(last_tick - open[pitch])});
  }

  if (score.notes.empty()) raise(Errc::empty_score, "file contains no notes");
  score.sort_events();
  return score;
}

inline Score parse_midi(const std::vector<std::uint8_t>& bytes) {
  return parse_midi(std::span<const std::uint8_t>(bytes));
}

/// Emit a format 0 file at division 480. Pedal spans become CC64 127/0
/// pairs; notes get a fixed velocity of 64 since the representation carries
/// none. At equal ticks the order is tempo, CC offs, CC ons, note offs,
/// note ons, so that adjacent spans and back-to-back equal pitches survive
/// a parse round-trip.
inline std::vector<std::uint8_t> write_midi(const Score& score,
                                            const std::vector<PedalSpan>& pedal) {
  constexpr int kVelocity = 64;

  struct Emit {
    int tick;
    int prio;
    std::uint8_t status, d0, d1;
    std::int64_t uspq;  // only for tempo metas
  };
  std::vector<Emit> emits;
  emits.reserve(score.tempo.size() + 2 * pedal.size() + 2 * score.notes.size());

  for (const TempoEvent& t : score.tempo) emits.push_back({t.tick, 0, 0xff, 0, 0, t.uspq});
  for (const PedalSpan& s : pedal) {
    emits.push_back({s.onset + s.duration_class, 1, 0xb0, 64, 0, 0});
    emits.push_back({s.onset, 2, 0xb0, 64, 127, 0});
  }
  for (const Note& n : score.notes) {
    emits.push_back({n.end(), 3, 0x80, std::uint8_t(n.pitch), 0, 0});
    emits.push_back({n.onset, 4, 0x90, std::uint8_t(n.pitch), kVelocity, 0});
  }
  std::stable_sort(emits.begin(), emits.end(), [](const Emit& a, const Emit& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.prio < b.prio;
  });

  std::vector<std::uint8_t> body;
  int last_tick = 0;
  for (const Emit& e : emits) {
    midi_detail::vlq(body, std::uint32_t(e.tick - last_tick));
    last_tick = e.tick;
    if (e.status == 0xff) {
      std::int64_t uspq = std::min<std::int64_t>(e.uspq, 0xffffff);
      body.insert(body.end(), {0xff, 0x51, 0x03, std::uint8_t(uspq >> 16),
                               std::uint8_t(uspq >> 8), std::uint8_t(uspq)});
    } else {
      body.insert(body.end(), {e.status, e.d0, e.d1});
    }
  }
  body.insert(body.end(), {0x00, 0xff, 0x2f, 0x00});  // end of track

  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 22);
  auto u16 = [&](std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(std::uint8_t(v >> (8 * i)));
  };
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  u32(6);
  u16(0);  // format 0
  u16(1);  // one track
  u16(kTicksPerBeat);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  u32(std::uint32_t(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

}  // namespace pedalcw
