#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pedalcw/error.hpp"
#include "pedalcw/harmony.hpp"
#include "pedalcw/pedal.hpp"
#include "pedalcw/score.hpp"

// Corpus analytics: how strongly pedal onsets align with the beat grid and
// with detected chord changes. Beat alignment uses pre-quantization onsets
// within +-60 ticks of a 480-tick multiple; chord alignment uses +-120 ticks
// around a chord-change tick. Both tolerances are half the relevant grid
// step.

namespace pedalcw {

inline constexpr int kBeatAlignTolerance = 60;
inline constexpr int kChordAlignTolerance = 120;

struct SongStats {
  std::string name;
  std::int64_t pedal_count = 0;
  std::int64_t beat_aligned = 0;
  std::int64_t chord_aligned = 0;
  std::array<std::int64_t, 10> duration_histogram{};

  double beat_fraction() const {
    return pedal_count == 0 ? 0.0 : double(beat_aligned) / double(pedal_count);
  }
  double chord_fraction() const {
    return pedal_count == 0 ? 0.0 : double(chord_aligned) / double(pedal_count);
  }
};

struct AlignmentReport {
  std::vector<SongStats> songs;
  SongStats aggregate;  // counters summed over songs
};

struct CorpusEntry {
  std::string name;
  Score score;
  std::vector<PedalSpan> spans;
  std::vector<std::pair<int, ChordLabel>> chords;
};

inline SongStats analyze_song(const CorpusEntry& entry) {
  SongStats s;
  s.name = entry.name;
  for (const PedalSpan& span : entry.spans) {
    ++s.pedal_count;

    int mod = span.raw_onset % kTicksPerBeat;
    int beat_distance = std::min(mod, kTicksPerBeat - mod);
    if (beat_distance <= kBeatAlignTolerance) ++s.beat_aligned;

    for (const auto& [tick, label] : entry.chords) {
      if (std::abs(span.raw_onset - tick) <= kChordAlignTolerance) {
        ++s.chord_aligned;
        break;
      }
    }

    int idx = pedal_class_index(span.duration_class);
    if (idx < 0) raise(Errc::out_of_range, "span with invalid duration class");
    ++s.duration_histogram[idx];
  }
  return s;
}

/// Per-song and aggregate alignment statistics. Aggregation is a plain sum
/// of counters, so the report is invariant under corpus reordering.
inline AlignmentReport analyze(const std::vector<CorpusEntry>& corpus) {
  if (corpus.empty()) raise(Errc::empty_corpus, "no songs to analyze");
  AlignmentReport report;
  report.aggregate.name = "aggregate";
  for (const CorpusEntry& entry : corpus) {
    SongStats s = analyze_song(entry);
    report.aggregate.pedal_count += s.pedal_count;
    report.aggregate.beat_aligned += s.beat_aligned;
    report.aggregate.chord_aligned += s.chord_aligned;
    for (std::size_t i = 0; i < s.duration_histogram.size(); ++i)
      report.aggregate.duration_histogram[i] += s.duration_histogram[i];
    report.songs.push_back(std::move(s));
  }
  return report;
}

inline nlohmann::ordered_json song_json(const SongStats& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["pedal_count"] = s.pedal_count;
  j["beat_aligned_fraction"] = s.beat_fraction();
  j["chord_aligned_fraction"] = s.chord_fraction();
  j["duration_histogram"] = s.duration_histogram;
  return j;
}

inline nlohmann::ordered_json report_json(const AlignmentReport& report) {
  nlohmann::ordered_json j;
  j["songs"] = nlohmann::ordered_json::array();
  for (const SongStats& s : report.songs) j["songs"].push_back(song_json(s));
  j["aggregate"] = song_json(report.aggregate);
  return j;
}

/// Aligned plain-text table, one row per song plus the aggregate.
inline std::string report_table(const AlignmentReport& report) {
  std::size_t name_width = 9;  // "aggregate"
  for (const SongStats& s : report.songs) name_width = std::max(name_width, s.name.size());

  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %8s  %8s  %8s\n", int(name_width), "song", "pedals",
                "beat", "chord");
  out += line;
  auto row = [&](const SongStats& s) {
    std::snprintf(line, sizeof(line), "%-*s  %8lld  %7.1f%%  %7.1f%%\n", int(name_width),
                  s.name.c_str(), static_cast<long long>(s.pedal_count),
                  100.0 * s.beat_fraction(), 100.0 * s.chord_fraction());
    out += line;
  };
  for (const SongStats& s : report.songs) row(s);
  row(report.aggregate);
  return out;
}

}  // namespace pedalcw
