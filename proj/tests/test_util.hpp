#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "pedalcw/pedalcw.hpp"

namespace pedalcw::testutil {

struct Bundle {
  Score score;
  std::vector<PedalSpan> spans;
  std::vector<std::pair<int, ChordLabel>> chords;
  std::vector<std::pair<int, TempoClass>> tempi;
};

inline int pick(std::mt19937_64& rng, int lo, int hi) {  // inclusive bounds
  return lo + int(rng() % std::uint64_t(hi - lo + 1));
}

/// Random already-quantized score: onsets on the 120-tick grid, durations in
/// 60-tick steps, per-pitch non-overlapping notes (so a MIDI round-trip is
/// exact), strictly increasing span/chord/tempo ticks.
inline Bundle random_bundle(std::mt19937_64& rng, int max_bars = 32, int max_notes = 500,
                            int max_spans = 64) {
  Bundle b;
  int bars = pick(rng, 1, max_bars);
  int grid_points = bars * kSubbeatsPerBar;

  // notes, rejecting same-pitch overlap
  std::map<int, std::vector<std::pair<int, int>>> by_pitch;  // pitch -> (onset,end)
  int want = pick(rng, 1, max_notes);
  for (int i = 0; i < want; ++i) {
    int pitch = pick(rng, 21, 108);
    int onset = pick(rng, 0, grid_points - 1) * kTicksPerSubbeat;
    int duration = pick(rng, 1, vocab::kDurations) * vocab::kDurationStep;
    bool clash = false;
    for (const auto& [o, e] : by_pitch[pitch]) {
      if (onset < e && o < onset + duration) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    by_pitch[pitch].emplace_back(onset, onset + duration);
    b.score.notes.push_back({onset, pitch, duration});
  }
  if (b.score.notes.empty()) b.score.notes.push_back({0, 60, 480});

  // pedal spans at distinct grid ticks
  std::vector<int> span_ticks;
  for (int i = 0, n = pick(rng, 0, max_spans); i < n; ++i)
    span_ticks.push_back(pick(rng, 0, grid_points - 1) * kTicksPerSubbeat);
  std::sort(span_ticks.begin(), span_ticks.end());
  span_ticks.erase(std::unique(span_ticks.begin(), span_ticks.end()), span_ticks.end());
  for (int tick : span_ticks) {
    int klass = kPedalClasses[std::size_t(pick(rng, 0, 9))];
    b.spans.push_back({tick, klass, tick, klass});
  }

  // chords at distinct half-bar ticks
  std::vector<int> chord_ticks;
  for (int i = 0, n = pick(rng, 0, 2 * bars); i < n; ++i)
    chord_ticks.push_back(pick(rng, 0, 2 * bars - 1) * (kTicksPerBar / 2));
  std::sort(chord_ticks.begin(), chord_ticks.end());
  chord_ticks.erase(std::unique(chord_ticks.begin(), chord_ticks.end()), chord_ticks.end());
  for (int tick : chord_ticks)
    b.chords.emplace_back(tick, ChordLabel::from_code(pick(rng, 0, kChordTypes - 1)));

  // tempo changes at distinct grid ticks
  std::vector<int> tempo_ticks;
  for (int i = 0, n = pick(rng, 0, 8); i < n; ++i)
    tempo_ticks.push_back(pick(rng, 0, grid_points - 1) * kTicksPerSubbeat);
  std::sort(tempo_ticks.begin(), tempo_ticks.end());
  tempo_ticks.erase(std::unique(tempo_ticks.begin(), tempo_ticks.end()), tempo_ticks.end());
  for (int tick : tempo_ticks) {
    TempoClass klass{pick(rng, 0, kTempoKinds - 1)};
    b.tempi.emplace_back(tick, klass);
    b.score.tempo.push_back(TempoEvent::from_bpm(tick, double(klass.bpm())));
  }

  b.score.sort_events();
  return b;
}

inline std::vector<std::tuple<int, int, int>> note_multiset(const Score& s) {
  std::vector<std::tuple<int, int, int>> v;
  for (const Note& n : s.notes) v.emplace_back(n.onset, n.pitch, n.duration);
  std::sort(v.begin(), v.end());
  return v;
}

/// Pedal class deterministically coupled to the chord announced earlier in
/// the same bar: chord on subbeat 0, pedal re-press on subbeat 8 whose class
/// is a fixed function of that chord. The pedal is therefore predictable
/// from the prefix, which is what the participation probe needs.
inline int coupled_pedal_code(int chord_code) { return chord_code % 10 + 1; }

inline std::vector<SuperToken> coupled_sequence(std::mt19937_64& rng, int bars) {
  std::vector<SuperToken> seq;
  for (int bar = 0; bar < bars; ++bar) {
    int chord_code = pick(rng, 0, kChordTypes - 1);
    seq.push_back(SuperToken::bar());
    seq.push_back(SuperToken::subbeat(0, kIgnore, chord_code + 1, kIgnore));
    seq.push_back(SuperToken::subbeat(8, kIgnore, kIgnore, coupled_pedal_code(chord_code)));
  }
  seq.push_back(SuperToken::eos());
  return seq;
}

inline std::vector<std::vector<SuperToken>> coupled_corpus(std::mt19937_64& rng, int sequences,
                                                           int bars) {
  std::vector<std::vector<SuperToken>> corpus;
  for (int i = 0; i < sequences; ++i) corpus.push_back(coupled_sequence(rng, bars));
  return corpus;
}

/// A fixed 16-token two-bar phrase that exercises every head.
inline std::vector<SuperToken> sixteen_token_sequence() {
  return {
      SuperToken::bar(),
      SuperToken::subbeat(0, vocab::tempo_code(TempoClass{22}),
                          vocab::chord_code(ChordLabel{0, ChordQuality::maj}),
                          vocab::pedal_code(960)),
      SuperToken::note(60, 480),
      SuperToken::note(64, 480),
      SuperToken::subbeat(4),
      SuperToken::note(67, 240),
      SuperToken::subbeat(8, kIgnore, vocab::chord_code(ChordLabel{5, ChordQuality::maj}),
                          vocab::pedal_code(960)),
      SuperToken::note(65, 480),
      SuperToken::subbeat(12),
      SuperToken::note(71, 240),
      SuperToken::bar(),
      SuperToken::subbeat(0, kIgnore, vocab::chord_code(ChordLabel{7, ChordQuality::dom7}),
                          vocab::pedal_code(1920)),
      SuperToken::note(62, 960),
      SuperToken::note(67, 960),
      SuperToken::subbeat(8),
      SuperToken::eos(),
  };
}

/// Pop-like corpus: chord notes per half bar, pedal re-pressed at each chord
/// change with bounded onset jitter.
inline std::vector<CorpusEntry> synthetic_pop_corpus(std::mt19937_64& rng, int songs, int bars,
                                                     int jitter) {
  std::vector<CorpusEntry> corpus;
  for (int song = 0; song < songs; ++song) {
    CorpusEntry e;
    e.name = "song" + std::to_string(song);
    int prev_root = -1;
    for (int half = 0; half < 2 * bars; ++half) {
      int root = int(rng() % 12);
      if (root == prev_root) root = (root + 5) % 12;  // force a change every half bar
      prev_root = root;
      for (int iv : chord_templates()[int(ChordQuality::maj)])
        e.score.notes.push_back({half * 960, 48 + root + iv, 960});

      int onset = half * 960 + (jitter > 0 ? pick(rng, -jitter, jitter) : 0);
      onset = std::max(onset, 0);
      e.spans.push_back({quantize_onset(onset), 960, onset, 960});
    }
    e.score.sort_events();
    e.chords = detect_chords(e.score);
    corpus.push_back(std::move(e));
  }
  return corpus;
}

/// Teacher-forced next-pedal accuracy over every supervised pedal target.
template <typename Real>
double pedal_accuracy(Model<Real>& model, const std::vector<std::vector<SuperToken>>& heldout) {
  std::int64_t hits = 0, total = 0;
  for (const auto& seq : heldout) {
    std::vector<SuperToken> inputs(seq.begin(), seq.end() - 1);
    std::vector<SuperToken> targets(seq.begin() + 1, seq.end());
    std::vector<std::uint8_t> cond(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) cond[i] = targets[i].family;
    auto logits = model.forward(inputs, cond);
    int S = vocab::kHeadSizes[int(Field::pedal)];
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].pedal == kIgnore) continue;
      const Real* row = logits.field[int(Field::pedal)].data() + i * std::size_t(S);
      int argmax = 0;
      for (int s = 1; s < S; ++s)
        if (row[s] > row[argmax]) argmax = s;
      hits += argmax == targets[i].pedal;
      ++total;
    }
  }
  return total == 0 ? 0.0 : double(hits) / double(total);
}

}  // namespace pedalcw::testutil
