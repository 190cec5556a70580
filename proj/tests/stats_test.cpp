#include "pedalcw/stats.hpp"

#include <gtest/gtest.h>

#include <random>

#include "pedalcw/pipeline.hpp"
#include "test_util.hpp"

namespace pedalcw {
namespace {

using testutil::synthetic_pop_corpus;

TEST(Stats, EmptyCorpusIsAnError) {
  try {
    analyze({});
    FAIL() << "expected empty_corpus";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_corpus);
  }
}

TEST(Stats, PedalOnChordChangeTicksGivesFullChordFraction) {
  CorpusEntry e;
  e.name = "x";
  e.chords = {{0, ChordLabel{0, ChordQuality::maj}}, {960, ChordLabel{5, ChordQuality::maj}}};
  e.spans = {{0, 480, 0, 480}, {960, 480, 960, 480}};
  auto report = analyze({e});
  EXPECT_DOUBLE_EQ(report.aggregate.chord_fraction(), 1.0);
}

TEST(Stats, HistogramCountsRawDurationByClass) {
  CorpusEntry e;
  e.name = "x";
  e.spans = {{0, quantize_duration(480), 0, 480}};
  auto report = analyze({e});
  std::array<std::int64_t, 10> expected{};
  expected[1] = 1;  // class 480 is the second bin
  EXPECT_EQ(report.aggregate.duration_histogram, expected);
  EXPECT_EQ(report.aggregate.pedal_count, 1);
}

TEST(Stats, HistogramSumsToPedalCount) {
  std::mt19937_64 rng(7);
  auto corpus = synthetic_pop_corpus(rng, 4, 8, 30);
  auto report = analyze(corpus);
  std::int64_t total = 0;
  for (auto v : report.aggregate.duration_histogram) total += v;
  EXPECT_EQ(total, report.aggregate.pedal_count);
}

TEST(Stats, SyntheticPopCorpusAlignsWithBeatAndChord) {
  std::mt19937_64 rng(99);
  auto corpus = synthetic_pop_corpus(rng, 8, 16, 30);
  auto report = analyze(corpus);
  EXPECT_GE(report.aggregate.beat_fraction(), 0.95);
  EXPECT_GE(report.aggregate.chord_fraction(), 0.95);
}

TEST(Stats, ReportIsPermutationInvariant) {
  std::mt19937_64 rng(13);
  auto corpus = synthetic_pop_corpus(rng, 5, 8, 30);
  auto forward = analyze(corpus);
  std::reverse(corpus.begin(), corpus.end());
  auto reversed = analyze(corpus);
  EXPECT_EQ(forward.aggregate.pedal_count, reversed.aggregate.pedal_count);
  EXPECT_EQ(forward.aggregate.beat_aligned, reversed.aggregate.beat_aligned);
  EXPECT_EQ(forward.aggregate.chord_aligned, reversed.aggregate.chord_aligned);
  EXPECT_EQ(forward.aggregate.duration_histogram, reversed.aggregate.duration_histogram);
}

TEST(Stats, FractionsStableThroughTheCodec) {
  // Once spans are on-grid, encode/decode must not move any measurement.
  std::mt19937_64 rng(21);
  auto b = testutil::random_bundle(rng, 8, 60, 32);
  CorpusEntry original{"x", b.score, b.spans, b.chords};
  auto before = analyze({original});

  auto d = decode(encode(b.score, b.spans, b.chords, b.tempi));
  CorpusEntry decoded{"x", d.score, d.pedal, d.chords};
  auto after = analyze({decoded});

  EXPECT_EQ(before.aggregate.pedal_count, after.aggregate.pedal_count);
  EXPECT_DOUBLE_EQ(before.aggregate.beat_fraction(), after.aggregate.beat_fraction());
  EXPECT_DOUBLE_EQ(before.aggregate.chord_fraction(), after.aggregate.chord_fraction());
  EXPECT_EQ(before.aggregate.duration_histogram, after.aggregate.duration_histogram);
}

TEST(Stats, JsonHasStableKeyOrder) {
  CorpusEntry e;
  e.name = "a";
  e.spans = {{0, 240, 0, 240}};
  auto j = report_json(analyze({e}));
  std::string dumped = j.dump();
  EXPECT_LT(dumped.find("\"songs\""), dumped.find("\"aggregate\""));
  EXPECT_LT(dumped.find("\"pedal_count\""), dumped.find("\"beat_aligned_fraction\""));
  EXPECT_LT(dumped.find("\"beat_aligned_fraction\""), dumped.find("\"chord_aligned_fraction\""));
}

TEST(Stats, TableListsEverySongAndAggregate) {
  std::mt19937_64 rng(3);
  auto corpus = synthetic_pop_corpus(rng, 3, 4, 0);
  std::string table = report_table(analyze(corpus));
  EXPECT_NE(table.find("song0"), std::string::npos);
  EXPECT_NE(table.find("song2"), std::string::npos);
  EXPECT_NE(table.find("aggregate"), std::string::npos);
}

}  // namespace
}  // namespace pedalcw
