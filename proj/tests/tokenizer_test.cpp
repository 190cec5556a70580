#include "pedalcw/tokens.hpp"

#include <gtest/gtest.h>

#include <random>

#include "pedalcw/pipeline.hpp"
#include "test_util.hpp"

namespace pedalcw {
namespace {

std::vector<SuperToken> encode_bundle(const testutil::Bundle& b) {
  return encode(b.score, b.spans, b.chords, b.tempi);
}

TEST(Vocabulary, SizesMatchTheRepresentation) {
  EXPECT_EQ(vocab::kFamilies, 3);
  EXPECT_EQ(vocab::kPositions, 17);  // 16 subbeats + bar
  EXPECT_EQ(vocab::kTempos, 56);
  EXPECT_EQ(vocab::kChords, 60);
  EXPECT_EQ(vocab::kPedals, 10);
  EXPECT_EQ(vocab::kPitches, 128);
  EXPECT_EQ(vocab::kDurations, 64);
  // head sizes add the IGNORE slot everywhere but family
  EXPECT_EQ(vocab::kHeadSizes, (std::array<int, 7>{3, 18, 57, 61, 11, 129, 65}));
}

TEST(Vocabulary, CodesAreDenseAndStable) {
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(vocab::pedal_class_from_code(vocab::pedal_code(kPedalClasses[i])), kPedalClasses[i]);
  for (int p = 0; p < 128; ++p) EXPECT_EQ(vocab::pitch_from_code(vocab::pitch_code(p)), p);
  for (int c = 1; c <= 64; ++c) EXPECT_EQ(vocab::duration_code(vocab::duration_ticks_from_code(c)), c);
  for (int c = 0; c < 56; ++c) EXPECT_EQ(vocab::tempo_from_code(c + 1).code, c);
}

TEST(Encode, EmptyScoreIsAnchorOnly) {
  auto tokens = encode(Score{}, {}, {}, {});
  ASSERT_EQ(tokens.size(), 3u);
  EXPECT_EQ(tokens[0], SuperToken::bar());
  EXPECT_EQ(tokens[1], SuperToken::subbeat(0));
  EXPECT_EQ(tokens[2], SuperToken::eos());
}

TEST(Encode, GroupsMetricalFieldsOnOneTimestamp) {
  Score s;
  s.notes.push_back({0, 60, 480});
  std::vector<PedalSpan> spans = {{0, 480, 0, 480}};
  std::vector<std::pair<int, ChordLabel>> chords = {{0, ChordLabel{0, ChordQuality::maj}}};
  std::vector<std::pair<int, TempoClass>> tempi = {{0, TempoClass{22}}};  // 120 bpm
  auto tokens = encode(s, spans, chords, tempi);

  ASSERT_EQ(tokens.size(), 4u);
  EXPECT_EQ(tokens[0], SuperToken::bar());
  EXPECT_EQ(tokens[1].fam(), Family::metrical);
  EXPECT_EQ(tokens[1].position, vocab::position_subbeat(0));
  EXPECT_EQ(tokens[1].tempo, vocab::tempo_code(TempoClass{22}));
  EXPECT_EQ(tokens[1].chord, vocab::chord_code(ChordLabel{0, ChordQuality::maj}));
  EXPECT_EQ(tokens[1].pedal, vocab::pedal_code(480));
  EXPECT_EQ(tokens[2], SuperToken::note(60, 480));
  EXPECT_EQ(tokens[3], SuperToken::eos());
}

TEST(Encode, NotesAtOneTickSortByPitch) {
  Score s;
  s.notes.push_back({0, 64, 480});
  s.notes.push_back({0, 60, 480});
  auto tokens = encode(s, {}, {}, {});
  ASSERT_EQ(tokens.size(), 5u);
  EXPECT_EQ(tokens[2], SuperToken::note(60, 480));
  EXPECT_EQ(tokens[3], SuperToken::note(64, 480));
}

TEST(Encode, RejectsOffGridOnsets) {
  Score s;
  s.notes.push_back({61, 60, 480});
  try {
    encode(s, {}, {}, {});
    FAIL() << "expected unquantized_input";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unquantized_input);
  }
}

TEST(Encode, RejectsOverlongDurations) {
  Score s;
  s.notes.push_back({0, 60, 3900});
  try {
    encode(s, {}, {}, {});
    FAIL() << "expected out_of_range";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::out_of_range);
  }
}

TEST(Encode, SubbeatEmittedOnlyWhenOccupied) {
  Score s;
  s.notes.push_back({1920 + 3 * 120, 72, 240});  // bar 1, subbeat 3
  auto tokens = encode(s, {}, {}, {});
  // bar0, anchor subbeat0, bar1, subbeat3, note, eos
  ASSERT_EQ(tokens.size(), 6u);
  EXPECT_EQ(tokens[0], SuperToken::bar());
  EXPECT_EQ(tokens[1], SuperToken::subbeat(0));
  EXPECT_EQ(tokens[2], SuperToken::bar());
  EXPECT_EQ(tokens[3].position, vocab::position_subbeat(3));
  EXPECT_EQ(tokens[4], SuperToken::note(72, 240));
}

TEST(Encode, PedalLivesOnlyInMetricalTokens) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = testutil::random_bundle(rng, 8, 60, 24);
    for (const SuperToken& t : encode_bundle(b)) {
      EXPECT_TRUE(token_valid(t));
      if (t.pedal != kIgnore) {
        EXPECT_EQ(t.fam(), Family::metrical);
      }
    }
  }
}

TEST(Encode, AddingANoteNeverShortensTheSequence) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto b = testutil::random_bundle(rng, 6, 40, 10);
    auto before = encode_bundle(b).size();
    Note extra{testutil::pick(rng, 0, 6 * 16 - 1) * kTicksPerSubbeat,
               testutil::pick(rng, 21, 108), 480};
    b.score.notes.push_back(extra);
    b.score.sort_events();
    EXPECT_GE(encode_bundle(b).size(), before);
  }
}

TEST(Decode, AnchorSequenceIsEmptyScore) {
  auto d = decode(std::vector<SuperToken>{SuperToken::bar(), SuperToken::subbeat(0),
                                          SuperToken::eos()});
  EXPECT_TRUE(d.score.notes.empty());
  EXPECT_TRUE(d.pedal.empty());
  EXPECT_FALSE(d.truncated);
}

TEST(Decode, NoteBeforeMetricalIsMalformed) {
  try {
    decode(std::vector<SuperToken>{SuperToken::note(60, 480)});
    FAIL() << "expected malformed_sequence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::malformed_sequence);
  }
}

TEST(Decode, BackwardPositionIsMalformed) {
  std::vector<SuperToken> tokens = {SuperToken::bar(), SuperToken::subbeat(4),
                                    SuperToken::subbeat(2), SuperToken::eos()};
  try {
    decode(tokens);
    FAIL() << "expected malformed_sequence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::malformed_sequence);
  }
}

TEST(Decode, FieldValidityViolationIsMalformed) {
  SuperToken bad = SuperToken::bar();
  bad.pitch = 5;  // metrical token with a pitch
  try {
    decode(std::vector<SuperToken>{SuperToken::bar(), bad});
    FAIL() << "expected malformed_sequence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::malformed_sequence);
  }
}

TEST(Decode, MissingEosSetsTruncatedFlag) {
  std::vector<SuperToken> tokens = {SuperToken::bar(), SuperToken::subbeat(0),
                                    SuperToken::note(60, 480)};
  auto d = decode(tokens);
  EXPECT_TRUE(d.truncated);
  ASSERT_EQ(d.score.notes.size(), 1u);
}

TEST(Decode, TokenAfterEosIsMalformed) {
  std::vector<SuperToken> tokens = {SuperToken::bar(), SuperToken::eos(), SuperToken::eos()};
  try {
    decode(tokens);
    FAIL() << "expected malformed_sequence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::malformed_sequence);
  }
}

TEST(Codec, RoundTripPreservesEverything) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    auto b = testutil::random_bundle(rng, 8, 80, 24);
    auto tokens = encode_bundle(b);
    auto d = decode(tokens);

    EXPECT_EQ(testutil::note_multiset(d.score), testutil::note_multiset(b.score));
    ASSERT_EQ(d.pedal.size(), b.spans.size());
    for (std::size_t i = 0; i < d.pedal.size(); ++i) {
      EXPECT_EQ(d.pedal[i].onset, b.spans[i].onset);
      EXPECT_EQ(d.pedal[i].duration_class, b.spans[i].duration_class);
    }
    ASSERT_EQ(d.chords.size(), b.chords.size());
    for (std::size_t i = 0; i < d.chords.size(); ++i) EXPECT_EQ(d.chords[i], b.chords[i]);
    ASSERT_EQ(d.score.tempo.size(), b.tempi.size());
    for (std::size_t i = 0; i < d.score.tempo.size(); ++i) {
      EXPECT_EQ(d.score.tempo[i].tick, b.tempi[i].first);
      EXPECT_EQ(quantize_tempo(d.score.tempo[i].bpm()), b.tempi[i].second);
    }
  }
}

TEST(TokenText, EosLineRendersAllIgnores) {
  std::string text = serialize_tokens(std::vector<SuperToken>{SuperToken::eos()});
  EXPECT_EQ(text, "E\t_\t_\t_\t_\t_\t_\n");
}

TEST(TokenText, ReadableLineMatchesTheDocumentedShape) {
  auto t = SuperToken::subbeat(0, vocab::tempo_code(TempoClass{22}),
                               vocab::chord_code(ChordLabel{0, ChordQuality::maj}),
                               vocab::pedal_code(480));
  EXPECT_EQ(serialize_tokens(std::vector<SuperToken>{t}), "M\tS0\t120\tC:maj\t480\t_\t_\n");
}

TEST(TokenText, IntegerFormCarriesHeader) {
  std::string text =
      serialize_tokens(std::vector<SuperToken>{SuperToken::bar()}, TokenTextForm::codes);
  EXPECT_EQ(text, "pedalcw-tokens v1\n0,1,0,0,0,0,0\n");
}

TEST(TokenText, ParseErrorNamesTheLine) {
  try {
    parse_tokens("M\tB\t_\t_\t_\t_\t_\nM\tS0\t_\t_\n");
    FAIL() << "expected parse_error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse_error);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(TokenText, BothFormsRoundTrip) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    auto tokens = encode_bundle(testutil::random_bundle(rng, 6, 50, 16));
    EXPECT_EQ(parse_tokens(serialize_tokens(tokens, TokenTextForm::names)), tokens);
    EXPECT_EQ(parse_tokens(serialize_tokens(tokens, TokenTextForm::codes)), tokens);
  }
}

TEST(QuantizeScore, SnapsOnsetsAndDurations) {
  Score s;
  s.notes.push_back({61, 60, 95});
  s.notes.push_back({180, 62, 20});
  s.tempo.push_back(TempoEvent::from_bpm(59, 120));
  Score q = quantize_score(s);
  EXPECT_EQ(q.notes[0].onset, 120);
  EXPECT_EQ(q.notes[0].duration, 120);  // 95 is nearer 120 than 60
  EXPECT_EQ(q.notes[1].onset, 120);     // 180 is a midpoint, ties down
  EXPECT_EQ(q.notes[1].duration, 60);   // clamped up to the smallest duration
  EXPECT_EQ(q.tempo[0].tick, 0);        // 59 is nearer 0 than 120
}

}  // namespace
}  // namespace pedalcw
