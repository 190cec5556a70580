#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/model/net.hpp"
#include "pedalcw/tokens.hpp"
#include "pedalcw/vocab.hpp"

// Autoregressive sampling with structural masks. The family is sampled
// first; the remaining fields are then sampled under masks that keep every
// emitted super token valid and the metrical clock strictly advancing, so
// the output always decodes. Per-field temperature and nucleus-p settings;
// temperature 0 means greedy argmax.

namespace pedalcw {

struct SampleOptions {
  int max_bars = 8;
  std::array<double, kFieldCount> temperature = {1, 1, 1, 1, 1, 1, 1};
  std::array<double, kFieldCount> nucleus = {1, 1, 1, 1, 1, 1, 1};
  std::uint64_t seed = 0;
};

namespace sample_detail {

inline constexpr double kGreedyThreshold = 1e-9;

template <typename Real>
int sample_categorical(const std::vector<Real>& logits, const std::vector<bool>& allowed,
                       double temperature, double nucleus_p, std::mt19937_64& rng) {
  int n = int(logits.size());
  std::vector<int> idx;
  idx.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i)
    if (allowed[std::size_t(i)]) idx.push_back(i);
  if (idx.empty()) raise(Errc::malformed_sequence, "no candidate survives the structural mask");
  if (idx.size() == 1) return idx[0];

  if (temperature < kGreedyThreshold) {
    int best = idx[0];
    for (int i : idx)
      if (double(logits[std::size_t(i)]) > double(logits[std::size_t(best)])) best = i;
    return best;
  }

  double maxl = -1e300;
  for (int i : idx) maxl = std::max(maxl, double(logits[std::size_t(i)]) / temperature);
  std::vector<double> prob(idx.size());
  double z = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    prob[k] = std::exp(double(logits[std::size_t(idx[k])]) / temperature - maxl);
    z += prob[k];
  }
  for (double& p : prob) p /= z;

  // nucleus: keep the smallest high-probability prefix with mass >= p
  std::vector<std::size_t> order(idx.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return prob[a] > prob[b]; });
  std::size_t kept = order.size();
  if (nucleus_p < 1.0) {
    double mass = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      mass += prob[order[k]];
      if (mass >= nucleus_p) {
        kept = k + 1;
        break;
      }
    }
  }
  double kept_mass = 0;
  for (std::size_t k = 0; k < kept; ++k) kept_mass += prob[order[k]];

  double u = model_detail::uniform01(rng) * kept_mass;
  for (std::size_t k = 0; k < kept; ++k) {
    u -= prob[order[k]];
    if (u <= 0) return idx[order[k]];
  }
  return idx[order[kept - 1]];
}

struct ClockState {
  int bars_seen = 0;
  int last_subbeat = -1;  // -1: none since the last bar token
  bool any_metrical = false;

  void apply(const SuperToken& t) {
    if (t.fam() != Family::metrical) return;
    any_metrical = true;
    if (t.position == vocab::kPositionBar) {
      ++bars_seen;
      last_subbeat = -1;
    } else {
      last_subbeat = vocab::position_subbeat_index(t.position);
    }
  }
};

inline void validate_primer(const std::vector<SuperToken>& primer) {
  if (primer.empty()) raise(Errc::invalid_primer, "empty primer");
  ClockState clock;
  for (std::size_t i = 0; i < primer.size(); ++i) {
    const SuperToken& t = primer[i];
    auto fail = [&](const char* why) {
      raise(Errc::invalid_primer, "primer token " + std::to_string(i) + ": " + why);
    };
    if (!token_valid(t)) fail("family/field validity violated");
    if (t.fam() == Family::eos) fail("primer must not contain EOS");
    if (i == 0 && !(t.fam() == Family::metrical && t.position == vocab::kPositionBar))
      fail("primer must begin with a Bar token");
    if (t.fam() == Family::note && !clock.any_metrical) fail("note before any metrical token");
    if (t.fam() == Family::metrical && vocab::position_is_subbeat(t.position)) {
      if (clock.bars_seen == 0) fail("subbeat before any bar");
      if (vocab::position_subbeat_index(t.position) <= clock.last_subbeat)
        fail("position moves backward within bar");
    }
    clock.apply(t);
  }
}

}  // namespace sample_detail

/// Sample a token sequence from `model`, continuing `primer` (default
/// [Bar, Subbeat0]). Stops at a sampled EOS, after max_bars bar tokens, or
/// at the 4 * max_bars * 16 token runaway guard; the result always ends with
/// EOS and decodes cleanly.
template <typename Real>
std::vector<SuperToken> sample(const Model<Real>& model, std::vector<SuperToken> primer,
                               const SampleOptions& opt) {
  using sample_detail::sample_categorical;

  if (primer.empty()) primer = {SuperToken::bar(), SuperToken::subbeat(0)};
  sample_detail::validate_primer(primer);
  if (opt.max_bars < 1) raise(Errc::out_of_range, "max_bars must be at least 1");

  const int context = model.config().context;
  const int window_keep = std::max(1, context / 2);
  const std::size_t token_cap = std::size_t(4) * opt.max_bars * kSubbeatsPerBar;

  std::mt19937_64 rng(opt.seed);
  sample_detail::ClockState clock;
  std::vector<SuperToken> tokens;
  tokens.reserve(token_cap + 1);

  auto state = model.make_state();
  typename Model<Real>::Vec hidden;
  // Feed a token, sliding the attention window when the context fills up.
  auto push = [&](const SuperToken& t) {
    if (model.state_full(state)) {
      state = model.make_state();
      std::size_t start = tokens.size() > std::size_t(window_keep - 1)
                              ? tokens.size() - std::size_t(window_keep - 1)
                              : 0;
      for (std::size_t i = start; i < tokens.size(); ++i) model.infer_step(state, tokens[i]);
    }
    hidden = model.infer_step(state, t);
    tokens.push_back(t);
    clock.apply(t);
  };
  for (const SuperToken& t : primer) push(t);

  while (true) {
    if (tokens.size() >= token_cap) {
      tokens.push_back(SuperToken::eos());
      break;
    }

    auto fam_logits = model.family_logits(hidden);
    std::vector<bool> fam_allowed(vocab::kFamilies, true);
    fam_allowed[std::size_t(Family::note)] = clock.any_metrical;
    int family = sample_categorical(fam_logits, fam_allowed, opt.temperature[0], opt.nucleus[0],
                                    rng);
    if (family == int(Family::eos)) {
      tokens.push_back(SuperToken::eos());
      break;
    }

    auto fields = model.field_logits(hidden, family);
    auto draw = [&](Field f, const std::vector<bool>& allowed) {
      return sample_categorical(fields[int(f)], allowed, opt.temperature[int(f)],
                                opt.nucleus[int(f)], rng);
    };

    SuperToken t;
    t.family = std::uint8_t(family);
    if (family == int(Family::metrical)) {
      std::vector<bool> allowed(std::size_t(vocab::kHeadSizes[int(Field::position)]), false);
      allowed[vocab::kPositionBar] = true;
      for (int k = clock.last_subbeat + 1; k < kSubbeatsPerBar; ++k)
        allowed[std::size_t(vocab::position_subbeat(k))] = clock.bars_seen > 0;
      int position = draw(Field::position, allowed);
      if (position == vocab::kPositionBar && clock.bars_seen >= opt.max_bars) {
        tokens.push_back(SuperToken::eos());
        break;
      }
      t.position = std::uint8_t(position);
      std::vector<bool> any_tempo(std::size_t(vocab::kHeadSizes[int(Field::tempo)]), true);
      std::vector<bool> any_chord(std::size_t(vocab::kHeadSizes[int(Field::chord)]), true);
      std::vector<bool> any_pedal(std::size_t(vocab::kHeadSizes[int(Field::pedal)]), true);
      t.tempo = std::uint8_t(draw(Field::tempo, any_tempo));
      t.chord = std::uint8_t(draw(Field::chord, any_chord));
      t.pedal = std::uint8_t(draw(Field::pedal, any_pedal));
    } else {
      std::vector<bool> pitch_allowed(std::size_t(vocab::kHeadSizes[int(Field::pitch)]), true);
      pitch_allowed[kIgnore] = false;
      std::vector<bool> dur_allowed(std::size_t(vocab::kHeadSizes[int(Field::duration)]), true);
      dur_allowed[kIgnore] = false;
      t.pitch = std::uint8_t(draw(Field::pitch, pitch_allowed));
      t.duration = std::uint8_t(draw(Field::duration, dur_allowed));
    }
    push(t);
  }
  return tokens;
}

}  // namespace pedalcw
