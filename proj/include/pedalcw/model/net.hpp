#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/model/config.hpp"
#include "pedalcw/tokens.hpp"
#include "pedalcw/vocab.hpp"

// Compound-word Transformer decoder over super tokens.
//
// Input: the seven field embeddings of a token are concatenated and
// projected to d_model, plus a sinusoidal positional term. A stack of
// pre-norm causal self-attention blocks produces the hidden state. Output is
// two-stage: the hidden state yields family logits; the family embedding of
// the token being predicted (teacher forcing at train time, the sampled
// family at inference) is concatenated onto the hidden state and fed through
// per-field linear heads for the six remaining fields.
//
// The scalar type is a template parameter so tests can run the identical
// code path in wide precision. All computation is single-threaded and
// deterministic: fixed loop order, an explicitly seeded Mersenne Twister and
// a hand-rolled Box-Muller sampler.

namespace pedalcw {

namespace model_detail {

inline double uniform01(std::mt19937_64& g) {
  return double(g() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double normal01(std::mt19937_64& g) {
  double u1 = 1.0 - uniform01(g);  // (0, 1]
  double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// exact (erf-based) GELU; smooth, so finite-difference checks behave
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476)); }

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * 0.7071067811865476)) +
         x * std::exp(-0.5 * x * x) * 0.3989422804014327;
}

}  // namespace model_detail

template <typename Real>
struct Tensor {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<Real> w;  // row-major values
  std::vector<Real> g;  // accumulated gradient, same shape

  std::int64_t size() const { return std::int64_t(rows) * cols; }
  Real* row(int r) { return w.data() + std::size_t(r) * cols; }
  const Real* row(int r) const { return w.data() + std::size_t(r) * cols; }
  Real* grad_row(int r) { return g.data() + std::size_t(r) * cols; }
};

template <typename Real>
class Model {
 public:
  using Vec = std::vector<Real>;

  struct Logits {
    int steps = 0;
    std::array<Vec, kFieldCount> field;  // field[f] is steps x head_size(f), row-major
  };

  struct LossBreakdown {
    double total = 0.0;  // mean over steps of the summed per-field cross-entropies
    std::array<double, kFieldCount> field_sum{};
    std::array<std::int64_t, kFieldCount> field_count{};
    int steps = 0;
  };

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
    init_weights();
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Tensor<Real>*>& params() const { return params_; }
  std::vector<Tensor<Real>*>& params() { return params_; }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const Tensor<Real>* t : params_) n += t->size();
    return n;
  }

  void zero_grad() {
    for (Tensor<Real>* t : params_) std::fill(t->g.begin(), t->g.end(), Real(0));
  }

  /// Concatenated field embeddings -> input projection -> positional term.
  Vec embed(const SuperToken& tok, int index) const {
    if (index < 0 || index >= cfg_.context)
      raise(Errc::sequence_too_long, "token index " + std::to_string(index));
    check_token(tok);
    int d = cfg_.d_model;
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = in_b_.w[j];
    int offset = 0;
    for (int f = 0; f < kFieldCount; ++f) {
      const Real* row = emb_[f].row(tok.get(Field(f)));
      for (int i = 0; i < cfg_.emb_widths[f]; ++i) {
        Real e = row[i];
        const Real* wr = in_w_.row(offset + i);
        for (int j = 0; j < d; ++j) x[j] += e * wr[j];
      }
      offset += cfg_.emb_widths[f];
    }
    const Real* pe = pe_.data() + std::size_t(index) * d;
    for (int j = 0; j < d; ++j) x[j] += pe[j];
    return x;
  }

  /// Teacher-forced batch forward in eval mode (no dropout).
  /// cond[i] is the family of the token being predicted at step i.
  Logits forward(std::span<const SuperToken> inputs, std::span<const std::uint8_t> cond) const {
    Cache c;
    run_forward(inputs, cond, false, nullptr, c);
    Logits out;
    out.steps = c.T;
    out.field = std::move(c.logits);
    return out;
  }

  /// Convenience overload conditioning each step on the next input token's
  /// family (the final step is conditioned on EOS).
  Logits forward(std::span<const SuperToken> inputs) const {
    std::vector<std::uint8_t> cond(inputs.size(), std::uint8_t(Family::eos));
    for (std::size_t i = 0; i + 1 < inputs.size(); ++i) cond[i] = inputs[i + 1].family;
    return forward(inputs, cond);
  }

  /// Forward + cross-entropy; per-field terms with IGNORE targets are
  /// masked, the family term never is.
  LossBreakdown loss_eval(std::span<const SuperToken> inputs,
                          std::span<const SuperToken> targets) const {
    Cache c;
    return loss_common(inputs, targets, false, nullptr, c, nullptr);
  }

  /// Forward, loss, and backward; gradients accumulate into params()[..]->g.
  /// `scale` multiplies the gradient (for batch averaging).
  LossBreakdown loss_and_grad(std::span<const SuperToken> inputs,
                              std::span<const SuperToken> targets, bool training,
                              std::mt19937_64* dropout_rng, double scale = 1.0) {
    Cache c;
    std::array<Vec, kFieldCount> dlogits;
    LossBreakdown lb = loss_common(inputs, targets, training, dropout_rng, c, &dlogits);
    for (auto& dl : dlogits)
      for (Real& v : dl) v = Real(v * scale);
    backward(c, dlogits);
    return lb;
  }

  // -- incremental inference ------------------------------------------------

  struct InferState {
    int len = 0;
    std::vector<std::vector<Real>> k, v;  // per layer, len x d appended rows
  };

  InferState make_state() const {
    InferState st;
    st.k.resize(cfg_.n_layers);
    st.v.resize(cfg_.n_layers);
    return st;
  }

  bool state_full(const InferState& st) const { return st.len >= cfg_.context; }

  /// Feed one token; returns the final hidden state at its position.
  /// Matches the batch forward bit for bit in eval mode.
  Vec infer_step(InferState& st, const SuperToken& tok) const {
    if (state_full(st)) raise(Errc::sequence_too_long, "inference window full");
    int d = cfg_.d_model;
    int nh = cfg_.n_heads;
    int dh = d / nh;
    Real att_scale = Real(1.0 / std::sqrt(double(dh)));
    int i = st.len;

    Vec x = embed(tok, i);
    Vec a(d), q(d), o(d), f1(cfg_.d_ff);
    Vec p(std::size_t(i) + 1);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const LayerParams& L = layers_[l];
      layer_norm_row(x.data(), L.ln1_g, L.ln1_b, a.data(), nullptr, nullptr);
      st.k[l].resize(std::size_t(i + 1) * d);
      st.v[l].resize(std::size_t(i + 1) * d);
      Real* kr = st.k[l].data() + std::size_t(i) * d;
      Real* vr = st.v[l].data() + std::size_t(i) * d;
      linear_row(a.data(), L.wq, L.bq, q.data());
      linear_row(a.data(), L.wk, L.bk, kr);
      linear_row(a.data(), L.wv, L.bv, vr);
      for (int h = 0; h < nh; ++h) {
        const Real* qh = q.data() + h * dh;
        double maxs = -1e30;
        for (int j = 0; j <= i; ++j) {
          const Real* kj = st.k[l].data() + std::size_t(j) * d + h * dh;
          double s = 0;
          for (int m = 0; m < dh; ++m) s += double(qh[m]) * double(kj[m]);
          s *= double(att_scale);
          p[j] = Real(s);
          if (s > maxs) maxs = s;
        }
        double z = 0;
        for (int j = 0; j <= i; ++j) {
          double e = std::exp(double(p[j]) - maxs);
          p[j] = Real(e);
          z += e;
        }
        Real* oh = o.data() + h * dh;
        for (int m = 0; m < dh; ++m) oh[m] = 0;
        for (int j = 0; j <= i; ++j) {
          Real pj = Real(double(p[j]) / z);
          const Real* vj = st.v[l].data() + std::size_t(j) * d + h * dh;
          for (int m = 0; m < dh; ++m) oh[m] += pj * vj[m];
        }
      }
      Vec attn(d);
      linear_row(o.data(), L.wo, L.bo, attn.data());
      for (int j = 0; j < d; ++j) x[j] += attn[j];
      layer_norm_row(x.data(), L.ln2_g, L.ln2_b, a.data(), nullptr, nullptr);
      linear_row(a.data(), L.w1, L.b1, f1.data());
      for (Real& vf : f1) vf = Real(model_detail::gelu(double(vf)));
      Vec f2(d);
      linear_row(f1.data(), L.w2, L.b2, f2.data());
      for (int j = 0; j < d; ++j) x[j] += f2[j];
    }
    Vec h(d);
    layer_norm_row(x.data(), lnf_g_, lnf_b_, h.data(), nullptr, nullptr);
    ++st.len;
    return h;
  }

  Vec family_logits(const Vec& hidden) const {
    Vec out(vocab::kHeadSizes[0]);
    linear_row(hidden.data(), fam_w_, fam_b_, out.data());
    return out;
  }

  /// Logits for the six non-family fields, conditioned on `family`.
  std::array<Vec, kFieldCount> field_logits(const Vec& hidden, int family) const {
    if (family < 0 || family >= vocab::kFamilies)
      raise(Errc::out_of_range, "family code " + std::to_string(family));
    int d = cfg_.d_model;
    int fw = cfg_.emb_widths[0];
    Vec z(std::size_t(d) + fw);
    for (int j = 0; j < d; ++j) z[j] = hidden[j];
    const Real* fe = emb_[0].row(family);
    for (int j = 0; j < fw; ++j) z[d + j] = fe[j];
    std::array<Vec, kFieldCount> out;
    for (int f = 1; f < kFieldCount; ++f) {
      out[f].resize(vocab::kHeadSizes[f]);
      linear_row(z.data(), head_w_[f], head_b_[f], out[f].data());
    }
    return out;
  }

  // -- weight access (checkpointing) ---------------------------------------

  Tensor<Real>* find_param(const std::string& name) {
    for (Tensor<Real>* t : params_)
      if (t->name == name) return t;
    return nullptr;
  }

 private:
  struct LayerParams {
    Tensor<Real> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<Real> ln2_g, ln2_b, w1, b1, w2, b2;
  };

  struct LNCache {
    Vec xhat;     // T x d
    Vec inv_std;  // T
  };

  struct LayerCache {
    Vec a;         // ln1 output, T x d
    LNCache ln1;
    Vec q, k, v;   // T x d
    Vec att;       // n_heads x T x T softmax rows (j <= i)
    Vec attn_cat;  // T x d, heads concatenated
    Vec b;         // ln2 output, T x d
    LNCache ln2;
    Vec f1_pre;    // T x ff, before the activation
    Vec f1;        // T x ff, after GELU
    std::vector<std::uint8_t> drop1, drop2;  // kept-element masks when training
  };

  struct Cache {
    int T = 0;
    std::vector<SuperToken> inputs;
    std::vector<std::uint8_t> cond;
    Vec e;               // T x concat
    std::vector<Vec> x;  // x[l] = input of layer l; x[n_layers] = final pre-norm state
    std::vector<LayerCache> layer;
    LNCache lnf;
    Vec h;  // T x d
    Vec z;  // T x (d + family width)
    std::array<Vec, kFieldCount> logits;
    bool training = false;
  };

  ModelConfig cfg_;
  std::array<Tensor<Real>, kFieldCount> emb_;
  Tensor<Real> in_w_, in_b_;
  std::vector<LayerParams> layers_;
  Tensor<Real> lnf_g_, lnf_b_;
  Tensor<Real> fam_w_, fam_b_;
  std::array<Tensor<Real>, kFieldCount> head_w_, head_b_;  // [0] unused
  std::vector<Tensor<Real>*> params_;
  Vec pe_;  // context x d positional table

  static constexpr double kLnEps = 1e-5;
  static constexpr double kInitStd = 0.02;

  void add_param(Tensor<Real>& t, const std::string& name, int rows, int cols) {
    t.name = name;
    t.rows = rows;
    t.cols = cols;
    t.w.assign(std::size_t(rows) * cols, Real(0));
    t.g.assign(std::size_t(rows) * cols, Real(0));
    params_.push_back(&t);
  }

  void build() {
    int d = cfg_.d_model;
    for (int f = 0; f < kFieldCount; ++f)
      add_param(emb_[f], "emb." + std::string(kFieldNames[f]), vocab::kHeadSizes[f],
                cfg_.emb_widths[f]);
    add_param(in_w_, "in_proj.w", cfg_.embed_concat_width(), d);
    add_param(in_b_, "in_proj.b", 1, d);
    layers_.resize(cfg_.n_layers);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      LayerParams& L = layers_[l];
      add_param(L.ln1_g, p + "ln1.g", 1, d);
      add_param(L.ln1_b, p + "ln1.b", 1, d);
      add_param(L.wq, p + "attn.wq", d, d);
      add_param(L.bq, p + "attn.bq", 1, d);
      add_param(L.wk, p + "attn.wk", d, d);
      add_param(L.bk, p + "attn.bk", 1, d);
      add_param(L.wv, p + "attn.wv", d, d);
      add_param(L.bv, p + "attn.bv", 1, d);
      add_param(L.wo, p + "attn.wo", d, d);
      add_param(L.bo, p + "attn.bo", 1, d);
      add_param(L.ln2_g, p + "ln2.g", 1, d);
      add_param(L.ln2_b, p + "ln2.b", 1, d);
      add_param(L.w1, p + "ffn.w1", d, cfg_.d_ff);
      add_param(L.b1, p + "ffn.b1", 1, cfg_.d_ff);
      add_param(L.w2, p + "ffn.w2", cfg_.d_ff, d);
      add_param(L.b2, p + "ffn.b2", 1, d);
    }
    add_param(lnf_g_, "ln_out.g", 1, d);
    add_param(lnf_b_, "ln_out.b", 1, d);
    add_param(fam_w_, "head.family.w", d, vocab::kHeadSizes[0]);
    add_param(fam_b_, "head.family.b", 1, vocab::kHeadSizes[0]);
    int zw = d + cfg_.emb_widths[0];
    for (int f = 1; f < kFieldCount; ++f) {
      std::string n = "head." + std::string(kFieldNames[f]);
      add_param(head_w_[f], n + ".w", zw, vocab::kHeadSizes[f]);
      add_param(head_b_[f], n + ".b", 1, vocab::kHeadSizes[f]);
    }

    pe_.assign(std::size_t(cfg_.context) * d, Real(0));
    for (int i = 0; i < cfg_.context; ++i) {
      for (int j = 0; j < d; j += 2) {
        double angle = double(i) * std::exp(-std::log(10000.0) * double(j) / double(d));
        pe_[std::size_t(i) * d + j] = Real(std::sin(angle));
        if (j + 1 < d) pe_[std::size_t(i) * d + j + 1] = Real(std::cos(angle));
      }
    }
  }

  void init_weights() {
    std::mt19937_64 g(cfg_.seed);
    for (Tensor<Real>* t : params_) {
      bool is_ln_gain = t->name.ends_with("ln1.g") || t->name.ends_with("ln2.g") ||
                        t->name.ends_with("ln_out.g");
      bool is_bias = t->rows == 1 && !is_ln_gain;
      for (Real& v : t->w) {
        if (is_ln_gain) {
          v = Real(1);
        } else if (is_bias) {
          v = Real(0);
        } else {
          v = Real(kInitStd * model_detail::normal01(g));
        }
      }
    }
  }

  void check_token(const SuperToken& t) const {
    for (int f = 0; f < kFieldCount; ++f) {
      if (t.get(Field(f)) >= vocab::kHeadSizes[f])
        raise(Errc::out_of_range, std::string(kFieldNames[f]) + " code " +
                                      std::to_string(t.get(Field(f))) + " out of range");
    }
  }

  // y[out] = x[in] . w + b, single row
  void linear_row(const Real* x, const Tensor<Real>& w, const Tensor<Real>& b, Real* y) const {
    for (int o = 0; o < w.cols; ++o) y[o] = b.w[o];
    for (int i = 0; i < w.rows; ++i) {
      Real xi = x[i];
      const Real* wr = w.row(i);
      for (int o = 0; o < w.cols; ++o) y[o] += xi * wr[o];
    }
  }

  // y[T x out] = x[T x in] . w + b
  void linear(const Vec& x, int T, const Tensor<Real>& w, const Tensor<Real>& b, Vec& y) const {
    y.resize(std::size_t(T) * w.cols);
    for (int t = 0; t < T; ++t)
      linear_row(x.data() + std::size_t(t) * w.rows, w, b, y.data() + std::size_t(t) * w.cols);
  }

  // Accumulates dw, db and (optionally) dx for y = x . w + b.
  void linear_backward(const Vec& x, int T, Tensor<Real>& w, Tensor<Real>& b, const Vec& dy,
                       Vec* dx) {
    int in = w.rows, out = w.cols;
    for (int t = 0; t < T; ++t) {
      const Real* xr = x.data() + std::size_t(t) * in;
      const Real* dyr = dy.data() + std::size_t(t) * out;
      for (int i = 0; i < in; ++i) {
        Real xi = xr[i];
        Real* gw = w.grad_row(i);
        for (int o = 0; o < out; ++o) gw[o] += xi * dyr[o];
      }
      for (int o = 0; o < out; ++o) b.g[o] += dyr[o];
      if (dx) {
        Real* dxr = dx->data() + std::size_t(t) * in;
        for (int i = 0; i < in; ++i) {
          const Real* wr = w.row(i);
          Real acc = 0;
          for (int o = 0; o < out; ++o) acc += dyr[o] * wr[o];
          dxr[i] += acc;
        }
      }
    }
  }

  // Per-row layer norm; optionally records xhat and 1/std for backward.
  void layer_norm_row(const Real* x, const Tensor<Real>& gain, const Tensor<Real>& bias, Real* y,
                      Real* xhat_out, Real* inv_std_out) const {
    int d = gain.cols;
    double mean = 0;
    for (int j = 0; j < d; ++j) mean += double(x[j]);
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) {
      double c = double(x[j]) - mean;
      var += c * c;
    }
    var /= d;
    Real inv_std = Real(1.0 / std::sqrt(var + kLnEps));
    for (int j = 0; j < d; ++j) {
      Real xh = Real((double(x[j]) - mean)) * inv_std;
      if (xhat_out) xhat_out[j] = xh;
      y[j] = gain.w[j] * xh + bias.w[j];
    }
    if (inv_std_out) *inv_std_out = inv_std;
  }

  void layer_norm(const Vec& x, int T, const Tensor<Real>& gain, const Tensor<Real>& bias,
                  Vec& y, LNCache& cache) const {
    int d = gain.cols;
    y.resize(std::size_t(T) * d);
    cache.xhat.resize(std::size_t(T) * d);
    cache.inv_std.resize(T);
    for (int t = 0; t < T; ++t)
      layer_norm_row(x.data() + std::size_t(t) * d, gain, bias, y.data() + std::size_t(t) * d,
                     cache.xhat.data() + std::size_t(t) * d, &cache.inv_std[t]);
  }

  // Accumulates dgain/dbias and adds the input gradient into dx.
  void layer_norm_backward(const LNCache& cache, int T, Tensor<Real>& gain, Tensor<Real>& bias,
                           const Vec& dy, Vec& dx) {
    int d = gain.cols;
    for (int t = 0; t < T; ++t) {
      const Real* xh = cache.xhat.data() + std::size_t(t) * d;
      const Real* dyr = dy.data() + std::size_t(t) * d;
      Real* dxr = dx.data() + std::size_t(t) * d;
      double mean_dxhat = 0, mean_dxhat_xhat = 0;
      for (int j = 0; j < d; ++j) {
        double dxh = double(dyr[j]) * double(gain.w[j]);
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * double(xh[j]);
        gain.g[j] += dyr[j] * xh[j];
        bias.g[j] += dyr[j];
      }
      mean_dxhat /= d;
      mean_dxhat_xhat /= d;
      double inv_std = double(cache.inv_std[t]);
      for (int j = 0; j < d; ++j) {
        double dxh = double(dyr[j]) * double(gain.w[j]);
        dxr[j] += Real(inv_std * (dxh - mean_dxhat - double(xh[j]) * mean_dxhat_xhat));
      }
    }
  }

  void apply_dropout(Vec& x, std::vector<std::uint8_t>& mask, std::mt19937_64& rng) const {
    double p = cfg_.dropout;
    Real scale = Real(1.0 / (1.0 - p));
    mask.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      bool keep = model_detail::uniform01(rng) >= p;
      mask[i] = keep;
      x[i] = keep ? x[i] * scale : Real(0);
    }
  }

  void dropout_backward(const std::vector<std::uint8_t>& mask, const Vec& dy, Vec& dx) const {
    Real scale = Real(1.0 / (1.0 - cfg_.dropout));
    dx.resize(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = mask[i] ? dy[i] * scale : Real(0);
  }

  void run_forward(std::span<const SuperToken> inputs, std::span<const std::uint8_t> cond,
                   bool training, std::mt19937_64* dropout_rng, Cache& c) const {
    int T = int(inputs.size());
    if (T < 1) raise(Errc::malformed_sequence, "empty input");
    if (T > cfg_.context)
      raise(Errc::sequence_too_long,
            std::to_string(T) + " tokens exceeds context " + std::to_string(cfg_.context));
    if (cond.size() != inputs.size())
      raise(Errc::out_of_range, "conditioning family count mismatch");
    int d = cfg_.d_model;
    int nh = cfg_.n_heads;
    int dh = d / nh;
    int cw = cfg_.embed_concat_width();
    Real att_scale = Real(1.0 / std::sqrt(double(dh)));
    bool drop = training && cfg_.dropout > 0.0;

    c.T = T;
    c.inputs.assign(inputs.begin(), inputs.end());
    c.cond.assign(cond.begin(), cond.end());
    c.training = drop;

    // embeddings: concat then project, plus positional term
    c.e.assign(std::size_t(T) * cw, Real(0));
    for (int t = 0; t < T; ++t) {
      check_token(inputs[t]);
      if (cond[t] >= vocab::kFamilies) raise(Errc::out_of_range, "conditioning family code");
      Real* er = c.e.data() + std::size_t(t) * cw;
      int offset = 0;
      for (int f = 0; f < kFieldCount; ++f) {
        const Real* row = emb_[f].row(inputs[t].get(Field(f)));
        for (int i = 0; i < cfg_.emb_widths[f]; ++i) er[offset + i] = row[i];
        offset += cfg_.emb_widths[f];
      }
    }
    c.x.assign(cfg_.n_layers + 1, Vec());
    linear(c.e, T, in_w_, in_b_, c.x[0]);
    for (int t = 0; t < T; ++t) {
      Real* xr = c.x[0].data() + std::size_t(t) * d;
      const Real* pe = pe_.data() + std::size_t(t) * d;
      for (int j = 0; j < d; ++j) xr[j] += pe[j];
    }

    c.layer.assign(cfg_.n_layers, LayerCache());
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const LayerParams& L = layers_[l];
      LayerCache& lc = c.layer[l];
      const Vec& x_in = c.x[l];

      layer_norm(x_in, T, L.ln1_g, L.ln1_b, lc.a, lc.ln1);
      linear(lc.a, T, L.wq, L.bq, lc.q);
      linear(lc.a, T, L.wk, L.bk, lc.k);
      linear(lc.a, T, L.wv, L.bv, lc.v);

      lc.att.assign(std::size_t(nh) * T * T, Real(0));
      lc.attn_cat.assign(std::size_t(T) * d, Real(0));
      for (int h = 0; h < nh; ++h) {
        for (int i = 0; i < T; ++i) {
          Real* prow = lc.att.data() + (std::size_t(h) * T + i) * T;
          const Real* qh = lc.q.data() + std::size_t(i) * d + h * dh;
          double maxs = -1e30;
          for (int j = 0; j <= i; ++j) {
            const Real* kh = lc.k.data() + std::size_t(j) * d + h * dh;
            double s = 0;
            for (int m = 0; m < dh; ++m) s += double(qh[m]) * double(kh[m]);
            s *= double(att_scale);
            prow[j] = Real(s);
            if (s > maxs) maxs = s;
          }
          double z = 0;
          for (int j = 0; j <= i; ++j) {
            double e = std::exp(double(prow[j]) - maxs);
            prow[j] = Real(e);
            z += e;
          }
          Real* orow = lc.attn_cat.data() + std::size_t(i) * d + h * dh;
          for (int j = 0; j <= i; ++j) {
            Real pj = Real(double(prow[j]) / z);
            prow[j] = pj;
            const Real* vh = lc.v.data() + std::size_t(j) * d + h * dh;
            for (int m = 0; m < dh; ++m) orow[m] += pj * vh[m];
          }
        }
      }

      Vec attn_out;
      linear(lc.attn_cat, T, L.wo, L.bo, attn_out);
      if (drop) apply_dropout(attn_out, lc.drop1, *dropout_rng);
      Vec x_mid = x_in;
      for (std::size_t i = 0; i < x_mid.size(); ++i) x_mid[i] += attn_out[i];

      layer_norm(x_mid, T, L.ln2_g, L.ln2_b, lc.b, lc.ln2);
      linear(lc.b, T, L.w1, L.b1, lc.f1_pre);
      lc.f1.resize(lc.f1_pre.size());
      for (std::size_t i = 0; i < lc.f1_pre.size(); ++i)
        lc.f1[i] = Real(model_detail::gelu(double(lc.f1_pre[i])));
      Vec f2;
      linear(lc.f1, T, L.w2, L.b2, f2);
      if (drop) apply_dropout(f2, lc.drop2, *dropout_rng);

      c.x[l + 1] = std::move(x_mid);
      for (std::size_t i = 0; i < f2.size(); ++i) c.x[l + 1][i] += f2[i];
    }

    layer_norm(c.x[cfg_.n_layers], T, lnf_g_, lnf_b_, c.h, c.lnf);

    // two-stage heads
    linear(c.h, T, fam_w_, fam_b_, c.logits[0]);
    int fw = cfg_.emb_widths[0];
    int zw = d + fw;
    c.z.resize(std::size_t(T) * zw);
    for (int t = 0; t < T; ++t) {
      Real* zr = c.z.data() + std::size_t(t) * zw;
      const Real* hr = c.h.data() + std::size_t(t) * d;
      for (int j = 0; j < d; ++j) zr[j] = hr[j];
      const Real* fe = emb_[0].row(cond[t]);
      for (int j = 0; j < fw; ++j) zr[d + j] = fe[j];
    }
    for (int f = 1; f < kFieldCount; ++f) linear(c.z, T, head_w_[f], head_b_[f], c.logits[f]);
  }

  /// Cross-entropy over cached logits; fills dlogits (pre-scaled by 1/T)
  /// when requested.
  LossBreakdown loss_common(std::span<const SuperToken> inputs,
                            std::span<const SuperToken> targets, bool training,
                            std::mt19937_64* dropout_rng, Cache& c,
                            std::array<Vec, kFieldCount>* dlogits) const {
    if (targets.size() != inputs.size())
      raise(Errc::out_of_range, "targets must match inputs length");
    std::vector<std::uint8_t> cond(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) cond[i] = targets[i].family;
    run_forward(inputs, cond, training, dropout_rng, c);

    int T = c.T;
    LossBreakdown lb;
    lb.steps = T;
    if (dlogits) {
      for (int f = 0; f < kFieldCount; ++f)
        (*dlogits)[f].assign(c.logits[f].size(), Real(0));
    }
    double inv_T = 1.0 / T;
    for (int t = 0; t < T; ++t) {
      for (int f = 0; f < kFieldCount; ++f) {
        int target = targets[t].get(Field(f));
        if (f != 0 && target == kIgnore) continue;  // masked filler target
        int S = vocab::kHeadSizes[f];
        const Real* lr = c.logits[f].data() + std::size_t(t) * S;
        double maxl = -1e30;
        for (int s = 0; s < S; ++s) maxl = std::max(maxl, double(lr[s]));
        double z = 0;
        for (int s = 0; s < S; ++s) z += std::exp(double(lr[s]) - maxl);
        double ce = maxl + std::log(z) - double(lr[target]);
        lb.total += ce * inv_T;
        lb.field_sum[f] += ce;
        lb.field_count[f] += 1;
        if (dlogits) {
          Real* dl = (*dlogits)[f].data() + std::size_t(t) * S;
          for (int s = 0; s < S; ++s) {
            double p = std::exp(double(lr[s]) - maxl) / z;
            dl[s] = Real((p - (s == target ? 1.0 : 0.0)) * inv_T);
          }
        }
      }
    }
    return lb;
  }

  void backward(Cache& c, const std::array<Vec, kFieldCount>& dlogits) {
    int T = c.T;
    int d = cfg_.d_model;
    int nh = cfg_.n_heads;
    int dh = d / nh;
    int fw = cfg_.emb_widths[0];
    int zw = d + fw;
    Real att_scale = Real(1.0 / std::sqrt(double(dh)));

    Vec dh_vec(std::size_t(T) * d, Real(0));
    Vec dz(std::size_t(T) * zw, Real(0));
    linear_backward(c.h, T, fam_w_, fam_b_, dlogits[0], &dh_vec);
    for (int f = 1; f < kFieldCount; ++f)
      linear_backward(c.z, T, head_w_[f], head_b_[f], dlogits[f], &dz);
    for (int t = 0; t < T; ++t) {
      const Real* dzr = dz.data() + std::size_t(t) * zw;
      Real* dhr = dh_vec.data() + std::size_t(t) * d;
      for (int j = 0; j < d; ++j) dhr[j] += dzr[j];
      Real* ge = emb_[0].grad_row(c.cond[t]);
      for (int j = 0; j < fw; ++j) ge[j] += dzr[d + j];
    }

    Vec dx(std::size_t(T) * d, Real(0));
    layer_norm_backward(c.lnf, T, lnf_g_, lnf_b_, dh_vec, dx);

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
      LayerParams& L = layers_[l];
      LayerCache& lc = c.layer[l];

      // ffn block: x_out = x_mid + dropout(f2)
      Vec df2;
      if (c.training) {
        dropout_backward(lc.drop2, dx, df2);
      } else {
        df2 = dx;
      }
      Vec df1(std::size_t(T) * cfg_.d_ff, Real(0));
      linear_backward(lc.f1, T, L.w2, L.b2, df2, &df1);
      for (std::size_t i = 0; i < df1.size(); ++i)
        df1[i] = Real(double(df1[i]) * model_detail::gelu_grad(double(lc.f1_pre[i])));
      Vec db(std::size_t(T) * d, Real(0));
      linear_backward(lc.b, T, L.w1, L.b1, df1, &db);
      layer_norm_backward(lc.ln2, T, L.ln2_g, L.ln2_b, db, dx);  // adds into dx (skip path)

      // attention block: x_mid = x_in + dropout(attn_out)
      Vec dattn;
      if (c.training) {
        dropout_backward(lc.drop1, dx, dattn);
      } else {
        dattn = dx;
      }
      Vec dcat(std::size_t(T) * d, Real(0));
      linear_backward(lc.attn_cat, T, L.wo, L.bo, dattn, &dcat);

      Vec dq(std::size_t(T) * d, Real(0));
      Vec dk(std::size_t(T) * d, Real(0));
      Vec dv(std::size_t(T) * d, Real(0));
      std::vector<double> dp(T);
      for (int h = 0; h < nh; ++h) {
        for (int i = 0; i < T; ++i) {
          const Real* prow = lc.att.data() + (std::size_t(h) * T + i) * T;
          const Real* dor = dcat.data() + std::size_t(i) * d + h * dh;
          double sum_pdp = 0;
          for (int j = 0; j <= i; ++j) {
            const Real* vh = lc.v.data() + std::size_t(j) * d + h * dh;
            double acc = 0;
            for (int m = 0; m < dh; ++m) acc += double(dor[m]) * double(vh[m]);
            dp[j] = acc;
            sum_pdp += double(prow[j]) * acc;
            Real* dvh = dv.data() + std::size_t(j) * d + h * dh;
            for (int m = 0; m < dh; ++m) dvh[m] += prow[j] * dor[m];
          }
          const Real* qh = lc.q.data() + std::size_t(i) * d + h * dh;
          Real* dqh = dq.data() + std::size_t(i) * d + h * dh;
          for (int j = 0; j <= i; ++j) {
            Real ds = Real(double(prow[j]) * (dp[j] - sum_pdp)) * att_scale;
            const Real* kh = lc.k.data() + std::size_t(j) * d + h * dh;
            Real* dkh = dk.data() + std::size_t(j) * d + h * dh;
            for (int m = 0; m < dh; ++m) {
              dqh[m] += ds * kh[m];
              dkh[m] += ds * qh[m];
            }
          }
        }
      }

      Vec da(std::size_t(T) * d, Real(0));
      linear_backward(lc.a, T, L.wq, L.bq, dq, &da);
      linear_backward(lc.a, T, L.wk, L.bk, dk, &da);
      linear_backward(lc.a, T, L.wv, L.bv, dv, &da);
      layer_norm_backward(lc.ln1, T, L.ln1_g, L.ln1_b, da, dx);  // adds skip-path grad
    }

    // input projection and embeddings
    Vec de(std::size_t(T) * cfg_.embed_concat_width(), Real(0));
    linear_backward(c.e, T, in_w_, in_b_, dx, &de);
    for (int t = 0; t < T; ++t) {
      const Real* der = de.data() + std::size_t(t) * cfg_.embed_concat_width();
      int offset = 0;
      for (int f = 0; f < kFieldCount; ++f) {
        Real* ge = emb_[f].grad_row(c.inputs[t].get(Field(f)));
        for (int i = 0; i < cfg_.emb_widths[f]; ++i) ge[i] += der[offset + i];
        offset += cfg_.emb_widths[f];
      }
    }
  }
};

}  // namespace pedalcw
