#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "laughflow/rng.hpp"
#include "laughflow/types.hpp"

namespace laughflow::nn {

// ---------------------------------------------------------------------------
// parameter plumbing

// Flat, named view into one parameter tensor. Collected in a fixed order so
// the optimizer, checkpoints and gradient checks all agree on indexing.
template <class S>
struct ParamView {
  std::string name;
  S* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  Eigen::Map<Mat<S>> map() const { return Eigen::Map<Mat<S>>(data, rows, cols); }
};

template <class S>
void add_view(std::vector<ParamView<S>>& out, const std::string& name, Mat<S>& m) {
  out.push_back({name, m.data(), m.rows(), m.cols()});
}

template <class S>
void add_view(std::vector<ParamView<S>>& out, const std::string& name, Vec<S>& v) {
  out.push_back({name, v.data(), v.rows(), 1});
}

// ---------------------------------------------------------------------------
// activations

template <class S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + S(std::erf(double(x) * M_SQRT1_2)));
}

template <class S>
S gelu_grad(S x) {
  const double xd = double(x);
  const double cdf = 0.5 * (1.0 + std::erf(xd * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
  return S(cdf + xd * pdf);
}

// ---------------------------------------------------------------------------
// dropout

// Non-null rng means training mode; masks use inverted scaling so eval-mode
// forward needs no rescale.
struct DropoutCtx {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

template <class S>
Mat<S> dropout_mask(Index rows, Index cols, const DropoutCtx& drop) {
  Mat<S> m(rows, cols);
  const S scale = S(1.0 / (1.0 - drop.rate));
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      m(i, j) = drop.rng->uniform() < drop.rate ? S(0) : scale;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// linear

template <class S>
struct LinearParams {
  Mat<S> w;  // out x in
  Vec<S> b;  // out
};

template <class S>
void init_linear(LinearParams<S>& p, Index out, Index in, Rng& rng) {
  p.w.resize(out, in);
  p.b = Vec<S>::Zero(out);
  const double stddev = std::sqrt(2.0 / double(in + out));
  for (Index j = 0; j < in; ++j) {
    for (Index i = 0; i < out; ++i) p.w(i, j) = S(rng.normal(0.0, stddev));
  }
}

template <class S>
Mat<S> linear_forward(const LinearParams<S>& p, const Mat<S>& x) {
  Mat<S> y = p.w * x;
  y.colwise() += p.b;
  return y;
}

// Returns dx; accumulates into grad.
template <class S>
Mat<S> linear_backward(const LinearParams<S>& p, const Mat<S>& x, const Mat<S>& dy,
                       LinearParams<S>& grad) {
  grad.w.noalias() += dy * x.transpose();
  grad.b.noalias() += dy.rowwise().sum();
  return p.w.transpose() * dy;
}

template <class S>
void collect_params(std::vector<ParamView<S>>& out, const std::string& prefix,
                    LinearParams<S>& p) {
  add_view(out, prefix + ".w", p.w);
  add_view(out, prefix + ".b", p.b);
}

// ---------------------------------------------------------------------------
// layer norm (over the feature dimension, i.e. per column)

template <class S>
struct LayerNormParams {
  Vec<S> gamma;
  Vec<S> beta;
};

template <class S>
struct LayerNormCache {
  Mat<S> xhat;
  RowVec<S> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <class S>
void init_layer_norm(LayerNormParams<S>& p, Index dim) {
  p.gamma = Vec<S>::Ones(dim);
  p.beta = Vec<S>::Zero(dim);
}

template <class S>
Mat<S> layer_norm_forward(const LayerNormParams<S>& p, const Mat<S>& x,
                          LayerNormCache<S>& cache) {
  const Index d = x.rows();
  RowVec<S> mu = x.colwise().mean();
  cache.xhat = x.rowwise() - mu;
  RowVec<S> var = cache.xhat.array().square().colwise().mean();
  cache.inv_std = (var.array() + S(kLayerNormEps)).rsqrt();
  cache.xhat = cache.xhat.array().rowwise() * cache.inv_std.array();
  Mat<S> y = cache.xhat.array().colwise() * p.gamma.array();
  y.colwise() += p.beta;
  (void)d;
  return y;
}

template <class S>
Mat<S> layer_norm_backward(const LayerNormParams<S>& p, const LayerNormCache<S>& cache,
                           const Mat<S>& dy, LayerNormParams<S>& grad) {
  grad.gamma.noalias() += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  grad.beta.noalias() += dy.rowwise().sum();
  Mat<S> dxhat = dy.array().colwise() * p.gamma.array();
  RowVec<S> m1 = dxhat.colwise().mean();
  RowVec<S> m2 = (dxhat.array() * cache.xhat.array()).colwise().mean();
  Mat<S> dx = dxhat;
  dx.rowwise() -= m1;
  dx -= (cache.xhat.array().rowwise() * m2.array()).matrix();
  dx = dx.array().rowwise() * cache.inv_std.array();
  return dx;
}

template <class S>
void collect_params(std::vector<ParamView<S>>& out, const std::string& prefix,
                    LayerNormParams<S>& p) {
  add_view(out, prefix + ".gamma", p.gamma);
  add_view(out, prefix + ".beta", p.beta);
}

// ---------------------------------------------------------------------------
// multi-head self-attention (bidirectional, no masking)

template <class S>
struct AttentionParams {
  LinearParams<S> wq, wk, wv, wo;
};

template <class S>
struct AttentionCache {
  Mat<S> x;                   // block input, E x T
  Mat<S> q, k, v;             // E x T
  std::vector<Mat<S>> prob;   // per head, T x T, rows sum to 1
  Mat<S> concat;              // E x T, head outputs before wo
};

template <class S>
void init_attention(AttentionParams<S>& p, Index embed, Rng& rng) {
  init_linear(p.wq, embed, embed, rng);
  init_linear(p.wk, embed, embed, rng);
  init_linear(p.wv, embed, embed, rng);
  init_linear(p.wo, embed, embed, rng);
}

template <class S>
Mat<S> attention_forward(const AttentionParams<S>& p, int heads, const Mat<S>& x,
                         AttentionCache<S>& cache) {
  const Index embed = x.rows();
  const Index t = x.cols();
  if (heads < 1 || embed % heads != 0) {
    throw std::invalid_argument("attention: head count must divide embed dim");
  }
  const Index dk = embed / heads;
  cache.x = x;
  cache.q = linear_forward(p.wq, x);
  cache.k = linear_forward(p.wk, x);
  cache.v = linear_forward(p.wv, x);
  cache.prob.assign(size_t(heads), Mat<S>());
  cache.concat.resize(embed, t);
  const S scale = S(1.0 / std::sqrt(double(dk)));
  for (int h = 0; h < heads; ++h) {
    auto qh = cache.q.middleRows(h * dk, dk);
    auto kh = cache.k.middleRows(h * dk, dk);
    auto vh = cache.v.middleRows(h * dk, dk);
    Mat<S> s = (qh.transpose() * kh) * scale;  // T x T, row i = query i
    for (Index i = 0; i < t; ++i) {
      const S m = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - m).exp();
      s.row(i) /= s.row(i).sum();
    }
    cache.prob[size_t(h)] = std::move(s);
    cache.concat.middleRows(h * dk, dk).noalias() =
        vh * cache.prob[size_t(h)].transpose();
  }
  return linear_forward(p.wo, cache.concat);
}

template <class S>
Mat<S> attention_backward(const AttentionParams<S>& p, int heads,
                          const AttentionCache<S>& cache, const Mat<S>& dy,
                          AttentionParams<S>& grad) {
  const Index embed = cache.x.rows();
  const Index dk = embed / heads;
  Mat<S> dconcat = linear_backward(p.wo, cache.concat, dy, grad.wo);
  Mat<S> dq(embed, cache.x.cols()), dkm(embed, cache.x.cols()), dv(embed, cache.x.cols());
  const S scale = S(1.0 / std::sqrt(double(dk)));
  for (int h = 0; h < heads; ++h) {
    auto qh = cache.q.middleRows(h * dk, dk);
    auto kh = cache.k.middleRows(h * dk, dk);
    auto vh = cache.v.middleRows(h * dk, dk);
    const Mat<S>& prob = cache.prob[size_t(h)];
    auto doh = dconcat.middleRows(h * dk, dk);
    dv.middleRows(h * dk, dk).noalias() = doh * prob;
    Mat<S> dprob = doh.transpose() * vh;  // T x T
    // softmax jacobian per row: ds = (dp - <dp, p>) .* p
    Mat<S> ds(prob.rows(), prob.cols());
    for (Index i = 0; i < prob.rows(); ++i) {
      const S dot = dprob.row(i).dot(prob.row(i));
      ds.row(i) = (dprob.row(i).array() - dot) * prob.row(i).array();
    }
    ds *= scale;
    dq.middleRows(h * dk, dk).noalias() = kh * ds.transpose();
    dkm.middleRows(h * dk, dk).noalias() = qh * ds;
  }
  Mat<S> dx = linear_backward(p.wq, cache.x, dq, grad.wq);
  dx += linear_backward(p.wk, cache.x, dkm, grad.wk);
  dx += linear_backward(p.wv, cache.x, dv, grad.wv);
  return dx;
}

template <class S>
void collect_params(std::vector<ParamView<S>>& out, const std::string& prefix,
                    AttentionParams<S>& p) {
  collect_params(out, prefix + ".wq", p.wq);
  collect_params(out, prefix + ".wk", p.wk);
  collect_params(out, prefix + ".wv", p.wv);
  collect_params(out, prefix + ".wo", p.wo);
}

// ---------------------------------------------------------------------------
// position-wise feed-forward with exact gelu

template <class S>
struct FeedForwardParams {
  LinearParams<S> w1, w2;
};

template <class S>
struct FeedForwardCache {
  Mat<S> x;    // input
  Mat<S> pre;  // w1 x + b1
  Mat<S> act;  // gelu(pre)
};

template <class S>
void init_feed_forward(FeedForwardParams<S>& p, Index embed, Index hidden, Rng& rng) {
  init_linear(p.w1, hidden, embed, rng);
  init_linear(p.w2, embed, hidden, rng);
}

template <class S>
Mat<S> feed_forward_forward(const FeedForwardParams<S>& p, const Mat<S>& x,
                            FeedForwardCache<S>& cache) {
  cache.x = x;
  cache.pre = linear_forward(p.w1, x);
  cache.act = cache.pre.unaryExpr([](S v) { return gelu(v); });
  return linear_forward(p.w2, cache.act);
}

template <class S>
Mat<S> feed_forward_backward(const FeedForwardParams<S>& p, const FeedForwardCache<S>& cache,
                             const Mat<S>& dy, FeedForwardParams<S>& grad) {
  Mat<S> dact = linear_backward(p.w2, cache.act, dy, grad.w2);
  Mat<S> dpre = dact.array() * cache.pre.unaryExpr([](S v) { return gelu_grad(v); }).array();
  return linear_backward(p.w1, cache.x, dpre, grad.w1);
}

template <class S>
void collect_params(std::vector<ParamView<S>>& out, const std::string& prefix,
                    FeedForwardParams<S>& p) {
  collect_params(out, prefix + ".w1", p.w1);
  collect_params(out, prefix + ".w2", p.w2);
}

// ---------------------------------------------------------------------------
// pre-norm transformer layer

template <class S>
struct TransformerLayerParams {
  LayerNormParams<S> ln1;
  AttentionParams<S> attn;
  LayerNormParams<S> ln2;
  FeedForwardParams<S> ff;
};

template <class S>
struct TransformerLayerCache {
  LayerNormCache<S> ln1;
  AttentionCache<S> attn;
  Mat<S> drop1;  // empty unless training
  LayerNormCache<S> ln2;
  FeedForwardCache<S> ff;
  Mat<S> drop2;
};

template <class S>
void init_transformer_layer(TransformerLayerParams<S>& p, Index embed, Index hidden,
                            Rng& rng) {
  init_layer_norm(p.ln1, embed);
  init_attention(p.attn, embed, rng);
  init_layer_norm(p.ln2, embed);
  init_feed_forward(p.ff, embed, hidden, rng);
}

template <class S>
Mat<S> transformer_layer_forward(const TransformerLayerParams<S>& p, int heads,
                                 const Mat<S>& x, TransformerLayerCache<S>& cache,
                                 const DropoutCtx& drop) {
  Mat<S> a = attention_forward(p.attn, heads, layer_norm_forward(p.ln1, x, cache.ln1),
                               cache.attn);
  if (drop.active()) {
    cache.drop1 = dropout_mask<S>(a.rows(), a.cols(), drop);
    a.array() *= cache.drop1.array();
  }
  Mat<S> x1 = x + a;
  Mat<S> f = feed_forward_forward(p.ff, layer_norm_forward(p.ln2, x1, cache.ln2), cache.ff);
  if (drop.active()) {
    cache.drop2 = dropout_mask<S>(f.rows(), f.cols(), drop);
    f.array() *= cache.drop2.array();
  }
  return x1 + f;
}

template <class S>
Mat<S> transformer_layer_backward(const TransformerLayerParams<S>& p, int heads,
                                  const TransformerLayerCache<S>& cache, const Mat<S>& dout,
                                  TransformerLayerParams<S>& grad) {
  Mat<S> df = dout;
  if (cache.drop2.size() > 0) df.array() *= cache.drop2.array();
  Mat<S> dx1 = dout + layer_norm_backward(
                          p.ln2, cache.ln2,
                          feed_forward_backward(p.ff, cache.ff, df, grad.ff), grad.ln2);
  Mat<S> da = dx1;
  if (cache.drop1.size() > 0) da.array() *= cache.drop1.array();
  return dx1 + layer_norm_backward(
                   p.ln1, cache.ln1,
                   attention_backward(p.attn, heads, cache.attn, da, grad.attn), grad.ln1);
}

template <class S>
void collect_params(std::vector<ParamView<S>>& out, const std::string& prefix,
                    TransformerLayerParams<S>& p) {
  collect_params(out, prefix + ".ln1", p.ln1);
  collect_params(out, prefix + ".attn", p.attn);
  collect_params(out, prefix + ".ln2", p.ln2);
  collect_params(out, prefix + ".ff", p.ff);
}

// ---------------------------------------------------------------------------
// transformer stack, optionally with u-net style concat skips: the output of
// layer i is concatenated onto the input of layer L-1-i and projected back to
// the embed dim. Requires an even layer count when enabled.

template <class S>
struct TransformerStackParams {
  int heads = 1;
  bool unet = false;
  std::vector<TransformerLayerParams<S>> layers;
  std::vector<LinearParams<S>> skip;  // one per second-half layer, 2E -> E
  LayerNormParams<S> final_ln;
};

template <class S>
struct TransformerStackCache {
  std::vector<TransformerLayerCache<S>> layers;
  std::vector<Mat<S>> skip_in;  // concatenated skip inputs, 2E x T
  LayerNormCache<S> final_ln;
};

template <class S>
void init_transformer_stack(TransformerStackParams<S>& p, int n_layers, int heads,
                            Index embed, Index hidden, bool unet, Rng& rng) {
  if (n_layers < 1) throw std::invalid_argument("stack: need at least one layer");
  if (unet && n_layers % 2 != 0) {
    throw std::invalid_argument("stack: skip connections need an even layer count");
  }
  p.heads = heads;
  p.unet = unet;
  p.layers.resize(size_t(n_layers));
  for (auto& layer : p.layers) init_transformer_layer(layer, embed, hidden, rng);
  p.skip.resize(unet ? size_t(n_layers / 2) : 0);
  for (auto& s : p.skip) init_linear(s, embed, 2 * embed, rng);
  init_layer_norm(p.final_ln, embed);
}

template <class S>
Mat<S> transformer_stack_forward(const TransformerStackParams<S>& p, const Mat<S>& input,
                                 TransformerStackCache<S>& cache, const DropoutCtx& drop) {
  const int n = int(p.layers.size());
  const int half = p.unet ? n / 2 : n;
  const Index embed = input.rows();
  cache.layers.resize(size_t(n));
  cache.skip_in.assign(p.skip.size(), Mat<S>());
  std::vector<Mat<S>> saved(static_cast<size_t>(half));
  Mat<S> x = input;
  for (int j = 0; j < n; ++j) {
    if (p.unet && j >= half) {
      const size_t k = size_t(j - half);
      Mat<S> cat(2 * embed, x.cols());
      cat.topRows(embed) = x;
      cat.bottomRows(embed) = saved[size_t(n - 1 - j)];
      x = linear_forward(p.skip[k], cat);
      cache.skip_in[k] = std::move(cat);
    }
    x = transformer_layer_forward(p.layers[size_t(j)], p.heads, x, cache.layers[size_t(j)],
                                  drop);
    if (p.unet && j < half) saved[size_t(j)] = x;
  }
  return layer_norm_forward(p.final_ln, x, cache.final_ln);
}

template <class S>
Mat<S> transformer_stack_backward(const TransformerStackParams<S>& p,
                                  const TransformerStackCache<S>& cache, const Mat<S>& dout,
                                  TransformerStackParams<S>& grad) {
  const int n = int(p.layers.size());
  const int half = p.unet ? n / 2 : n;
  const Index embed = dout.rows();
  Mat<S> d = layer_norm_backward(p.final_ln, cache.final_ln, dout, grad.final_ln);
  std::vector<Mat<S>> pending(static_cast<size_t>(half));
  for (int j = n - 1; j >= 0; --j) {
    if (p.unet && j < half && pending[size_t(j)].size() > 0) d += pending[size_t(j)];
    d = transformer_layer_backward(p.layers[size_t(j)], p.heads, cache.layers[size_t(j)], d,
                                   grad.layers[size_t(j)]);
    if (p.unet && j >= half) {
      const size_t k = size_t(j - half);
      Mat<S> dcat = linear_backward(p.skip[k], cache.skip_in[k], d, grad.skip[k]);
      d = dcat.topRows(embed);
      pending[size_t(n - 1 - j)] = dcat.bottomRows(embed);
    }
  }
  return d;
}

template <class S>
void collect_params(std::vector<ParamView<S>>& out, const std::string& prefix,
                    TransformerStackParams<S>& p) {
  for (size_t i = 0; i < p.layers.size(); ++i) {
    collect_params(out, prefix + ".layer" + std::to_string(i), p.layers[i]);
  }
  for (size_t i = 0; i < p.skip.size(); ++i) {
    collect_params(out, prefix + ".skip" + std::to_string(i), p.skip[i]);
  }
  collect_params(out, prefix + ".final_ln", p.final_ln);
}

// ---------------------------------------------------------------------------
// sinusoidal encodings

// Standard transformer position encoding, one column per position.
template <class S>
Mat<S> position_encoding(Index dim, Index length) {
  Mat<S> pe(dim, length);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -double(i) / double(dim));
      pe(i, pos) = S(std::sin(double(pos) * freq));
      if (i + 1 < dim) pe(i + 1, pos) = S(std::cos(double(pos) * freq));
    }
  }
  return pe;
}

// Same family of sinusoids for the scalar flow time; t in [0,1] is mapped to
// a fractional position so nearby times stay distinguishable.
template <class S>
Vec<S> time_encoding(double t, Index dim) {
  Vec<S> e(dim);
  const double pos = t * 1000.0;
  for (Index i = 0; i < dim; i += 2) {
    const double freq = std::pow(10000.0, -double(i) / double(dim));
    e(i) = S(std::sin(pos * freq));
    if (i + 1 < dim) e(i + 1) = S(std::cos(pos * freq));
  }
  return e;
}

}  // namespace laughflow::nn
