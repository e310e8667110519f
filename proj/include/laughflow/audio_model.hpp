#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "laughflow/nn.hpp"

namespace laughflow::models {

struct AudioModelConfig {
  int feature_dim = 20;
  int phoneme_dim = 16;
  int laugh_dim = 0;  // 0 = unconditioned, 1 = probability, >1 = embedding
  int vocab = 13;
  int layers = 4;
  int heads = 4;
  int embed_dim = 128;
  int ff_dim = 512;
  double dropout = 0.1;
  int max_len = 1024;

  int stacked_dim() const { return 2 * feature_dim + phoneme_dim + laugh_dim; }
};

template <class S>
struct AudioModelParams {
  Mat<S> phoneme_table;       // phoneme_dim x vocab
  nn::LinearParams<S> input;  // feature_dim x stacked_dim
  nn::LinearParams<S> embed;  // embed_dim x feature_dim
  nn::TransformerStackParams<S> stack;
  nn::LinearParams<S> out;    // feature_dim x embed_dim
};

// Vector-field regressor over feature frames. Conditioning (prompt features,
// phoneme alignment, laughter signal) is stacked with the flow state per
// frame; the flow time rides along as one extra token.
template <class S>
struct AudioModel {
  AudioModelConfig cfg;
  AudioModelParams<S> p;
  Mat<S> pe;  // embed_dim x (max_len + 1)
};

template <class S>
AudioModel<S> init_audio_model(const AudioModelConfig& cfg, Rng& rng) {
  if (cfg.feature_dim < 1 || cfg.vocab < 1 || cfg.laugh_dim < 0) {
    throw std::invalid_argument("audio model: bad dimensions");
  }
  AudioModel<S> m;
  m.cfg = cfg;
  m.p.phoneme_table.resize(cfg.phoneme_dim, cfg.vocab);
  for (Index j = 0; j < m.p.phoneme_table.cols(); ++j) {
    for (Index i = 0; i < m.p.phoneme_table.rows(); ++i) {
      m.p.phoneme_table(i, j) = S(rng.normal());
    }
  }
  nn::init_linear(m.p.input, cfg.feature_dim, cfg.stacked_dim(), rng);
  nn::init_linear(m.p.embed, cfg.embed_dim, cfg.feature_dim, rng);
  nn::init_transformer_stack(m.p.stack, cfg.layers, cfg.heads, cfg.embed_dim, cfg.ff_dim,
                             /*unet=*/true, rng);
  nn::init_linear(m.p.out, cfg.feature_dim, cfg.embed_dim, rng);
  m.pe = nn::position_encoding<S>(cfg.embed_dim, cfg.max_len + 1);
  return m;
}

template <class S>
std::vector<nn::ParamView<S>> collect_params(AudioModelParams<S>& p) {
  std::vector<nn::ParamView<S>> out;
  nn::add_view(out, "phoneme_table", p.phoneme_table);
  nn::collect_params(out, "input", p.input);
  nn::collect_params(out, "embed", p.embed);
  nn::collect_params(out, "stack", p.stack);
  nn::collect_params(out, "out", p.out);
  return out;
}

// Per-frame conditioning stack: [masked features; flow state; phoneme
// embedding; laughter]. `drop_cond` zeroes everything except the flow state,
// which is how the unconditioned guidance branch is produced.
template <class S>
Mat<S> assemble_input(const AudioModel<S>& m, const Mat<S>& masked, const Mat<S>& x_t,
                      const std::vector<int>& align, const Mat<S>& laugh, bool drop_cond) {
  const auto& cfg = m.cfg;
  const Index f = cfg.feature_dim;
  const Index t = x_t.cols();
  if (masked.rows() != f || masked.cols() != t || x_t.rows() != f) {
    throw std::invalid_argument("assemble_input: feature blocks must be F x T");
  }
  if (Index(align.size()) != t) {
    throw std::invalid_argument("assemble_input: alignment length must match frames");
  }
  if (laugh.rows() != cfg.laugh_dim || (cfg.laugh_dim > 0 && laugh.cols() != t)) {
    throw std::invalid_argument("assemble_input: laughter block must be laugh_dim x T");
  }
  Mat<S> stacked = Mat<S>::Zero(cfg.stacked_dim(), t);
  stacked.middleRows(f, f) = x_t;
  if (!drop_cond) {
    stacked.topRows(f) = masked;
    for (Index j = 0; j < t; ++j) {
      const int id = align[size_t(j)];
      if (id < 0 || id >= cfg.vocab) {
        throw std::invalid_argument("assemble_input: phoneme id " + std::to_string(id) +
                                    " outside vocab");
      }
      stacked.block(2 * f, j, cfg.phoneme_dim, 1) = m.p.phoneme_table.col(id);
    }
    if (cfg.laugh_dim > 0) stacked.bottomRows(cfg.laugh_dim) = laugh;
  }
  return stacked;
}

template <class S>
struct AudioCache {
  std::vector<int> align;
  bool drop_cond = false;
  Mat<S> stacked;    // stacked_dim x T
  Mat<S> reduced;    // feature_dim x (T+1), with the time token appended
  Mat<S> embedded;   // embed_dim x (T+1), stack input
  nn::TransformerStackCache<S> stack;
  Mat<S> stack_out;  // embed_dim x (T+1)
};

template <class S>
Mat<S> audio_forward(const AudioModel<S>& m, const Mat<S>& masked, const Mat<S>& x_t,
                     const std::vector<int>& align, const Mat<S>& laugh, double t,
                     bool drop_cond, AudioCache<S>& cache, const nn::DropoutCtx& drop) {
  const Index frames = x_t.cols();
  if (frames + 1 > m.pe.cols()) {
    throw std::invalid_argument("audio_forward: sequence longer than position table");
  }
  cache.align = align;
  cache.drop_cond = drop_cond;
  cache.stacked = assemble_input(m, masked, x_t, align, laugh, drop_cond);
  cache.reduced.resize(m.cfg.feature_dim, frames + 1);
  cache.reduced.leftCols(frames) = nn::linear_forward(m.p.input, cache.stacked);
  cache.reduced.col(frames) = nn::time_encoding<S>(t, m.cfg.feature_dim);
  cache.embedded = nn::linear_forward(m.p.embed, cache.reduced);
  cache.embedded += m.pe.leftCols(frames + 1);
  cache.stack_out = nn::transformer_stack_forward(m.p.stack, cache.embedded, cache.stack, drop);
  Mat<S> v = nn::linear_forward(m.p.out, cache.stack_out);
  return v.leftCols(frames);
}

// Accepts the loss gradient w.r.t. the predicted field (feature_dim x T) and
// accumulates parameter gradients.
template <class S>
void audio_backward(const AudioModel<S>& m, const AudioCache<S>& cache, const Mat<S>& dv,
                    AudioModelParams<S>& grad) {
  const Index frames = cache.stacked.cols();
  const Index f = m.cfg.feature_dim;
  Mat<S> dout = Mat<S>::Zero(f, frames + 1);
  dout.leftCols(frames) = dv;
  Mat<S> dstack_out = nn::linear_backward(m.p.out, cache.stack_out, dout, grad.out);
  Mat<S> dembedded = nn::transformer_stack_backward(m.p.stack, cache.stack, dstack_out,
                                                    grad.stack);
  Mat<S> dreduced = nn::linear_backward(m.p.embed, cache.reduced, dembedded, grad.embed);
  Mat<S> dstacked = nn::linear_backward(m.p.input, cache.stacked,
                                        Mat<S>(dreduced.leftCols(frames)), grad.input);
  if (!cache.drop_cond) {
    for (Index j = 0; j < frames; ++j) {
      grad.phoneme_table.col(cache.align[size_t(j)]) +=
          dstacked.block(2 * f, j, m.cfg.phoneme_dim, 1);
    }
  }
}

// Widens the input layer for a new laughter conditioning block. Existing
// columns are copied bit for bit; the fresh columns get small random weights
// so an all-zero laughter input reproduces the source model exactly.
template <class S>
AudioModel<S> extend_laugh_conditioning(const AudioModel<S>& src, int new_laugh_dim,
                                        double init_scale, Rng& rng) {
  if (src.cfg.laugh_dim != 0) {
    throw std::invalid_argument("extend_laugh_conditioning: model already extended");
  }
  if (new_laugh_dim < 1) {
    throw std::invalid_argument("extend_laugh_conditioning: laugh dim must be >= 1");
  }
  AudioModel<S> m = src;
  m.cfg.laugh_dim = new_laugh_dim;
  const Index f = src.cfg.feature_dim;
  const Index old_cols = src.p.input.w.cols();
  m.p.input.w.resize(f, old_cols + new_laugh_dim);
  m.p.input.w.leftCols(old_cols) = src.p.input.w;
  for (Index j = old_cols; j < m.p.input.w.cols(); ++j) {
    for (Index i = 0; i < f; ++i) m.p.input.w(i, j) = S(rng.normal(0.0, init_scale));
  }
  return m;
}

}  // namespace laughflow::models
