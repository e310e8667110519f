#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "laughflow/nn.hpp"

namespace laughflow::models {

struct DurationModelConfig {
  int vocab = 13;
  int token_dim = 16;
  int layers = 2;
  int heads = 4;
  int embed_dim = 64;
  int ff_dim = 256;
  double dropout = 0.1;
  int max_len = 1024;
};

template <class S>
struct DurationModelParams {
  Mat<S> token_table;         // token_dim x vocab
  nn::LinearParams<S> input;  // embed_dim x (token_dim + 2)
  nn::TransformerStackParams<S> stack;
  nn::LinearParams<S> out;    // 1 x embed_dim
};

// Regression over log-durations. Each token position sees its identity
// embedding, the log of its duration when known (zero otherwise), and a flag
// marking the positions whose durations are hidden and must be predicted.
template <class S>
struct DurationModel {
  DurationModelConfig cfg;
  DurationModelParams<S> p;
  Mat<S> pe;
};

template <class S>
DurationModel<S> init_duration_model(const DurationModelConfig& cfg, Rng& rng) {
  DurationModel<S> m;
  m.cfg = cfg;
  m.p.token_table.resize(cfg.token_dim, cfg.vocab);
  for (Index j = 0; j < m.p.token_table.cols(); ++j) {
    for (Index i = 0; i < m.p.token_table.rows(); ++i) {
      m.p.token_table(i, j) = S(rng.normal());
    }
  }
  nn::init_linear(m.p.input, cfg.embed_dim, cfg.token_dim + 2, rng);
  nn::init_transformer_stack(m.p.stack, cfg.layers, cfg.heads, cfg.embed_dim, cfg.ff_dim,
                             /*unet=*/false, rng);
  nn::init_linear(m.p.out, 1, cfg.embed_dim, rng);
  m.pe = nn::position_encoding<S>(cfg.embed_dim, cfg.max_len);
  return m;
}

template <class S>
std::vector<nn::ParamView<S>> collect_params(DurationModelParams<S>& p) {
  std::vector<nn::ParamView<S>> out;
  nn::add_view(out, "token_table", p.token_table);
  nn::collect_params(out, "input", p.input);
  nn::collect_params(out, "stack", p.stack);
  nn::collect_params(out, "out", p.out);
  return out;
}

template <class S>
struct DurationCache {
  std::vector<int> tokens;
  Mat<S> feats;     // (token_dim + 2) x N
  Mat<S> embedded;  // embed_dim x N
  nn::TransformerStackCache<S> stack;
  Mat<S> stack_out;
};

// `hidden[i]` marks positions whose durations are withheld from the input.
// Returns predicted log-durations, one per token.
template <class S>
Vec<S> duration_forward(const DurationModel<S>& m, const std::vector<int>& tokens,
                        const std::vector<int>& durations, const std::vector<bool>& hidden,
                        DurationCache<S>& cache, const nn::DropoutCtx& drop) {
  const Index n = Index(tokens.size());
  if (n == 0) throw std::invalid_argument("duration_forward: empty token sequence");
  if (Index(durations.size()) != n || Index(hidden.size()) != n) {
    throw std::invalid_argument("duration_forward: durations/mask must match token count");
  }
  if (n > m.pe.cols()) {
    throw std::invalid_argument("duration_forward: sequence longer than position table");
  }
  cache.tokens = tokens;
  cache.feats.resize(m.cfg.token_dim + 2, n);
  for (Index i = 0; i < n; ++i) {
    const int id = tokens[size_t(i)];
    if (id < 0 || id >= m.cfg.vocab) {
      throw std::invalid_argument("duration_forward: token id outside vocab");
    }
    cache.feats.block(0, i, m.cfg.token_dim, 1) = m.p.token_table.col(id);
    const bool h = hidden[size_t(i)];
    if (!h && durations[size_t(i)] < 1) {
      throw std::invalid_argument("duration_forward: known durations must be >= 1");
    }
    cache.feats(m.cfg.token_dim, i) = h ? S(0) : S(std::log(double(durations[size_t(i)])));
    cache.feats(m.cfg.token_dim + 1, i) = h ? S(1) : S(0);
  }
  cache.embedded = nn::linear_forward(m.p.input, cache.feats);
  cache.embedded += m.pe.leftCols(n);
  cache.stack_out = nn::transformer_stack_forward(m.p.stack, cache.embedded, cache.stack, drop);
  return nn::linear_forward(m.p.out, cache.stack_out).transpose();
}

// Mean squared error in log space, over hidden positions only.
template <class S>
double duration_loss(const Vec<S>& pred, const std::vector<int>& durations,
                     const std::vector<bool>& hidden) {
  double acc = 0.0;
  Index n = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    if (!hidden[size_t(i)]) continue;
    const double d = double(pred(i)) - std::log(double(durations[size_t(i)]));
    acc += d * d;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("duration_loss: no hidden positions");
  return acc / double(n);
}

template <class S>
Vec<S> duration_loss_grad(const Vec<S>& pred, const std::vector<int>& durations,
                          const std::vector<bool>& hidden) {
  Index n = 0;
  for (bool h : hidden) n += h ? 1 : 0;
  Vec<S> g = Vec<S>::Zero(pred.size());
  for (Index i = 0; i < pred.size(); ++i) {
    if (!hidden[size_t(i)]) continue;
    g(i) = S(2.0 / double(n)) * (pred(i) - S(std::log(double(durations[size_t(i)]))));
  }
  return g;
}

template <class S>
void duration_backward(const DurationModel<S>& m, const DurationCache<S>& cache,
                       const Vec<S>& dz, DurationModelParams<S>& grad) {
  Mat<S> dstack_out = nn::linear_backward(m.p.out, cache.stack_out,
                                          Mat<S>(dz.transpose()), grad.out);
  Mat<S> dembedded = nn::transformer_stack_backward(m.p.stack, cache.stack, dstack_out,
                                                    grad.stack);
  Mat<S> dfeats = nn::linear_backward(m.p.input, cache.feats, dembedded, grad.input);
  for (Index i = 0; i < dfeats.cols(); ++i) {
    grad.token_table.col(cache.tokens[size_t(i)]) +=
        dfeats.block(0, i, m.cfg.token_dim, 1);
  }
}

// Frame counts from predicted log-durations; always at least one frame.
template <class S>
std::vector<int> decode_durations(const Vec<S>& pred) {
  std::vector<int> out(size_t(pred.size()));
  for (Index i = 0; i < pred.size(); ++i) {
    out[size_t(i)] = std::max(1, int(std::lround(std::exp(double(pred(i))))));
  }
  return out;
}

}  // namespace laughflow::models
