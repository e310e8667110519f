#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "laughflow/nn.hpp"

namespace laughflow::nn {

struct AdamConfig {
  double lr = 3e-4;          // peak rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;    // global norm ceiling; <= 0 disables
  int warmup_steps = 0;
  int total_steps = 1;
  double final_lr_fraction = 0.1;
};

// Linear warmup to the peak rate, then linear decay to a floor.
inline double lr_at(const AdamConfig& cfg, int step) {
  if (step < 1) throw std::invalid_argument("lr_at: steps are 1-based");
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
    return cfg.lr * double(step) / double(cfg.warmup_steps);
  }
  const double span = double(std::max(1, cfg.total_steps - cfg.warmup_steps));
  const double done = double(std::min(step, cfg.total_steps) - cfg.warmup_steps) / span;
  const double floor = cfg.lr * cfg.final_lr_fraction;
  return cfg.lr + (floor - cfg.lr) * done;
}

template <class S>
struct StepStats {
  double lr = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
};

// Adam over a fixed set of parameter views. Views must stay valid (no
// reallocation of the underlying tensors) for the optimizer's lifetime.
template <class S>
class Adam {
 public:
  Adam(std::vector<ParamView<S>> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.push_back(Mat<S>::Zero(p.rows, p.cols));
      v_.push_back(Mat<S>::Zero(p.rows, p.cols));
    }
  }

  int step_count() const { return t_; }

  // Applies one update from `grads`, which must align with the constructor's
  // views. Gradients are scaled in place when clipping engages.
  StepStats<S> step(const std::vector<ParamView<S>>& grads) {
    if (grads.size() != params_.size()) {
      throw std::invalid_argument("adam: gradient view count mismatch");
    }
    ++t_;
    StepStats<S> stats;
    stats.lr = lr_at(cfg_, t_);
    double sq = 0.0;
    for (const auto& g : grads) sq += double(g.map().squaredNorm());
    stats.grad_norm = std::sqrt(sq);
    if (!std::isfinite(stats.grad_norm)) {
      throw std::runtime_error("adam: non-finite gradient at step " + std::to_string(t_));
    }
    S rescale = S(1);
    if (cfg_.grad_clip > 0.0 && stats.grad_norm > cfg_.grad_clip) {
      rescale = S(cfg_.grad_clip / stats.grad_norm);
      stats.clipped = true;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto g = grads[i].map();
      auto p = params_[i].map();
      Mat<S>& m = m_[i];
      Mat<S>& v = v_[i];
      m = S(cfg_.beta1) * m + S(1.0 - cfg_.beta1) * (rescale * g);
      v = S(cfg_.beta2) * v.array().matrix() +
          S(1.0 - cfg_.beta2) * (rescale * g).array().square().matrix();
      p.array() -= S(stats.lr) * (m.array() / S(bc1)) /
                   ((v.array() / S(bc2)).sqrt() + S(cfg_.eps));
    }
    return stats;
  }

 private:
  std::vector<ParamView<S>> params_;
  AdamConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  int t_ = 0;
};

}  // namespace laughflow::nn
