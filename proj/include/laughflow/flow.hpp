#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "laughflow/rng.hpp"
#include "laughflow/types.hpp"

namespace laughflow::flow {

inline constexpr double kDefaultSigmaMin = 1e-5;
inline constexpr double kDenomGuard = 1e-8;

namespace detail {
template <class A, class B>
inline void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

inline void require_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("flow time must lie in [0,1], got " + std::to_string(t));
  }
}

inline void require_sigma(double sigma_min) {
  if (!(sigma_min >= 0.0 && sigma_min < 1.0)) {
    throw std::invalid_argument("sigma_min must lie in [0,1), got " +
                                std::to_string(sigma_min));
  }
}
}  // namespace detail

// Point on the optimal-transport conditional path:
//   x_t = t * x1 + (1 - (1 - sigma_min) * t) * x0
template <class S>
Mat<S> ot_path_sample(const Mat<S>& x1, const Mat<S>& x0, double t,
                      double sigma_min = kDefaultSigmaMin) {
  detail::require_same_shape(x1, x0, "ot_path_sample");
  detail::require_time(t);
  detail::require_sigma(sigma_min);
  const S a = S(t);
  const S b = S(1.0 - (1.0 - sigma_min) * t);
  return a * x1 + b * x0;
}

// Target velocity of the OT path at (x, t):
//   u_t(x | x1) = (x1 - (1 - sigma_min) * x) / (1 - (1 - sigma_min) * t)
template <class S>
Mat<S> ot_target_field(const Mat<S>& x1, const Mat<S>& x, double t,
                       double sigma_min = kDefaultSigmaMin) {
  detail::require_same_shape(x1, x, "ot_target_field");
  detail::require_time(t);
  detail::require_sigma(sigma_min);
  const double c = 1.0 - sigma_min;
  const double denom = 1.0 - c * t;
  if (denom <= kDenomGuard) {
    throw std::runtime_error("ot_target_field: path denominator " + std::to_string(denom) +
                             " below guard; t too close to terminal time");
  }
  return (x1 - S(c) * x) / S(denom);
}

// Mean squared error over every entry of the field.
template <class S>
double cfm_loss(const Mat<S>& pred, const Mat<S>& target) {
  detail::require_same_shape(pred, target, "cfm_loss");
  if (pred.size() == 0) throw std::invalid_argument("cfm_loss: empty field");
  return (pred - target).template cast<double>().squaredNorm() / double(pred.size());
}

// Loss restricted to columns where keep[j] is true; used when training should
// ignore the prompt region entirely.
template <class S>
double cfm_loss_masked(const Mat<S>& pred, const Mat<S>& target,
                       const std::vector<bool>& keep) {
  detail::require_same_shape(pred, target, "cfm_loss_masked");
  if (Index(keep.size()) != pred.cols()) {
    throw std::invalid_argument("cfm_loss_masked: mask length does not match columns");
  }
  double acc = 0.0;
  Index n = 0;
  for (Index j = 0; j < pred.cols(); ++j) {
    if (!keep[size_t(j)]) continue;
    acc += (pred.col(j) - target.col(j)).template cast<double>().squaredNorm();
    ++n;
  }
  if (n == 0) throw std::invalid_argument("cfm_loss_masked: mask selects no columns");
  return acc / double(n * pred.rows());
}

// Gradient of cfm_loss w.r.t. pred: 2 (pred - target) / size.
template <class S>
Mat<S> cfm_loss_grad(const Mat<S>& pred, const Mat<S>& target) {
  detail::require_same_shape(pred, target, "cfm_loss_grad");
  return (pred - target) * S(2.0 / double(pred.size()));
}

template <class S>
Mat<S> cfm_loss_masked_grad(const Mat<S>& pred, const Mat<S>& target,
                            const std::vector<bool>& keep) {
  detail::require_same_shape(pred, target, "cfm_loss_masked_grad");
  Index n = 0;
  for (bool k : keep) n += k ? 1 : 0;
  Mat<S> g = Mat<S>::Zero(pred.rows(), pred.cols());
  if (n == 0) return g;
  const S scale = S(2.0 / double(n * pred.rows()));
  for (Index j = 0; j < pred.cols(); ++j) {
    if (keep[size_t(j)]) g.col(j) = (pred.col(j) - target.col(j)) * scale;
  }
  return g;
}

// Classifier-free guidance blend: (1 + alpha) * cond - alpha * uncond.
template <class S>
Mat<S> cfg_combine(const Mat<S>& v_cond, const Mat<S>& v_uncond, double alpha) {
  detail::require_same_shape(v_cond, v_uncond, "cfg_combine");
  if (alpha < 0.0) throw std::invalid_argument("guidance strength must be >= 0");
  return S(1.0 + alpha) * v_cond - S(alpha) * v_uncond;
}

// One training draw for a target x1: t ~ U[0,1], x0 ~ N(0,I), plus the path
// point and regression target at t.
template <class S>
struct FlowStep {
  double t = 0.0;
  Mat<S> noise;
  Mat<S> x_t;
  Mat<S> u_target;
};

template <class S>
FlowStep<S> sample_flow_step(const Mat<S>& x1, Rng& rng,
                             double sigma_min = kDefaultSigmaMin) {
  FlowStep<S> step;
  step.t = rng.uniform();
  step.noise.resize(x1.rows(), x1.cols());
  for (Index j = 0; j < x1.cols(); ++j) {
    for (Index i = 0; i < x1.rows(); ++i) step.noise(i, j) = S(rng.normal());
  }
  step.x_t = ot_path_sample(x1, step.noise, step.t, sigma_min);
  step.u_target = ot_target_field(x1, step.x_t, step.t, sigma_min);
  return step;
}

// Fixed-step integrators from t=0 to t=1. `nfe` counts field evaluations:
// Euler spends one per step, midpoint two, so midpoint takes nfe/2 steps and
// requires an even budget.
namespace detail {
template <class M>
void require_finite_field(const M& v, int step, double t) {
  if (!v.allFinite()) {
    throw std::runtime_error("ode integration diverged: non-finite field at step " +
                             std::to_string(step) + " (t=" + std::to_string(t) + ")");
  }
}
}  // namespace detail

template <class S, class Field>
Mat<S> integrate_euler(Field&& field, const Mat<S>& x0, int nfe) {
  if (nfe < 1) throw std::invalid_argument("integrate_euler: nfe must be >= 1");
  Mat<S> x = x0;
  const double h = 1.0 / double(nfe);
  for (int k = 0; k < nfe; ++k) {
    const double t = double(k) * h;
    const Mat<S> v = field(x, t);
    detail::require_finite_field(v, k, t);
    x += S(h) * v;
  }
  return x;
}

template <class S, class Field>
Mat<S> integrate_midpoint(Field&& field, const Mat<S>& x0, int nfe) {
  if (nfe < 2 || nfe % 2 != 0) {
    throw std::invalid_argument("integrate_midpoint: nfe must be even and >= 2");
  }
  Mat<S> x = x0;
  const int steps = nfe / 2;
  const double h = 1.0 / double(steps);
  for (int k = 0; k < steps; ++k) {
    const double t = double(k) * h;
    const Mat<S> v0 = field(x, t);
    detail::require_finite_field(v0, k, t);
    const Mat<S> half = x + S(0.5 * h) * v0;
    const Mat<S> v1 = field(half, t + 0.5 * h);
    detail::require_finite_field(v1, k, t + 0.5 * h);
    x += S(h) * v1;
  }
  return x;
}

}  // namespace laughflow::flow
