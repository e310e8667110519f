#include "laughflow/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace laughflow::eval {

namespace {

int odd_window(int base, double scale) {
  int w = std::max(3, int(std::lround(base * scale)));
  return w % 2 == 0 ? w + 1 : w;
}

}  // namespace

BurstDetector::BurstDetector(const data::TokenBank& bank, BurstDetectorConfig cfg)
    : burst_unit_(bank.burst_unit), amplitude_(bank.burst_amplitude), cfg_(cfg) {
  if (cfg_.rate_scale <= 0.0) throw std::invalid_argument("detector: rate_scale must be > 0");
  if (amplitude_ <= 0.0) throw std::invalid_argument("detector: bank has no burst amplitude");
  auto build = [&](int base_window) {
    std::vector<Quad> kernels;
    const int w = odd_window(base_window, cfg_.rate_scale);
    const int h = w / 2;
    for (float center : bank.rate_centers) {
      // cycles per input frame shrink when the input is sampled faster
      const double rate = double(center) / cfg_.rate_scale;
      Quad q;
      q.cos_k.resize(w);
      q.sin_k.resize(w);
      VecD win(w);
      for (int m = -h; m <= h; ++m) {
        win(m + h) = 0.5 * (1.0 + std::cos(M_PI * double(m) / double(h + 1)));
      }
      double csum = 0.0;
      for (int m = -h; m <= h; ++m) {
        q.cos_k(m + h) = win(m + h) * std::cos(2.0 * M_PI * rate * m);
        q.sin_k(m + h) = win(m + h) * std::sin(2.0 * M_PI * rate * m);
        csum += q.cos_k(m + h);
      }
      // remove the DC response so constant projections contribute nothing
      q.cos_k -= win * (csum / win.sum());
      for (int m = -h; m <= h; ++m) {
        q.cos_gain += q.cos_k(m + h) * std::cos(2.0 * M_PI * rate * m);
        q.sin_gain += q.sin_k(m + h) * std::sin(2.0 * M_PI * rate * m);
      }
      kernels.push_back(std::move(q));
    }
    return kernels;
  };
  kernels_prob_ = build(cfg_.prob_window);
  kernels_bin_ = build(cfg_.bin_window);
}

DetectorOutput BurstDetector::detect(const MatF& features) const {
  const Index t = features.cols();
  VecD proj(t);
  for (Index j = 0; j < t; ++j) {
    proj(j) = double(features.col(j).dot(burst_unit_));
  }
  const int bins = int(kernels_prob_.size());
  auto bank_amp = [&](const std::vector<Quad>& kernels) {
    MatD amp = MatD::Zero(bins, t);
    const int h = int(kernels.front().cos_k.size()) / 2;
    for (int b = 0; b < bins; ++b) {
      const Quad& q = kernels[size_t(b)];
      for (Index j = 0; j < t; ++j) {
        double c = 0.0, s = 0.0;
        const Index lo = std::max<Index>(-h, -j);
        const Index hi = std::min<Index>(h, t - 1 - j);
        for (Index m = lo; m <= hi; ++m) {
          const double v = proj(j + m);
          c += q.cos_k(m + h) * v;
          s += q.sin_k(m + h) * v;
        }
        const double ca = c / q.cos_gain;
        const double sa = s / q.sin_gain;
        amp(b, j) = std::sqrt(ca * ca + sa * sa);
      }
    }
    return amp;
  };
  const MatD amp_prob = bank_amp(kernels_prob_);
  const MatD amp_bin = bank_amp(kernels_bin_);
  DetectorOutput out;
  out.prob.resize(t);
  out.emb = MatD::Zero(bins, t);
  for (Index j = 0; j < t; ++j) {
    const double p = amp_prob.col(j).maxCoeff() / amplitude_;
    out.prob(j) = std::clamp(p, 0.0, 1.0);
    if (out.prob(j) >= cfg_.threshold) {
      Index bin = 0;
      amp_bin.col(j).maxCoeff(&bin);
      out.emb(bin, j) = out.prob(j);
    }
  }
  return out;
}

DetectorOutput BurstDetector::detect_rescaled(const MatF& features, Index frames) const {
  DetectorOutput raw = detect(features);
  DetectorOutput out;
  out.prob = rescale_linear(raw.prob, frames);
  out.emb = rescale_linear(raw.emb, frames);
  return out;
}

VecD rescale_linear(const VecD& seq, Index out_len) {
  if (seq.size() < 1 || out_len < 1) {
    throw std::invalid_argument("rescale_linear: empty sequence");
  }
  VecD out(out_len);
  if (seq.size() == 1) {
    out.setConstant(seq(0));
    return out;
  }
  const double step = double(seq.size() - 1) / double(std::max<Index>(out_len - 1, 1));
  for (Index i = 0; i < out_len; ++i) {
    const double x = out_len == 1 ? 0.0 : double(i) * step;
    const Index k = std::min<Index>(Index(x), seq.size() - 2);
    const double frac = x - double(k);
    out(i) = seq(k) * (1.0 - frac) + seq(k + 1) * frac;
  }
  return out;
}

MatD rescale_linear(const MatD& seq, Index out_cols) {
  MatD out(seq.rows(), out_cols);
  for (Index i = 0; i < seq.rows(); ++i) {
    out.row(i) = rescale_linear(VecD(seq.row(i).transpose()), out_cols).transpose();
  }
  return out;
}

}  // namespace laughflow::eval
