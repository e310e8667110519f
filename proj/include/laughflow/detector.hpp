#pragma once

#include <vector>

#include "laughflow/data.hpp"
#include "laughflow/types.hpp"

namespace laughflow::eval {

struct BurstDetectorConfig {
  int prob_window = 9;    // odd; short window for timing resolution
  int bin_window = 21;    // odd; long window for rate discrimination
  double threshold = 0.05;  // embedding gate on probability
  double rate_scale = 1.0;  // input frame rate / model frame rate
};

struct DetectorOutput {
  VecD prob;  // length T, clamped to [0,1]
  MatD emb;   // rate_bins x T, prob-scaled basis columns
};

// Oracle laughter detector: projects frames onto the known burst direction
// and measures oscillation amplitude per rate bin with DC-free quadrature
// kernels, so constant speech energy cannot fire it.
class BurstDetector {
 public:
  explicit BurstDetector(const data::TokenBank& bank, BurstDetectorConfig cfg = {});

  DetectorOutput detect(const MatF& features) const;

  // detect() followed by linear resampling of prob/emb to `frames` columns;
  // the adapter for inputs at a different frame rate.
  DetectorOutput detect_rescaled(const MatF& features, Index frames) const;

  int bins() const { return int(kernels_prob_.size()); }

 private:
  struct Quad {
    VecD cos_k, sin_k;  // DC-orthogonalized windowed kernels, index 0 = -h
    double cos_gain = 0.0, sin_gain = 0.0;
  };

  VecF burst_unit_;
  double amplitude_;
  BurstDetectorConfig cfg_;
  std::vector<Quad> kernels_prob_, kernels_bin_;
};

VecD rescale_linear(const VecD& seq, Index out_len);
MatD rescale_linear(const MatD& seq, Index out_cols);

}  // namespace laughflow::eval
