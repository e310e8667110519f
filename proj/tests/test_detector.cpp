#include <cmath>
#include <vector>

#include "doctest.h"
#include "laughflow/data.hpp"
#include "laughflow/detector.hpp"

using laughflow::Index;
using laughflow::Rng;
using laughflow::MatD;
using laughflow::MatF;
using laughflow::VecD;
namespace data = laughflow::data;
namespace eval = laughflow::eval;

namespace {

data::CorpusSpec spec_8bins() {
  data::CorpusSpec spec;
  spec.feature_dim = 12;
  spec.vocab = 6;
  return spec;
}

// speech plus a burst of known intensity/rate on [lo, hi)
MatF burst_clip(const data::CorpusSpec& spec, const data::TokenBank& bank,
                std::uint64_t seed, float intensity, float rate, int lo, int hi, int t) {
  const auto speaker = data::synth_speaker(spec, 0, seed);
  std::vector<int> tokens{0, 2, 0};
  std::vector<int> durations{4, t - 8, 4};
  data::LaughterEvent ev;
  ev.start = lo;
  ev.end = hi;
  ev.intensity = intensity;
  ev.rate = rate;
  Rng rng(seed);
  return data::synth_utterance(spec, bank, speaker, tokens, durations, {ev}, rng).features;
}

}  // namespace

TEST_CASE("a clean burst is detected at its intensity and rate bin") {
  const auto spec = spec_8bins();
  const auto bank = data::make_token_bank(spec, 21);
  const eval::BurstDetector detector(bank);
  for (int bin = 0; bin < 4; ++bin) {
    CAPTURE(bin);
    const float intensity = 0.75f;
    const MatF clip =
        burst_clip(spec, bank, 100 + std::uint64_t(bin), intensity, bank.rate_centers[size_t(bin)],
                   20, 44, 64);
    const auto out = detector.detect(clip);
    REQUIRE(out.prob.size() == 64);
    REQUIRE(out.emb.rows() == 4);
    // mid-event probability tracks the true intensity
    double mid = 0.0;
    for (Index j = 28; j < 36; ++j) mid += out.prob(j);
    mid /= 8.0;
    CHECK(mid == doctest::Approx(double(intensity)).epsilon(0.15));
    // the winning bin carries the event's rate
    Index votes = 0;
    for (Index j = 28; j < 36; ++j) {
      Index arg = 0;
      out.emb.col(j).maxCoeff(&arg);
      if (arg == bin && out.emb(arg, j) > 0.0) ++votes;
    }
    CHECK(votes >= 6);
    // well before the event the response falls under threshold
    for (Index j = 0; j < 8; ++j) CHECK(out.prob(j) < 0.3);
  }
}

TEST_CASE("burst-free speech stays below the gating threshold") {
  const auto spec = spec_8bins();
  const auto bank = data::make_token_bank(spec, 22);
  const eval::BurstDetector detector(bank);
  const auto speaker = data::synth_speaker(spec, 1, 23);
  std::vector<int> tokens{0, 1, 3, 0};
  std::vector<int> durations{5, 20, 20, 5};
  Rng rng(24);
  const auto u = data::synth_utterance(spec, bank, speaker, tokens, durations, {}, rng);
  const auto out = detector.detect(u.features);
  CHECK(out.prob.maxCoeff() < 0.2);
  // embedding stays gated off almost everywhere
  int active = 0;
  for (Index j = 0; j < out.emb.cols(); ++j) {
    active += out.emb.col(j).cwiseAbs().maxCoeff() > 0.0 ? 1 : 0;
  }
  CHECK(active <= out.emb.cols() / 4);
}

TEST_CASE("embedding columns are gated by the probability threshold") {
  const auto spec = spec_8bins();
  const auto bank = data::make_token_bank(spec, 25);
  eval::BurstDetectorConfig cfg;
  cfg.threshold = 0.5;
  const eval::BurstDetector strict(bank, cfg);
  const MatF clip = burst_clip(spec, bank, 26, 0.9f, bank.rate_centers[1], 16, 40, 56);
  const auto out = strict.detect(clip);
  for (Index j = 0; j < out.emb.cols(); ++j) {
    const double peak = out.emb.col(j).maxCoeff();
    if (out.prob(j) < 0.5) {
      CHECK(peak == 0.0);
    } else {
      CHECK(peak == doctest::Approx(out.prob(j)));
    }
  }
}

TEST_CASE("rate scaling follows a resampled clip") {
  const auto spec = spec_8bins();
  const auto bank = data::make_token_bank(spec, 27);
  const float rate = bank.rate_centers[2];
  const MatF clip = burst_clip(spec, bank, 28, 0.8f, rate, 16, 40, 56);

  // stretch 2x by repeating frames: oscillation now runs at half the rate
  MatF wide(clip.rows(), clip.cols() * 2);
  for (Index j = 0; j < clip.cols(); ++j) {
    wide.col(2 * j) = clip.col(j);
    wide.col(2 * j + 1) = clip.col(j);
  }
  eval::BurstDetectorConfig cfg;
  cfg.rate_scale = 2.0;
  const eval::BurstDetector scaled(bank, cfg);
  const auto out = scaled.detect(wide);
  double mid = 0.0;
  for (Index j = 56; j < 72; ++j) mid += out.prob(j);
  mid /= 16.0;
  CHECK(mid == doctest::Approx(0.8).epsilon(0.2));
  Index votes = 0;
  for (Index j = 56; j < 72; ++j) {
    Index arg = 0;
    out.emb.col(j).maxCoeff(&arg);
    if (arg == 2 && out.emb(arg, j) > 0.0) ++votes;
  }
  CHECK(votes >= 10);
  CHECK_THROWS_AS(eval::BurstDetector(bank, eval::BurstDetectorConfig{9, 21, 0.05, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("linear rescaling preserves endpoints and constants") {
  VecD seq(4);
  seq << 1.0, 2.0, 3.0, 4.0;
  const VecD up = eval::rescale_linear(seq, 7);
  REQUIRE(up.size() == 7);
  CHECK(up(0) == doctest::Approx(1.0));
  CHECK(up(6) == doctest::Approx(4.0));
  CHECK(up(3) == doctest::Approx(2.5));
  const VecD down = eval::rescale_linear(up, 4);
  for (Index i = 0; i < 4; ++i) CHECK(down(i) == doctest::Approx(seq(i)).epsilon(1e-9));

  VecD single(1);
  single << 5.0;
  const VecD spread = eval::rescale_linear(single, 3);
  CHECK(spread(0) == 5.0);
  CHECK(spread(2) == 5.0);

  MatD m(2, 3);
  m << 0.0, 1.0, 2.0, 4.0, 4.0, 4.0;
  const MatD wide = eval::rescale_linear(m, 5);
  REQUIRE(wide.cols() == 5);
  CHECK(wide(0, 2) == doctest::Approx(1.0));
  CHECK(wide(1, 3) == doctest::Approx(4.0));
  CHECK_THROWS_AS((void)eval::rescale_linear(VecD(), 3), std::invalid_argument);
}

TEST_CASE("detect_rescaled maps onto the requested frame count") {
  const auto spec = spec_8bins();
  const auto bank = data::make_token_bank(spec, 29);
  const eval::BurstDetector detector(bank);
  const MatF clip = burst_clip(spec, bank, 30, 0.7f, bank.rate_centers[0], 12, 32, 48);
  const auto out = detector.detect_rescaled(clip, 96);
  CHECK(out.prob.size() == 96);
  CHECK(out.emb.cols() == 96);
  const auto raw = detector.detect(clip);
  CHECK(out.prob(0) == doctest::Approx(raw.prob(0)));
  CHECK(out.prob(95) == doctest::Approx(raw.prob(47)));
}
