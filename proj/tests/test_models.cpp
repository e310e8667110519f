#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "laughflow/audio_model.hpp"
#include "laughflow/duration_model.hpp"
#include "laughflow/rng.hpp"

using laughflow::Index;
using laughflow::Rng;
using laughflow::MatD;
using laughflow::VecD;
using laughflow::MatF;
namespace models = laughflow::models;
namespace nn = laughflow::nn;

namespace {

MatD random_mat(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  MatD m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

models::AudioModelConfig tiny_audio_cfg(int laugh_dim) {
  models::AudioModelConfig cfg;
  cfg.feature_dim = 4;
  cfg.phoneme_dim = 3;
  cfg.laugh_dim = laugh_dim;
  cfg.vocab = 5;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.embed_dim = 8;
  cfg.ff_dim = 12;
  cfg.dropout = 0.0;
  cfg.max_len = 32;
  return cfg;
}

void check_views_fd(std::vector<nn::ParamView<double>> views,
                    std::vector<nn::ParamView<double>> analytic,
                    const std::function<double()>& loss, double tol) {
  REQUIRE(views.size() == analytic.size());
  const double h = 1e-6;
  for (size_t v = 0; v < views.size(); ++v) {
    auto p = views[v].map();
    auto g = analytic[v].map();
    for (Index k = 0; k < p.size(); ++k) {
      const double keep = p.data()[k];
      p.data()[k] = keep + h;
      const double up = loss();
      p.data()[k] = keep - h;
      const double dn = loss();
      p.data()[k] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::abs(g.data()[k] - fd) / std::max(1.0, std::abs(fd));
      if (err > tol) {
        CAPTURE(views[v].name);
        CAPTURE(k);
        CHECK(g.data()[k] == doctest::Approx(fd).epsilon(tol));
      }
    }
  }
}

}  // namespace

TEST_CASE("assemble_input stacks blocks in the documented row order") {
  Rng rng(41);
  auto model = models::init_audio_model<double>(tiny_audio_cfg(2), rng);
  const Index f = 4, t = 3;
  const MatD masked = random_mat(rng, f, t);
  const MatD x_t = random_mat(rng, f, t);
  const MatD laugh = random_mat(rng, 2, t);
  const std::vector<int> align{1, 0, 4};

  const MatD stacked = models::assemble_input(model, masked, x_t, align, laugh, false);
  REQUIRE(stacked.rows() == 2 * f + 3 + 2);
  REQUIRE(stacked.cols() == t);
  CHECK((stacked.topRows(f) - masked).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stacked.middleRows(f, f) - x_t).cwiseAbs().maxCoeff() == 0.0);
  for (Index j = 0; j < t; ++j) {
    CHECK((stacked.block(2 * f, j, 3, 1) - model.p.phoneme_table.col(align[size_t(j)]))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  CHECK((stacked.bottomRows(2) - laugh).cwiseAbs().maxCoeff() == 0.0);

  const MatD dropped = models::assemble_input(model, masked, x_t, align, laugh, true);
  CHECK((dropped.middleRows(f, f) - x_t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(dropped.topRows(f).cwiseAbs().maxCoeff() == 0.0);
  CHECK(dropped.bottomRows(3 + 2).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS((void)models::assemble_input(model, masked, x_t, {1, 0}, laugh, false),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)models::assemble_input(model, masked, x_t, {1, 0, 9}, laugh, false),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)models::assemble_input(model, masked, x_t, align,
                                               MatD(MatD::Zero(1, t)), false),
                  std::invalid_argument);
}

TEST_CASE("audio forward appends the flow-time token") {
  Rng rng(42);
  auto model = models::init_audio_model<double>(tiny_audio_cfg(1), rng);
  const Index f = 4, t = 6;
  const MatD masked = random_mat(rng, f, t);
  const MatD x_t = random_mat(rng, f, t);
  const MatD laugh = random_mat(rng, 1, t);
  const std::vector<int> align{0, 1, 2, 3, 4, 0};
  models::AudioCache<double> cache;
  const nn::DropoutCtx off;
  const double tt = 0.37;
  const MatD v = models::audio_forward(model, masked, x_t, align, laugh, tt, false, cache, off);
  CHECK(v.rows() == f);
  CHECK(v.cols() == t);
  REQUIRE(cache.reduced.cols() == t + 1);
  const VecD enc = nn::time_encoding<double>(tt, f);
  CHECK((cache.reduced.col(t) - enc).cwiseAbs().maxCoeff() == 0.0);
  // a different flow time must change the prediction through the time token
  models::AudioCache<double> cache2;
  const MatD v2 =
      models::audio_forward(model, masked, x_t, align, laugh, 0.9, false, cache2, off);
  CHECK((v - v2).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("audio model gradients match finite differences") {
  Rng rng(43);
  auto model = models::init_audio_model<double>(tiny_audio_cfg(2), rng);
  const Index f = 4, t = 4;
  const MatD masked = random_mat(rng, f, t);
  const MatD x_t = random_mat(rng, f, t);
  const MatD laugh = random_mat(rng, 2, t);
  const std::vector<int> align{1, 1, 3, 0};
  const MatD c = random_mat(rng, f, t);
  const nn::DropoutCtx off;
  const double tt = 0.62;

  for (bool drop_cond : {false, true}) {
    CAPTURE(drop_cond);
    models::AudioCache<double> scratch;
    auto loss = [&] {
      return models::audio_forward(model, masked, x_t, align, laugh, tt, drop_cond, scratch,
                                   off)
          .cwiseProduct(c)
          .sum();
    };
    models::AudioCache<double> cache;
    (void)models::audio_forward(model, masked, x_t, align, laugh, tt, drop_cond, cache, off);
    models::AudioModelParams<double> grads = model.p;
    auto gv = models::collect_params(grads);
    for (auto& view : gv) view.map().setZero();
    models::audio_backward(model, cache, c, grads);
    auto pv = models::collect_params(model.p);
    check_views_fd(pv, gv, loss, 1e-5);
  }
}

TEST_CASE("parameter collection order is stable") {
  Rng rng(44);
  auto model = models::init_audio_model<double>(tiny_audio_cfg(0), rng);
  auto views = models::collect_params(model.p);
  REQUIRE(views.size() > 4);
  CHECK(views[0].name == "phoneme_table");
  CHECK(views[1].name == "input.w");
  CHECK(views[2].name == "input.b");
  CHECK(views[3].name == "embed.w");
  CHECK(views.back().name == "out.b");
}

TEST_CASE("widening the input layer preserves the base model exactly") {
  Rng rng(45);
  auto base = models::init_audio_model<float>(tiny_audio_cfg(0), rng);
  Rng ext_rng(46);
  auto wide = models::extend_laugh_conditioning(base, 3, 0.01, ext_rng);
  CHECK(wide.cfg.laugh_dim == 3);
  CHECK(wide.p.input.w.cols() == base.p.input.w.cols() + 3);
  // old columns are bit-for-bit copies
  CHECK((wide.p.input.w.leftCols(base.p.input.w.cols()) - base.p.input.w)
            .cwiseAbs()
            .maxCoeff() == 0.0f);
  CHECK(wide.p.input.w.rightCols(3).cwiseAbs().maxCoeff() < 0.1f);
  CHECK(wide.p.input.w.rightCols(3).cwiseAbs().maxCoeff() > 0.0f);

  // zero laughter input reproduces the base forward
  const Index f = 4;
  const nn::DropoutCtx off;
  Rng in_rng(47);
  float worst = 0.0f;
  for (int c = 0; c < 20; ++c) {
    const Index t = 2 + Index(in_rng.uniform_int(6));
    const MatF masked = random_mat(in_rng, f, t).cast<float>();
    const MatF x_t = random_mat(in_rng, f, t).cast<float>();
    std::vector<int> align(static_cast<size_t>(t));
    for (auto& a : align) a = int(in_rng.uniform_int(5));
    const double tt = in_rng.uniform();
    models::AudioCache<float> c0, c1;
    const MatF v0 = models::audio_forward(base, masked, x_t, align, MatF(MatF::Zero(0, t)),
                                          tt, false, c0, off);
    const MatF v1 = models::audio_forward(wide, masked, x_t, align, MatF(MatF::Zero(3, t)),
                                          tt, false, c1, off);
    worst = std::max(worst, (v0 - v1).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-6f);

  CHECK_THROWS_WITH_AS((void)models::extend_laugh_conditioning(wide, 3, 0.01, ext_rng),
                       doctest::Contains("already extended"), std::invalid_argument);
  CHECK_THROWS_AS((void)models::extend_laugh_conditioning(base, 0, 0.01, ext_rng),
                  std::invalid_argument);
}

TEST_CASE("duration model gradients match finite differences") {
  Rng rng(48);
  models::DurationModelConfig cfg;
  cfg.vocab = 5;
  cfg.token_dim = 3;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.embed_dim = 8;
  cfg.ff_dim = 12;
  cfg.dropout = 0.0;
  cfg.max_len = 16;
  auto model = models::init_duration_model<double>(cfg, rng);
  const std::vector<int> tokens{0, 2, 4, 1, 0};
  const std::vector<int> durations{3, 5, 2, 7, 4};
  const std::vector<bool> hidden{false, true, true, false, true};
  const nn::DropoutCtx off;

  models::DurationCache<double> scratch;
  auto loss = [&] {
    const VecD z = models::duration_forward(model, tokens, durations, hidden, scratch, off);
    return models::duration_loss(z, durations, hidden);
  };
  models::DurationCache<double> cache;
  const VecD z = models::duration_forward(model, tokens, durations, hidden, cache, off);
  const VecD dz = models::duration_loss_grad(z, durations, hidden);
  models::DurationModelParams<double> grads = model.p;
  auto gv = models::collect_params(grads);
  for (auto& view : gv) view.map().setZero();
  models::duration_backward(model, cache, dz, grads);
  auto pv = models::collect_params(model.p);
  check_views_fd(pv, gv, loss, 1e-5);
}

TEST_CASE("duration loss scores hidden positions only") {
  VecD pred(3);
  pred << std::log(4.0), std::log(2.0), 1.0;
  const std::vector<int> durations{4, 8, 3};
  const std::vector<bool> hidden{false, true, true};
  const double want = (std::pow(std::log(2.0) - std::log(8.0), 2) +
                       std::pow(1.0 - std::log(3.0), 2)) /
                      2.0;
  CHECK(models::duration_loss(pred, durations, hidden) ==
        doctest::Approx(want).epsilon(1e-12));
  const VecD g = models::duration_loss_grad(pred, durations, hidden);
  CHECK(g(0) == 0.0);
  CHECK(g(1) == doctest::Approx((std::log(2.0) - std::log(8.0)) * 1.0));
  CHECK_THROWS_AS((void)models::duration_loss(pred, durations, {false, false, false}),
                  std::invalid_argument);
}

TEST_CASE("duration decoding floors at one frame") {
  VecD pred(4);
  pred << std::log(3.0), std::log(1.4), -5.0, std::log(6.7);
  const auto d = models::decode_durations(pred);
  CHECK(d == std::vector<int>{3, 1, 1, 7});
}

TEST_CASE("duration forward validates its inputs") {
  Rng rng(49);
  models::DurationModelConfig cfg;
  cfg.vocab = 5;
  cfg.token_dim = 3;
  cfg.layers = 2;
  cfg.heads = 1;
  cfg.embed_dim = 6;
  cfg.ff_dim = 8;
  cfg.max_len = 8;
  auto model = models::init_duration_model<double>(cfg, rng);
  models::DurationCache<double> cache;
  const nn::DropoutCtx off;
  CHECK_THROWS_AS(
      (void)models::duration_forward(model, {}, {}, {}, cache, off), std::invalid_argument);
  CHECK_THROWS_AS((void)models::duration_forward(model, {1, 2}, {3}, {true, false}, cache, off),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)models::duration_forward(model, {1, 9}, {3, 3}, {false, false}, cache,
                                                 off),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)models::duration_forward(model, {1, 2}, {0, 3}, {false, false}, cache,
                                                 off),
                  std::invalid_argument);
  // hidden positions may carry any placeholder duration
  CHECK_NOTHROW((void)models::duration_forward(model, {1, 2}, {0, 3}, {true, false}, cache,
                                               off));
}
