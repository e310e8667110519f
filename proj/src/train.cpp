#include "laughflow/train.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "laughflow/flow.hpp"

namespace laughflow::train {

namespace {

constexpr std::uint64_t kSaltAudioTrain = 0xa101u;
constexpr std::uint64_t kSaltDurationTrain = 0xd101u;

struct WindowTracker {
  double first_sum = 0.0;
  int first_n = 0;
  double last_sum = 0.0;
  int last_n = 0;
  int window = 50;

  void add(int step, int total, double loss) {
    if (step <= window) {
      first_sum += loss;
      ++first_n;
    }
    if (step > total - window) {
      last_sum += loss;
      ++last_n;
    }
  }
};

}  // namespace

TrainResult train_audio(models::AudioModel<float>& model, const data::Corpus& corpus,
                        double finetune_ratio, data::LaughMode mode,
                        const data::MaskPolicy& mask_policy, const AudioTrainConfig& cfg,
                        std::uint64_t seed, std::ostream* loss_csv) {
  if (cfg.steps < 1 || cfg.batch_frames < 1) {
    throw std::invalid_argument("train_audio: steps and batch_frames must be >= 1");
  }
  if (cfg.warmup_steps > cfg.steps) {
    throw std::invalid_argument("train_audio: warmup exceeds total steps");
  }
  const int laugh_dim = model.cfg.laugh_dim;
  if (laugh_dim > 0 && laugh_dim != data::laugh_dim(mode, corpus.spec)) {
    throw std::invalid_argument("train_audio: model laugh dim does not match representation");
  }
  data::MixSampler sampler(&corpus.pretrain, &corpus.finetune, finetune_ratio);

  auto views = models::collect_params(model.p);
  models::AudioModelParams<float> grads = model.p;
  auto grad_views = models::collect_params(grads);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.peak_lr;
  adam_cfg.warmup_steps = cfg.warmup_steps;
  adam_cfg.total_steps = cfg.steps;
  adam_cfg.final_lr_fraction = cfg.final_lr_fraction;
  adam_cfg.grad_clip = cfg.grad_clip;
  nn::Adam<float> adam(views, adam_cfg);

  Rng rng = Rng::from(seed, kSaltAudioTrain);
  if (loss_csv) (*loss_csv) << "step,loss,lr,grad_norm\n";
  WindowTracker tracker;
  tracker.window = cfg.log_every;
  models::AudioCache<float> cache;

  for (int step = 1; step <= cfg.steps; ++step) {
    // fixed-order batch assembly keeps runs bit-reproducible
    std::vector<data::MixedSample> batch;
    std::vector<Rng> item_rngs;
    int frames = 0;
    while (frames < cfg.batch_frames) {
      batch.push_back(sampler.next(rng));
      item_rngs.push_back(rng.fork());
      frames += int(batch.back().utt->frames());
    }
    for (auto& view : grad_views) view.map().setZero();
    double loss_sum = 0.0;
    for (size_t k = 0; k < batch.size(); ++k) {
      const data::Utterance& utt = *batch[k].utt;
      Rng item_rng = item_rngs[k];
      const auto masked = data::mask(utt.features, mask_policy, item_rng);
      const auto step_draw = flow::sample_flow_step<float>(utt.features, item_rng, cfg.sigma_min);
      MatF laugh(laugh_dim, utt.frames());
      if (laugh_dim > 0) {
        laugh = batch[k].conditioned
                    ? data::laughter_representation(utt, mode, corpus.bank)
                    : MatF::Zero(laugh_dim, utt.frames());
      }
      const bool drop_cond = item_rng.uniform() < cfg.p_uncond;
      nn::DropoutCtx drop{model.cfg.dropout, &item_rng};
      const MatF pred = models::audio_forward(model, masked.masked, step_draw.x_t, utt.align,
                                              laugh, step_draw.t, drop_cond, cache, drop);
      double loss;
      MatF dv;
      if (cfg.masked_loss_only) {
        loss = flow::cfm_loss_masked(pred, step_draw.u_target, masked.indicator);
        dv = flow::cfm_loss_masked_grad(pred, step_draw.u_target, masked.indicator);
      } else {
        loss = flow::cfm_loss(pred, step_draw.u_target);
        dv = flow::cfm_loss_grad(pred, step_draw.u_target);
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_audio: non-finite loss at step " +
                                 std::to_string(step));
      }
      loss_sum += loss;
      dv *= float(1.0 / double(batch.size()));
      models::audio_backward(model, cache, dv, grads);
    }
    const double loss = loss_sum / double(batch.size());
    const auto stats = adam.step(grad_views);
    tracker.add(step, cfg.steps, loss);
    if (loss_csv && (step % cfg.log_every == 0 || step == 1 || step == cfg.steps)) {
      (*loss_csv) << step << ',' << loss << ',' << stats.lr << ',' << stats.grad_norm << '\n';
    }
  }
  TrainResult r;
  r.steps = cfg.steps;
  r.first_window_loss = tracker.first_n > 0 ? tracker.first_sum / tracker.first_n : 0.0;
  r.last_window_loss = tracker.last_n > 0 ? tracker.last_sum / tracker.last_n : 0.0;
  return r;
}

TrainResult train_duration(models::DurationModel<float>& model, const data::Split& split,
                           const data::MaskPolicy& mask_policy,
                           const DurationTrainConfig& cfg, std::uint64_t seed,
                           std::ostream* loss_csv) {
  if (split.utts.empty()) throw std::invalid_argument("train_duration: empty split");
  if (cfg.warmup_steps > cfg.steps) {
    throw std::invalid_argument("train_duration: warmup exceeds total steps");
  }
  auto views = models::collect_params(model.p);
  models::DurationModelParams<float> grads = model.p;
  auto grad_views = models::collect_params(grads);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.peak_lr;
  adam_cfg.warmup_steps = cfg.warmup_steps;
  adam_cfg.total_steps = cfg.steps;
  adam_cfg.final_lr_fraction = cfg.final_lr_fraction;
  adam_cfg.grad_clip = cfg.grad_clip;
  nn::Adam<float> adam(views, adam_cfg);

  Rng rng = Rng::from(seed, kSaltDurationTrain);
  if (loss_csv) (*loss_csv) << "step,loss,lr,grad_norm\n";
  WindowTracker tracker;
  tracker.window = cfg.log_every;
  models::DurationCache<float> cache;

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<const data::Utterance*> batch;
    std::vector<Rng> item_rngs;
    int positions = 0;
    while (positions < cfg.batch_positions) {
      batch.push_back(&split.utts[rng.uniform_int(split.utts.size())]);
      item_rngs.push_back(rng.fork());
      positions += int(batch.back()->tokens.size());
    }
    for (auto& view : grad_views) view.map().setZero();
    double loss_sum = 0.0;
    for (size_t k = 0; k < batch.size(); ++k) {
      const data::Utterance& utt = *batch[k];
      Rng item_rng = item_rngs[k];
      const auto hidden = data::mask_positions(int(utt.tokens.size()), mask_policy, item_rng);
      nn::DropoutCtx drop{model.cfg.dropout, &item_rng};
      const VecF z =
          models::duration_forward(model, utt.tokens, utt.durations, hidden, cache, drop);
      const double loss = models::duration_loss(z, utt.durations, hidden);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_duration: non-finite loss at step " +
                                 std::to_string(step));
      }
      loss_sum += loss;
      VecF dz = models::duration_loss_grad(z, utt.durations, hidden);
      dz *= float(1.0 / double(batch.size()));
      models::duration_backward(model, cache, dz, grads);
    }
    const double loss = loss_sum / double(batch.size());
    const auto stats = adam.step(grad_views);
    tracker.add(step, cfg.steps, loss);
    if (loss_csv && (step % cfg.log_every == 0 || step == 1 || step == cfg.steps)) {
      (*loss_csv) << step << ',' << loss << ',' << stats.lr << ',' << stats.grad_norm << '\n';
    }
  }
  TrainResult r;
  r.steps = cfg.steps;
  r.first_window_loss = tracker.first_n > 0 ? tracker.first_sum / tracker.first_n : 0.0;
  r.last_window_loss = tracker.last_n > 0 ? tracker.last_sum / tracker.last_n : 0.0;
  return r;
}

}  // namespace laughflow::train
