#pragma once

#include <cstdint>
#include <ostream>

#include "laughflow/audio_model.hpp"
#include "laughflow/data.hpp"
#include "laughflow/duration_model.hpp"
#include "laughflow/flow.hpp"
#include "laughflow/optimizer.hpp"

namespace laughflow::train {

struct AudioTrainConfig {
  int steps = 6000;
  int batch_frames = 1024;
  double peak_lr = 3e-4;
  int warmup_steps = 600;
  double final_lr_fraction = 0.1;
  double grad_clip = 1.0;
  double sigma_min = flow::kDefaultSigmaMin;
  double p_uncond = 0.15;  // conditioning-dropout rate feeding the guidance branch
  bool masked_loss_only = true;  // regress only frames the mask hid; context frames leak x1 otherwise
  int log_every = 50;
};

struct DurationTrainConfig {
  int steps = 2500;
  int batch_positions = 512;
  double peak_lr = 1e-3;
  int warmup_steps = 100;
  double final_lr_fraction = 0.1;
  double grad_clip = 1.0;
  int log_every = 50;
};

struct TrainResult {
  double first_window_loss = 0.0;  // mean over the first log window
  double last_window_loss = 0.0;
  int steps = 0;
};

// Masked-infilling CFM training. `mode` selects the laughter representation
// when the model is extended; laugh_dim 0 trains the base model. Pretraining
// is the finetune_ratio = 0 case on matching streams.
TrainResult train_audio(models::AudioModel<float>& model, const data::Corpus& corpus,
                        double finetune_ratio, data::LaughMode mode,
                        const data::MaskPolicy& mask_policy, const AudioTrainConfig& cfg,
                        std::uint64_t seed, std::ostream* loss_csv);

TrainResult train_duration(models::DurationModel<float>& model, const data::Split& split,
                           const data::MaskPolicy& mask_policy,
                           const DurationTrainConfig& cfg, std::uint64_t seed,
                           std::ostream* loss_csv);

}  // namespace laughflow::train
