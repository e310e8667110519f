#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "laughflow/audio_model.hpp"
#include "laughflow/data.hpp"
#include "laughflow/duration_model.hpp"
#include "laughflow/eval.hpp"
#include "laughflow/inference.hpp"
#include "laughflow/train.hpp"

namespace laughflow::pipeline {

struct EvalConfig {
  eval::SimWeight sim_weight = eval::SimWeight::max_ref_gen;
  double burst_ceiling = 0.5;
  int plot_px_per_frame = 4;
};

struct MixSettings {
  double finetune_ratio = 0.5;
  data::LaughMode laugh_mode = data::LaughMode::emb;
  double extend_init_scale = 0.01;
};

// One experiment = one of these. Every field has a working desk-scale
// default; config files override by section and unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/desk";
  data::CorpusSpec corpus;
  models::AudioModelConfig audio_model;        // laugh_dim fixed at 0 here
  models::DurationModelConfig duration_model;
  train::AudioTrainConfig pretrain;
  train::AudioTrainConfig finetune;
  train::DurationTrainConfig duration_train;
  data::MaskPolicy mask;
  MixSettings mix;
  infer::GuidanceConfig guidance;
  EvalConfig eval;
};

ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Cross-field invariants (model dims track the corpus, warmup fits inside
// the schedule, ratios and rates in range). Throws invalid_argument.
void validate(const ExperimentConfig& cfg);

}  // namespace laughflow::pipeline
