#include "laughflow/config.hpp"

#include <fstream>
#include <stdexcept>

#include "laughflow/checkpoint.hpp"
#include "laughflow/corpus_io.hpp"

namespace laughflow::pipeline {

using nlohmann::json;

namespace {

json audio_train_to_json(const train::AudioTrainConfig& c) {
  return json{{"steps", c.steps},
              {"batch_frames", c.batch_frames},
              {"peak_lr", c.peak_lr},
              {"warmup_steps", c.warmup_steps},
              {"final_lr_fraction", c.final_lr_fraction},
              {"grad_clip", c.grad_clip},
              {"sigma_min", c.sigma_min},
              {"p_uncond", c.p_uncond},
              {"masked_loss_only", c.masked_loss_only},
              {"log_every", c.log_every}};
}

train::AudioTrainConfig audio_train_from_json(const json& j) {
  train::AudioTrainConfig c;
  c.steps = j.at("steps").get<int>();
  c.batch_frames = j.at("batch_frames").get<int>();
  c.peak_lr = j.at("peak_lr").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int>();
  c.final_lr_fraction = j.at("final_lr_fraction").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.sigma_min = j.at("sigma_min").get<double>();
  c.p_uncond = j.at("p_uncond").get<double>();
  c.masked_loss_only = j.at("masked_loss_only").get<bool>();
  c.log_every = j.at("log_every").get<int>();
  return c;
}

json duration_train_to_json(const train::DurationTrainConfig& c) {
  return json{{"steps", c.steps},
              {"batch_positions", c.batch_positions},
              {"peak_lr", c.peak_lr},
              {"warmup_steps", c.warmup_steps},
              {"final_lr_fraction", c.final_lr_fraction},
              {"grad_clip", c.grad_clip},
              {"log_every", c.log_every}};
}

train::DurationTrainConfig duration_train_from_json(const json& j) {
  train::DurationTrainConfig c;
  c.steps = j.at("steps").get<int>();
  c.batch_positions = j.at("batch_positions").get<int>();
  c.peak_lr = j.at("peak_lr").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int>();
  c.final_lr_fraction = j.at("final_lr_fraction").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.log_every = j.at("log_every").get<int>();
  return c;
}

json mask_to_json(const data::MaskPolicy& m) {
  return json{{"p_full", m.p_full}, {"span_min", m.span_min}, {"span_max", m.span_max}};
}

data::MaskPolicy mask_from_json(const json& j) {
  data::MaskPolicy m;
  m.p_full = j.at("p_full").get<double>();
  m.span_min = j.at("span_min").get<double>();
  m.span_max = j.at("span_max").get<double>();
  return m;
}

json mix_to_json(const MixSettings& m) {
  return json{{"finetune_ratio", m.finetune_ratio},
              {"laugh_mode", data::to_string(m.laugh_mode)},
              {"extend_init_scale", m.extend_init_scale}};
}

MixSettings mix_from_json(const json& j) {
  MixSettings m;
  m.finetune_ratio = j.at("finetune_ratio").get<double>();
  m.laugh_mode = data::parse_laugh_mode(j.at("laugh_mode").get<std::string>());
  m.extend_init_scale = j.at("extend_init_scale").get<double>();
  return m;
}

json guidance_to_json(const infer::GuidanceConfig& g) {
  return json{{"alpha", g.alpha}, {"nfe", g.nfe}, {"method", infer::to_string(g.method)}};
}

infer::GuidanceConfig guidance_from_json(const json& j) {
  infer::GuidanceConfig g;
  g.alpha = j.at("alpha").get<double>();
  g.nfe = j.at("nfe").get<int>();
  g.method = infer::parse_ode_method(j.at("method").get<std::string>());
  return g;
}

json eval_to_json(const EvalConfig& e) {
  return json{{"sim_weight", eval::to_string(e.sim_weight)},
              {"burst_ceiling", e.burst_ceiling},
              {"plot_px_per_frame", e.plot_px_per_frame}};
}

EvalConfig eval_from_json(const json& j) {
  EvalConfig e;
  e.sim_weight = eval::parse_sim_weight(j.at("sim_weight").get<std::string>());
  e.burst_ceiling = j.at("burst_ceiling").get<double>();
  e.plot_px_per_frame = j.at("plot_px_per_frame").get<int>();
  return e;
}

// Overlay the user section onto the full default echo so partial configs
// work while unknown keys still fail loudly.
json merge_section(const json& defaults, const json& user, const std::string& section) {
  if (!user.is_object()) {
    throw std::invalid_argument("config: section '" + section + "' must be an object");
  }
  json merged = defaults;
  for (const auto& [key, value] : user.items()) {
    if (!merged.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in section '" + section +
                                  "'");
    }
    merged[key] = value;
  }
  return merged;
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.finetune.steps = 1200;
  cfg.finetune.warmup_steps = 60;
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json audio = ckpt::to_json(cfg.audio_model);
  audio.erase("laugh_dim");  // derived from mix.laugh_mode at fine-tune time
  return json{{"seed", cfg.seed},
              {"out", cfg.out},
              {"corpus", data::corpus_spec_to_json(cfg.corpus)},
              {"audio_model", audio},
              {"duration_model", ckpt::to_json(cfg.duration_model)},
              {"pretrain", audio_train_to_json(cfg.pretrain)},
              {"finetune", audio_train_to_json(cfg.finetune)},
              {"duration_train", duration_train_to_json(cfg.duration_train)},
              {"mask", mask_to_json(cfg.mask)},
              {"mix", mix_to_json(cfg.mix)},
              {"guidance", guidance_to_json(cfg.guidance)},
              {"eval", eval_to_json(cfg.eval)}};
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  const ExperimentConfig defaults = default_config();
  const json base = config_to_json(defaults);
  for (const auto& [key, value] : j.items()) {
    if (!base.contains(key)) {
      throw std::invalid_argument("config: unknown top-level key '" + key + "'");
    }
  }
  ExperimentConfig cfg = defaults;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
  if (j.contains("corpus")) {
    cfg.corpus = data::corpus_spec_from_json(
        merge_section(base.at("corpus"), j.at("corpus"), "corpus"));
  }
  if (j.contains("audio_model")) {
    json merged = merge_section(base.at("audio_model"), j.at("audio_model"), "audio_model");
    merged["laugh_dim"] = 0;
    cfg.audio_model = ckpt::audio_config_from_json(merged);
  }
  if (j.contains("duration_model")) {
    cfg.duration_model = ckpt::duration_config_from_json(
        merge_section(base.at("duration_model"), j.at("duration_model"), "duration_model"));
  }
  if (j.contains("pretrain")) {
    cfg.pretrain =
        audio_train_from_json(merge_section(base.at("pretrain"), j.at("pretrain"), "pretrain"));
  }
  if (j.contains("finetune")) {
    cfg.finetune =
        audio_train_from_json(merge_section(base.at("finetune"), j.at("finetune"), "finetune"));
  }
  if (j.contains("duration_train")) {
    cfg.duration_train = duration_train_from_json(
        merge_section(base.at("duration_train"), j.at("duration_train"), "duration_train"));
  }
  if (j.contains("mask")) {
    cfg.mask = mask_from_json(merge_section(base.at("mask"), j.at("mask"), "mask"));
  }
  if (j.contains("mix")) {
    cfg.mix = mix_from_json(merge_section(base.at("mix"), j.at("mix"), "mix"));
  }
  if (j.contains("guidance")) {
    cfg.guidance =
        guidance_from_json(merge_section(base.at("guidance"), j.at("guidance"), "guidance"));
  }
  if (j.contains("eval")) {
    cfg.eval = eval_from_json(merge_section(base.at("eval"), j.at("eval"), "eval"));
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void validate(const ExperimentConfig& cfg) {
  const auto& c = cfg.corpus;
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (cfg.audio_model.laugh_dim != 0) fail("audio_model.laugh_dim must start at 0");
  if (cfg.audio_model.feature_dim != c.feature_dim) {
    fail("audio_model.feature_dim must equal corpus.feature_dim");
  }
  if (cfg.audio_model.vocab != c.vocab || cfg.duration_model.vocab != c.vocab) {
    fail("model vocab must equal corpus.vocab");
  }
  if (cfg.audio_model.embed_dim % cfg.audio_model.heads != 0 ||
      cfg.duration_model.embed_dim % cfg.duration_model.heads != 0) {
    fail("embed_dim must be divisible by heads");
  }
  if (cfg.audio_model.layers < 2 || cfg.audio_model.layers % 2 != 0) {
    fail("audio_model.layers must be even and >= 2 for the skip topology");
  }
  for (const auto* t : {&cfg.pretrain, &cfg.finetune}) {
    if (t->steps < 1 || t->batch_frames < 1) fail("train steps/batch_frames must be >= 1");
    if (t->warmup_steps > t->steps) fail("warmup_steps exceeds steps");
    if (t->peak_lr <= 0) fail("peak_lr must be positive");
    if (t->p_uncond < 0 || t->p_uncond > 1) fail("p_uncond must lie in [0, 1]");
    if (t->sigma_min <= 0 || t->sigma_min >= 1) fail("sigma_min must lie in (0, 1)");
  }
  if (cfg.duration_train.warmup_steps > cfg.duration_train.steps) {
    fail("duration_train warmup_steps exceeds steps");
  }
  if (cfg.mask.p_full < 0 || cfg.mask.p_full > 1) fail("mask.p_full must lie in [0, 1]");
  if (cfg.mask.span_min <= 0 || cfg.mask.span_max > 1 ||
      cfg.mask.span_min > cfg.mask.span_max) {
    fail("mask span bounds must satisfy 0 < span_min <= span_max <= 1");
  }
  if (cfg.mix.finetune_ratio < 0 || cfg.mix.finetune_ratio > 1) {
    fail("mix.finetune_ratio must lie in [0, 1]");
  }
  if (cfg.mix.extend_init_scale <= 0) fail("mix.extend_init_scale must be positive");
  if (cfg.guidance.alpha < 0) fail("guidance.alpha must be >= 0");
  if (cfg.guidance.nfe < 1) fail("guidance.nfe must be >= 1");
  if (cfg.guidance.method == infer::GuidanceConfig::Method::midpoint &&
      cfg.guidance.nfe % 2 != 0) {
    fail("midpoint integration needs an even nfe");
  }
  if (cfg.eval.burst_ceiling <= 0 || cfg.eval.burst_ceiling > 1) {
    fail("eval.burst_ceiling must lie in (0, 1]");
  }
  if (cfg.eval.plot_px_per_frame < 1) fail("eval.plot_px_per_frame must be >= 1");
  if (c.feature_dim < 2 || c.vocab < 2) fail("corpus needs feature_dim >= 2 and vocab >= 2");
  if (c.pretrain_utts < 1 || c.finetune_utts < 1 || c.heldout_utts < 1) {
    fail("corpus split sizes must be >= 1");
  }
  if (c.pretrain_speakers < 1 || c.finetune_speakers < 1 || c.heldout_speakers < 1) {
    fail("corpus speaker counts must be >= 1");
  }
  if (c.event_fraction < 0 || c.event_fraction > 1) {
    fail("corpus.event_fraction must lie in [0, 1]");
  }
  if (c.rate_bins < 1 || c.rate_min <= 0 || c.rate_max <= c.rate_min || c.rate_max > 0.5) {
    fail("corpus rate grid must satisfy 0 < rate_min < rate_max <= 0.5");
  }
  if (c.intensity_min <= 0 || c.intensity_max > 1 || c.intensity_min > c.intensity_max) {
    fail("corpus intensity bounds must satisfy 0 < min <= max <= 1");
  }
  if (c.event_len_min < 4 || c.event_len_max < c.event_len_min) {
    fail("corpus event length bounds must satisfy 4 <= min <= max");
  }
}

}  // namespace laughflow::pipeline
