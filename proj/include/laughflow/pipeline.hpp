#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "laughflow/config.hpp"
#include "laughflow/eval.hpp"
#include "laughflow/train.hpp"

namespace laughflow::pipeline {

namespace fs = std::filesystem;

void write_json_atomic(const fs::path& path, const nlohmann::json& j);

fs::path corpus_dir(const ExperimentConfig& cfg);
fs::path pretrain_dir(const ExperimentConfig& cfg);
std::string finetune_run_name(data::LaughMode mode, double ratio);
fs::path finetune_dir(const ExperimentConfig& cfg, data::LaughMode mode, double ratio);

// Utterances are addressed as "split/index" across requests and sidecars.
std::pair<const data::Split*, int> resolve_utt(const data::Corpus& corpus,
                                               const std::string& id);

struct GenRequest {
  std::string id;
  std::string speaker;            // enrollment utterance, "split/index"
  std::vector<int> tokens;        // empty: copied from the audio target
  enum class Laugh { none, intervals, audio } laugh = Laugh::none;
  std::vector<std::pair<int, int>> intervals;  // [start, end) in text frames
  std::string target;             // "split/index" when laugh == audio
  std::uint64_t seed = 0;
};

nlohmann::json requests_to_json(const std::vector<GenRequest>& requests);
std::vector<GenRequest> requests_from_json(const nlohmann::json& j);
std::vector<GenRequest> load_requests(const fs::path& path);

// Standard held-out protocol: every held-out utterance becomes a target in
// audio-example mode, prompted by a neutral utterance of the same speaker.
std::vector<GenRequest> heldout_requests(const data::Corpus& corpus);

struct TrainSummary {
  train::TrainResult audio;
  train::TrainResult duration;
  double wall_seconds = 0.0;
  fs::path run_dir;
};

struct EvalOutcome {
  eval::RunReport report;
  int evaluated = 0;
  int skipped = 0;
  fs::path dir;
};

struct SweepRow {
  double ratio = 0.0;
  fs::path run_dir;
  EvalOutcome outcome;
};

void cmd_synthdata(const ExperimentConfig& cfg, bool force, int workers);
TrainSummary cmd_pretrain(const ExperimentConfig& cfg, bool force);
TrainSummary cmd_finetune(const ExperimentConfig& cfg, const fs::path& base_run,
                          data::LaughMode mode, double ratio, bool force);
void cmd_generate(const ExperimentConfig& cfg, const fs::path& ckpt_run,
                  const std::vector<GenRequest>& requests, const fs::path& gen_dir,
                  bool force, int workers);
EvalOutcome cmd_eval(const ExperimentConfig& cfg, const fs::path& gen_dir,
                     const fs::path& eval_dir, bool force, int workers);
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, bool force, int workers);

}  // namespace laughflow::pipeline
