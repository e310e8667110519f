#include "laughflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "laughflow/checkpoint.hpp"
#include "laughflow/corpus_io.hpp"
#include "laughflow/detector.hpp"
#include "laughflow/inference.hpp"
#include "laughflow/plot.hpp"

namespace laughflow::pipeline {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSeedAudioInit = 0x7101u;
constexpr std::uint64_t kSeedAudioPretrain = 0x7102u;
constexpr std::uint64_t kSeedDurationInit = 0x7103u;
constexpr std::uint64_t kSeedDurationTrain = 0x7104u;
constexpr std::uint64_t kSeedExtend = 0x7105u;
constexpr std::uint64_t kSeedFinetune = 0x7106u;
constexpr std::uint64_t kSeedHeldoutBase = 0x9e00'0000u;

void run_indexed(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> cursor{0};
  auto worker = [&] {
    for (int i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Clears (with force) or requires an absent/empty directory.
void ensure_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw std::invalid_argument("output directory " + dir.string() +
                                  " is not empty (pass --force to overwrite)");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

data::Corpus load_corpus_checked(const ExperimentConfig& cfg) {
  const fs::path dir = corpus_dir(cfg);
  if (!fs::exists(dir / "pretrain.bin")) {
    throw std::runtime_error("no corpus at " + dir.string() + "; run synthdata first");
  }
  return data::load_corpus(dir);
}

data::LaughMode mode_for_dim(int laugh_dim, const data::CorpusSpec& spec) {
  if (laugh_dim == data::laugh_dim(data::LaughMode::prob, spec)) return data::LaughMode::prob;
  if (laugh_dim == data::laugh_dim(data::LaughMode::emb, spec)) return data::LaughMode::emb;
  throw std::runtime_error("checkpoint laugh dim " + std::to_string(laugh_dim) +
                           " matches no known representation");
}

const char* laugh_kind_name(GenRequest::Laugh k) {
  switch (k) {
    case GenRequest::Laugh::none: return "none";
    case GenRequest::Laugh::intervals: return "intervals";
    case GenRequest::Laugh::audio: return "audio";
  }
  return "none";
}

GenRequest::Laugh parse_laugh_kind(const std::string& s) {
  if (s == "none") return GenRequest::Laugh::none;
  if (s == "intervals") return GenRequest::Laugh::intervals;
  if (s == "audio") return GenRequest::Laugh::audio;
  throw std::invalid_argument("requests: unknown laughter mode '" + s + "'");
}

void check_id(const std::string& id) {
  if (id.empty()) throw std::invalid_argument("requests: empty id");
  for (char c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') {
      throw std::invalid_argument("requests: id '" + id +
                                  "' may only use letters, digits, '-', '_', '.'");
    }
  }
}

const data::SpeakerProfile& profile_for(const data::Split& split, int speaker_id) {
  for (const auto& sp : split.speakers) {
    if (sp.id == speaker_id) return sp;
  }
  throw std::runtime_error("no speaker profile with id " + std::to_string(speaker_id));
}

json manifest_base(const ExperimentConfig& cfg, const char* command) {
  return json{{"command", command},
              {"config", config_to_json(cfg)},
              {"corpus_hash", hex64(data::corpus_hash(corpus_dir(cfg)))}};
}

}  // namespace

void write_json_atomic(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("short write to " + path.string());
  }
  fs::rename(tmp, path);
}

fs::path corpus_dir(const ExperimentConfig& cfg) { return fs::path(cfg.out) / "corpus"; }

fs::path pretrain_dir(const ExperimentConfig& cfg) { return fs::path(cfg.out) / "pretrain"; }

std::string finetune_run_name(data::LaughMode mode, double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-r%03d", data::to_string(mode).c_str(),
                int(std::lround(ratio * 100)));
  return buf;
}

fs::path finetune_dir(const ExperimentConfig& cfg, data::LaughMode mode, double ratio) {
  return fs::path(cfg.out) / "finetune" / finetune_run_name(mode, ratio);
}

std::pair<const data::Split*, int> resolve_utt(const data::Corpus& corpus,
                                               const std::string& id) {
  const auto slash = id.find('/');
  const data::Split* split = nullptr;
  if (slash != std::string::npos) {
    const std::string name = id.substr(0, slash);
    if (name == "pretrain") split = &corpus.pretrain;
    if (name == "finetune") split = &corpus.finetune;
    if (name == "heldout") split = &corpus.heldout;
  }
  int index = -1;
  if (split != nullptr) {
    try {
      size_t used = 0;
      const std::string tail = id.substr(slash + 1);
      index = std::stoi(tail, &used);
      if (used != tail.size()) index = -1;
    } catch (const std::exception&) {
      index = -1;
    }
  }
  if (split == nullptr || index < 0 || index >= int(split->utts.size())) {
    throw std::invalid_argument(
        "unknown utterance id '" + id + "'; available: pretrain/0-" +
        std::to_string(corpus.pretrain.utts.size() - 1) + ", finetune/0-" +
        std::to_string(corpus.finetune.utts.size() - 1) + ", heldout/0-" +
        std::to_string(corpus.heldout.utts.size() - 1));
  }
  return {split, index};
}

json requests_to_json(const std::vector<GenRequest>& requests) {
  json arr = json::array();
  for (const auto& r : requests) {
    json laugh{{"mode", laugh_kind_name(r.laugh)}};
    if (r.laugh == GenRequest::Laugh::intervals) {
      json ivals = json::array();
      for (auto [s, e] : r.intervals) ivals.push_back(json::array({s, e}));
      laugh["intervals"] = ivals;
    } else if (r.laugh == GenRequest::Laugh::audio) {
      laugh["target"] = r.target;
    }
    json req{{"id", r.id}, {"speaker", r.speaker}, {"laughter", laugh}, {"seed", r.seed}};
    if (!r.tokens.empty()) req["tokens"] = r.tokens;
    arr.push_back(req);
  }
  return json{{"requests", arr}};
}

std::vector<GenRequest> requests_from_json(const json& j) {
  if (!j.is_object() || !j.contains("requests") || !j.at("requests").is_array()) {
    throw std::invalid_argument("requests: expected an object with a 'requests' array");
  }
  std::vector<GenRequest> out;
  std::set<std::string> seen;
  for (const auto& req : j.at("requests")) {
    for (const auto& [key, value] : req.items()) {
      if (key != "id" && key != "speaker" && key != "tokens" && key != "laughter" &&
          key != "seed") {
        throw std::invalid_argument("requests: unknown key '" + key + "'");
      }
    }
    GenRequest r;
    r.id = req.at("id").get<std::string>();
    check_id(r.id);
    if (!seen.insert(r.id).second) {
      throw std::invalid_argument("requests: duplicate id '" + r.id + "'");
    }
    r.speaker = req.at("speaker").get<std::string>();
    if (req.contains("tokens")) r.tokens = req.at("tokens").get<std::vector<int>>();
    if (req.contains("seed")) r.seed = req.at("seed").get<std::uint64_t>();
    if (req.contains("laughter")) {
      const json& laugh = req.at("laughter");
      for (const auto& [key, value] : laugh.items()) {
        if (key != "mode" && key != "intervals" && key != "target") {
          throw std::invalid_argument("requests: unknown laughter key '" + key + "'");
        }
      }
      r.laugh = parse_laugh_kind(laugh.at("mode").get<std::string>());
      if (r.laugh == GenRequest::Laugh::intervals) {
        for (const auto& pair : laugh.at("intervals")) {
          if (!pair.is_array() || pair.size() != 2) {
            throw std::invalid_argument("requests: intervals must be [start, end) pairs");
          }
          r.intervals.emplace_back(pair[0].get<int>(), pair[1].get<int>());
        }
        if (r.intervals.empty()) {
          throw std::invalid_argument("requests: interval mode needs at least one interval");
        }
      } else if (r.laugh == GenRequest::Laugh::audio) {
        r.target = laugh.at("target").get<std::string>();
      }
    }
    if (r.laugh != GenRequest::Laugh::audio && r.tokens.empty()) {
      throw std::invalid_argument("requests: '" + r.id +
                                  "' needs explicit tokens without an audio target");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GenRequest> load_requests(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("requests: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("requests: " + path.string() + ": " + e.what());
  }
  return requests_from_json(j);
}

std::vector<GenRequest> heldout_requests(const data::Corpus& corpus) {
  const auto& split = corpus.heldout;
  std::vector<GenRequest> out;
  for (const auto& sp : split.speakers) {
    std::vector<int> owned, neutral;
    for (int i = 0; i < int(split.utts.size()); ++i) {
      if (split.utts[size_t(i)].speaker != sp.id) continue;
      owned.push_back(i);
      if (split.utts[size_t(i)].events.empty()) neutral.push_back(i);
    }
    int next = 0;
    for (int target : owned) {
      // round-robin over the speaker's neutral utterances, never self-prompting
      int prompt = -1;
      for (size_t tries = 0; tries < neutral.size(); ++tries) {
        const int cand = neutral[size_t(next % int(neutral.size()))];
        ++next;
        if (cand != target) {
          prompt = cand;
          break;
        }
      }
      if (prompt < 0) continue;
      GenRequest r;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "heldout-%03d", target);
      r.id = buf;
      r.speaker = "heldout/" + std::to_string(prompt);
      r.laugh = GenRequest::Laugh::audio;
      r.target = "heldout/" + std::to_string(target);
      r.seed = derive_seed(corpus.seed, kSeedHeldoutBase + std::uint64_t(target));
      out.push_back(std::move(r));
    }
  }
  if (out.empty()) throw std::runtime_error("held-out split yields no prompt/target pairs");
  return out;
}

void cmd_synthdata(const ExperimentConfig& cfg, bool force, int workers) {
  const fs::path dir = corpus_dir(cfg);
  ensure_run_dir(dir, force);
  const data::Corpus corpus = data::build_corpus(cfg.corpus, cfg.seed, workers);
  data::save_corpus(dir, corpus);
  write_json_atomic(dir / "config.json", config_to_json(cfg));
  std::cout << "synthdata: " << corpus.pretrain.utts.size() << "+"
            << corpus.finetune.utts.size() << "+" << corpus.heldout.utts.size()
            << " utterances -> " << dir.string() << "\n";
}

TrainSummary cmd_pretrain(const ExperimentConfig& cfg, bool force) {
  const data::Corpus corpus = load_corpus_checked(cfg);
  const fs::path dir = pretrain_dir(cfg);
  ensure_run_dir(dir, force);
  Stopwatch clock;

  Rng init_rng = Rng::from(cfg.seed, kSeedAudioInit);
  auto audio = models::init_audio_model<float>(cfg.audio_model, init_rng);
  std::ofstream audio_csv(dir / "loss_audio.csv");
  const auto audio_result =
      train::train_audio(audio, corpus, /*finetune_ratio=*/0.0, cfg.mix.laugh_mode, cfg.mask,
                         cfg.pretrain, derive_seed(cfg.seed, kSeedAudioPretrain), &audio_csv);
  ckpt::save(dir / "audio_model", audio);

  Rng dur_rng = Rng::from(cfg.seed, kSeedDurationInit);
  auto duration = models::init_duration_model<float>(cfg.duration_model, dur_rng);
  std::ofstream dur_csv(dir / "loss_duration.csv");
  const auto dur_result =
      train::train_duration(duration, corpus.pretrain, cfg.mask, cfg.duration_train,
                            derive_seed(cfg.seed, kSeedDurationTrain), &dur_csv);
  ckpt::save(dir / "duration_model", duration);

  TrainSummary summary{audio_result, dur_result, clock.seconds(), dir};
  json manifest = manifest_base(cfg, "pretrain");
  manifest["checkpoints"] = {{"audio_model", (dir / "audio_model").string()},
                             {"duration_model", (dir / "duration_model").string()}};
  manifest["wall_seconds"] = summary.wall_seconds;
  manifest["final_losses"] = {{"audio_first_window", audio_result.first_window_loss},
                              {"audio_last_window", audio_result.last_window_loss},
                              {"duration_first_window", dur_result.first_window_loss},
                              {"duration_last_window", dur_result.last_window_loss}};
  write_json_atomic(dir / "manifest.json", manifest);
  std::cout << "pretrain: cfm loss " << audio_result.first_window_loss << " -> "
            << audio_result.last_window_loss << ", duration loss "
            << dur_result.first_window_loss << " -> " << dur_result.last_window_loss << " ("
            << summary.wall_seconds << " s)\n";
  return summary;
}

TrainSummary cmd_finetune(const ExperimentConfig& cfg, const fs::path& base_run,
                          data::LaughMode mode, double ratio, bool force) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw std::invalid_argument("finetune ratio must lie in [0, 1]");
  }
  const data::Corpus corpus = load_corpus_checked(cfg);
  auto audio = ckpt::load_audio_model<float>(base_run / "audio_model");
  const fs::path dir = finetune_dir(cfg, mode, ratio);
  ensure_run_dir(dir, force);
  Stopwatch clock;

  Rng extend_rng = Rng::from(cfg.seed, kSeedExtend);
  auto extended = models::extend_laugh_conditioning(audio, data::laugh_dim(mode, corpus.spec),
                                                    cfg.mix.extend_init_scale, extend_rng);
  std::ofstream audio_csv(dir / "loss_audio.csv");
  const auto audio_result =
      train::train_audio(extended, corpus, ratio, mode, cfg.mask, cfg.finetune,
                         derive_seed(cfg.seed, kSeedFinetune), &audio_csv);
  ckpt::save(dir / "audio_model", extended);
  fs::copy(base_run / "duration_model", dir / "duration_model",
           fs::copy_options::recursive | fs::copy_options::overwrite_existing);

  TrainSummary summary{audio_result, {}, clock.seconds(), dir};
  json manifest = manifest_base(cfg, "finetune");
  manifest["base"] = base_run.string();
  manifest["ratio"] = ratio;
  manifest["laugh_mode"] = data::to_string(mode);
  manifest["checkpoints"] = {{"audio_model", (dir / "audio_model").string()},
                             {"duration_model", (dir / "duration_model").string()}};
  manifest["wall_seconds"] = summary.wall_seconds;
  manifest["final_losses"] = {{"audio_first_window", audio_result.first_window_loss},
                              {"audio_last_window", audio_result.last_window_loss}};
  write_json_atomic(dir / "manifest.json", manifest);
  std::cout << "finetune " << finetune_run_name(mode, ratio) << ": cfm loss "
            << audio_result.first_window_loss << " -> " << audio_result.last_window_loss
            << " (" << summary.wall_seconds << " s)\n";
  return summary;
}

void cmd_generate(const ExperimentConfig& cfg, const fs::path& ckpt_run,
                  const std::vector<GenRequest>& requests, const fs::path& gen_dir,
                  bool force, int workers) {
  if (requests.empty()) throw std::invalid_argument("generate: no requests");
  const data::Corpus corpus = load_corpus_checked(cfg);
  const auto audio = ckpt::load_audio_model<float>(ckpt_run / "audio_model");
  const auto duration = ckpt::load_duration_model<float>(ckpt_run / "duration_model");
  const data::LaughMode mode = audio.cfg.laugh_dim > 0
                                   ? mode_for_dim(audio.cfg.laugh_dim, corpus.spec)
                                   : cfg.mix.laugh_mode;

  struct Resolved {
    const data::Utterance* speaker = nullptr;
    const data::Utterance* target = nullptr;
    std::vector<int> tokens;
    infer::LaughterPromptSpec laugh;
  };
  std::vector<Resolved> resolved(requests.size());
  std::set<std::string> ids;
  for (size_t i = 0; i < requests.size(); ++i) {
    const auto& req = requests[i];
    check_id(req.id);
    if (!ids.insert(req.id).second) {
      throw std::invalid_argument("generate: duplicate request id '" + req.id + "'");
    }
    auto [spk_split, spk_idx] = resolve_utt(corpus, req.speaker);
    resolved[i].speaker = &spk_split->utts[size_t(spk_idx)];
    if (req.laugh == GenRequest::Laugh::audio) {
      auto [tgt_split, tgt_idx] = resolve_utt(corpus, req.target);
      resolved[i].target = &tgt_split->utts[size_t(tgt_idx)];
      resolved[i].laugh = resolved[i].target;
    } else if (req.laugh == GenRequest::Laugh::intervals) {
      infer::IntervalList ivals;
      ivals.intervals = req.intervals;
      resolved[i].laugh = ivals;
    }
    if (!req.tokens.empty()) {
      resolved[i].tokens = req.tokens;
    } else if (resolved[i].target != nullptr) {
      resolved[i].tokens = resolved[i].target->tokens;
    }
    if (resolved[i].tokens.empty()) {
      throw std::invalid_argument("generate: request '" + req.id + "' has no tokens");
    }
  }

  ensure_run_dir(gen_dir, force);
  write_json_atomic(gen_dir / "requests.json", requests_to_json(requests));
  run_indexed(int(requests.size()), workers, [&](int i) {
    const auto& req = requests[size_t(i)];
    const auto& res = resolved[size_t(i)];
    const auto built =
        infer::build_prompt<float>(*res.speaker, res.tokens, res.laugh, duration, mode,
                                   audio.cfg.laugh_dim, corpus.bank);
    const MatF out = infer::generate<float>(audio, built.bundle, cfg.guidance, req.seed);
    data::save_features(gen_dir / (req.id + ".bin"), out);
    json ivals = json::array();
    for (auto [s, e] : req.intervals) ivals.push_back(json::array({s, e}));
    json sidecar{{"id", req.id},
                 {"speaker", req.speaker},
                 {"speaker_id", res.speaker->speaker},
                 {"laugh", laugh_kind_name(req.laugh)},
                 {"intervals", ivals},
                 {"target", req.target},
                 {"seed", req.seed},
                 {"tokens", built.tokens},
                 {"durations", built.durations},
                 {"frames", out.cols()},
                 {"laugh_dim", audio.cfg.laugh_dim},
                 {"checkpoint", ckpt_run.string()}};
    write_json_atomic(gen_dir / (req.id + ".json"), sidecar);
  });
  std::cout << "generate: " << requests.size() << " items -> " << gen_dir.string() << "\n";
}

EvalOutcome cmd_eval(const ExperimentConfig& cfg, const fs::path& gen_dir,
                     const fs::path& eval_dir, bool force, int workers) {
  if (!fs::exists(gen_dir / "requests.json")) {
    throw std::invalid_argument(gen_dir.string() + " is not a generation directory");
  }
  const data::Corpus corpus = load_corpus_checked(cfg);
  const eval::BurstDetector detector(corpus.bank);
  const auto requests = load_requests(gen_dir / "requests.json");
  if (requests.empty()) throw std::invalid_argument("eval: empty generation directory");

  std::vector<eval::EvalItem> items;
  int skipped = 0;
  for (const auto& req : requests) {
    const fs::path sidecar_path = gen_dir / (req.id + ".json");
    const fs::path features_path = gen_dir / (req.id + ".bin");
    if (!fs::exists(sidecar_path) || !fs::exists(features_path)) {
      std::cerr << "eval: skipping '" << req.id << "' (missing sidecar or features)\n";
      ++skipped;
      continue;
    }
    std::ifstream in(sidecar_path);
    const json sc = json::parse(in);
    eval::EvalItem item;
    item.id = req.id;
    item.generated = data::load_features(features_path);
    const auto tokens = sc.at("tokens").get<std::vector<int>>();
    const auto durations = sc.at("durations").get<std::vector<int>>();
    item.align = data::durations_to_alignment(tokens, durations);
    if (Index(item.align.size()) != item.generated.cols()) {
      throw std::runtime_error("eval: sidecar alignment does not match features for '" +
                               req.id + "'");
    }
    auto [spk_split, spk_idx] = resolve_utt(corpus, sc.at("speaker").get<std::string>());
    item.speaker_envelope =
        profile_for(*spk_split, spk_split->utts[size_t(spk_idx)].speaker).envelope;
    const Index frames = item.generated.cols();
    const std::string laugh = sc.at("laugh").get<std::string>();
    if (laugh == "audio") {
      auto [tgt_split, tgt_idx] = resolve_utt(corpus, sc.at("target").get<std::string>());
      const auto ref = detector.detect(tgt_split->utts[size_t(tgt_idx)].features);
      item.ref_prob = eval::rescale_linear(ref.prob, frames);
      item.ref_emb = eval::rescale_linear(ref.emb, frames);
    } else if (laugh == "intervals") {
      item.ref_prob = VecD::Zero(frames);
      for (const auto& pair : sc.at("intervals")) {
        const int s = pair[0].get<int>(), e = pair[1].get<int>();
        for (int j = s; j < e && j < int(frames); ++j) item.ref_prob(j) = 1.0;
      }
      item.ref_emb = MatD::Zero(detector.bins(), frames);
    } else {
      item.ref_prob = VecD::Zero(frames);
      item.ref_emb = MatD::Zero(detector.bins(), frames);
    }
    items.push_back(std::move(item));
  }
  if (items.empty()) throw std::runtime_error("eval: no evaluable items");

  const auto report = eval::evaluate_run(items, corpus.bank, cfg.eval.sim_weight,
                                         cfg.eval.burst_ceiling, workers);

  ensure_run_dir(eval_dir, force);
  fs::create_directories(eval_dir / "plots");
  json item_rows = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "id,timing,timing_undefined,sim,sim_undefined,token_accuracy,speaker_sim\n";
  for (size_t i = 0; i < report.items.size(); ++i) {
    const auto& m = report.items[i];
    item_rows.push_back({{"id", m.id},
                         {"timing", m.timing.value},
                         {"timing_undefined", m.timing.undefined},
                         {"sim", m.sim.value},
                         {"sim_undefined", m.sim.undefined},
                         {"token_accuracy", m.token_accuracy},
                         {"speaker_sim", m.speaker_sim}});
    csv << m.id << ',' << m.timing.value << ',' << (m.timing.undefined ? 1 : 0) << ','
        << m.sim.value << ',' << (m.sim.undefined ? 1 : 0) << ',' << m.token_accuracy << ','
        << m.speaker_sim << '\n';
    plot::trace_plot(eval_dir / "plots" / (m.id + ".png"),
                     {{items[i].ref_prob, 70, 100, 220}, {m.gen_prob, 220, 60, 60}},
                     cfg.eval.plot_px_per_frame);
  }
  json metrics{{"n_evaluated", items.size()},
               {"n_skipped", skipped},
               {"timing_pearson", report.timing_pearson},
               {"timing_undefined", report.timing_undefined},
               {"laughter_sim", report.laughter_sim},
               {"sim_undefined", report.sim_undefined},
               {"token_accuracy", report.token_accuracy},
               {"speaker_sim", report.speaker_sim},
               {"silence_floor", report.silence_floor},
               {"burst_ceiling", report.burst_ceiling},
               {"weight_mode", eval::to_string(report.weight_mode)},
               {"items", item_rows}};
  write_json_atomic(eval_dir / "metrics.json", metrics);
  {
    const fs::path tmp = eval_dir / "metrics.csv.tmp";
    std::ofstream out(tmp, std::ios::trunc);
    out << csv.str();
    if (!out) throw std::runtime_error("eval: cannot write metrics.csv");
    out.close();
    fs::rename(tmp, eval_dir / "metrics.csv");
  }
  std::cout << "eval: timing " << report.timing_pearson << ", sim " << report.laughter_sim
            << ", tokens " << report.token_accuracy << ", style " << report.speaker_sim
            << " over " << items.size() << " items (" << skipped << " skipped) -> "
            << eval_dir.string() << "\n";
  return {report, int(items.size()), skipped, eval_dir};
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, bool force, int workers) {
  const data::Corpus corpus = load_corpus_checked(cfg);
  const auto requests = heldout_requests(corpus);
  const fs::path out(cfg.out);
  std::vector<SweepRow> rows;
  for (const double ratio : {0.25, 0.5, 0.75, 1.0}) {
    const auto summary = cmd_finetune(cfg, pretrain_dir(cfg), cfg.mix.laugh_mode, ratio, force);
    const std::string name = finetune_run_name(cfg.mix.laugh_mode, ratio);
    cmd_generate(cfg, summary.run_dir, requests, out / "generated" / name, force, workers);
    auto outcome = cmd_eval(cfg, out / "generated" / name, out / "eval" / name, force, workers);
    rows.push_back({ratio, summary.run_dir, std::move(outcome)});
  }
  fs::create_directories(out / "sweep");
  json summary = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "ratio,timing_pearson,laughter_sim,token_accuracy,speaker_sim\n";
  for (const auto& row : rows) {
    const auto& rep = row.outcome.report;
    summary.push_back({{"ratio", row.ratio},
                       {"run", row.run_dir.string()},
                       {"timing_pearson", rep.timing_pearson},
                       {"laughter_sim", rep.laughter_sim},
                       {"token_accuracy", rep.token_accuracy},
                       {"speaker_sim", rep.speaker_sim}});
    csv << row.ratio << ',' << rep.timing_pearson << ',' << rep.laughter_sim << ','
        << rep.token_accuracy << ',' << rep.speaker_sim << '\n';
  }
  write_json_atomic(out / "sweep" / "summary.json", json{{"ratios", summary}});
  {
    std::ofstream out_csv(out / "sweep" / "summary.csv", std::ios::trunc);
    out_csv << csv.str();
  }
  return rows;
}

}  // namespace laughflow::pipeline
