#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "laughflow/corpus_io.hpp"
#include "laughflow/pipeline.hpp"

namespace lf = laughflow;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed = 0;
  bool force = false;
  int workers = 1;
};

lf::pipeline::ExperimentConfig resolve_config(const GlobalArgs& args, bool seed_given) {
  auto cfg = args.config_path.empty() ? lf::pipeline::default_config()
                                      : lf::pipeline::load_config(args.config_path);
  if (seed_given) cfg.seed = args.seed;
  if (!args.out_override.empty()) cfg.out = args.out_override;
  if (const char* env = std::getenv("LAUGHFLOW_OUT"); env != nullptr && *env != '\0') {
    cfg.out = env;
  }
  lf::pipeline::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional flow-matching speech generator with laughter control"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "JSON experiment config")
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", args.seed, "override the config seed");
  app.add_option("--out", args.out_override,
                 "override the config output directory (env LAUGHFLOW_OUT wins)");
  app.add_flag("--force", args.force, "overwrite existing outputs");
  app.add_option("--workers", args.workers, "worker threads where supported")
      ->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synthdata", "synthesize the corpus");
  auto* pretrain = app.add_subcommand("pretrain", "train the base model on neutral speech");
  auto* finetune = app.add_subcommand("finetune", "extend and fine-tune with laughter data");
  auto* generate = app.add_subcommand("generate", "run inference for a request file");
  auto* eval = app.add_subcommand("eval", "score a generation directory");
  auto* sweep = app.add_subcommand("sweep", "fine-tune/evaluate across mix ratios");
  for (auto* sub : {synth, pretrain, finetune, generate, eval, sweep}) sub->fallthrough();

  double ratio = -1.0;
  std::string mode;
  std::string base;
  finetune->add_option("--ratio", ratio, "fine-tune data fraction in [0,1]")
      ->check(CLI::Range(0.0, 1.0));
  finetune->add_option("--mode", mode, "laughter representation: prob or emb");
  finetune->add_option("--base", base, "base run directory (default <out>/pretrain)");

  std::string checkpoint;
  std::string requests_path;
  std::string run_name = "run";
  bool heldout = false;
  generate->add_option("--checkpoint", checkpoint, "run directory holding the models")
      ->required();
  generate->add_option("--requests", requests_path, "request JSON file");
  generate->add_flag("--heldout", heldout, "use the standard held-out prompt/target pairs");
  generate->add_option("--name", run_name, "output name under <out>/generated");

  std::string generated_dir;
  std::string eval_name;
  eval->add_option("--generated", generated_dir, "generation directory to score")->required();
  eval->add_option("--name", eval_name, "output name under <out>/eval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = resolve_config(args, seed_opt->count() > 0);
    if (synth->parsed()) {
      lf::pipeline::cmd_synthdata(cfg, args.force, args.workers);
    } else if (pretrain->parsed()) {
      lf::pipeline::cmd_pretrain(cfg, args.force);
    } else if (finetune->parsed()) {
      const auto laugh_mode = mode.empty() ? cfg.mix.laugh_mode : lf::data::parse_laugh_mode(mode);
      const double r = ratio < 0.0 ? cfg.mix.finetune_ratio : ratio;
      const auto base_run =
          base.empty() ? lf::pipeline::pretrain_dir(cfg) : std::filesystem::path(base);
      lf::pipeline::cmd_finetune(cfg, base_run, laugh_mode, r, args.force);
    } else if (generate->parsed()) {
      if (heldout != requests_path.empty()) {
        throw std::invalid_argument("generate: pass exactly one of --requests or --heldout");
      }
      std::vector<lf::pipeline::GenRequest> reqs;
      if (heldout) {
        const auto corpus = lf::data::load_corpus(lf::pipeline::corpus_dir(cfg));
        reqs = lf::pipeline::heldout_requests(corpus);
      } else {
        reqs = lf::pipeline::load_requests(requests_path);
      }
      lf::pipeline::cmd_generate(cfg, checkpoint, reqs,
                                 std::filesystem::path(cfg.out) / "generated" / run_name,
                                 args.force, args.workers);
    } else if (eval->parsed()) {
      const std::filesystem::path gen_dir(generated_dir);
      const std::string name = eval_name.empty() ? gen_dir.filename().string() : eval_name;
      lf::pipeline::cmd_eval(cfg, gen_dir, std::filesystem::path(cfg.out) / "eval" / name,
                             args.force, args.workers);
    } else if (sweep->parsed()) {
      lf::pipeline::cmd_sweep(cfg, args.force, args.workers);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
