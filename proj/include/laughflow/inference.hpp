#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "laughflow/audio_model.hpp"
#include "laughflow/data.hpp"
#include "laughflow/duration_model.hpp"
#include "laughflow/flow.hpp"

namespace laughflow::infer {

struct GuidanceConfig {
  double alpha = 1.0;
  int nfe = 32;  // combined-field evaluations; each costs two network calls
  enum class Method { euler, midpoint } method = Method::euler;
};

GuidanceConfig::Method parse_ode_method(const std::string& s);
std::string to_string(GuidanceConfig::Method m);

// Largest-remainder rescaling of token durations to an exact frame budget.
// Shrinking keeps every token at >= 1 frame; growing appends trailing
// silence instead of stretching tokens.
std::vector<int> fit_durations(const std::vector<int>& durations, int t_target);

// Full fitting per the inference recipe: returns (tokens', durations') where
// a silence token may be appended in the padding branch.
std::pair<std::vector<int>, std::vector<int>> fit_durations_to_target(
    const std::vector<int>& tokens, const std::vector<int>& durations, int t_target);

struct IntervalList {
  std::vector<std::pair<int, int>> intervals;  // [start, end) in text-region frames
};

// none / interval control / audio example
using LaughterPromptSpec =
    std::variant<std::monostate, IntervalList, const data::Utterance*>;

struct PromptBundle {
  MatF features;           // F x (T_spk + T_text), zeros over the text region
  std::vector<int> align;  // length T_spk + T_text
  MatF laugh;              // laugh_dim x (T_spk + T_text)
  Index gen_start = 0;     // = T_spk
};

struct BuiltPrompt {
  PromptBundle bundle;
  std::vector<int> tokens;     // text tokens actually spoken (after fitting)
  std::vector<int> durations;  // per-token frames used
};

template <class S>
BuiltPrompt build_prompt(const data::Utterance& speaker_prompt,
                         const std::vector<int>& text_tokens,
                         const LaughterPromptSpec& laughter,
                         const models::DurationModel<S>& duration_model,
                         data::LaughMode mode, int laugh_dim, const data::TokenBank& bank);

template <class S>
Mat<S> generate(const models::AudioModel<S>& model, const PromptBundle& bundle,
                const GuidanceConfig& guidance, std::uint64_t seed);

// ---------------------------------------------------------------------------

inline GuidanceConfig::Method parse_ode_method(const std::string& s) {
  if (s == "euler") return GuidanceConfig::Method::euler;
  if (s == "midpoint") return GuidanceConfig::Method::midpoint;
  throw std::invalid_argument("unknown ode method '" + s + "'");
}

inline std::string to_string(GuidanceConfig::Method m) {
  return m == GuidanceConfig::Method::euler ? "euler" : "midpoint";
}

inline std::vector<int> fit_durations(const std::vector<int>& durations, int t_target) {
  const int n = int(durations.size());
  if (n == 0) throw std::invalid_argument("fit_durations: empty durations");
  if (t_target < n) {
    throw std::invalid_argument("fit_durations: target " + std::to_string(t_target) +
                                " frames cannot hold " + std::to_string(n) + " tokens");
  }
  long long total = 0;
  for (int d : durations) {
    if (d < 1) throw std::invalid_argument("fit_durations: durations must be >= 1");
    total += d;
  }
  if (total <= t_target) return durations;
  const double scale = double(t_target) / double(total);
  std::vector<int> fitted(static_cast<size_t>(n));
  std::vector<std::pair<double, int>> remainders(static_cast<size_t>(n));
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double scaled = durations[size_t(i)] * scale;
    fitted[size_t(i)] = int(std::floor(scaled));
    remainders[size_t(i)] = {scaled - std::floor(scaled), i};
    assigned += fitted[size_t(i)];
  }
  // hand out the leftover frames by largest fractional remainder, earliest
  // token on ties
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < t_target - assigned; ++k) {
    ++fitted[size_t(remainders[size_t(k % n)].second)];
  }
  // floors can zero out short tokens; restore them from the longest ones
  for (int i = 0; i < n; ++i) {
    while (fitted[size_t(i)] < 1) {
      int donor = -1;
      for (int j = 0; j < n; ++j) {
        if (fitted[size_t(j)] > 1 && (donor < 0 || fitted[size_t(j)] > fitted[size_t(donor)])) {
          donor = j;
        }
      }
      if (donor < 0) throw std::invalid_argument("fit_durations: target too small");
      --fitted[size_t(donor)];
      ++fitted[size_t(i)];
    }
  }
  return fitted;
}

inline std::pair<std::vector<int>, std::vector<int>> fit_durations_to_target(
    const std::vector<int>& tokens, const std::vector<int>& durations, int t_target) {
  if (tokens.size() != durations.size()) {
    throw std::invalid_argument("fit_durations_to_target: length mismatch");
  }
  long long total = 0;
  for (int d : durations) total += d;
  if (total < t_target) {
    auto toks = tokens;
    auto durs = durations;
    toks.push_back(0);  // trailing silence absorbs the shortfall
    durs.push_back(int(t_target - total));
    return {std::move(toks), std::move(durs)};
  }
  return {tokens, fit_durations(durations, t_target)};
}

template <class S>
BuiltPrompt build_prompt(const data::Utterance& speaker_prompt,
                         const std::vector<int>& text_tokens,
                         const LaughterPromptSpec& laughter,
                         const models::DurationModel<S>& duration_model,
                         data::LaughMode mode, int laugh_dim, const data::TokenBank& bank) {
  if (text_tokens.empty()) throw std::invalid_argument("build_prompt: empty text tokens");
  const Index f = speaker_prompt.features.rows();
  const Index t_spk = speaker_prompt.frames();

  // predicted token durations, conditioned on the speaker prompt's known ones
  std::vector<int> tokens = speaker_prompt.tokens;
  std::vector<int> durations = speaker_prompt.durations;
  std::vector<bool> hidden(tokens.size(), false);
  for (int tok : text_tokens) {
    tokens.push_back(tok);
    durations.push_back(0);
    hidden.push_back(true);
  }
  models::DurationCache<S> cache;
  const Vec<S> z =
      models::duration_forward(duration_model, tokens, durations, hidden, cache, {});
  std::vector<int> predicted;
  for (size_t i = speaker_prompt.tokens.size(); i < tokens.size(); ++i) {
    predicted.push_back(std::max(1, int(std::lround(std::exp(double(z(Index(i))))))));
  }

  std::vector<int> text_toks = text_tokens;
  std::vector<int> text_durs = predicted;
  if (const auto* audio = std::get_if<const data::Utterance*>(&laughter)) {
    std::tie(text_toks, text_durs) =
        fit_durations_to_target(text_tokens, predicted, int((*audio)->frames()));
  }
  Index t_text = 0;
  for (int d : text_durs) t_text += d;

  BuiltPrompt built;
  built.tokens = text_toks;
  built.durations = text_durs;
  PromptBundle& b = built.bundle;
  b.gen_start = t_spk;
  b.features = MatF::Zero(f, t_spk + t_text);
  b.features.leftCols(t_spk) = speaker_prompt.features;
  b.align.assign(speaker_prompt.align.begin(), speaker_prompt.align.end());
  const auto text_align = data::durations_to_alignment(text_toks, text_durs);
  b.align.insert(b.align.end(), text_align.begin(), text_align.end());
  b.laugh = MatF::Zero(laugh_dim, t_spk + t_text);
  if (laugh_dim > 0) {
    const MatF spk_rep = data::laughter_representation(speaker_prompt, mode, bank);
    if (spk_rep.rows() != laugh_dim) {
      throw std::invalid_argument("build_prompt: representation dim does not match model");
    }
    b.laugh.leftCols(t_spk) = spk_rep;
  }
  if (const auto* ivals = std::get_if<IntervalList>(&laughter)) {
    if (laugh_dim != 1) {
      throw std::invalid_argument(
          "build_prompt: interval control needs a probability-mode model (laugh dim 1)");
    }
    for (auto [s, e] : ivals->intervals) {
      if (s < 0 || e <= s || Index(e) > t_text) {
        throw std::invalid_argument("build_prompt: interval outside the text region");
      }
      for (int j = s; j < e; ++j) b.laugh(0, t_spk + j) = 1.0f;
    }
  } else if (const auto* audio = std::get_if<const data::Utterance*>(&laughter)) {
    // an unextended model still uses the example for length pairing
    if (laugh_dim > 0) {
      const MatF rep = data::laughter_representation(**audio, mode, bank);
      if (rep.rows() != laugh_dim) {
        throw std::invalid_argument("build_prompt: representation dim does not match model");
      }
      if (rep.cols() != t_text) {
        throw std::invalid_argument("build_prompt: laughter prompt length mismatch");
      }
      b.laugh.rightCols(t_text) = rep;
    }
  }
  return built;
}

inline constexpr std::uint64_t kGenSalt = 0x6e01u;

template <class S>
Mat<S> generate(const models::AudioModel<S>& model, const PromptBundle& bundle,
                const GuidanceConfig& guidance, std::uint64_t seed) {
  const Index f = model.cfg.feature_dim;
  const Index t_total = bundle.features.cols();
  if (bundle.features.rows() != f || Index(bundle.align.size()) != t_total ||
      bundle.laugh.rows() != model.cfg.laugh_dim) {
    throw std::invalid_argument("generate: bundle does not match model dimensions");
  }
  if (bundle.gen_start < 0 || bundle.gen_start > t_total) {
    throw std::invalid_argument("generate: gen_start outside bundle");
  }
  Rng rng = Rng::from(seed, kGenSalt);
  Mat<S> x0(f, t_total);
  for (Index j = 0; j < t_total; ++j) {
    for (Index i = 0; i < f; ++i) x0(i, j) = S(rng.normal());
  }
  const Mat<S> masked = bundle.features.template cast<S>();
  const Mat<S> laugh = bundle.laugh.template cast<S>();
  const Mat<S> no_laugh = Mat<S>::Zero(model.cfg.laugh_dim, t_total);
  models::AudioCache<S> cache;
  auto field = [&](const Mat<S>& x, double t) {
    Mat<S> cond = models::audio_forward(model, masked, x, bundle.align, laugh, t,
                                        /*drop_cond=*/false, cache, {});
    Mat<S> uncond = models::audio_forward(model, masked, x, bundle.align, no_laugh, t,
                                          /*drop_cond=*/true, cache, {});
    return flow::cfg_combine(cond, uncond, guidance.alpha);
  };
  Mat<S> x1;
  if (guidance.method == GuidanceConfig::Method::euler) {
    x1 = flow::integrate_euler<S>(field, x0, guidance.nfe);
  } else {
    x1 = flow::integrate_midpoint<S>(field, x0, guidance.nfe);
  }
  return x1.rightCols(t_total - bundle.gen_start);
}

}  // namespace laughflow::infer
