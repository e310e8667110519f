#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laughflow/rng.hpp"
#include "laughflow/types.hpp"

namespace laughflow::data {

struct SpeakerProfile {
  int id = 0;
  VecF envelope;  // per-bin spectral tilt, entries in [0.2, 1.0]
  float jitter = 0.0f;
};

struct LaughterEvent {
  int start = 0;  // inclusive frame
  int end = 0;    // exclusive frame
  float intensity = 0.0f;  // (0, 1]
  float rate = 0.0f;       // burst oscillation, cycles/frame
};

struct Utterance {
  MatF features;               // F x T
  std::vector<int> align;      // length T, token id per frame
  VecF laughter_envelope;      // length T, intensity on event frames, else 0
  std::vector<int> tokens;     // length N
  std::vector<int> durations;  // length N, sums to T
  std::vector<LaughterEvent> events;
  int speaker = 0;

  Index frames() const { return features.cols(); }
};

struct MaskPolicy {
  double p_full = 0.3;
  double span_min = 0.3;  // fractions of T
  double span_max = 0.7;
};

struct CorpusSpec {
  int feature_dim = 20;
  int vocab = 13;  // id 0 silence + 12 pseudo-phonemes
  int pretrain_utts = 2000;
  int finetune_utts = 800;
  int heldout_utts = 96;
  int pretrain_speakers = 24;
  int finetune_speakers = 8;
  int heldout_speakers = 6;
  double event_fraction = 0.6;  // of finetune/heldout utterances
  double second_event_prob = 0.25;
  int words_min = 2;
  int words_max = 4;
  int word_tokens_min = 2;
  int word_tokens_max = 4;
  double word_gap_silence_prob = 0.5;
  double phoneme_dur_rate = 3.0;  // duration = 2 + Poisson(rate)
  double silence_dur_rate = 2.0;
  int event_len_min = 12;
  int event_len_max = 24;
  double intensity_min = 0.5;
  double intensity_max = 1.0;
  double burst_amplitude = 2.5;
  double rate_min = 0.05;  // cycles/frame
  double rate_max = 0.25;
  int rate_bins = 4;
  bool discrete_rates = true;  // draw rates at bin centers
  double jitter_min = 0.01;
  double jitter_max = 0.03;
};

// Corpus-level constants derived once from the seed: spectral templates per
// token, the broadband burst direction, and the rate-bin grid.
struct TokenBank {
  MatF templates;   // F x vocab, col 0 = low-energy silence
  VecF burst_unit;  // F, unit norm
  float burst_amplitude = 0.0f;
  std::vector<float> rate_centers;
  float rate_min = 0.0f;
  float rate_max = 0.0f;
};

struct Split {
  std::vector<SpeakerProfile> speakers;
  std::vector<Utterance> utts;
};

struct Corpus {
  CorpusSpec spec;
  std::uint64_t seed = 0;
  TokenBank bank;
  Split pretrain, finetune, heldout;
};

TokenBank make_token_bank(const CorpusSpec& spec, std::uint64_t seed);

SpeakerProfile synth_speaker(const CorpusSpec& spec, int id, std::uint64_t seed);

// Token/duration script for one utterance: leading and trailing silence,
// 2-4 token words, optional silence gaps.
void sample_script(const CorpusSpec& spec, Rng& rng, std::vector<int>& tokens,
                   std::vector<int>& durations);

std::vector<LaughterEvent> sample_events(const CorpusSpec& spec, const TokenBank& bank,
                                         int frames, Rng& rng);

Utterance synth_utterance(const CorpusSpec& spec, const TokenBank& bank,
                          const SpeakerProfile& speaker, const std::vector<int>& tokens,
                          const std::vector<int>& durations,
                          const std::vector<LaughterEvent>& events, Rng& rng);

// Fully deterministic from (spec, seed); per-utterance seeds are derived from
// the corpus seed and the utterance index, so worker count cannot change the
// result. `workers` <= 1 runs inline.
Corpus build_corpus(const CorpusSpec& spec, std::uint64_t seed, int workers = 1);

struct MaskResult {
  MatF masked;
  std::vector<bool> indicator;  // true on zeroed frames
};

MaskResult mask(const MatF& features, const MaskPolicy& policy, Rng& rng);

// Hidden-span selection over token positions for duration training; same
// policy semantics as feature masking.
std::vector<bool> mask_positions(int n, const MaskPolicy& policy, Rng& rng);

enum class LaughMode { prob, emb };

LaughMode parse_laugh_mode(const std::string& s);
std::string to_string(LaughMode mode);

int laugh_dim(LaughMode mode, const CorpusSpec& spec);

int rate_bin_index(const TokenBank& bank, float rate);

// prob mode: 1 x T row equal to the laughter envelope. emb mode: bins x T,
// column j = intensity(j) * basis(rate bin), zero columns on neutral frames.
MatF laughter_representation(const Utterance& u, LaughMode mode, const TokenBank& bank);

struct MixedSample {
  const Utterance* utt = nullptr;
  bool conditioned = false;  // false => laughter conditioning must be zeroed
};

// Training stream per the fine-tuning recipe: each draw comes from the
// finetune split with probability `finetune_ratio`, otherwise from pretrain
// with its laughter channel forced to zero.
class MixSampler {
 public:
  MixSampler(const Split* pretrain, const Split* finetune, double finetune_ratio);
  MixedSample next(Rng& rng) const;

 private:
  const Split* pretrain_;
  const Split* finetune_;
  double ratio_;
};

// Run-length round trip between frame alignments and duration sequences.
void alignment_to_durations(const std::vector<int>& align, std::vector<int>& tokens,
                            std::vector<int>& durations);

std::vector<int> durations_to_alignment(const std::vector<int>& tokens,
                                        const std::vector<int>& durations);

}  // namespace laughflow::data
