#include "laughflow/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

namespace laughflow::data {

namespace {

constexpr std::uint64_t kSaltBank = 0xb001u;
constexpr std::uint64_t kSaltSpeaker = 0x5b00'0000u;
constexpr std::uint64_t kSaltSplitBase = 0x0100'0000u;  // times split ordinal

void validate_spec(const CorpusSpec& s) {
  if (s.feature_dim < 2 || s.vocab < 2) {
    throw std::invalid_argument("corpus spec: feature_dim and vocab must allow speech tokens");
  }
  if (s.rate_bins < 1 || !(s.rate_min > 0.0) || !(s.rate_max > s.rate_min)) {
    throw std::invalid_argument("corpus spec: bad burst rate range");
  }
  if (s.event_fraction < 0.0 || s.event_fraction > 1.0) {
    throw std::invalid_argument("corpus spec: event_fraction outside [0,1]");
  }
  if (s.pretrain_utts < 1 || s.finetune_utts < 1 || s.heldout_utts < 1 ||
      s.pretrain_speakers < 1 || s.finetune_speakers < 1 || s.heldout_speakers < 1) {
    throw std::invalid_argument("corpus spec: counts must be >= 1");
  }
}

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
  pool.reserve(size_t(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace

TokenBank make_token_bank(const CorpusSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng = Rng::from(seed, kSaltBank);
  TokenBank bank;
  const Index f = spec.feature_dim;
  bank.templates.resize(f, spec.vocab);
  for (Index i = 0; i < f; ++i) bank.templates(i, 0) = float(rng.uniform(0.01, 0.05));
  for (Index j = 1; j < spec.vocab; ++j) {
    for (Index i = 0; i < f; ++i) bank.templates(i, j) = float(rng.uniform(0.1, 1.0));
  }
  bank.burst_unit.resize(f);
  const float inv = 1.0f / std::sqrt(float(f));
  for (Index i = 0; i < f; ++i) bank.burst_unit(i) = (i % 2 == 0 ? inv : -inv);
  bank.burst_amplitude = float(spec.burst_amplitude);
  bank.rate_min = float(spec.rate_min);
  bank.rate_max = float(spec.rate_max);
  const double width = (spec.rate_max - spec.rate_min) / spec.rate_bins;
  for (int b = 0; b < spec.rate_bins; ++b) {
    bank.rate_centers.push_back(float(spec.rate_min + (b + 0.5) * width));
  }
  return bank;
}

SpeakerProfile synth_speaker(const CorpusSpec& spec, int id, std::uint64_t seed) {
  Rng rng = Rng::from(seed, kSaltSpeaker + std::uint64_t(id));
  SpeakerProfile p;
  p.id = id;
  p.envelope.resize(spec.feature_dim);
  for (Index i = 0; i < p.envelope.size(); ++i) p.envelope(i) = float(rng.uniform(0.2, 1.0));
  p.jitter = float(rng.uniform(spec.jitter_min, spec.jitter_max));
  return p;
}

void sample_script(const CorpusSpec& spec, Rng& rng, std::vector<int>& tokens,
                   std::vector<int>& durations) {
  tokens.clear();
  durations.clear();
  auto push = [&](int tok, double rate) {
    tokens.push_back(tok);
    durations.push_back(2 + rng.poisson(rate));
  };
  push(0, spec.silence_dur_rate);
  const int words =
      spec.words_min + int(rng.uniform_int(std::uint64_t(spec.words_max - spec.words_min + 1)));
  for (int w = 0; w < words; ++w) {
    if (w > 0 && rng.uniform() < spec.word_gap_silence_prob) push(0, spec.silence_dur_rate);
    const int n = spec.word_tokens_min +
                  int(rng.uniform_int(std::uint64_t(spec.word_tokens_max - spec.word_tokens_min + 1)));
    for (int k = 0; k < n; ++k) {
      int tok;
      do {
        tok = 1 + int(rng.uniform_int(std::uint64_t(spec.vocab - 1)));
      } while (tok == tokens.back());
      push(tok, spec.phoneme_dur_rate);
    }
  }
  push(0, spec.silence_dur_rate);
}

std::vector<LaughterEvent> sample_events(const CorpusSpec& spec, const TokenBank& bank,
                                         int frames, Rng& rng) {
  std::vector<LaughterEvent> events;
  const int n = 1 + (rng.uniform() < spec.second_event_prob ? 1 : 0);
  for (int k = 0; k < n; ++k) {
    int len = spec.event_len_min +
              int(rng.uniform_int(std::uint64_t(spec.event_len_max - spec.event_len_min + 1)));
    len = std::min(len, frames);
    LaughterEvent ev;
    ev.intensity = float(rng.uniform(spec.intensity_min, spec.intensity_max));
    ev.rate = spec.discrete_rates
                  ? bank.rate_centers[rng.uniform_int(bank.rate_centers.size())]
                  : float(rng.uniform(spec.rate_min, spec.rate_max));
    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
      ev.start = int(rng.uniform_int(std::uint64_t(frames - len + 1)));
      ev.end = ev.start + len;
      placed = true;
      for (const auto& other : events) {
        if (ev.start < other.end + 4 && other.start < ev.end + 4) placed = false;
      }
    }
    if (placed) events.push_back(ev);
  }
  std::sort(events.begin(), events.end(),
            [](const LaughterEvent& a, const LaughterEvent& b) { return a.start < b.start; });
  return events;
}

Utterance synth_utterance(const CorpusSpec& spec, const TokenBank& bank,
                          const SpeakerProfile& speaker, const std::vector<int>& tokens,
                          const std::vector<int>& durations,
                          const std::vector<LaughterEvent>& events, Rng& rng) {
  if (tokens.empty()) throw std::invalid_argument("synth_utterance: empty token sequence");
  Utterance u;
  u.speaker = speaker.id;
  u.tokens = tokens;
  u.durations = durations;
  u.align = durations_to_alignment(tokens, durations);
  const Index t = Index(u.align.size());
  const Index f = spec.feature_dim;
  for (const auto& ev : events) {
    if (ev.start < 0 || ev.end <= ev.start || ev.end > t) {
      throw std::invalid_argument("synth_utterance: event outside utterance bounds");
    }
  }
  u.events = events;
  u.features.resize(f, t);
  for (Index j = 0; j < t; ++j) {
    const int tok = u.align[size_t(j)];
    if (tok < 0 || tok >= spec.vocab) {
      throw std::invalid_argument("synth_utterance: token id outside vocab");
    }
    for (Index i = 0; i < f; ++i) {
      u.features(i, j) = speaker.envelope(i) * bank.templates(i, tok) +
                         speaker.jitter * float(rng.normal());
    }
  }
  u.laughter_envelope = VecF::Zero(t);
  for (const auto& ev : events) {
    for (int j = ev.start; j < ev.end; ++j) {
      // AM pattern on an energy pedestal; absolute frame phase keeps the
      // oscillation coherent across the event
      const float burst = ev.intensity *
                          (1.0f + std::cos(2.0f * float(M_PI) * ev.rate * float(j))) *
                          bank.burst_amplitude;
      u.features.col(j) += burst * bank.burst_unit;
      u.laughter_envelope(j) = ev.intensity;
    }
  }
  return u;
}

namespace {

Split synth_split(const CorpusSpec& spec, const TokenBank& bank, std::uint64_t seed,
                  int split_ordinal, int n_speakers, int n_utts, int speaker_id_base,
                  double event_fraction, int workers) {
  Split split;
  split.speakers.reserve(size_t(n_speakers));
  for (int k = 0; k < n_speakers; ++k) {
    split.speakers.push_back(synth_speaker(spec, speaker_id_base + k, seed));
  }
  split.utts.resize(size_t(n_utts));
  run_indexed(n_utts, workers, [&](int i) {
    Rng rng = Rng::from(seed, kSaltSplitBase * std::uint64_t(split_ordinal) + std::uint64_t(i));
    const auto& speaker = split.speakers[rng.uniform_int(size_t(n_speakers))];
    std::vector<int> tokens, durations;
    sample_script(spec, rng, tokens, durations);
    std::vector<LaughterEvent> events;
    if (event_fraction > 0.0 && rng.uniform() < event_fraction) {
      int frames = 0;
      for (int d : durations) frames += d;
      events = sample_events(spec, bank, frames, rng);
    }
    split.utts[size_t(i)] = synth_utterance(spec, bank, speaker, tokens, durations, events, rng);
  });
  return split;
}

}  // namespace

Corpus build_corpus(const CorpusSpec& spec, std::uint64_t seed, int workers) {
  validate_spec(spec);
  Corpus c;
  c.spec = spec;
  c.seed = seed;
  c.bank = make_token_bank(spec, seed);
  c.pretrain = synth_split(spec, c.bank, seed, 1, spec.pretrain_speakers, spec.pretrain_utts,
                           0, 0.0, workers);
  c.finetune = synth_split(spec, c.bank, seed, 2, spec.finetune_speakers, spec.finetune_utts,
                           1000, spec.event_fraction, workers);
  c.heldout = synth_split(spec, c.bank, seed, 3, spec.heldout_speakers, spec.heldout_utts,
                          2000, spec.event_fraction, workers);
  return c;
}

MaskResult mask(const MatF& features, const MaskPolicy& policy, Rng& rng) {
  if (policy.p_full < 0.0 || policy.p_full > 1.0 || !(policy.span_min > 0.0) ||
      policy.span_min > policy.span_max || policy.span_max > 1.0) {
    throw std::invalid_argument("mask: invalid policy");
  }
  const Index t = features.cols();
  MaskResult r;
  r.masked = features;
  r.indicator.assign(size_t(t), false);
  if (rng.uniform() < policy.p_full) {
    r.masked.setZero();
    r.indicator.assign(size_t(t), true);
    return r;
  }
  const double want = rng.uniform(policy.span_min * double(t), policy.span_max * double(t));
  const Index len = std::clamp<Index>(Index(std::lround(want)), 1, t);
  const Index start = Index(rng.uniform_int(std::uint64_t(t - len + 1)));
  for (Index j = start; j < start + len; ++j) {
    r.masked.col(j).setZero();
    r.indicator[size_t(j)] = true;
  }
  return r;
}

std::vector<bool> mask_positions(int n, const MaskPolicy& policy, Rng& rng) {
  MatF dummy = MatF::Zero(1, n);
  return mask(dummy, policy, rng).indicator;
}

LaughMode parse_laugh_mode(const std::string& s) {
  if (s == "prob") return LaughMode::prob;
  if (s == "emb") return LaughMode::emb;
  throw std::invalid_argument("unknown laughter representation mode '" + s + "'");
}

std::string to_string(LaughMode mode) {
  return mode == LaughMode::prob ? "prob" : "emb";
}

int laugh_dim(LaughMode mode, const CorpusSpec& spec) {
  return mode == LaughMode::prob ? 1 : spec.rate_bins;
}

int rate_bin_index(const TokenBank& bank, float rate) {
  const int bins = int(bank.rate_centers.size());
  const float width = (bank.rate_max - bank.rate_min) / float(bins);
  const int idx = int(std::floor((rate - bank.rate_min) / width));
  return std::clamp(idx, 0, bins - 1);
}

MatF laughter_representation(const Utterance& u, LaughMode mode, const TokenBank& bank) {
  const Index t = u.frames();
  if (mode == LaughMode::prob) {
    return u.laughter_envelope.transpose();
  }
  MatF rep = MatF::Zero(Index(bank.rate_centers.size()), t);
  for (const auto& ev : u.events) {
    const int bin = rate_bin_index(bank, ev.rate);
    for (int j = ev.start; j < ev.end; ++j) rep(bin, j) = ev.intensity;
  }
  return rep;
}

MixSampler::MixSampler(const Split* pretrain, const Split* finetune, double finetune_ratio)
    : pretrain_(pretrain), finetune_(finetune), ratio_(finetune_ratio) {
  if (ratio_ < 0.0 || ratio_ > 1.0) {
    throw std::invalid_argument("mix: finetune_ratio outside [0,1]");
  }
  if (ratio_ < 1.0 && (pretrain_ == nullptr || pretrain_->utts.empty())) {
    throw std::invalid_argument("mix: pretrain stream required but empty");
  }
  if (ratio_ > 0.0 && (finetune_ == nullptr || finetune_->utts.empty())) {
    throw std::invalid_argument("mix: finetune stream required but empty");
  }
}

MixedSample MixSampler::next(Rng& rng) const {
  MixedSample s;
  s.conditioned = rng.uniform() < ratio_;
  const Split* from = s.conditioned ? finetune_ : pretrain_;
  s.utt = &from->utts[rng.uniform_int(from->utts.size())];
  return s;
}

void alignment_to_durations(const std::vector<int>& align, std::vector<int>& tokens,
                            std::vector<int>& durations) {
  if (align.empty()) throw std::invalid_argument("alignment_to_durations: empty alignment");
  tokens.clear();
  durations.clear();
  for (int id : align) {
    if (!tokens.empty() && tokens.back() == id) {
      ++durations.back();
    } else {
      tokens.push_back(id);
      durations.push_back(1);
    }
  }
}

std::vector<int> durations_to_alignment(const std::vector<int>& tokens,
                                        const std::vector<int>& durations) {
  if (tokens.size() != durations.size()) {
    throw std::invalid_argument("durations_to_alignment: length mismatch");
  }
  std::vector<int> align;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (durations[i] < 1) throw std::invalid_argument("durations_to_alignment: duration < 1");
    align.insert(align.end(), size_t(durations[i]), tokens[i]);
  }
  return align;
}

}  // namespace laughflow::data
