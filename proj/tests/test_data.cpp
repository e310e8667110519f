#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "laughflow/data.hpp"

using laughflow::Index;
using laughflow::Rng;
using laughflow::MatF;
using laughflow::VecF;
namespace data = laughflow::data;

namespace {

data::CorpusSpec tiny_spec() {
  data::CorpusSpec spec;
  spec.feature_dim = 8;
  spec.vocab = 6;
  spec.pretrain_utts = 12;
  spec.finetune_utts = 10;
  spec.heldout_utts = 6;
  spec.pretrain_speakers = 3;
  spec.finetune_speakers = 2;
  spec.heldout_speakers = 2;
  spec.event_len_min = 8;
  spec.event_len_max = 12;
  return spec;
}

}  // namespace

TEST_CASE("token bank honors its template ranges") {
  data::CorpusSpec spec = tiny_spec();
  const auto bank = data::make_token_bank(spec, 7);
  REQUIRE(bank.templates.rows() == 8);
  REQUIRE(bank.templates.cols() == 6);
  for (Index i = 0; i < 8; ++i) {
    CHECK(bank.templates(i, 0) >= 0.01f);
    CHECK(bank.templates(i, 0) <= 0.05f);
    for (Index k = 1; k < 6; ++k) {
      CHECK(bank.templates(i, k) >= 0.1f);
      CHECK(bank.templates(i, k) <= 1.0f);
    }
  }
  CHECK(bank.burst_unit.norm() == doctest::Approx(1.0f));
  const float mag = 1.0f / std::sqrt(8.0f);
  for (Index i = 0; i < 8; ++i) {
    CHECK(std::abs(bank.burst_unit(i)) == doctest::Approx(mag));
  }
  // alternating signs make the direction orthogonal-ish to smooth spectra
  CHECK(bank.burst_unit(0) * bank.burst_unit(1) < 0.0f);
  CHECK(bank.burst_amplitude == doctest::Approx(2.5f));
  REQUIRE(bank.rate_centers.size() == 4);
  CHECK(bank.rate_centers[0] == doctest::Approx(0.075f));
  CHECK(bank.rate_centers[1] == doctest::Approx(0.125f));
  CHECK(bank.rate_centers[2] == doctest::Approx(0.175f));
  CHECK(bank.rate_centers[3] == doctest::Approx(0.225f));
  // same seed, same bank
  const auto again = data::make_token_bank(spec, 7);
  CHECK((bank.templates - again.templates).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("scripts start and end with silence and respect duration floors") {
  data::CorpusSpec spec = tiny_spec();
  Rng rng(71);
  for (int c = 0; c < 50; ++c) {
    std::vector<int> tokens, durations;
    data::sample_script(spec, rng, tokens, durations);
    REQUIRE(!tokens.empty());
    CHECK(tokens.front() == 0);
    CHECK(tokens.back() == 0);
    REQUIRE(tokens.size() == durations.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
      CHECK(durations[i] >= 2);
      CHECK(tokens[i] >= 0);
      CHECK(tokens[i] < spec.vocab);
      if (i > 0) CHECK(tokens[i] != tokens[i - 1]);
    }
  }
}

TEST_CASE("synthesized utterances carry the exact burst signature") {
  data::CorpusSpec spec = tiny_spec();
  spec.jitter_min = 0.0;
  spec.jitter_max = 0.0;  // isolate the deterministic parts
  const auto bank = data::make_token_bank(spec, 9);
  const auto speaker = data::synth_speaker(spec, 0, 9);
  const std::vector<int> tokens{0, 2, 0};
  const std::vector<int> durations{4, 20, 4};
  data::LaughterEvent ev;
  ev.start = 6;
  ev.end = 18;
  ev.intensity = 0.8f;
  ev.rate = bank.rate_centers[2];
  Rng rng(72);
  const auto u = data::synth_utterance(spec, bank, speaker, tokens, durations, {ev}, rng);

  REQUIRE(u.frames() == 28);
  REQUIRE(u.align.size() == 28);
  CHECK(u.align[0] == 0);
  CHECK(u.align[10] == 2);
  CHECK(u.align[27] == 0);
  for (Index j = 0; j < 28; ++j) {
    const int tok = u.align[size_t(j)];
    VecF want = speaker.envelope.cwiseProduct(bank.templates.col(tok));
    if (j >= 6 && j < 18) {
      const float burst = ev.intensity *
                          (1.0f + std::cos(2.0f * float(M_PI) * ev.rate * float(j))) *
                          bank.burst_amplitude;
      want += burst * bank.burst_unit;
      CHECK(u.laughter_envelope(j) == doctest::Approx(0.8f));
    } else {
      CHECK(u.laughter_envelope(j) == 0.0f);
    }
    CHECK((u.features.col(j) - want).cwiseAbs().maxCoeff() <= 1e-6f);
  }

  data::LaughterEvent bad = ev;
  bad.end = 40;
  CHECK_THROWS_AS(
      (void)data::synth_utterance(spec, bank, speaker, tokens, durations, {bad}, rng),
      std::invalid_argument);
}

TEST_CASE("corpus construction is deterministic and worker independent") {
  data::CorpusSpec spec = tiny_spec();
  const auto a = data::build_corpus(spec, 123, 1);
  const auto b = data::build_corpus(spec, 123, 4);
  REQUIRE(a.pretrain.utts.size() == 12);
  REQUIRE(a.finetune.utts.size() == 10);
  REQUIRE(a.heldout.utts.size() == 6);
  REQUIRE(b.pretrain.utts.size() == 12);
  for (size_t i = 0; i < a.pretrain.utts.size(); ++i) {
    CHECK((a.pretrain.utts[i].features - b.pretrain.utts[i].features)
              .cwiseAbs()
              .maxCoeff() == 0.0f);
  }
  for (size_t i = 0; i < a.heldout.utts.size(); ++i) {
    CHECK(a.heldout.utts[i].align == b.heldout.utts[i].align);
    CHECK((a.heldout.utts[i].features - b.heldout.utts[i].features).cwiseAbs().maxCoeff() ==
          0.0f);
  }
  const auto c = data::build_corpus(spec, 124, 1);
  CHECK((a.pretrain.utts[0].features - c.pretrain.utts[0].features).cwiseAbs().maxCoeff() >
        0.0f);

  // pretrain carries no laughter; conditioned splits carry some
  for (const auto& u : a.pretrain.utts) CHECK(u.events.empty());
  int with_events = 0;
  for (const auto& u : a.finetune.utts) with_events += u.events.empty() ? 0 : 1;
  for (const auto& u : a.heldout.utts) with_events += u.events.empty() ? 0 : 1;
  CHECK(with_events > 0);

  // alignment always matches durations
  for (const auto& u : a.finetune.utts) {
    CHECK(u.align == data::durations_to_alignment(u.tokens, u.durations));
    int total = 0;
    for (int d : u.durations) total += d;
    CHECK(Index(total) == u.frames());
  }
}

TEST_CASE("speaker ids are disjoint across splits") {
  data::CorpusSpec spec = tiny_spec();
  const auto corpus = data::build_corpus(spec, 5, 1);
  std::set<int> ids;
  for (const auto& s : corpus.pretrain.speakers) ids.insert(s.id);
  for (const auto& s : corpus.finetune.speakers) ids.insert(s.id);
  for (const auto& s : corpus.heldout.speakers) ids.insert(s.id);
  CHECK(ids.size() == size_t(3 + 2 + 2));
  for (const auto& s : corpus.pretrain.speakers) {
    for (Index i = 0; i < s.envelope.size(); ++i) {
      CHECK(s.envelope(i) >= 0.2f);
      CHECK(s.envelope(i) <= 1.0f);
    }
    CHECK(s.jitter >= float(spec.jitter_min));
    CHECK(s.jitter <= float(spec.jitter_max));
  }
}

TEST_CASE("masking zeroes a contiguous span or everything") {
  data::MaskPolicy policy;
  Rng rng(73);
  MatF features = MatF::Ones(3, 40);
  int fulls = 0;
  for (int c = 0; c < 200; ++c) {
    const auto r = data::mask(features, policy, rng);
    REQUIRE(r.indicator.size() == 40);
    REQUIRE(r.masked.rows() == 3);
    int on = 0;
    for (bool b : r.indicator) on += b ? 1 : 0;
    if (on == 40) ++fulls;
    REQUIRE(on >= 1);
    // masked frames are exactly the indicator frames
    for (Index j = 0; j < 40; ++j) {
      if (r.indicator[size_t(j)]) {
        CHECK(r.masked.col(j).cwiseAbs().maxCoeff() == 0.0f);
      } else {
        CHECK((r.masked.col(j) - features.col(j)).cwiseAbs().maxCoeff() == 0.0f);
      }
    }
    // contiguity: at most one false->true transition
    if (on < 40) {
      CHECK(on >= 12);  // span_min * 40
      CHECK(on <= 28);  // span_max * 40
      int transitions = 0;
      for (size_t j = 1; j < r.indicator.size(); ++j) {
        transitions += r.indicator[j] != r.indicator[j - 1] ? 1 : 0;
      }
      CHECK(transitions <= 2);
    }
  }
  CHECK(fulls > 30);  // p_full = 0.3
  CHECK(fulls < 90);

  data::MaskPolicy bad;
  bad.span_min = 0.9;
  bad.span_max = 0.5;
  CHECK_THROWS_AS((void)data::mask(features, bad, rng), std::invalid_argument);
}

TEST_CASE("alignment round trips through run lengths") {
  const std::vector<int> tokens{0, 3, 1, 0};
  const std::vector<int> durations{2, 4, 1, 3};
  const auto align = data::durations_to_alignment(tokens, durations);
  CHECK(align == std::vector<int>{0, 0, 3, 3, 3, 3, 1, 0, 0, 0});
  std::vector<int> t2, d2;
  data::alignment_to_durations(align, t2, d2);
  CHECK(t2 == tokens);
  CHECK(d2 == durations);
  CHECK_THROWS_AS(data::alignment_to_durations({}, t2, d2), std::invalid_argument);
  CHECK_THROWS_AS((void)data::durations_to_alignment({1}, {0}), std::invalid_argument);
  CHECK_THROWS_AS((void)data::durations_to_alignment({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("laughter representations expose intensity and rate bins") {
  data::CorpusSpec spec = tiny_spec();
  const auto bank = data::make_token_bank(spec, 11);
  const auto speaker = data::synth_speaker(spec, 0, 11);
  const std::vector<int> tokens{0, 1, 0};
  const std::vector<int> durations{3, 14, 3};
  data::LaughterEvent ev;
  ev.start = 4;
  ev.end = 12;
  ev.intensity = 0.6f;
  ev.rate = bank.rate_centers[1];
  Rng rng(74);
  const auto u = data::synth_utterance(spec, bank, speaker, tokens, durations, {ev}, rng);

  const MatF prob = data::laughter_representation(u, data::LaughMode::prob, bank);
  REQUIRE(prob.rows() == 1);
  REQUIRE(prob.cols() == u.frames());
  CHECK(prob(0, 5) == doctest::Approx(0.6f));
  CHECK(prob(0, 0) == 0.0f);

  const MatF emb = data::laughter_representation(u, data::LaughMode::emb, bank);
  REQUIRE(emb.rows() == 4);
  CHECK(emb(1, 5) == doctest::Approx(0.6f));
  CHECK(emb(0, 5) == 0.0f);
  CHECK(emb.col(0).cwiseAbs().maxCoeff() == 0.0f);

  CHECK(data::laugh_dim(data::LaughMode::prob, spec) == 1);
  CHECK(data::laugh_dim(data::LaughMode::emb, spec) == 4);
  CHECK(data::rate_bin_index(bank, bank.rate_centers[3]) == 3);
  CHECK(data::rate_bin_index(bank, 0.0f) == 0);
  CHECK(data::parse_laugh_mode("prob") == data::LaughMode::prob);
  CHECK(data::parse_laugh_mode("emb") == data::LaughMode::emb);
  CHECK_THROWS_AS((void)data::parse_laugh_mode("nope"), std::invalid_argument);
}

TEST_CASE("the mixed sampler respects its ratio") {
  data::CorpusSpec spec = tiny_spec();
  const auto corpus = data::build_corpus(spec, 31, 1);
  Rng rng(75);

  data::MixSampler half(&corpus.pretrain, &corpus.finetune, 0.5);
  int conditioned = 0;
  for (int c = 0; c < 2000; ++c) {
    const auto s = half.next(rng);
    REQUIRE(s.utt != nullptr);
    conditioned += s.conditioned ? 1 : 0;
  }
  CHECK(conditioned > 900);
  CHECK(conditioned < 1100);

  data::MixSampler none(&corpus.pretrain, &corpus.finetune, 0.0);
  for (int c = 0; c < 50; ++c) CHECK_FALSE(none.next(rng).conditioned);
  data::MixSampler all(&corpus.pretrain, &corpus.finetune, 1.0);
  for (int c = 0; c < 50; ++c) CHECK(all.next(rng).conditioned);

  CHECK_THROWS_AS(data::MixSampler(&corpus.pretrain, &corpus.finetune, 1.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(data::MixSampler(nullptr, &corpus.finetune, 0.5), std::invalid_argument);
  CHECK_NOTHROW(data::MixSampler(nullptr, &corpus.finetune, 1.0));
}

TEST_CASE("event sampling respects bounds and separation") {
  data::CorpusSpec spec = tiny_spec();
  const auto bank = data::make_token_bank(spec, 13);
  Rng rng(76);
  for (int c = 0; c < 100; ++c) {
    const auto events = data::sample_events(spec, bank, 60, rng);
    REQUIRE(!events.empty());
    for (const auto& ev : events) {
      CHECK(ev.start >= 0);
      CHECK(ev.end <= 60);
      CHECK(ev.end - ev.start >= spec.event_len_min);
      CHECK(ev.end - ev.start <= spec.event_len_max);
      CHECK(ev.intensity >= float(spec.intensity_min));
      CHECK(ev.intensity <= float(spec.intensity_max));
      bool at_center = false;
      for (float r : bank.rate_centers) at_center = at_center || ev.rate == r;
      CHECK(at_center);
    }
    for (size_t i = 1; i < events.size(); ++i) {
      CHECK(events[i].start >= events[i - 1].end + 4);
    }
  }
}
