#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "laughflow/corpus_io.hpp"

using laughflow::Index;
using laughflow::Rng;
using laughflow::MatF;
namespace data = laughflow::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("lfcorpus-" + std::to_string(Rng(std::random_device{}()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

data::CorpusSpec tiny_spec() {
  data::CorpusSpec spec;
  spec.feature_dim = 6;
  spec.vocab = 5;
  spec.pretrain_utts = 8;
  spec.finetune_utts = 6;
  spec.heldout_utts = 4;
  spec.pretrain_speakers = 2;
  spec.finetune_speakers = 2;
  spec.heldout_speakers = 2;
  spec.event_len_min = 6;
  spec.event_len_max = 10;
  return spec;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("spec json round trip preserves every field") {
  data::CorpusSpec spec = tiny_spec();
  spec.event_fraction = 0.42;
  spec.discrete_rates = false;
  spec.burst_amplitude = 3.25;
  const auto j = data::corpus_spec_to_json(spec);
  const auto back = data::corpus_spec_from_json(j);
  CHECK(back.feature_dim == spec.feature_dim);
  CHECK(back.vocab == spec.vocab);
  CHECK(back.event_fraction == spec.event_fraction);
  CHECK(back.discrete_rates == spec.discrete_rates);
  CHECK(back.burst_amplitude == spec.burst_amplitude);
  CHECK(back.pretrain_utts == spec.pretrain_utts);
  CHECK(back.rate_bins == spec.rate_bins);
  CHECK(data::corpus_spec_to_json(back) == j);
}

TEST_CASE("corpus round trip is bit exact") {
  TempDir tmp;
  const auto corpus = data::build_corpus(tiny_spec(), 77, 1);
  data::save_corpus(tmp.path, corpus);
  CHECK(fs::exists(tmp.path / "pretrain.bin"));
  CHECK(fs::exists(tmp.path / "finetune.bin"));
  CHECK(fs::exists(tmp.path / "heldout.bin"));
  CHECK(fs::exists(tmp.path / "index.csv"));

  const auto loaded = data::load_corpus(tmp.path);
  CHECK(loaded.seed == corpus.seed);
  CHECK(loaded.spec.feature_dim == corpus.spec.feature_dim);
  CHECK((loaded.bank.templates - corpus.bank.templates).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((loaded.bank.burst_unit - corpus.bank.burst_unit).cwiseAbs().maxCoeff() == 0.0f);
  REQUIRE(loaded.pretrain.utts.size() == corpus.pretrain.utts.size());
  REQUIRE(loaded.finetune.utts.size() == corpus.finetune.utts.size());
  REQUIRE(loaded.heldout.utts.size() == corpus.heldout.utts.size());
  for (size_t i = 0; i < corpus.finetune.utts.size(); ++i) {
    const auto& a = corpus.finetune.utts[i];
    const auto& b = loaded.finetune.utts[i];
    CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((a.laughter_envelope - b.laughter_envelope).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(a.align == b.align);
    CHECK(a.tokens == b.tokens);
    CHECK(a.durations == b.durations);
    CHECK(a.speaker == b.speaker);
    REQUIRE(a.events.size() == b.events.size());
    for (size_t e = 0; e < a.events.size(); ++e) {
      CHECK(a.events[e].start == b.events[e].start);
      CHECK(a.events[e].end == b.events[e].end);
      CHECK(a.events[e].intensity == b.events[e].intensity);
      CHECK(a.events[e].rate == b.events[e].rate);
    }
  }
  REQUIRE(loaded.pretrain.speakers.size() == corpus.pretrain.speakers.size());
  for (size_t i = 0; i < corpus.pretrain.speakers.size(); ++i) {
    CHECK(loaded.pretrain.speakers[i].id == corpus.pretrain.speakers[i].id);
    CHECK((loaded.pretrain.speakers[i].envelope - corpus.pretrain.speakers[i].envelope)
              .cwiseAbs()
              .maxCoeff() == 0.0f);
  }
}

TEST_CASE("index rows match the utterance counts") {
  TempDir tmp;
  const auto corpus = data::build_corpus(tiny_spec(), 78, 1);
  data::save_corpus(tmp.path, corpus);
  // header plus one row per utterance across the three splits
  CHECK(count_lines(tmp.path / "index.csv") == 1 + 8 + 6 + 4);
  std::ifstream in(tmp.path / "index.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "split,utterance,speaker,n_events,frames");
}

TEST_CASE("corpus hash is stable across identical writes") {
  TempDir ta, tb;
  const auto corpus = data::build_corpus(tiny_spec(), 79, 1);
  data::save_corpus(ta.path, corpus);
  data::save_corpus(tb.path, corpus);
  CHECK(data::corpus_hash(ta.path) == data::corpus_hash(tb.path));

  const auto other = data::build_corpus(tiny_spec(), 80, 1);
  TempDir tc;
  data::save_corpus(tc.path, other);
  CHECK(data::corpus_hash(ta.path) != data::corpus_hash(tc.path));
}

TEST_CASE("corrupt split files are rejected") {
  TempDir tmp;
  const auto corpus = data::build_corpus(tiny_spec(), 81, 1);
  data::save_corpus(tmp.path, corpus);
  std::ofstream out(tmp.path / "finetune.bin", std::ios::binary | std::ios::trunc);
  out << "junk";
  out.close();
  CHECK_THROWS_AS((void)data::load_corpus(tmp.path), std::runtime_error);
  CHECK_THROWS_AS((void)data::load_corpus(tmp.path / "missing"), std::runtime_error);
}

TEST_CASE("feature matrices round trip bit exact") {
  TempDir tmp;
  Rng rng(82);
  MatF m(5, 9);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = float(rng.normal());
  data::save_features(tmp.path / "x.bin", m);
  const MatF back = data::load_features(tmp.path / "x.bin");
  REQUIRE(back.rows() == 5);
  REQUIRE(back.cols() == 9);
  CHECK((m - back).cwiseAbs().maxCoeff() == 0.0f);
  CHECK_THROWS_AS((void)data::load_features(tmp.path / "nope.bin"), std::runtime_error);
}
