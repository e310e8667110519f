#include "laughflow/corpus_io.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace laughflow::data {

static_assert(std::endian::native == std::endian::little,
              "corpus files are little-endian");

using nlohmann::json;

json corpus_spec_to_json(const CorpusSpec& s) {
  return json{{"feature_dim", s.feature_dim},
              {"vocab", s.vocab},
              {"pretrain_utts", s.pretrain_utts},
              {"finetune_utts", s.finetune_utts},
              {"heldout_utts", s.heldout_utts},
              {"pretrain_speakers", s.pretrain_speakers},
              {"finetune_speakers", s.finetune_speakers},
              {"heldout_speakers", s.heldout_speakers},
              {"event_fraction", s.event_fraction},
              {"second_event_prob", s.second_event_prob},
              {"words_min", s.words_min},
              {"words_max", s.words_max},
              {"word_tokens_min", s.word_tokens_min},
              {"word_tokens_max", s.word_tokens_max},
              {"word_gap_silence_prob", s.word_gap_silence_prob},
              {"phoneme_dur_rate", s.phoneme_dur_rate},
              {"silence_dur_rate", s.silence_dur_rate},
              {"event_len_min", s.event_len_min},
              {"event_len_max", s.event_len_max},
              {"intensity_min", s.intensity_min},
              {"intensity_max", s.intensity_max},
              {"burst_amplitude", s.burst_amplitude},
              {"rate_min", s.rate_min},
              {"rate_max", s.rate_max},
              {"rate_bins", s.rate_bins},
              {"discrete_rates", s.discrete_rates},
              {"jitter_min", s.jitter_min},
              {"jitter_max", s.jitter_max}};
}

CorpusSpec corpus_spec_from_json(const json& j) {
  CorpusSpec s;
  s.feature_dim = j.at("feature_dim").get<int>();
  s.vocab = j.at("vocab").get<int>();
  s.pretrain_utts = j.at("pretrain_utts").get<int>();
  s.finetune_utts = j.at("finetune_utts").get<int>();
  s.heldout_utts = j.at("heldout_utts").get<int>();
  s.pretrain_speakers = j.at("pretrain_speakers").get<int>();
  s.finetune_speakers = j.at("finetune_speakers").get<int>();
  s.heldout_speakers = j.at("heldout_speakers").get<int>();
  s.event_fraction = j.at("event_fraction").get<double>();
  s.second_event_prob = j.at("second_event_prob").get<double>();
  s.words_min = j.at("words_min").get<int>();
  s.words_max = j.at("words_max").get<int>();
  s.word_tokens_min = j.at("word_tokens_min").get<int>();
  s.word_tokens_max = j.at("word_tokens_max").get<int>();
  s.word_gap_silence_prob = j.at("word_gap_silence_prob").get<double>();
  s.phoneme_dur_rate = j.at("phoneme_dur_rate").get<double>();
  s.silence_dur_rate = j.at("silence_dur_rate").get<double>();
  s.event_len_min = j.at("event_len_min").get<int>();
  s.event_len_max = j.at("event_len_max").get<int>();
  s.intensity_min = j.at("intensity_min").get<double>();
  s.intensity_max = j.at("intensity_max").get<double>();
  s.burst_amplitude = j.at("burst_amplitude").get<double>();
  s.rate_min = j.at("rate_min").get<double>();
  s.rate_max = j.at("rate_max").get<double>();
  s.rate_bins = j.at("rate_bins").get<int>();
  s.discrete_rates = j.at("discrete_rates").get<bool>();
  s.jitter_min = j.at("jitter_min").get<double>();
  s.jitter_max = j.at("jitter_max").get<double>();
  return s;
}

namespace {

constexpr std::uint32_t kMagic = 0x4c464330u;  // "LFC0"
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void put_varint(std::ostream& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.put(char(0x80 | (v & 0x7f)));
    v >>= 7;
  }
  out.put(char(v));
}

std::uint64_t get_varint(std::istream& in) {
  std::uint64_t v = 0;
  int shift = 0;
  while (true) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("corpus: truncated varint");
    v |= std::uint64_t(c & 0x7f) << shift;
    if ((c & 0x80) == 0) return v;
    shift += 7;
    if (shift > 63) throw std::runtime_error("corpus: varint overflow");
  }
}

void put_floats(std::ostream& out, const float* data, size_t n) {
  out.write(reinterpret_cast<const char*>(data), std::streamsize(n * sizeof(float)));
}

void get_floats(std::istream& in, float* data, size_t n) {
  in.read(reinterpret_cast<char*>(data), std::streamsize(n * sizeof(float)));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  return s;
}

void write_split(const std::filesystem::path& path, const Corpus& corpus,
                 const Split& split) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("corpus: cannot write " + path.string());
    put(out, kMagic);
    put(out, kVersion);
    put<std::uint64_t>(out, corpus.seed);
    put_string(out, corpus_spec_to_json(corpus.spec).dump());
    const auto& bank = corpus.bank;
    put_floats(out, bank.templates.data(), size_t(bank.templates.size()));
    put_floats(out, bank.burst_unit.data(), size_t(bank.burst_unit.size()));
    put(out, bank.burst_amplitude);
    put(out, bank.rate_min);
    put(out, bank.rate_max);
    put<std::uint32_t>(out, std::uint32_t(bank.rate_centers.size()));
    put_floats(out, bank.rate_centers.data(), bank.rate_centers.size());
    put<std::uint32_t>(out, std::uint32_t(split.speakers.size()));
    for (const auto& sp : split.speakers) {
      put<std::int32_t>(out, sp.id);
      put_floats(out, sp.envelope.data(), size_t(sp.envelope.size()));
      put(out, sp.jitter);
    }
    put<std::uint32_t>(out, std::uint32_t(split.utts.size()));
    for (const auto& u : split.utts) {
      put<std::int32_t>(out, u.speaker);
      put<std::uint32_t>(out, std::uint32_t(u.frames()));
      put<std::uint32_t>(out, std::uint32_t(u.tokens.size()));
      put<std::uint32_t>(out, std::uint32_t(u.events.size()));
      put_floats(out, u.features.data(), size_t(u.features.size()));
      for (int id : u.align) put_varint(out, std::uint64_t(id));
      put_floats(out, u.laughter_envelope.data(), size_t(u.laughter_envelope.size()));
      for (int id : u.tokens) put_varint(out, std::uint64_t(id));
      for (int d : u.durations) put_varint(out, std::uint64_t(d));
      for (const auto& ev : u.events) {
        put<std::uint32_t>(out, std::uint32_t(ev.start));
        put<std::uint32_t>(out, std::uint32_t(ev.end));
        put(out, ev.intensity);
        put(out, ev.rate);
      }
    }
    if (!out) throw std::runtime_error("corpus: short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Split read_split(const std::filesystem::path& path, CorpusSpec& spec, TokenBank& bank,
                 std::uint64_t& seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("corpus: cannot open " + path.string());
  if (get<std::uint32_t>(in) != kMagic) {
    throw std::runtime_error("corpus: bad magic in " + path.string());
  }
  if (get<std::uint32_t>(in) != kVersion) {
    throw std::runtime_error("corpus: unsupported version in " + path.string());
  }
  seed = get<std::uint64_t>(in);
  spec = corpus_spec_from_json(json::parse(get_string(in)));
  bank.templates.resize(spec.feature_dim, spec.vocab);
  get_floats(in, bank.templates.data(), size_t(bank.templates.size()));
  bank.burst_unit.resize(spec.feature_dim);
  get_floats(in, bank.burst_unit.data(), size_t(bank.burst_unit.size()));
  bank.burst_amplitude = get<float>(in);
  bank.rate_min = get<float>(in);
  bank.rate_max = get<float>(in);
  bank.rate_centers.resize(get<std::uint32_t>(in));
  get_floats(in, bank.rate_centers.data(), bank.rate_centers.size());
  Split split;
  split.speakers.resize(get<std::uint32_t>(in));
  for (auto& sp : split.speakers) {
    sp.id = get<std::int32_t>(in);
    sp.envelope.resize(spec.feature_dim);
    get_floats(in, sp.envelope.data(), size_t(sp.envelope.size()));
    sp.jitter = get<float>(in);
  }
  split.utts.resize(get<std::uint32_t>(in));
  for (auto& u : split.utts) {
    u.speaker = get<std::int32_t>(in);
    const auto t = get<std::uint32_t>(in);
    const auto n = get<std::uint32_t>(in);
    const auto ne = get<std::uint32_t>(in);
    u.features.resize(spec.feature_dim, t);
    get_floats(in, u.features.data(), size_t(u.features.size()));
    u.align.resize(t);
    for (auto& id : u.align) id = int(get_varint(in));
    u.laughter_envelope.resize(t);
    get_floats(in, u.laughter_envelope.data(), t);
    u.tokens.resize(n);
    for (auto& id : u.tokens) id = int(get_varint(in));
    u.durations.resize(n);
    for (auto& d : u.durations) d = int(get_varint(in));
    u.events.resize(ne);
    for (auto& ev : u.events) {
      ev.start = int(get<std::uint32_t>(in));
      ev.end = int(get<std::uint32_t>(in));
      ev.intensity = get<float>(in);
      ev.rate = get<float>(in);
    }
    if (!in) throw std::runtime_error("corpus: truncated record in " + path.string());
  }
  return split;
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  write_split(dir / "pretrain.bin", corpus, corpus.pretrain);
  write_split(dir / "finetune.bin", corpus, corpus.finetune);
  write_split(dir / "heldout.bin", corpus, corpus.heldout);
  const auto tmp = (dir / "index.csv").string() + ".tmp";
  {
    std::ofstream csv(tmp, std::ios::trunc);
    if (!csv) throw std::runtime_error("corpus: cannot write index.csv in " + dir.string());
    csv << "split,utterance,speaker,n_events,frames\n";
    auto rows = [&](const char* name, const Split& split) {
      for (size_t i = 0; i < split.utts.size(); ++i) {
        const auto& u = split.utts[i];
        csv << name << ',' << i << ',' << u.speaker << ',' << u.events.size() << ','
            << u.frames() << '\n';
      }
    };
    rows("pretrain", corpus.pretrain);
    rows("finetune", corpus.finetune);
    rows("heldout", corpus.heldout);
  }
  std::filesystem::rename(tmp, dir / "index.csv");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  std::uint64_t seed2 = 0, seed3 = 0;
  CorpusSpec spec2, spec3;
  TokenBank bank2, bank3;
  c.pretrain = read_split(dir / "pretrain.bin", c.spec, c.bank, c.seed);
  c.finetune = read_split(dir / "finetune.bin", spec2, bank2, seed2);
  c.heldout = read_split(dir / "heldout.bin", spec3, bank3, seed3);
  if (seed2 != c.seed || seed3 != c.seed) {
    throw std::runtime_error("corpus: split files in " + dir.string() +
                             " come from different seeds");
  }
  return c;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash: cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= std::uint8_t(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::uint64_t corpus_hash(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char* name : {"pretrain.bin", "finetune.bin", "heldout.bin", "index.csv"}) {
    const std::uint64_t fh = fnv1a_file(dir / name);
    h ^= fh;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {
constexpr std::uint32_t kFeatureMagic = 0x4c464654u;  // "LFFT"
}

void save_features(const std::filesystem::path& path, const MatF& features) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("features: cannot write " + path.string());
    put(out, kFeatureMagic);
    put<std::uint32_t>(out, std::uint32_t(features.rows()));
    put<std::uint32_t>(out, std::uint32_t(features.cols()));
    put_floats(out, features.data(), size_t(features.size()));
    if (!out) throw std::runtime_error("features: short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

MatF load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("features: cannot open " + path.string());
  if (get<std::uint32_t>(in) != kFeatureMagic) {
    throw std::runtime_error("features: " + path.string() + " is not a feature file");
  }
  const auto rows = get<std::uint32_t>(in);
  const auto cols = get<std::uint32_t>(in);
  MatF m(static_cast<Index>(rows), static_cast<Index>(cols));
  get_floats(in, m.data(), size_t(m.size()));
  if (!in) throw std::runtime_error("features: short read from " + path.string());
  return m;
}

}  // namespace laughflow::data
