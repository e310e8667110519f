#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "laughflow/data.hpp"

namespace laughflow::data {

nlohmann::json corpus_spec_to_json(const CorpusSpec& s);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

// Binary split files (pretrain.bin / finetune.bin / heldout.bin) carry the
// spec echo, seed, token bank, speaker profiles and per-utterance records;
// index.csv summarizes every utterance across splits.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::uint64_t corpus_hash(const std::filesystem::path& dir);

// Standalone feature matrices (generated outputs): magic, rows, cols, f32.
void save_features(const std::filesystem::path& path, const MatF& features);
MatF load_features(const std::filesystem::path& path);

}  // namespace laughflow::data
