#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "laughflow/audio_model.hpp"
#include "laughflow/duration_model.hpp"

namespace laughflow::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian float32");

inline constexpr int kFormatVersion = 1;

using nlohmann::json;

inline json to_json(const models::AudioModelConfig& c) {
  return json{{"feature_dim", c.feature_dim}, {"phoneme_dim", c.phoneme_dim},
              {"laugh_dim", c.laugh_dim},     {"vocab", c.vocab},
              {"layers", c.layers},           {"heads", c.heads},
              {"embed_dim", c.embed_dim},     {"ff_dim", c.ff_dim},
              {"dropout", c.dropout},         {"max_len", c.max_len}};
}

inline models::AudioModelConfig audio_config_from_json(const json& j) {
  models::AudioModelConfig c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.phoneme_dim = j.at("phoneme_dim").get<int>();
  c.laugh_dim = j.at("laugh_dim").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

inline json to_json(const models::DurationModelConfig& c) {
  return json{{"vocab", c.vocab},         {"token_dim", c.token_dim},
              {"layers", c.layers},       {"heads", c.heads},
              {"embed_dim", c.embed_dim}, {"ff_dim", c.ff_dim},
              {"dropout", c.dropout},     {"max_len", c.max_len}};
}

inline models::DurationModelConfig duration_config_from_json(const json& j) {
  models::DurationModelConfig c;
  c.vocab = j.at("vocab").get<int>();
  c.token_dim = j.at("token_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

namespace detail {

inline std::filesystem::path param_file(const std::filesystem::path& dir,
                                        const std::string& name) {
  return dir / (name + ".bin");
}

template <class S>
void write_param(const std::filesystem::path& path, const nn::ParamView<S>& view) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  if constexpr (std::is_same_v<S, float>) {
    out.write(reinterpret_cast<const char*>(view.data),
              std::streamsize(sizeof(float)) * view.size());
  } else {
    std::vector<float> buf(size_t(view.size()));
    for (Index i = 0; i < view.size(); ++i) buf[size_t(i)] = float(view.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(sizeof(float)) * view.size());
  }
  if (!out) throw std::runtime_error("checkpoint: short write to " + path.string());
}

template <class S>
void read_param(const std::filesystem::path& path, const nn::ParamView<S>& view) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: missing parameter file " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = in.tellg();
  if (bytes != std::streamoff(sizeof(float)) * view.size()) {
    throw std::runtime_error("checkpoint: " + path.string() + " holds " +
                             std::to_string(bytes) + " bytes, expected " +
                             std::to_string(sizeof(float) * size_t(view.size())));
  }
  in.seekg(0);
  if constexpr (std::is_same_v<S, float>) {
    in.read(reinterpret_cast<char*>(view.data),
            std::streamsize(sizeof(float)) * view.size());
  } else {
    std::vector<float> buf(size_t(view.size()));
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(sizeof(float)) * view.size());
    for (Index i = 0; i < view.size(); ++i) view.data[i] = S(buf[size_t(i)]);
  }
  if (!in) throw std::runtime_error("checkpoint: short read from " + path.string());
}

template <class S>
void save_dir(const std::filesystem::path& dir, const std::string& kind, const json& config,
              const std::vector<nn::ParamView<S>>& views) {
  std::filesystem::create_directories(dir);
  json params = json::array();
  for (const auto& v : views) {
    params.push_back({{"name", v.name}, {"rows", v.rows}, {"cols", v.cols}});
    write_param(param_file(dir, v.name), v);
  }
  json manifest{{"format_version", kFormatVersion},
                {"kind", kind},
                {"dtype", "float32"},
                {"config", config},
                {"params", params}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("checkpoint: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

inline json load_manifest(const std::filesystem::path& dir, const std::string& kind) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("checkpoint: no manifest.json in " + dir.string());
  json manifest = json::parse(in, nullptr, /*allow_exceptions=*/true);
  if (manifest.at("format_version").get<int>() != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version in " + dir.string());
  }
  if (manifest.at("kind").get<std::string>() != kind) {
    throw std::runtime_error("checkpoint: " + dir.string() + " holds a '" +
                             manifest.at("kind").get<std::string>() + "' model, expected '" +
                             kind + "'");
  }
  if (manifest.at("dtype").get<std::string>() != "float32") {
    throw std::runtime_error("checkpoint: unsupported dtype in " + dir.string());
  }
  return manifest;
}

template <class S>
void load_views(const std::filesystem::path& dir, const json& manifest,
                const std::vector<nn::ParamView<S>>& views) {
  const json& params = manifest.at("params");
  if (params.size() != views.size()) {
    throw std::runtime_error("checkpoint: parameter count mismatch in " + dir.string());
  }
  for (size_t i = 0; i < views.size(); ++i) {
    const json& entry = params[i];
    if (entry.at("name").get<std::string>() != views[i].name) {
      throw std::runtime_error("checkpoint: parameter order mismatch at '" + views[i].name +
                               "' in " + dir.string());
    }
    if (entry.at("rows").get<Index>() != views[i].rows ||
        entry.at("cols").get<Index>() != views[i].cols) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + views[i].name + "' in " +
                               dir.string());
    }
    read_param(param_file(dir, views[i].name), views[i]);
  }
}

}  // namespace detail

template <class S>
void save(const std::filesystem::path& dir, models::AudioModel<S>& model) {
  detail::save_dir(dir, "audio_model", to_json(model.cfg), models::collect_params(model.p));
}

template <class S>
void save(const std::filesystem::path& dir, models::DurationModel<S>& model) {
  detail::save_dir(dir, "duration_model", to_json(model.cfg),
                   models::collect_params(model.p));
}

template <class S = float>
models::AudioModel<S> load_audio_model(const std::filesystem::path& dir) {
  const json manifest = detail::load_manifest(dir, "audio_model");
  Rng rng(0);
  auto model = models::init_audio_model<S>(audio_config_from_json(manifest.at("config")), rng);
  detail::load_views(dir, manifest, models::collect_params(model.p));
  return model;
}

template <class S = float>
models::DurationModel<S> load_duration_model(const std::filesystem::path& dir) {
  const json manifest = detail::load_manifest(dir, "duration_model");
  Rng rng(0);
  auto model =
      models::init_duration_model<S>(duration_config_from_json(manifest.at("config")), rng);
  detail::load_views(dir, manifest, models::collect_params(model.p));
  return model;
}

}  // namespace laughflow::ckpt
