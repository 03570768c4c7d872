#pragma once

// JSON model files:
//   {format_version, arch, layer_sizes, activation, skip_every,
//    params: [{shape: [fan_in, fan_out], w: [[...]], b: [...]}...],
//    feature_stats: [{name, mean, sd, missing_count}...],
//    knowledge_spec: [{feature, index, function}...], lambda}
// Doubles are written with round-trip precision.

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kinject/error.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/models.hpp"

namespace kinject {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const Model& m) {
  using nlohmann::json;
  json j;
  j["format_version"] = kModelFormatVersion;
  j["arch"] = to_string(m.spec.arch);
  j["layer_sizes"] = m.spec.layer_sizes;
  j["activation"] = to_string(m.spec.activation);
  j["skip_every"] = m.spec.skip_every;
  json params = json::array();
  for (const auto& layer : m.params.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) row.push_back(layer.weight(r, c));
      w.push_back(std::move(row));
    }
    json b = json::array();
    for (Eigen::Index c = 0; c < layer.bias.size(); ++c) b.push_back(layer.bias(c));
    params.push_back({{"shape", {layer.weight.rows(), layer.weight.cols()}},
                      {"w", std::move(w)},
                      {"b", std::move(b)}});
  }
  j["params"] = std::move(params);
  json stats = json::array();
  for (std::size_t f = 0; f < m.stats.features(); ++f) {
    stats.push_back({{"name", m.stats.names.at(f)},
                     {"mean", m.stats.mean[f]},
                     {"sd", m.stats.sd[f]},
                     {"missing_count", m.stats.missing_count.empty() ? 0 : m.stats.missing_count[f]}});
  }
  j["feature_stats"] = std::move(stats);
  json knowledge = json::array();
  for (const auto& [idx, k] : m.knowledge.entries()) {
    knowledge.push_back({{"index", idx},
                         {"feature", idx < m.stats.names.size() ? m.stats.names[idx] : ""},
                         {"function", k.to_string()}});
  }
  j["knowledge_spec"] = std::move(knowledge);
  if (m.lambda) j["lambda"] = *m.lambda;
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ParseError("model file must hold a JSON object");
    if (!j.contains("format_version")) throw ParseError("model file lacks format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw VersionError("model format version " + std::to_string(version) +
                         " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
    Model m;
    m.spec.arch = parse_architecture(j.at("arch").get<std::string>());
    m.spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    m.spec.activation = parse_activation(j.at("activation").get<std::string>());
    m.spec.skip_every = j.value("skip_every", 2);
    m.spec.validate();
    for (const auto& p : j.at("params")) {
      const auto shape = p.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2) throw ParseError("layer shape must have two entries");
      Layer layer;
      layer.weight.resize(shape[0], shape[1]);
      const auto& w = p.at("w");
      if (static_cast<Eigen::Index>(w.size()) != shape[0])
        throw ParseError("weight rows disagree with declared shape");
      for (Eigen::Index r = 0; r < shape[0]; ++r) {
        const auto& row = w.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != shape[1])
          throw ParseError("weight columns disagree with declared shape");
        for (Eigen::Index c = 0; c < shape[1]; ++c)
          layer.weight(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
      }
      const auto b = p.at("b").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(b.size()) != shape[1])
        throw ParseError("bias length disagrees with declared shape");
      layer.bias = Eigen::Map<const Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
      m.params.layers.push_back(std::move(layer));
    }
    check_params(m.spec, m.params);
    if (!m.params.all_finite()) throw ValidationError("model parameters must be finite");

    const std::size_t p = m.spec.inputs();
    if (j.contains("feature_stats") && !j.at("feature_stats").empty()) {
      for (const auto& s : j.at("feature_stats")) {
        m.stats.names.push_back(s.at("name").get<std::string>());
        m.stats.mean.push_back(s.at("mean").get<double>());
        m.stats.sd.push_back(s.at("sd").get<double>());
        m.stats.missing_count.push_back(s.value("missing_count", std::size_t{0}));
        m.stats.constant.push_back(false);
      }
      if (m.stats.features() != p)
        throw ParseError("feature_stats has " + std::to_string(m.stats.features()) +
                         " entries, network has " + std::to_string(p) + " inputs");
    } else {
      m.stats = FeatureStats::identity(p);
    }
    m.knowledge = KnowledgeSpec(p);
    if (j.contains("knowledge_spec"))
      for (const auto& k : j.at("knowledge_spec"))
        m.knowledge.set(k.at("index").get<std::size_t>(),
                        parse_knowledge_function(k.at("function").get<std::string>()));
    if (j.contains("lambda")) m.lambda = j.at("lambda").get<std::vector<double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

inline std::string serialize_model(const Model& m) { return model_to_json(m).dump(1) + "\n"; }

/// Parses model JSON text; syntax errors report line and column.
inline Model deserialize_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(std::string("invalid model JSON: ") + e.what(), line, column);
  }
  return model_from_json(j);
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out << serialize_model(m);
  if (!out) throw IoError("failed writing model file '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace kinject
