#include "l2caf/model_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace l2caf {

using nlohmann::json;

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kGap: return "gap";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
    case LayerKind::kEmbedNormalize: return "embed_normalize";
    case LayerKind::kRecurrentFuse: return "recurrent_fuse";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "relu") return LayerKind::kRelu;
  if (s == "gap") return LayerKind::kGap;
  if (s == "flatten") return LayerKind::kFlatten;
  if (s == "dense") return LayerKind::kDense;
  if (s == "embed_normalize") return LayerKind::kEmbedNormalize;
  if (s == "recurrent_fuse") return LayerKind::kRecurrentFuse;
  throw ModelIoError(ModelIoError::Code::kManifest, "unknown layer kind '" + s + "'");
}

std::uint32_t crc_of(const unsigned char* data, std::size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, data, static_cast<uInt>(len)));
}

json layer_to_json(const LayerSpec& s) {
  json j;
  j["kind"] = kind_name(s.kind);
  switch (s.kind) {
    case LayerKind::kConv:
      j["kh"] = s.kh;
      j["kw"] = s.kw;
      j["c_out"] = s.c_out;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      break;
    case LayerKind::kDense:
      j["out_dim"] = s.out_dim;
      break;
    case LayerKind::kRecurrentFuse:
      j["hidden_dim"] = s.hidden_dim;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  switch (s.kind) {
    case LayerKind::kConv:
      s.kh = j.at("kh").get<int>();
      s.kw = j.at("kw").get<int>();
      s.c_out = j.at("c_out").get<int>();
      s.stride = j.at("stride").get<int>();
      s.padding = j.at("padding").get<int>();
      break;
    case LayerKind::kDense:
      s.out_dim = j.at("out_dim").get<int>();
      break;
    case LayerKind::kRecurrentFuse:
      s.hidden_dim = j.at("hidden_dim").get<int>();
      break;
    default:
      break;
  }
  return s;
}

}  // namespace

void save_model(const NetworkModel& m, const std::string& path) {
  std::string blob;
  json tensors = json::array();
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    for (std::size_t jx = 0; jx < m.weights[i].size(); ++jx) {
      const Tensor& t = m.weights[i][jx];
      const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(double);
      const std::size_t offset = blob.size();
      blob.resize(offset + bytes);
      std::memcpy(blob.data() + offset, t.data(), bytes);
      tensors.push_back({{"layer", i},
                         {"index", jx},
                         {"shape", t.shape()},
                         {"offset", offset},
                         {"bytes", bytes},
                         {"crc32", crc_of(reinterpret_cast<const unsigned char*>(blob.data() + offset), bytes)}});
    }
  }

  json manifest;
  manifest["format"] = "tnet";
  manifest["version"] = 1;
  manifest["endian"] = "little";
  manifest["input_shape"] = m.input_shape;
  manifest["head"] = {{"kind", m.head == HeadKind::kLogits ? "logits" : "embedding"},
                      {"size", m.head_size}};
  json layers = json::array();
  for (const auto& s : m.layers) layers.push_back(layer_to_json(s));
  manifest["layers"] = layers;
  manifest["endpoints"] = m.endpoints;
  manifest["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelIoError(ModelIoError::Code::kIo, "cannot open '" + path + "' for writing");
  const std::string text = manifest.dump();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\0');
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw ModelIoError(ModelIoError::Code::kIo, "write failed for '" + path + "'");
}

NetworkModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelIoError(ModelIoError::Code::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str();

  const std::size_t sep = file.find('\0');
  if (sep == std::string::npos)
    throw ModelIoError(ModelIoError::Code::kManifest, "missing manifest separator in '" + path + "'");

  json manifest;
  try {
    manifest = json::parse(file.substr(0, sep));
  } catch (const json::exception& e) {
    throw ModelIoError(ModelIoError::Code::kManifest, std::string("manifest parse error: ") + e.what());
  }

  NetworkModel m;
  try {
    if (manifest.at("format") != "tnet") throw ModelIoError(ModelIoError::Code::kManifest, "not a tnet file");
    if (manifest.at("endian") != "little")
      throw ModelIoError(ModelIoError::Code::kManifest, "unsupported endian tag");
    m.input_shape = manifest.at("input_shape").get<std::vector<int>>();
    const json& head = manifest.at("head");
    m.head = head.at("kind") == "logits" ? HeadKind::kLogits : HeadKind::kEmbedding;
    m.head_size = head.at("size").get<int>();
    for (const json& j : manifest.at("layers")) m.layers.push_back(layer_from_json(j));
    m.endpoints = manifest.at("endpoints").get<std::map<std::string, int>>();
  } catch (const json::exception& e) {
    throw ModelIoError(ModelIoError::Code::kManifest, std::string("manifest field error: ") + e.what());
  }

  // Shape-check the stack and pre-size the weight table so a manifest that
  // references the wrong tensors is caught before any blob access.
  std::vector<std::vector<int>> shapes;
  try {
    shapes = infer_shapes(m.input_shape, m.layers);
  } catch (const ShapeError& e) {
    throw ModelIoError(ModelIoError::Code::kManifest, std::string("inconsistent layer stack: ") + e.what());
  }
  m.weights.resize(m.layers.size());

  const char* blob = file.data() + sep + 1;
  const std::size_t blob_size = file.size() - sep - 1;
  std::size_t loaded = 0;
  try {
    for (const json& tj : manifest.at("tensors")) {
      const auto layer = tj.at("layer").get<std::size_t>();
      const auto index = tj.at("index").get<std::size_t>();
      const auto shape = tj.at("shape").get<std::vector<int>>();
      const auto offset = tj.at("offset").get<std::size_t>();
      const auto bytes = tj.at("bytes").get<std::size_t>();
      const auto crc = tj.at("crc32").get<std::uint32_t>();
      if (layer >= m.weights.size())
        throw ModelIoError(ModelIoError::Code::kManifest, "tensor references layer out of range");
      if (offset + bytes > blob_size || offset + bytes < offset)
        throw ModelIoError(ModelIoError::Code::kTruncatedBlob,
                           "tensor data extends past end of blob in '" + path + "'");
      if (crc_of(reinterpret_cast<const unsigned char*>(blob + offset), bytes) != crc)
        throw ModelIoError(ModelIoError::Code::kChecksumMismatch,
                           "checksum mismatch for tensor of layer " + std::to_string(layer));
      Tensor t(shape);
      if (static_cast<std::size_t>(t.size()) * sizeof(double) != bytes)
        throw ModelIoError(ModelIoError::Code::kManifest, "tensor byte count does not match shape");
      std::memcpy(t.data(), blob + offset, bytes);
      if (m.weights[layer].size() <= index) m.weights[layer].resize(index + 1);
      m.weights[layer][index] = std::move(t);
      ++loaded;
    }
  } catch (const json::exception& e) {
    throw ModelIoError(ModelIoError::Code::kManifest, std::string("tensor entry error: ") + e.what());
  }

  // Every layer must have its full parameter set.
  std::size_t expected = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    switch (m.layers[i].kind) {
      case LayerKind::kConv: expected += 1; break;
      case LayerKind::kDense: expected += 2; break;
      case LayerKind::kRecurrentFuse: expected += 6; break;
      default: break;
    }
  }
  if (loaded != expected)
    throw ModelIoError(ModelIoError::Code::kManifest,
                       "manifest lists " + std::to_string(loaded) + " tensors, expected " +
                           std::to_string(expected));
  return m;
}

}  // namespace l2caf
