// Copyright 2026 The HMG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hmg/gpt/checkpoint_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmg/common/error.h"

namespace hmg::gpt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

constexpr char kMagic[4] = {'H', 'M', 'G', 'W'};

std::vector<double> ToVector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd FromJson(const nlohmann::json& j, Eigen::Index expected,
                         const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != expected) {
    throw Error(ErrorKind::kFormat, what + " has " + std::to_string(v.size()) +
                                        " entries, expected " + std::to_string(expected));
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), expected);
}

}  // namespace

nlohmann::json ModelConfigToJson(const ModelConfig& c) {
  return {{"context_length", c.context_length}, {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers},         {"num_heads", c.num_heads},
          {"num_bins", c.num_bins},             {"input_dim", c.input_dim},
          {"output_dim", c.output_dim},         {"head", HeadKindName(c.head)},
          {"dropout", c.dropout}};
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig c) {
  const nlohmann::json known = ModelConfigToJson(c);
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw Error(ErrorKind::kFormat, "unknown model config key '" + item.key() + "'");
    }
  }
  c.context_length = j.value("context_length", c.context_length);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.num_bins = j.value("num_bins", c.num_bins);
  c.input_dim = j.value("input_dim", c.input_dim);
  c.output_dim = j.value("output_dim", c.output_dim);
  if (j.contains("head")) c.head = HeadKindFromName(j.at("head").get<std::string>());
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const Checkpoint& c = ckpt;
  nlohmann::json header;
  header["config"] = ModelConfigToJson(c.config);
  header["provenance"] = {{"dataset_id", c.provenance.dataset_id},
                          {"steps", c.provenance.steps},
                          {"phase", PhaseName(c.provenance.phase)}};
  header["discretizer"] = {{"bins", c.discretizer.bins()},
                           {"lo", ToVector(c.discretizer.lo())},
                           {"hi", ToVector(c.discretizer.hi())}};
  header["input_stats"] = {{"mean", ToVector(c.input_stats.mean)},
                           {"std", ToVector(c.input_stats.std)}};
  nlohmann::json dir = nlohmann::json::array();
  uint64_t offset = 0;
  for (const Tensor& t : c.weights.tensors()) {
    dir.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}},
                   {"offset", offset}});
    offset += static_cast<uint64_t>(t.value.size()) * sizeof(float);
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    const uint32_t version = Checkpoint::kFormatVersion;
    const uint64_t len = text.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<float> buf;
    for (const Tensor& t : c.weights.tensors()) {
      buf.assign(t.value.data(), t.value.data() + t.value.size());
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  char magic[4] = {};
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, path.string() + ": not a checkpoint (bad magic)");
  }
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw Error(ErrorKind::kTruncated, path.string() + ": truncated header");
  if (version != Checkpoint::kFormatVersion) {
    throw Error(ErrorKind::kFormat, path.string() + ": unsupported version " +
                                        std::to_string(version));
  }
  if (len > (1u << 24)) throw Error(ErrorKind::kFormat, "implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorKind::kTruncated, path.string() + ": truncated header");

  Checkpoint c;
  nlohmann::json dir;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    const nlohmann::json required = ModelConfigToJson(ModelConfig{});
    for (const auto& item : required.items()) {
      if (!header.at("config").contains(item.key())) {
        throw Error(ErrorKind::kFormat, "checkpoint config lacks '" + item.key() + "'");
      }
    }
    c.config = ModelConfigFromJson(header.at("config"));
    c.config.Validate();
    const auto& p = header.at("provenance");
    c.provenance.dataset_id = p.at("dataset_id").get<std::string>();
    c.provenance.steps = p.at("steps").get<int64_t>();
    c.provenance.phase = PhaseFromName(p.at("phase").get<std::string>());
    const auto& d = header.at("discretizer");
    const int bins = d.at("bins").get<int>();
    if (bins != c.config.num_bins) throw Error(ErrorKind::kFormat, "bin count mismatch");
    c.discretizer = Discretizer(FromJson(d.at("lo"), c.config.output_dim, "discretizer.lo"),
                                FromJson(d.at("hi"), c.config.output_dim, "discretizer.hi"),
                                bins);
    const auto& s = header.at("input_stats");
    c.input_stats.mean = FromJson(s.at("mean"), c.config.input_dim, "input_stats.mean");
    c.input_stats.std = FromJson(s.at("std"), c.config.input_dim, "input_stats.std");
    dir = header.at("tensors");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": corrupt header: " + e.what());
  }
  c.weights = Weights::Shapes(c.config);
  auto& ts = c.weights.tensors();
  if (dir.size() != ts.size()) {
    throw Error(ErrorKind::kFormat, path.string() + ": expected " +
                                        std::to_string(ts.size()) + " tensors, header lists " +
                                        std::to_string(dir.size()));
  }
  const std::streamoff base = in.tellg();
  std::vector<float> buf;
  for (size_t i = 0; i < ts.size(); ++i) {
    Tensor& t = ts[i];
    const auto& e = dir[i];
    if (e.at("name").get<std::string>() != t.name ||
        e.at("shape").at(0).get<Eigen::Index>() != t.value.rows() ||
        e.at("shape").at(1).get<Eigen::Index>() != t.value.cols()) {
      throw Error(ErrorKind::kFormat, path.string() + ": tensor '" + t.name +
                                          "' does not match the config shape");
    }
    buf.resize(t.value.size());
    in.seekg(base + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) {
      throw Error(ErrorKind::kTruncated,
                  path.string() + ": truncated data for tensor '" + t.name + "'");
    }
    for (size_t k = 0; k < buf.size(); ++k) t.value.data()[k] = buf[k];
    if (!t.value.allFinite()) {
      throw Error(ErrorKind::kNumeric, "tensor '" + t.name + "' is not finite");
    }
  }
  return c;
}

}  // namespace hmg::gpt
