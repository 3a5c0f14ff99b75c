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

#ifndef HMG_GPT_CHECKPOINT_IO_H_
#define HMG_GPT_CHECKPOINT_IO_H_

#include <filesystem>

#include <nlohmann/json.hpp>

#include "hmg/gpt/model.h"

namespace hmg::gpt {

// File layout: "HMGW", uint32 format version, uint64 header length, a JSON
// header (config, provenance, discretizer, input stats, tensor directory with
// byte offsets), then the tensors as little-endian float32. Weights are kept
// float32-representable, so the round trip is bit-exact.
void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

nlohmann::json ModelConfigToJson(const ModelConfig& config);
// Missing keys keep the values of `base`.
ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig base = {});

}  // namespace hmg::gpt

#endif  // HMG_GPT_CHECKPOINT_IO_H_
