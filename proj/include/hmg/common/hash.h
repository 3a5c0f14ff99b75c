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

#ifndef HMG_COMMON_HASH_H_
#define HMG_COMMON_HASH_H_

#include <cstdint>
#include <string_view>

namespace hmg {

// 64-bit FNV-1a; stable across platforms and runs.
class Fnv1a {
 public:
  Fnv1a& Add(std::string_view bytes) {
    for (char c : bytes) AddByte(static_cast<unsigned char>(c));
    return *this;
  }
  Fnv1a& AddByte(unsigned char c) {
    h_ ^= c;
    h_ *= 1099511628211ull;
    return *this;
  }
  Fnv1a& AddU64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) AddByte(static_cast<unsigned char>(v >> (8 * b)));
    return *this;
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

}  // namespace hmg

#endif  // HMG_COMMON_HASH_H_
