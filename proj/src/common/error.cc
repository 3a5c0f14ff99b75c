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

#include "hmg/common/error.h"

namespace hmg {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kLimitViolation:
      return "limit violation";
    case ErrorKind::kNumeric:
      return "numeric error";
    case ErrorKind::kDimension:
      return "dimension mismatch";
    case ErrorKind::kRange:
      return "range error";
    case ErrorKind::kFormat:
      return "format error";
    case ErrorKind::kTruncated:
      return "truncated";
    case ErrorKind::kPrecondition:
      return "precondition failed";
    case ErrorKind::kDuplicate:
      return "duplicate";
    case ErrorKind::kNotFound:
      return "not found";
    case ErrorKind::kIo:
      return "i/o error";
  }
  return "error";
}

}  // namespace hmg
