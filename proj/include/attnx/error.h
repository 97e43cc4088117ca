/*
 * Copyright 2026 The attnx Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ATTNX_ERROR_H_
#define ATTNX_ERROR_H_

#include <stdexcept>
#include <string>

namespace attnx {

// Error classes double as CLI exit codes.
enum class ErrorClass {
  kContract = 1,
  kConfig = 2,
  kProbe = 3,
  kData = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass error_class, const std::string& message)
      : std::runtime_error(message), error_class_(error_class) {}

  ErrorClass error_class() const { return error_class_; }

 private:
  ErrorClass error_class_;
};

// Precondition violated by the caller (bad index, special-token perturbation).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message)
      : Error(ErrorClass::kContract, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorClass::kConfig, message) {}
};

class ProbeError : public Error {
 public:
  explicit ProbeError(const std::string& message)
      : Error(ErrorClass::kProbe, message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message)
      : Error(ErrorClass::kData, message) {}
};

}  // namespace attnx

#endif  // ATTNX_ERROR_H_
