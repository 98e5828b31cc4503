// Copyright 2026 The cf-translate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFT_ERROR_HPP
#define CFT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace cft {

/// Base class of every error raised by the library. The CLI maps these to
/// non-zero exit codes with the message printed verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad file contents, inconsistent shapes, bad config.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A file or directory could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Two objects that must agree on shape or channel layout do not.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Training produced a NaN or infinite loss.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace cft

#endif  // CFT_ERROR_HPP
