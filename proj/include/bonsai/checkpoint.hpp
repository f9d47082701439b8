// bonsai/checkpoint.hpp

// Copyright 2026  The bonsai-forge authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Network checkpoints.
//
// Layout, all integers little-endian:
//   8 bytes   magic "BFCKPT\0\1"
//   u32       format version
//   u64       header length H
//   H bytes   JSON header: architecture, parameter count, provenance, payload hash
//   8*N bytes parameters as IEEE-754 doubles, body layers then heads, each
//             weight row-major followed by its bias
// The payload hash is the git blob SHA-1 of the parameter bytes.

#ifndef BONSAI_CHECKPOINT_HPP_
#define BONSAI_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/mlp.hpp"

namespace bonsai {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Not a checkpoint (bad magic or unreadable header).
class CheckpointFormatError : public Error {
 public:
  using Error::Error;
};
class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};
class CheckpointTruncatedError : public Error {
 public:
  using Error::Error;
};
/// The parameters do not match the recorded hash.
class CheckpointHashError : public Error {
 public:
  using Error::Error;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  MlpShape shape;
  std::vector<double> parameters;  // flat, in Params::flatten order
  nlohmann::json provenance;       // config hash, seed, ...
  std::string content_hash;        // hex SHA-1 recorded in the header
  std::vector<std::string> warnings;

  MlpNet net() const;
};

/// Hex SHA-1 of `data`.
std::string sha1_hex(std::string_view data);

/// Hex SHA-1 of "blob <size>\0" followed by `data`, as git hashes file contents.
std::string git_blob_hash(std::string_view data);

nlohmann::json shape_to_json(const MlpShape& s);
MlpShape shape_from_json(const nlohmann::json& j);

/// Serialized bytes of a checkpoint for `net`.
std::string encode_checkpoint(const MlpNet& net, const nlohmann::json& provenance);

/// With `force`, a hash mismatch is reported in Checkpoint::warnings instead of
/// thrown. Other errors always throw.
Checkpoint decode_checkpoint(std::string_view bytes, bool force = false);

/// Written atomically (temporary file, then rename).
void save_checkpoint(const std::string& path, const MlpNet& net, const nlohmann::json& provenance = {});
Checkpoint load_checkpoint(const std::string& path, bool force = false);

/// Replaces `path` with `content` through a temporary file in the same
/// directory and a rename.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace bonsai

#endif  // BONSAI_CHECKPOINT_HPP_
