// bonsai/checkpoint.cpp

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

#include "bonsai/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

namespace bonsai {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

}  // namespace

std::string sha1_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw Error("sha1_hex: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string git_blob_hash(std::string_view data) {
  std::string buf = "blob " + std::to_string(data.size());
  buf.push_back('\0');
  buf.append(data);
  return sha1_hex(buf);
}

nlohmann::json shape_to_json(const MlpShape& s) {
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"head_count", s.head_count},
          {"head_dim", s.head_dim},
          {"activation", to_string(s.activation)}};
}

MlpShape shape_from_json(const nlohmann::json& j) {
  MlpShape s;
  s.input_dim = j.at("input_dim").get<Index>();
  s.hidden = j.at("hidden").get<std::vector<Index>>();
  s.head_count = j.at("head_count").get<Index>();
  s.head_dim = j.at("head_dim").get<Index>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  return s;
}

MlpNet Checkpoint::net() const {
  MlpNet n(shape);
  n.mutable_params().assign(Eigen::Map<const Vector>(parameters.data(), static_cast<Index>(parameters.size())));
  return n;
}

std::string encode_checkpoint(const MlpNet& net, const nlohmann::json& provenance) {
  const Vector flat = net.params().flatten();
  std::string payload(reinterpret_cast<const char*>(flat.data()), static_cast<std::size_t>(flat.size()) * 8);
  nlohmann::json header = {{"shape", shape_to_json(net.shape())},
                           {"parameter_count", flat.size()},
                           {"provenance", provenance.is_null() ? nlohmann::json::object() : provenance},
                           {"content_hash", git_blob_hash(payload)}};
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, bool force) {
  if (bytes.size() < sizeof kMagic) throw CheckpointTruncatedError("checkpoint: file shorter than its magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointFormatError("checkpoint: bad magic");
  if (bytes.size() < 20) throw CheckpointTruncatedError("checkpoint: header cut short");
  Checkpoint c;
  c.version = get<std::uint32_t>(bytes, 8);
  if (c.version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint: format version " + std::to_string(c.version) + " (supported: " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = get<std::uint64_t>(bytes, 12);
  if (hlen > bytes.size() - 20) throw CheckpointTruncatedError("checkpoint: header cut short");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, hlen));
    c.shape = shape_from_json(header.at("shape"));
    c.provenance = header.at("provenance");
    c.content_hash = header.at("content_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CheckpointFormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  const auto count = header.value("parameter_count", std::uint64_t{0});
  const std::size_t expected = Params::zeros(c.shape).size();
  if (count != expected) {
    throw CheckpointFormatError("checkpoint: header lists " + std::to_string(count) + " parameters, architecture has " +
                                std::to_string(expected));
  }
  const std::string_view payload = bytes.substr(20 + hlen);
  if (payload.size() < count * 8) {
    throw CheckpointTruncatedError("checkpoint: " + std::to_string(payload.size() / 8) + " of " +
                                   std::to_string(count) + " parameters present");
  }
  if (payload.size() > count * 8) throw CheckpointFormatError("checkpoint: trailing bytes after the parameters");
  const std::string actual = git_blob_hash(payload);
  if (actual != c.content_hash) {
    const std::string msg = "checkpoint: parameter hash " + actual + " does not match recorded " + c.content_hash;
    if (!force) throw CheckpointHashError(msg);
    c.warnings.push_back(msg);
  }
  c.parameters.resize(count);
  std::memcpy(c.parameters.data(), payload.data(), count * 8);
  return c;
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

void save_checkpoint(const std::string& path, const MlpNet& net, const nlohmann::json& provenance) {
  write_file_atomic(path, encode_checkpoint(net, provenance));
}

Checkpoint load_checkpoint(const std::string& path, bool force) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), force);
}

}  // namespace bonsai
