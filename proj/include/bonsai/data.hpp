// bonsai/data.hpp

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

#ifndef BONSAI_DATA_HPP_
#define BONSAI_DATA_HPP_

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/common.hpp"

namespace bonsai {

struct Example {
  Vector x;
  double y = 0.0;
  int env_id = 0;
};

/// Labeled examples stored column-wise: row i of `x` is example i.
struct Dataset {
  Matrix x;
  Vector y;              // labels in {0, 1}
  std::vector<int> env;  // environment id per row

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
  Example example(Index i) const;
  Dataset rows(std::span<const Index> idx) const;
  void validate() const;

  /// Row-wise concatenation; dimensions must agree.
  static Dataset concat(std::span<const Dataset* const> parts);
};

enum class Role { kTrain, kValid, kTest };

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct Environment {
  std::string name;
  Role role = Role::kTrain;
  Dataset data;
};

/// Ordered environments D^1..D^N with their roles and the generator
/// parameters that produced them.
struct EnvironmentSet {
  std::vector<Environment> envs;
  nlohmann::json spec;

  Index dim() const;
  std::vector<const Environment*> with_role(Role r) const;
  void validate() const;
};

/// A named subset of a dataset's rows.
struct Group {
  std::string name;
  std::vector<Index> rows;
};

/// One group per environment of `role`, over the concatenation of those
/// environments (in order). Returns the concatenated data through `pooled`.
std::vector<Group> environment_groups(const EnvironmentSet& set, Role role, Dataset& pooled);

/// Single group spanning all rows.
std::vector<Group> whole_group(const Dataset& d, const std::string& name = "all");

}  // namespace bonsai

#endif  // BONSAI_DATA_HPP_
