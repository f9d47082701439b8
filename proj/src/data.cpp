// bonsai/data.cpp

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

#include "bonsai/data.hpp"

#include <cmath>
#include <numeric>

namespace bonsai {

Example Dataset::example(Index i) const {
  require(i >= 0 && i < size(), "Dataset::example: index out of range");
  return {x.row(i).transpose(), y[i], env[static_cast<std::size_t>(i)]};
}

Dataset Dataset::rows(std::span<const Index> idx) const {
  Dataset out;
  out.x.resize(static_cast<Index>(idx.size()), dim());
  out.y.resize(static_cast<Index>(idx.size()));
  out.env.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Index i = idx[r];
    require(i >= 0 && i < size(), "Dataset::rows: index out of range");
    out.x.row(static_cast<Index>(r)) = x.row(i);
    out.y[static_cast<Index>(r)] = y[i];
    out.env[r] = env[static_cast<std::size_t>(i)];
  }
  return out;
}

void Dataset::validate() const {
  require(y.size() == x.rows(), "Dataset: label count does not match rows");
  require(static_cast<Index>(env.size()) == x.rows(), "Dataset: env id count does not match rows");
  require(x.allFinite(), "Dataset: non-finite feature value");
  for (Index i = 0; i < y.size(); ++i) {
    require(y[i] == 0.0 || y[i] == 1.0, "Dataset: labels must be 0 or 1");
  }
}

Dataset Dataset::concat(std::span<const Dataset* const> parts) {
  Dataset out;
  Index n = 0;
  Index d = parts.empty() ? 0 : parts.front()->dim();
  for (const Dataset* p : parts) {
    require(p->dim() == d, "Dataset::concat: dimension mismatch");
    n += p->size();
  }
  out.x.resize(n, d);
  out.y.resize(n);
  out.env.reserve(static_cast<std::size_t>(n));
  Index at = 0;
  for (const Dataset* p : parts) {
    out.x.middleRows(at, p->size()) = p->x;
    out.y.segment(at, p->size()) = p->y;
    out.env.insert(out.env.end(), p->env.begin(), p->env.end());
    at += p->size();
  }
  return out;
}

std::string to_string(Role r) {
  switch (r) {
    case Role::kTrain:
      return "train";
    case Role::kValid:
      return "valid";
    case Role::kTest:
      return "test";
  }
  return "train";
}

Role role_from_string(const std::string& s) {
  if (s == "train") return Role::kTrain;
  if (s == "valid") return Role::kValid;
  if (s == "test") return Role::kTest;
  throw InvalidArgument("unknown environment role '" + s + "'");
}

Index EnvironmentSet::dim() const { return envs.empty() ? 0 : envs.front().data.dim(); }

std::vector<const Environment*> EnvironmentSet::with_role(Role r) const {
  std::vector<const Environment*> out;
  for (const auto& e : envs) {
    if (e.role == r) out.push_back(&e);
  }
  return out;
}

void EnvironmentSet::validate() const {
  for (const auto& e : envs) {
    require(e.data.dim() == dim(), "EnvironmentSet: environment '" + e.name + "' has a different dimension");
    e.data.validate();
  }
}

std::vector<Group> environment_groups(const EnvironmentSet& set, Role role, Dataset& pooled) {
  std::vector<const Dataset*> parts;
  std::vector<Group> groups;
  Index at = 0;
  for (const Environment* e : set.with_role(role)) {
    parts.push_back(&e->data);
    Group g{e->name, std::vector<Index>(static_cast<std::size_t>(e->data.size()))};
    std::iota(g.rows.begin(), g.rows.end(), at);
    at += e->data.size();
    groups.push_back(std::move(g));
  }
  pooled = Dataset::concat(parts);
  return groups;
}

std::vector<Group> whole_group(const Dataset& d, const std::string& name) {
  Group g{name, std::vector<Index>(static_cast<std::size_t>(d.size()))};
  std::iota(g.rows.begin(), g.rows.end(), Index{0});
  return {std::move(g)};
}

}  // namespace bonsai
