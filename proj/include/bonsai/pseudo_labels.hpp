// bonsai/pseudo_labels.hpp

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

#ifndef BONSAI_PSEUDO_LABELS_HPP_
#define BONSAI_PSEUDO_LABELS_HPP_

#include <cstdint>
#include <vector>

#include "bonsai/common.hpp"

namespace bonsai {

/// Teacher outputs over a dataset D: one hard label vector and one logit
/// vector per discovery model, plus the mask of A, the examples every teacher
/// classifies correctly.
struct PseudoLabelSet {
  std::vector<Vector> labels;
  std::vector<Vector> logits;
  std::vector<std::uint8_t> mask_a;

  Index count() const { return static_cast<Index>(labels.size()); }
  Index size() const { return static_cast<Index>(mask_a.size()); }
  Index a_size() const;
  void validate() const;
};

}  // namespace bonsai

#endif  // BONSAI_PSEUDO_LABELS_HPP_
