// Copyright 2026 The Tiereval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TIEREVAL_TESTS_FIXTURES_HPP_
#define TIEREVAL_TESTS_FIXTURES_HPP_

namespace tiereval::testing {

// Output shaped like the prompt's requested structure, all 18 attributes.
inline constexpr const char* kWellFormedOutput = R"({
  "shape_attributes": {
    "sleeve_length": {"value": "long-sleeve", "reasoning": "Sleeves reach the wrist.", "confidence": 0.9},
    "lower_clothing_length": {"value": "long", "reasoning": "Trousers reach the ankle.", "confidence": 0.8},
    "socks": {"value": "no", "reasoning": "Bare ankles.", "confidence": 0.7},
    "hat": {"value": "no", "reasoning": "Head uncovered.", "confidence": 1.0},
    "glasses": {"value": "NA", "reasoning": "Face cropped.", "confidence": 0.6},
    "neckwear": {"value": "no", "reasoning": "Open collar.", "confidence": 0.9},
    "wrist_wearing": {"value": "yes", "reasoning": "Watch on left wrist.", "confidence": 0.8},
    "ring": {"value": "no", "reasoning": "Hands visible, no ring.", "confidence": 0.7},
    "waist_accessories": {"value": "belt", "reasoning": "Leather belt.", "confidence": 0.9},
    "neckline": {"value": "lapel", "reasoning": "Blazer lapels.", "confidence": 0.8},
    "outer_clothing_cardigan": {"value": "no", "reasoning": "Outer layer is a blazer.", "confidence": 0.9},
    "upper_clothing_covering_navel": {"value": "yes", "reasoning": "Shirt tucked in.", "confidence": 1.0}
  },
  "fabric_attributes": {
    "upper_fabric": {"value": "cotton", "reasoning": "Matte woven shirt.", "confidence": 0.7},
    "lower_fabric": {"value": "denim", "reasoning": "Blue twill.", "confidence": 0.9},
    "outer_fabric": {"value": "other", "reasoning": "Wool blazer.", "confidence": 0.5}
  },
  "pattern_attributes": {
    "upper_pattern": {"value": "pure color", "reasoning": "Plain white.", "confidence": 0.9},
    "lower_pattern": {"value": "pure color", "reasoning": "Plain blue.", "confidence": 0.9},
    "outer_pattern": {"value": "lattice", "reasoning": "Check weave.", "confidence": 0.6}
  }
})";

}  // namespace tiereval::testing

#endif  // TIEREVAL_TESTS_FIXTURES_HPP_
