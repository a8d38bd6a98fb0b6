// Copyright 2026 The karlm Authors.
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

// The small KAR instance documented in docs/worked_example.py: four word
// pieces of width 4, one two-piece mention, two candidates (an entity and
// NULL), entity width 3. Every weight follows a closed formula so the
// reference script can rebuild it without touching this code.

#ifndef KARLM_WORKED_EXAMPLE_H_
#define KARLM_WORKED_EXAMPLE_H_

#include <string>

#include "json.hpp"
#include "karlm/kar.h"

namespace karlm {

struct WorkedExample {
  ParameterSet params;
  KarConfig config;
  KnowledgeBase kb;
  KarParams kar;
  Matrix h;
  CandidateList spans;
};

// 0.5 sin(1 + 0.7 r + 1.3 c + 0.9 rc + 0.37 tag), tag = byte sum of name mod 97;
// layer-norm gains add 1.
double worked_value(const std::string &name, int row, int col);

WorkedExample make_worked_example();

// Instance description plus every intermediate, same keys as trace_json.
nlohmann::json worked_example_trace();

}  // namespace karlm

#endif  // KARLM_WORKED_EXAMPLE_H_
