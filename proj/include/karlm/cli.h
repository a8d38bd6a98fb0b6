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

// Command implementations behind the karlm executable. Each returns an exit
// code and never throws: 0 success, 1 invalid input or configuration,
// 2 runtime failure.

#ifndef KARLM_CLI_H_
#define KARLM_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace karlm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config;                  // may be empty: defaults only
  std::vector<std::string> overrides;  // "a.b=value"
};

struct SynthOptions {
  CommonOptions common;
  std::string out;            // output_dir when empty
  std::string kind = "facts";  // facts | linking
};

struct TrainOptions {
  CommonOptions common;
  std::string stage = "full";  // linker | full
  std::string kb;              // next KB in order when empty
  bool resume = false;
  int stop_after = -1;
};

struct EvalOptions {
  CommonOptions common;
  std::string checkpoint;  // output_dir/model.ckpt when empty
  std::string probe = "ppl";  // ppl | mrr | el | wsd
  std::string out;            // output_dir/eval_<probe> when empty
};

struct LinkOptions {
  CommonOptions common;
  std::string checkpoint;
  std::string sentence;
  int top_k = 5;
  bool json = false;
};

struct TraceOptions {
  std::string out;  // stdout when empty
};

int cmd_synth(const SynthOptions &options, std::ostream &out, std::ostream &err);
int cmd_train(const TrainOptions &options, std::ostream &out, std::ostream &err);
int cmd_eval(const EvalOptions &options, std::ostream &out, std::ostream &err);
int cmd_link(const LinkOptions &options, std::ostream &out, std::ostream &err);
int cmd_trace(const TraceOptions &options, std::ostream &out, std::ostream &err);

}  // namespace karlm

#endif  // KARLM_CLI_H_
