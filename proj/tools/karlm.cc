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

// karlm: synth, train, eval, link, trace.

#include <iostream>

#include "CLI11.hpp"
#include "karlm/cli.h"

namespace {

void add_common(CLI::App *cmd, karlm::CommonOptions &common) {
  cmd->add_option("-c,--config", common.config, "JSON run configuration");
  cmd->add_option("--set", common.overrides,
                  "override, e.g. train.lr=5e-4 (repeatable)")
      ->allow_extra_args(false);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Knowledge-enhanced masked language model toolkit"};
  app.require_subcommand(1);

  karlm::SynthOptions synth;
  CLI::App *synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth_cmd, synth.common);
  synth_cmd->add_option("-o,--out", synth.out, "output directory");
  synth_cmd->add_option("--kind", synth.kind, "facts or linking")
      ->check(CLI::IsMember({"facts", "linking"}));

  karlm::TrainOptions train;
  CLI::App *train_cmd = app.add_subcommand("train", "run one training stage");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--stage", train.stage, "linker or full")
      ->check(CLI::IsMember({"linker", "full"}));
  train_cmd->add_option("--kb", train.kb, "KB to train (next in order by default)");
  train_cmd->add_flag("--resume", train.resume, "continue an interrupted stage");
  train_cmd->add_option("--stop-after", train.stop_after,
                        "checkpoint and exit after this many steps");

  karlm::EvalOptions eval;
  CLI::App *eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint");
  eval_cmd->add_option("--probe", eval.probe, "ppl, mrr, el or wsd")
      ->check(CLI::IsMember({"ppl", "mrr", "el", "wsd"}));
  eval_cmd->add_option("-o,--out", eval.out, "report path without extension");

  karlm::LinkOptions link;
  CLI::App *link_cmd = app.add_subcommand("link", "link the mentions of one sentence");
  add_common(link_cmd, link.common);
  link_cmd->add_option("--checkpoint", link.checkpoint, "model checkpoint");
  link_cmd->add_option("sentence", link.sentence, "input sentence")->required();
  link_cmd->add_option("--top-k", link.top_k, "candidates shown per span");
  link_cmd->add_flag("--json", link.json, "print JSON");

  karlm::TraceOptions trace;
  CLI::App *trace_cmd =
      app.add_subcommand("trace", "dump every intermediate of the worked KAR example");
  trace_cmd->add_option("-o,--out", trace.out, "output file (stdout by default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? karlm::kExitOk : karlm::kExitInvalid;
  }

  if (*synth_cmd) return karlm::cmd_synth(synth, std::cout, std::cerr);
  if (*train_cmd) return karlm::cmd_train(train, std::cout, std::cerr);
  if (*eval_cmd) return karlm::cmd_eval(eval, std::cout, std::cerr);
  if (*link_cmd) return karlm::cmd_link(link, std::cout, std::cerr);
  return karlm::cmd_trace(trace, std::cout, std::cerr);
}
