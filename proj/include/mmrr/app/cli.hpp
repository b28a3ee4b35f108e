#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmrr/app/commands.hpp"

namespace mmrr::app {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2 };

namespace detail {

inline Settings gather(const std::optional<std::string>& config, const std::vector<std::string>& sets) {
  Settings s;
  if (config) s = load_settings(*config);
  for (const auto& kv : sets) apply_override(s, kv);
  return s;
}

inline std::vector<int> parse_lengths(const std::string& v) {
  return detail::parse_list<int>("--ablate-utterance-length", v);
}

}  // namespace detail

// Parses argv and runs one command. Returns the process exit code:
// 0 success, 1 internal failure, 2 usage or input error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multimodal reference resolution toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::optional<std::string> config, out_dir;
  std::vector<std::string> sets;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "key = value settings file");
    sub->add_option("--set", sets, "override a setting (key=value); repeatable");
    sub->add_option("--out", out_dir, std::string("output directory (default $") + kOutputRootEnv + "/<command>)");
  };

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  common(synth_cmd);

  TrainArgs ta;
  std::string ta_corpus;
  std::optional<std::string> ta_labels, ta_init, ta_eval;
  auto* train_cmd = app.add_subcommand("train", "train a trr or mrr model");
  train_cmd->add_option("task", ta.task, "trr or mrr")->required();
  train_cmd->add_option("--corpus", ta_corpus, "training corpus (corpus.jsonl)")->required();
  train_cmd->add_option("--labels", ta_labels, "label preset: coref | pas-ba | trr | direct-only | mrr");
  train_cmd->add_option("--init-encoder", ta_init, "trr checkpoint whose encoder initialises the mrr model");
  train_cmd->add_option("--seeds", ta.seeds, "number of consecutive seeds to run");
  train_cmd->add_option("--eval-corpus", ta_eval, "evaluate every seed on this corpus and average");
  common(train_cmd);

  EvalArgs ea;
  std::string ea_ck, ea_corpus;
  std::optional<std::string> ea_lengths;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate an mrr checkpoint");
  eval_cmd->add_option("--checkpoint", ea_ck, "mrr checkpoint")->required();
  eval_cmd->add_option("--corpus", ea_corpus, "evaluation corpus")->required();
  eval_cmd->add_option("--ablate-utterance-length", ea_lengths, "comma-separated window lengths, e.g. 1,2,3,5");
  eval_cmd->add_flag("--confidence", ea.confidence, "add confidence statistics");
  common(eval_cmd);

  std::vector<std::string> rp_reports;
  std::optional<std::string> rp_baseline;
  auto* report_cmd = app.add_subcommand("report", "compare report files");
  report_cmd->add_option("reports", rp_reports, "report.json files");
  report_cmd->add_option("--baseline", rp_baseline, "baseline report (default: the first)");
  report_cmd->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  const auto out_path = out_dir ? std::optional<fs::path>(*out_dir) : std::nullopt;
  try {
    if (synth_cmd->parsed()) {
      cmd_synth({detail::gather(config, sets), out_path}, out);
    } else if (train_cmd->parsed()) {
      ta.corpus = ta_corpus;
      ta.settings = detail::gather(config, sets);
      ta.labels = ta_labels;
      if (ta_init) ta.init_encoder = *ta_init;
      if (ta_eval) ta.eval_corpus = *ta_eval;
      ta.out = out_path;
      cmd_train(ta, out);
    } else if (eval_cmd->parsed()) {
      ea.checkpoint = ea_ck;
      ea.corpus = ea_corpus;
      ea.settings = detail::gather(config, sets);
      if (ea_lengths) ea.lengths = detail::parse_lengths(*ea_lengths);
      ea.out = out_path;
      cmd_eval(ea, out);
    } else if (report_cmd->parsed()) {
      ReportArgs ra;
      for (const auto& r : rp_reports) ra.reports.emplace_back(r);
      if (rp_baseline) ra.baseline = *rp_baseline;
      ra.out = out_path;
      cmd_report(ra, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const data::CorpusError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const model::CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const eval::ReportError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}

}  // namespace mmrr::app
