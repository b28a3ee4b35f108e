#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mmrr/app/config.hpp"
#include "mmrr/app/manifest.hpp"
#include "mmrr/app/plots.hpp"
#include "mmrr/data/corpus.hpp"
#include "mmrr/eval/compare.hpp"
#include "mmrr/synth/audit.hpp"

namespace mmrr::app {

namespace fs = std::filesystem;

// Generated corpus failed its own resolvability audit (exit code 1).
class AuditFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kOutputRootEnv = "MMRR_OUTPUT_ROOT";

// --out if given, else $MMRR_OUTPUT_ROOT/<command>.
inline fs::path output_dir(const std::optional<fs::path>& out, const std::string& command) {
  fs::path dir;
  if (out) {
    dir = *out;
  } else if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    dir = fs::path(root) / command;
  } else {
    throw UsageError("no output directory: pass --out or set " + std::string(kOutputRootEnv));
  }
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec))
    throw UsageError("output path " + dir.string() + " exists and is not a directory");
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  return dir;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline std::vector<data::DialogueDocument> read_corpus(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("corpus " + p.string() + " does not exist");
  return data::load_corpus(p);
}

inline model::Checkpoint read_checkpoint(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("checkpoint " + p.string() + " does not exist");
  return model::load_checkpoint(p);
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Settings settings;
  std::optional<fs::path> out;
};

inline void cmd_synth(const SynthArgs& a, std::ostream& log) {
  Stopwatch sw;
  const auto cfg = resolve(a.settings);
  const auto dir = output_dir(a.out, "synth");
  RunManifest man;
  man.command = "synth";
  man.started_at = utc_now();
  man.config = {{"synth", to_json(cfg.synth)}};
  man.seeds = {cfg.synth.seed};
  const auto corpus = synth::generate(cfg.synth);
  const auto audit = synth::resolvability_audit(corpus.documents);
  if (!audit.passed()) throw AuditFailure("resolvability audit failed: " + audit.summary());
  data::save_corpus(dir / "corpus.jsonl", corpus.documents);
  std::vector<std::string> outputs = {"corpus.jsonl"};
  for (const auto& d : corpus.documents) outputs.push_back("features/" + d.id + ".rfnf");
  man.extra = {{"documents", corpus.documents.size()},
               {"references", corpus.stats.references},
               {"eligible_references", corpus.stats.eligible_references},
               {"pronouns", corpus.stats.pronouns},
               {"zero_references", corpus.stats.zero_references},
               {"audit", audit.summary()}};
  man.wall_clock_s = sw.seconds();
  write_manifest(dir, man, outputs);
  log << "wrote " << corpus.documents.size() << " dialogues to " << (dir / "corpus.jsonl").string() << '\n';
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string task;  // trr | mrr
  fs::path corpus;
  Settings settings;
  std::optional<std::string> labels;
  std::optional<fs::path> init_encoder;
  std::optional<fs::path> eval_corpus;
  std::size_t seeds = 1;
  std::optional<fs::path> out;
};

inline LabelPreset task_preset(const std::string& task, const std::optional<std::string>& labels,
                               LabelPreset configured, bool configured_explicitly) {
  std::optional<LabelPreset> p;
  if (labels) {
    p = parse_preset(*labels);
    if (!p) throw UsageError("unknown label preset '" + *labels + "'");
  } else if (configured_explicitly) {
    p = configured;
  } else {
    p = task == "trr" ? LabelPreset::kFullTrr : LabelPreset::kFullMrr;
  }
  const bool trr_ok = *p == LabelPreset::kCoref || *p == LabelPreset::kPasBa || *p == LabelPreset::kFullTrr;
  const bool mrr_ok = *p == LabelPreset::kDirectOnly || *p == LabelPreset::kFullMrr;
  if ((task == "trr" && !trr_ok) || (task == "mrr" && !mrr_ok))
    throw UsageError("label preset '" + std::string(preset_name(*p)) + "' does not apply to task " + task);
  return *p;
}

inline std::size_t feature_width(const std::vector<data::DialogueDocument>& docs) {
  for (const auto& d : docs)
    for (const auto& f : d.frames)
      if (!f.candidates.empty()) return f.candidates.front().feature.size();
  return 0;
}

inline model::MrrConfig mrr_config_for(const RunConfig& cfg, const std::vector<data::DialogueDocument>& docs) {
  model::MrrConfig m;
  m.encoder = cfg.encoder;
  m.fusion = cfg.fusion;
  if (!cfg.d_object_set) {
    const auto w = feature_width(docs);
    if (w == 0) throw UsageError("corpus has no object candidates");
    m.fusion.d_object = w;
  }
  return model::MrrModel<float>::normalized(m);
}

inline void cmd_train(const TrainArgs& a, std::ostream& log) {
  Stopwatch sw;
  if (a.task != "trr" && a.task != "mrr") throw UsageError("task must be trr or mrr, got '" + a.task + "'");
  if (a.seeds == 0) throw UsageError("--seeds must be positive");
  if (a.init_encoder && a.task != "mrr") throw UsageError("--init-encoder applies to mrr training only");
  auto cfg = resolve(a.settings);
  cfg.train.preset = task_preset(a.task, a.labels, cfg.train.preset, a.settings.count("train.preset") > 0);
  const auto docs = read_corpus(a.corpus);
  std::optional<model::Checkpoint> init;
  if (a.init_encoder) {
    init = read_checkpoint(*a.init_encoder);
    if (init->kind != "trr") throw UsageError("--init-encoder expects a trr checkpoint, got " + init->kind);
  }
  std::optional<std::vector<data::DialogueDocument>> eval_docs;
  if (a.eval_corpus) eval_docs = read_corpus(*a.eval_corpus);
  if (eval_docs && a.task != "mrr") throw UsageError("--eval-corpus applies to mrr training only");
  const auto dir = output_dir(a.out, "train");

  std::vector<double> final_losses;
  std::vector<eval::EvalReport> reports;
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    Stopwatch run_sw;
    auto run = cfg;
    run.train.seed += s;
    run.encoder.seed += s;
    run.fusion.seed += s;
    seeds.push_back(run.train.seed);
    const fs::path sub = a.seeds == 1 ? dir : dir / ("seed" + std::to_string(run.train.seed));
    fs::create_directories(sub);
    std::ofstream train_log(sub / "train_log.jsonl", std::ios::binary);
    train::TrainOptions opt;
    opt.log = &train_log;
    opt.split = "train";

    RunManifest man;
    man.command = "train " + a.task;
    man.started_at = utc_now();
    man.seeds = {run.train.seed};
    man.add_input("corpus", a.corpus);
    model::Checkpoint ck;
    double final_loss = 0;
    if (a.task == "trr") {
      man.config = {{"train", train::to_json(run.train)}, {"encoder", model::to_json(run.encoder)}};
      auto r = train::train_trr(docs, run.train, run.encoder, opt);
      ck = std::move(r.checkpoint);
      final_loss = r.fit.step_losses.back();
    } else {
      const auto mcfg = mrr_config_for(run, docs);
      man.config = {{"train", train::to_json(run.train)},
                    {"encoder", model::to_json(mcfg.encoder)},
                    {"fusion", model::to_json(mcfg.fusion)}};
      if (a.init_encoder) {
        man.add_input("init_encoder", *a.init_encoder);
        man.extra["init_encoder_hash"] = file_hash(*a.init_encoder);
      }
      train::TrainedMrr r = [&] {
        try {
          return train::train_mrr(docs, run.train, mcfg, init ? &*init : nullptr, opt);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }();
      ck = std::move(r.checkpoint);
      final_loss = r.fit.step_losses.back();
      if (eval_docs) {
        auto ecfg = run.eval;
        ecfg.window = run.train.window;
        auto rep = eval::evaluate_mrr(r.model, *eval_docs, ecfg);
        write_text(sub / "eval_report.json", eval::report_to_json(rep).dump(2) + "\n");
        reports.push_back(std::move(rep));
      }
    }
    train_log.close();
    model::save_checkpoint(sub / "checkpoint.rfck", ck);
    final_losses.push_back(final_loss);
    man.extra["steps"] = ck.step;
    man.extra["final_loss"] = final_loss;
    man.wall_clock_s = run_sw.seconds();
    std::vector<std::string> outs = {"checkpoint.rfck", "train_log.jsonl"};
    if (eval_docs) outs.push_back("eval_report.json");
    write_manifest(sub, man, outs);
    log << "seed " << run.train.seed << ": " << ck.step << " steps, final loss " << final_loss << " -> "
        << (sub / "checkpoint.rfck").string() << '\n';
  }

  if (a.seeds > 1) {
    const auto ms = eval::mean_sd(final_losses);
    Json summary = {{"seeds", seeds},
                    {"final_loss", {{"values", final_losses}, {"mean", ms.mean}, {"sd", ms.sd}}}};
    if (!reports.empty()) summary["report"] = eval::report_to_json(eval::average_reports(reports));
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    RunManifest man;
    man.command = "train " + a.task;
    man.started_at = utc_now();
    man.seeds = seeds;
    man.add_input("corpus", a.corpus);
    if (a.init_encoder) man.add_input("init_encoder", *a.init_encoder);
    man.config = {{"train", train::to_json(cfg.train)}, {"runs", a.seeds}};
    man.wall_clock_s = sw.seconds();
    write_manifest(dir, man, {"summary.json"});
  }
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  fs::path checkpoint;
  fs::path corpus;
  Settings settings;
  std::optional<std::vector<int>> lengths;
  bool confidence = false;
  std::optional<fs::path> out;
};

inline void cmd_eval(const EvalArgs& a, std::ostream& log) {
  Stopwatch sw;
  auto cfg = resolve(a.settings).eval;
  if (a.lengths) cfg.lengths = *a.lengths;
  cfg.confidence = cfg.confidence || a.confidence;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto ck = read_checkpoint(a.checkpoint);
  if (ck.kind != "mrr") throw UsageError("eval expects an mrr checkpoint, got " + ck.kind);
  const auto docs = read_corpus(a.corpus);
  const auto m = model::mrr_model_from<float>(ck);
  const auto w = feature_width(docs);
  if (w != m.config().fusion.d_object)
    throw UsageError("corpus features have width " + std::to_string(w) + " but the checkpoint expects " +
                     std::to_string(m.config().fusion.d_object));
  const auto dir = output_dir(a.out, "eval");
  const auto rep = eval::evaluate_mrr(m, docs, cfg);
  write_text(dir / "report.json", eval::report_to_json(rep).dump(2) + "\n");
  write_text(dir / "report.txt", eval::report_to_text(rep));
  RunManifest man;
  man.command = "eval";
  man.started_at = utc_now();
  man.config = {{"eval", eval::to_json(cfg)}};
  man.seeds = {ck.seed};
  man.add_input("checkpoint", a.checkpoint);
  man.add_input("corpus", a.corpus);
  man.wall_clock_s = sw.seconds();
  write_manifest(dir, man, {"report.json", "report.txt"});
  log << eval::report_to_text(rep);
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<fs::path> reports;
  std::optional<fs::path> baseline;  // defaults to the first report
  std::optional<fs::path> out;
};

inline eval::EvalReport read_report(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("report " + p.string() + " does not exist");
  try {
    return eval::report_from_json(Json::parse(model::read_bytes(p)));
  } catch (const Json::parse_error& e) {
    throw eval::ReportError(p.string() + ": " + e.what());
  }
}

inline std::string report_label(const fs::path& p) {
  const auto parent = p.parent_path().filename().string();
  return parent.empty() ? p.stem().string() : parent;
}

inline std::string comparison_text(const std::string& base_name, const std::vector<std::string>& names,
                                   const std::vector<eval::DeltaRow>& rows) {
  std::ostringstream os;
  os << "baseline: " << base_name << '\n';
  os << std::left << std::setw(10) << "relation" << std::setw(12) << "category" << std::setw(6) << "k" << std::right
     << std::setw(10) << "baseline";
  for (const auto& n : names) os << std::setw(22) << n.substr(0, 20);
  os << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(10) << r.relation << std::setw(12) << r.category << std::setw(6)
       << ("R@" + std::to_string(r.k)) << std::right << std::setw(10) << eval::format_recall(r.baseline);
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      std::ostringstream cell;
      cell << eval::format_recall(r.values[i]);
      if (r.deltas[i]) cell << " (" << std::showpos << std::fixed << std::setprecision(3) << *r.deltas[i] << ")"
                            << std::noshowpos << eval::delta_mark(r.deltas[i]);
      os << std::setw(22) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

inline void cmd_report(const ReportArgs& a, std::ostream& log) {
  Stopwatch sw;
  if (a.reports.empty()) throw UsageError("report needs at least one report file");
  const fs::path base_path = a.baseline ? *a.baseline : a.reports.front();
  const auto base = read_report(base_path);
  std::vector<eval::EvalReport> others;
  std::vector<std::string> names;
  for (const auto& p : a.reports) {
    others.push_back(read_report(p));
    names.push_back(report_label(p));
  }
  const auto rows = eval::compare_reports(base, others);
  const auto dir = output_dir(a.out, "report");

  Json j = {{"baseline", base_path.string()}, {"reports", Json::array()}, {"rows", Json::array()}};
  for (const auto& p : a.reports) j["reports"].push_back(p.string());
  for (const auto& r : rows) {
    Json rec = {{"relation", r.relation}, {"category", r.category}, {"k", r.k},
                {"baseline", eval::optional_json(r.baseline)}};
    rec["values"] = Json::array();
    rec["deltas"] = Json::array();
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      rec["values"].push_back(eval::optional_json(r.values[i]));
      rec["deltas"].push_back(eval::optional_json(r.deltas[i]));
    }
    j["rows"].push_back(rec);
  }
  const auto text = comparison_text(report_label(base_path), names, rows);
  write_text(dir / "comparison.json", j.dump(2) + "\n");
  write_text(dir / "comparison.txt", text);
  std::vector<std::string> outputs = {"comparison.json", "comparison.txt"};

  // Recall@1 against window length, per report and category.
  std::vector<svg::Series> series;
  for (std::size_t i = 0; i < others.size(); ++i)
    for (const std::string cat : {"overall", "nouns", "pronouns"}) {
      svg::Series s{names[i] + " " + cat, {}};
      for (const auto& r : others[i].length_sweep)
        if (r.relation == "=" && r.category == cat && !r.recall.empty() && r.recall.front())
          s.points.emplace_back(r.length, *r.recall.front());
      if (!s.points.empty()) series.push_back(std::move(s));
    }
  if (!series.empty()) {
    write_text(dir / "recall_vs_length.svg",
               svg::line_chart("Recall@1 by utterance length", "utterances per window", "R@1", series));
    outputs.push_back("recall_vs_length.svg");
  }
  std::vector<std::string> groups;
  std::vector<std::pair<std::string, std::vector<double>>> bars;
  for (std::size_t i = 0; i < others.size(); ++i) {
    if (!others[i].confidence) continue;
    const auto& c = *others[i].confidence;
    std::vector<std::string> g;
    std::vector<double> v;
    for (const auto& [k, x] : c.top) g.push_back("top-" + std::to_string(k)), v.push_back(x);
    for (const auto& [k, x] : c.bottom) g.push_back("bottom-" + std::to_string(k)), v.push_back(x);
    g.push_back("all");
    v.push_back(c.all);
    if (groups.empty()) groups = g;
    bars.emplace_back(names[i], v);
  }
  if (!bars.empty()) {
    write_text(dir / "confidence.svg", svg::bar_chart("Average confidence", groups, bars));
    outputs.push_back("confidence.svg");
  }
  RunManifest man;
  man.command = "report";
  man.started_at = utc_now();
  man.add_input("baseline", base_path);
  for (const auto& p : a.reports) man.add_input("report", p);
  man.wall_clock_s = sw.seconds();
  write_manifest(dir, man, outputs);
  log << text;
}

}  // namespace mmrr::app
