// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <chrono>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "../eval_fixture.hpp"
#include "../gradcheck_fixture.hpp"
#include "mmrr/app/cli.hpp"
#include "mmrr/synth/generator.hpp"
#include "mmrr/train/trainer.hpp"

using namespace mmrr;
using M = num::Tensor<double>;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

M random_matrix(num::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  M m = M::matrix(r, c);
  for (auto& x : m.storage()) x = rng.normal() * scale;
  return m;
}

// 1. Finite differences against backprop for both losses, every parameter.
Outcome gradient_check() {
  double worst_trr = 0, worst_mrr = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    worst_trr = std::max(worst_trr, testing::check_trr(seed).max_relative_error);
    worst_mrr = std::max(worst_mrr, testing::check_mrr(seed).max_relative_error);
  }
  return {worst_trr < 1e-4 && worst_mrr < 1e-4,
          "20 seeds, max rel err trr " + fmt(worst_trr) + " mrr " + fmt(worst_mrr)};
}

// 2. Symmetry of S_l, equivariance of fusion, softmax rows, masked rows.
Outcome invariants() {
  Outcome out;
  auto fail = [&](const std::string& why) {
    out.pass = false;
    out.detail += why + "; ";
  };
  num::Rng rng(2024);

  std::size_t sym_checked = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto f = testing::make_grad_fixture(seed);
    model::TrrModel<double> m(f.vocab, testing::tiny_encoder());
    testing::randomize(m.parameters(), seed + 300);
    const auto tok = model::tokenize(f.vocab, f.text.window);
    const auto s = model::trr_similarity(model::trr_expand(m.encoder().encode(tok.ids), m.head(), LabelSet::all()));
    for (auto l : kAllLabels) {
      const auto& v = s.matrices[index_of(l)].value();
      for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j)
          if (v(i, j) != v(j, i)) fail("S not symmetric");
      ++sym_checked;
    }
  }

  double fusion_err = 0;
  {
    model::ParameterStore<double> store;
    model::Fusion<double> fus(store, {8, 8, 8, 2, 2, 16, 1});
    testing::randomize(store, 4, 0.3);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t q = 2 + rng.index(7);
      const M x = random_matrix(rng, q, 8), t = random_matrix(rng, 7, 8);
      std::vector<bool> valid(7, true);
      valid[rng.index(6) + 1] = false;
      std::vector<std::size_t> perm(q);
      for (std::size_t i = 0; i < q; ++i) perm[i] = i;
      rng.shuffle(perm);
      M px = M::matrix(q, 8);
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < 8; ++j) px(i, j) = x(perm[i], j);
      const auto a = fus.decode(num::constant(x), num::constant(t), valid).value();
      const auto b = fus.decode(num::constant(px), num::constant(t), valid).value();
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < 8; ++j) fusion_err = std::max(fusion_err, std::abs(b(i, j) - a(perm[i], j)));
    }
  }
  // The same property through the whole model: shuffling the candidates of
  // a frame shuffles the score columns.
  double model_err = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto f = testing::make_grad_fixture(seed);
    model::MrrModel<double> m(f.vocab, testing::tiny_mrr());
    testing::randomize(m.parameters(), seed + 400);
    const auto base = m.score_objects(f.mm);
    auto& fr = f.doc->frames[0];
    const auto orig = fr.candidates;
    std::vector<std::size_t> perm(orig.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t i = 0; i < perm.size(); ++i) fr.candidates[i] = orig[perm[i]];
    const auto shuffled = m.score_objects(f.mm);
    for (auto l : kAllLabels) {
      const auto& a = base[index_of(l)];
      const auto& b = shuffled[index_of(l)];
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < perm.size(); ++j) model_err = std::max(model_err, std::abs(b(i, j) - a(i, perm[j])));
    }
  }
  if (fusion_err > 1e-6) fail("fusion not equivariant");
  if (model_err > 1e-6) fail("scores not equivariant");

  double row_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + rng.index(6), c = 1 + rng.index(10);
    const auto p = num::softmax_rows(num::constant(random_matrix(rng, r, c, 20.0))).value();
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) s += p(i, j);
      row_err = std::max(row_err, std::abs(s - 1.0));
    }
  }
  if (row_err > 1e-6) fail("softmax rows off");

  std::size_t masked_rows = 0;
  double masked_grad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.index(5), q = 2 + rng.index(5);
    const std::size_t li = rng.index(kNumLabels);
    const LabelSet active{kAllLabels[li]};
    auto u = num::parameter(random_matrix(rng, m, q, 2.0));
    auto sv = num::parameter(random_matrix(rng, m, m, 2.0));
    auto nv = num::parameter(random_matrix(rng, m, 1, 2.0));
    model::SimilarityStack<double> us, ss;
    model::LabelStack<double> null;
    us.matrices[li] = u;
    ss.matrices[li] = sv;
    null[li] = nv;
    model::PooledTruth tu, ts;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      tu.positives[l] = num::Tensor<float>::matrix(m, q);
      ts.positives[l] = num::Tensor<float>::matrix(m, m);
      tu.row_included[l].assign(m, false);
      ts.row_included[l].assign(m, false);
    }
    for (std::size_t i = 0; i < m; ++i) {
      tu.positives[li](i, rng.index(q)) = 1.0f;
      tu.row_included[li][i] = rng.bernoulli(0.5);
      ts.row_included[li][i] = rng.bernoulli(0.5);
      const std::size_t j = rng.index(m);
      if (j != i) ts.positives[li](i, j) = 1.0f;
    }
    num::backward(model::loss_mrr(us, tu, active));
    num::backward(model::loss_trr(ss, null, ts, active));
    for (std::size_t i = 0; i < m; ++i) {
      if (!tu.row_included[li][i]) {
        ++masked_rows;
        for (std::size_t j = 0; j < q; ++j) masked_grad = std::max(masked_grad, std::abs(u.grad()(i, j)));
      }
      if (!ts.row_included[li][i]) {
        ++masked_rows;
        for (std::size_t j = 0; j < m; ++j) masked_grad = std::max(masked_grad, std::abs(sv.grad()(i, j)));
        masked_grad = std::max(masked_grad, std::abs(nv.grad()(i, 0)));
      }
    }
  }
  if (masked_grad != 0.0) fail("masked rows receive gradient");

  out.detail += std::to_string(sym_checked) + " S matrices symmetric, equivariance err " + fmt(fusion_err) + "/" +
                fmt(model_err) + ", row-sum err " + fmt(row_err) + ", " + std::to_string(masked_rows) +
                " masked rows max |grad| " + fmt(masked_grad);
  return out;
}

// 3. recall_at_k and iou against brute force; monotonicity; invariance under
// increasing confidence transforms.
Outcome metric_oracles() {
  Outcome out;
  num::Rng rng(33);
  std::size_t recall_mismatch = 0, monotone_viol = 0, transform_viol = 0, iou_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = testing::random_instance(rng);
    std::optional<double> prev;
    for (std::size_t k = 1; k <= 11; ++k) {
      const auto r = eval::recall_at_k(inst.preds, inst.gold, k);
      if (r != testing::recall_oracle(inst, k)) ++recall_mismatch;
      if (prev && *r < *prev) ++monotone_viol;
      prev = r;
      auto warped = inst.preds;
      for (auto& q : warped)
        for (auto& p : q) p.confidence = std::exp(3.0 * p.confidence) + p.confidence * p.confidence * p.confidence;
      if (eval::recall_at_k(warped, inst.gold, k) != r) ++transform_viol;
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    int c[8];
    for (int b = 0; b < 2; ++b) {
      c[4 * b] = rng.integer(0, 18);
      c[4 * b + 1] = rng.integer(0, 18);
      c[4 * b + 2] = rng.integer(c[4 * b] + 1, 20);
      c[4 * b + 3] = rng.integer(c[4 * b + 1] + 1, 20);
    }
    long inter = 0, uni = 0;
    for (int x = 0; x < 20; ++x)
      for (int y = 0; y < 20; ++y) {
        const bool a = x >= c[0] && x < c[2] && y >= c[1] && y < c[3];
        const bool b = x >= c[4] && x < c[6] && y >= c[5] && y < c[7];
        inter += a && b;
        uni += a || b;
      }
    const double v = iou(BoundingBox(c[0], c[1], c[2], c[3]), BoundingBox(c[4], c[5], c[6], c[7]));
    if (std::abs(v - static_cast<double>(inter) / static_cast<double>(uni)) > 1e-12) ++iou_mismatch;
  }
  out.pass = recall_mismatch + monotone_viol + transform_viol + iou_mismatch == 0;
  out.detail = "200 instances each; recall mismatches " + std::to_string(recall_mismatch) + ", iou mismatches " +
               std::to_string(iou_mismatch) + ", monotone violations " + std::to_string(monotone_viol) +
               ", transform violations " + std::to_string(transform_viol);
  return out;
}

double overall(const eval::EvalReport& rep, RelationLabel l) {
  const auto* r = rep.find(std::string(label_name(l)), "overall", 1);
  return r && r->recall ? *r->recall : 0.0;
}

// 4. Training-set recall after fitting 20 synthetic dialogues.
Outcome memorization() {
  synth::SynthConfig sc;
  sc.dialogues = 20;
  sc.candidates = 8;
  sc.feature_dim = 64;
  const auto docs = synth::generate(sc).documents;
  model::MrrConfig mc;
  mc.encoder = {64, 1, 4, 64, 128, 1};
  mc.fusion = {64, 64, 64, 2, 4, 128, 2};
  train::TrainConfig tc;
  tc.preset = LabelPreset::kFullMrr;
  tc.lr = 1e-3;
  tc.warmup = 50;
  tc.batch_size = 8;
  tc.epochs = 60;
  tc.window = 3;
  const auto trained = train::train_mrr(docs, tc, mc);
  eval::EvalConfig ec;
  ec.ks = {1};
  ec.window = 3;
  const auto rep = eval::evaluate_mrr(trained.model, docs, ec);
  const double direct = overall(rep, RelationLabel::kDirect);
  double ind = 0;
  std::string per;
  for (auto l : kAllLabels) {
    if (l == RelationLabel::kDirect) continue;
    ind += overall(rep, l) / static_cast<double>(kNumLabels - 1);
    per += " " + std::string(label_name(l)) + "=" + fmt(overall(rep, l), 3);
  }
  return {direct >= 0.95 && ind >= 0.90,
          "R@1 DIRECT " + fmt(direct, 3) + ", indirect mean " + fmt(ind, 3) + " (" + per.substr(1) + ")"};
}

// 5. Held-out recall of MRR models whose encoder was pre-trained on text
// relations, against a randomly initialized encoder.
Outcome transfer() {
  std::vector<double> base_pron, coref_pron, base_zero, pasba_zero;
  std::size_t n_pron = 0, n_zero = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    synth::SynthConfig sc;
    sc.dialogues = 100;
    sc.candidates = 8;
    sc.feature_dim = 64;
    sc.pronoun_rate = 0.5;
    sc.zero_rate = 0.3;
    sc.seed = 100 + seed;
    const auto all = synth::generate(sc).documents;
    const std::vector<data::DialogueDocument> train_docs(all.begin(), all.begin() + 80), test_docs(all.begin() + 80,
                                                                                                   all.end());
    model::MrrConfig mc;
    mc.encoder = {64, 1, 4, 64, 128, seed};
    mc.fusion = {64, 64, 64, 2, 4, 128, seed + 50};
    train::TrainConfig tc;
    tc.lr = 1e-3;
    tc.warmup = 100;
    tc.batch_size = 16;
    tc.epochs = 20;
    tc.window = 3;
    tc.seed = seed;
    tc.preset = LabelPreset::kFullMrr;
    eval::EvalConfig ec;
    ec.ks = {1};
    ec.window = 3;
    auto measure = [&](const model::MrrModel<float>& m, std::vector<double>& pron, std::vector<double>* zero) {
      const auto rep = eval::evaluate_mrr(m, test_docs, ec);
      pron.push_back(eval::recall_where(rep.queries, 1, kIouThreshold,
                                        [](const eval::QueryResult& q) {
                                          return q.label == RelationLabel::kDirect &&
                                                 q.category == eval::Category::kPronoun;
                                        },
                                        &n_pron)
                         .value_or(0.0));
      if (zero)
        zero->push_back(eval::recall_where(rep.queries, 1, kIouThreshold,
                                           [](const eval::QueryResult& q) {
                                             return q.label != RelationLabel::kDirect && q.zero_reference;
                                           },
                                           &n_zero)
                            .value_or(0.0));
    };
    const auto base = train::train_mrr(train_docs, tc, mc);
    measure(base.model, base_pron, &base_zero);
    std::vector<double> unused;
    for (auto preset : {LabelPreset::kCoref, LabelPreset::kPasBa}) {
      auto pc = tc;
      pc.preset = preset;
      const auto trr = train::train_trr(train_docs, pc, mc.encoder);
      const auto m = train::train_mrr(train_docs, tc, mc, &trr.checkpoint);
      if (preset == LabelPreset::kCoref)
        measure(m.model, coref_pron, nullptr);
      else
        measure(m.model, unused, &pasba_zero);
    }
    std::cout << "  seed " << seed << ": pronoun base " << fmt(base_pron.back(), 3) << " coref "
              << fmt(coref_pron.back(), 3) << " | zero-ref base " << fmt(base_zero.back(), 3) << " pas-ba "
              << fmt(pasba_zero.back(), 3) << std::endl;
  }
  const auto bp = eval::mean_sd(base_pron), cp = eval::mean_sd(coref_pron);
  const auto bz = eval::mean_sd(base_zero), pz = eval::mean_sd(pasba_zero);
  const bool pron_ok = cp.mean >= bp.mean - eval::pooled_sd(bp, cp);
  const bool zero_ok = pz.mean >= bz.mean - eval::pooled_sd(bz, pz);
  return {pron_ok && zero_ok, "pronoun R@1 coref " + fmt(cp.mean, 3) + " vs base " + fmt(bp.mean, 3) + " (sd " +
                                  fmt(eval::pooled_sd(bp, cp), 3) + ", last seed n=" + std::to_string(n_pron) +
                                  "); zero-ref R@1 pas-ba " + fmt(pz.mean, 3) + " vs base " + fmt(bz.mean, 3) +
                                  " (sd " + fmt(eval::pooled_sd(bz, pz), 3) + ", last seed n=" +
                                  std::to_string(n_zero) + ")"};
}

// 6. Pronoun recall never drops as the window grows; confidence statistics
// equal a sort-then-average oracle exactly.
Outcome sweep_and_stats() {
  Outcome out;
  const auto rows = eval::utterance_length_ablation(testing::ChainScorer{}, testing::monotone_corpus(),
                                                    {1, 2, 3, 4, 5, 6}, {});
  std::vector<double> pron;
  for (const auto& r : rows)
    if (r.category == "pronouns" && r.relation == label_name(RelationLabel::kDirect)) pron.push_back(*r.recall[0]);
  bool monotone = pron.size() == 6;
  for (std::size_t i = 1; i < pron.size(); ++i) monotone = monotone && pron[i] >= pron[i - 1];
  monotone = monotone && pron.front() < pron.back();
  std::string curve;
  for (double p : pron) curve += fmt(p, 3) + " ";

  num::Rng rng(66);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> lists(1 + rng.index(8));
    for (auto& l : lists) {
      l.resize(1 + rng.index(15));
      for (auto& x : l) x = rng.bernoulli(0.2) ? 0.5 : rng.uniform();
    }
    const std::vector<std::size_t> ks = {1, 5, 10};
    const auto s = eval::confidence_stats(lists, ks);
    for (std::size_t k : ks) {
      double top = 0, bottom = 0;
      std::size_t n = 0;
      for (auto l : lists) {
        std::sort(l.begin(), l.end());
        const std::size_t take = std::min(k, l.size());
        for (std::size_t i = 0; i < take; ++i) bottom += l[i];
        std::reverse(l.begin(), l.end());
        for (std::size_t i = 0; i < take; ++i) top += l[i];
        n += take;
      }
      mismatches += s.top.at(k) != top / static_cast<double>(n);
      mismatches += s.bottom.at(k) != bottom / static_cast<double>(n);
    }
  }
  out.pass = monotone && mismatches == 0;
  out.detail = "pronoun R@1 by length " + curve + "; confidence mismatches " + std::to_string(mismatches) + "/1200";
  return out;
}

// 7. Two identical runs through the command line give identical bytes.
Outcome determinism() {
  namespace fs = std::filesystem;
  auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "mmrr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    return app::run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  };
  const std::vector<std::string> small = {
      "--set", "synth.dialogues=4", "--set", "synth.feature_dim=16", "--set", "encoder.d_model=16",
      "--set", "encoder.heads=2",   "--set", "encoder.layers=1",     "--set", "encoder.ffn_width=32",
      "--set", "fusion.d_shared=16", "--set", "fusion.heads=2",      "--set", "fusion.ffn_width=32",
      "--set", "train.epochs=3",    "--set", "train.lr=1e-3",        "--set", "train.warmup=5"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), small.begin(), small.end());
    return a;
  };
  // Both runs use the same directory so recorded paths agree; the first
  // run's bytes are snapshotted before the second starts.
  std::vector<std::map<std::string, std::string>> snapshots;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto d = testing::temp_dir("acceptance_determinism");
    const auto corpus = (d / "synth" / "corpus.jsonl").string();
    const auto trr_ck = (d / "trr" / "checkpoint.rfck").string();
    const auto mrr_ck = (d / "mrr" / "checkpoint.rfck").string();
    if (run(with({"synth", "--out", (d / "synth").string()})) != 0 ||
        run(with({"train", "trr", "--corpus", corpus, "--labels", "coref", "--out", (d / "trr").string()})) != 0 ||
        run(with({"train", "mrr", "--corpus", corpus, "--init-encoder", trr_ck, "--out", (d / "mrr").string()})) !=
            0 ||
        run({"eval", "--checkpoint", mrr_ck, "--corpus", corpus, "--confidence", "--ablate-utterance-length", "1,3",
             "--out", (d / "eval").string()}) != 0)
      return {false, "command failed in run " + std::to_string(attempt + 1)};
    auto& snap = snapshots.emplace_back();
    for (const auto& entry : fs::recursive_directory_iterator(d)) {
      if (!entry.is_regular_file()) continue;
      std::string bytes = model::read_bytes(entry.path());
      if (entry.path().filename() == "manifest.json") bytes = app::manifest_fingerprint(app::Json::parse(bytes)).dump();
      snap[fs::relative(entry.path(), d).string()] = bytes;
    }
  }
  std::size_t files = snapshots[0].size(), differing = 0;
  for (const auto& [name, bytes] : snapshots[0]) {
    const auto it = snapshots[1].find(name);
    differing += it == snapshots[1].end() || it->second != bytes;
  }
  differing += snapshots[1].size() != files;
  return {files >= 10 && differing == 0,
          std::to_string(files) + " files compared (manifests without wall-clock), " + std::to_string(differing) +
              " differ"};
}

// 8. The shipped full-size configs resolve to the full-scale presets.
Outcome full_scale_presets() {
  Outcome out;
  std::size_t checked = 0;
  auto expect = [&](bool ok, const std::string& what) {
    ++checked;
    if (!ok) {
      out.pass = false;
      out.detail += what + " wrong; ";
    }
  };
  const auto enc = train::full_scale::encoder();
  expect(enc.max_len == 256, "p");
  expect(enc.d_model == 1024, "d");
  for (const auto& t : {train::full_scale::trr_training(), train::full_scale::mrr_training()}) {
    expect(t.lr == 5e-5, "lr");
    expect(t.weight_decay == 0.01, "weight decay");
    expect(t.warmup == 1000, "warmup");
    expect(t.epochs == 16, "epochs");
  }
  for (const auto& [file, q] : {std::pair{"full-dialogue.conf", std::size_t{128}},
                                std::pair{"full-flickr.conf", std::size_t{256}}}) {
    const auto c = app::resolve(app::load_settings(std::filesystem::path(MMRR_SOURCE_DIR) / "configs" / file));
    expect(c.synth.candidates == q, std::string(file) + " q");
    expect(c.encoder == enc, std::string(file) + " encoder");
    auto fusion = c.fusion;
    fusion.d_text = c.encoder.d_model;
    fusion.seed = train::full_scale::mrr().fusion.seed;
    expect(fusion == train::full_scale::mrr().fusion, std::string(file) + " fusion");
    auto t = c.train;
    t.preset = train::full_scale::mrr_training().preset;
    expect(t == train::full_scale::mrr_training(), std::string(file) + " training");
  }
  out.detail += std::to_string(checked) + " settings checked";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "end-to-end gradient check", 120, gradient_check},
      {2, "structural invariants", 60, invariants},
      {3, "metric oracles", 600, metric_oracles},
      {4, "memorization", 1800, memorization},
      {5, "encoder transfer", 3 * 3600, transfer},
      {6, "length sweep and confidence stats", 600, sweep_and_stats},
      {7, "determinism", 600, determinism},
      {8, "full-scale presets", 600, full_scale_presets},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over time budget of " + fmt(c.budget_s, 6) + " s";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << " " << c.name << "  [" << std::fixed
              << std::setprecision(1) << secs << " s]  " << std::defaultfloat << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
