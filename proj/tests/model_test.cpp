#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "gradcheck_fixture.hpp"
#include "mmrr/model/checkpoint.hpp"
#include "mmrr/synth/generator.hpp"

using namespace mmrr;
using namespace mmrr::model;
using mmrr::testing::add_mention;
using mmrr::testing::toy_document;
using M = num::Tensor<double>;

namespace {

M random_matrix(num::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  M t = M::matrix(r, c);
  for (auto& v : t.storage()) v = rng.normal() * scale;
  return t;
}

std::vector<data::DialogueDocument> small_corpus(std::uint64_t seed = 2) {
  synth::SynthConfig c;
  c.dialogues = 3;
  c.feature_dim = 8;
  c.seed = seed;
  return synth::generate(c).documents;
}

}  // namespace

TEST(Vocab, ReservedIdsAreFixed) {
  const Vocab v;
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.id("[PAD]"), 0);
  EXPECT_EQ(v.id("[UNK]"), 1);
  EXPECT_EQ(v.id("[BOS]"), 2);
  EXPECT_EQ(v.id("[SPK_A]"), 3);
  EXPECT_EQ(v.id("[SPK_B]"), 4);
  EXPECT_EQ(v.id("never-seen"), Vocab::kUnk);
}

TEST(Vocab, CorpusTokensSortedAfterReserved) {
  const auto v = Vocab::from_corpus({toy_document({"b a", "c a"})});
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[PAD]", "[UNK]", "[BOS]", "[SPK_A]", "[SPK_B]", "a", "b", "c"}));
}

TEST(Vocab, FileRoundTripAndReservedCheck) {
  const auto v = Vocab::from_corpus(small_corpus());
  const auto dir = mmrr::testing::temp_dir("vocab");
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocab::load(dir / "vocab.txt"), v);
  EXPECT_THROW(Vocab::from_tokens({"[PAD]", "[BOS]"}), std::runtime_error);
}

TEST(Tokenize, EmptyWindowIsBosOnly) {
  const auto doc = toy_document({"a b"});
  const auto t = tokenize(Vocab::from_corpus({doc}), doc, 0, -1, 64);
  EXPECT_EQ(t.ids, std::vector<int>{Vocab::kBos});
  EXPECT_TRUE(t.mentions.empty());
}

TEST(Tokenize, SpeakerTagsAlternate) {
  const auto doc = toy_document({"a", "b", "c"});
  const auto t = tokenize(Vocab::from_corpus({doc}), doc, 0, 2, 64);
  std::vector<int> tags;
  for (int id : t.ids)
    if (id == Vocab::kSpeakerA || id == Vocab::kSpeakerB) tags.push_back(id);
  EXPECT_EQ(tags, (std::vector<int>{Vocab::kSpeakerA, Vocab::kSpeakerB, Vocab::kSpeakerA}));
}

TEST(Tokenize, TruncationMatchesRescanOracle) {
  const auto docs = small_corpus(4);
  for (const auto& doc : docs) {
    const Vocab v = Vocab::from_corpus(docs);
    for (std::size_t p : {6u, 12u, 20u}) {
      const int n = static_cast<int>(doc.utterances.size());
      const auto t = tokenize(v, doc, 0, std::min(n, 4) - 1, p);
      ASSERT_LE(t.ids.size(), p);
      // Re-scan: lay out the full window, then keep mentions ending inside p.
      std::size_t offset = 1, expected = 0;
      for (int u = 0; u < std::min(n, 4); ++u) {
        offset += 1;
        for (const auto& m : doc.mentions)
          if (m.utt == u && offset + static_cast<std::size_t>(m.end) <= p) ++expected;
        offset += doc.utterances[static_cast<std::size_t>(u)].tokens.size();
      }
      EXPECT_EQ(t.mentions.size(), expected);
      for (const auto& m : t.mentions) {
        const auto* src = doc.find_mention(m.mention_id);
        EXPECT_EQ(v.token(t.ids[m.first]), doc.utterances[static_cast<std::size_t>(src->utt)].tokens[static_cast<std::size_t>(src->start)]);
      }
    }
  }
}

TEST(Encoder, SameInputGivesBitwiseIdenticalOutput) {
  ParameterStore<float> store;
  Encoder<float> enc(store, {16, 2, 4, 16, 32, 3}, 20);
  const std::vector<int> ids = {2, 3, 7, 8, 9, 4, 10};
  EXPECT_EQ(enc.encode(ids).value(), enc.encode(ids).value());
}

TEST(Encoder, PaddingContentDoesNotLeak) {
  ParameterStore<double> store;
  Encoder<double> enc(store, {16, 2, 4, 12, 32, 3}, 30);
  mmrr::testing::randomize(store, 5, 0.2);
  std::vector<int> ids = {2, 3, 7, 8, 9, 0, 0, 0, 0};
  const std::vector<bool> valid = {true, true, true, true, true, false, false, false, false};
  const auto base = enc.encode(ids, valid).value();
  num::Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = 5; i < ids.size(); ++i) ids[i] = static_cast<int>(rng.index(30));
    const auto out = enc.encode(ids, valid).value();
    EXPECT_LT(num::max_abs_diff(out, base), 1e-6);
    for (std::size_t i = 5; i < ids.size(); ++i)
      for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(out(i, j), 0.0);
  }
}

TEST(Encoder, ZeroLayersIsEmbeddingPlusPositions) {
  ParameterStore<double> store;
  Encoder<double> enc(store, {8, 0, 2, 10, 16, 3}, 12);
  const std::vector<int> ids = {2, 3, 5, 11};
  const auto out = enc.encode(ids).value();
  const auto pe = sinusoidal_positions<double>(10, 8);
  const auto& emb = store.get("encoder.embedding").value();
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(out(i, j), emb(static_cast<std::size_t>(ids[i]), j) + pe(i, j));
}

TEST(Encoder, RejectsOverlongInputAndBadHeads) {
  ParameterStore<double> store;
  Encoder<double> enc(store, {8, 1, 2, 4, 16, 3}, 12);
  EXPECT_THROW(enc.encode({1, 2, 3, 4, 5}), std::invalid_argument);
  ParameterStore<double> other;
  EXPECT_THROW(Encoder<double>(other, {10, 1, 4, 8, 16, 3}, 12), std::invalid_argument);
}

TEST(Encoder, EveryParameterReceivesGradient) {
  const auto docs = small_corpus(8);
  TrrModel<double> model(Vocab::from_corpus(docs), {16, 2, 4, 64, 32, 5});
  std::map<std::string, bool> touched;
  for (const auto& doc : docs)
    for (const auto& inst : data::build_text_instances(doc, 3)) {
      model.parameters().zero_grad();
      num::backward(model.loss(inst, LabelSet::all()));
      for (const auto& [name, var] : model.parameters().entries()) {
        if (name.rfind("encoder.", 0) != 0) continue;
        bool nz = var.grad().shape() == var.value().shape() &&
                  std::any_of(var.grad().data().begin(), var.grad().data().end(), [](double g) { return g != 0.0; });
        touched[name] = touched[name] || nz;
      }
    }
  ASSERT_FALSE(touched.empty());
  for (const auto& [name, ok] : touched) EXPECT_TRUE(ok) << name;
}

TEST(Fusion, IdentityProjectionLeavesInputUnchanged) {
  ParameterStore<double> store;
  Fusion<double> fus(store, {4, 4, 4, 2, 2, 8, 1});
  auto w = fus.text_weight();
  w.mutable_value() = M::identity(4);
  num::Rng rng(1);
  const M t = random_matrix(rng, 3, 4), x = random_matrix(rng, 2, 4);
  auto [tp, xp] = fus.project_inputs(num::constant(t), num::constant(x));
  EXPECT_EQ(tp.value(), t);
}

TEST(Fusion, ZeroWeightsGiveZeroAndRandomMatchesOracle) {
  ParameterStore<double> store;
  Fusion<double> fus(store, {5, 3, 4, 2, 2, 8, 1});
  num::Rng rng(2);
  const M t = random_matrix(rng, 6, 5), x = random_matrix(rng, 3, 3);
  auto tw = fus.text_weight();
  auto ow = fus.object_weight();
  tw.mutable_value().fill(0.0);
  ow.mutable_value().fill(0.0);
  auto [tz, xz] = fus.project_inputs(num::constant(t), num::constant(x));
  EXPECT_EQ(tz.value(), M::matrix(6, 4));
  EXPECT_EQ(xz.value(), M::matrix(3, 4));
  tw.mutable_value() = random_matrix(rng, 5, 4);
  ow.mutable_value() = random_matrix(rng, 3, 4);
  auto tb = fus.text_bias();
  tb.mutable_value() = random_matrix(rng, 1, 4);
  auto [tp, xp] = fus.project_inputs(num::constant(t), num::constant(x));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = tb.value()(0, j);
      for (std::size_t k = 0; k < 5; ++k) s += t(i, k) * tw.value()(k, j);
      EXPECT_NEAR(tp.value()(i, j), s, 1e-12);
    }
  EXPECT_THROW(fus.project_inputs(num::constant(x), num::constant(x)), num::ShapeError);
}

TEST(Fusion, SingleObjectIsFinite) {
  ParameterStore<double> store;
  Fusion<double> fus(store, {8, 8, 8, 2, 2, 16, 1});
  num::Rng rng(3);
  const auto out = fus.decode(num::constant(random_matrix(rng, 1, 8)), num::constant(random_matrix(rng, 5, 8)),
                              std::vector<bool>(5, true));
  EXPECT_EQ(out.value().shape(), (num::Shape{1, 8}));
  EXPECT_TRUE(out.value().all_finite());
}

TEST(Fusion, PermutingObjectsPermutesOutput) {
  ParameterStore<double> store;
  Fusion<double> fus(store, {8, 8, 8, 2, 2, 16, 1});
  mmrr::testing::randomize(store, 4, 0.3);
  num::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t q = 2 + rng.index(6);
    const M x = random_matrix(rng, q, 8), t = random_matrix(rng, 6, 8);
    std::vector<bool> valid(6, true);
    valid[5] = false;
    std::vector<std::size_t> perm(q);
    for (std::size_t i = 0; i < q; ++i) perm[i] = i;
    rng.shuffle(perm);
    M px = M::matrix(q, 8);
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < 8; ++j) px(i, j) = x(perm[i], j);
    const auto a = fus.decode(num::constant(x), num::constant(t), valid).value();
    const auto b = fus.decode(num::constant(px), num::constant(t), valid).value();
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(b(i, j), a(perm[i], j), 1e-6);
  }
}

TEST(Fusion, SingleUnmaskedTokenActsAsOnlyContext) {
  ParameterStore<double> store;
  Fusion<double> fus(store, {8, 8, 8, 2, 2, 16, 1});
  mmrr::testing::randomize(store, 5, 0.3);
  num::Rng rng(5);
  const M x = random_matrix(rng, 3, 8), t = random_matrix(rng, 5, 8);
  std::vector<bool> valid(5, false);
  valid[2] = true;
  M only = M::matrix(1, 8);
  for (std::size_t j = 0; j < 8; ++j) only(0, j) = t(2, j);
  const auto a = fus.decode(num::constant(x), num::constant(t), valid).value();
  const auto b = fus.decode(num::constant(x), num::constant(only), {true}).value();
  EXPECT_LT(num::max_abs_diff(a, b), 1e-12);
}

TEST(Fusion, GradientsMatchFiniteDifferences) {
  ParameterStore<double> store;
  Fusion<double> fus(store, {6, 4, 8, 2, 2, 12, 1});
  mmrr::testing::randomize(store, 6, 0.3);
  num::Rng rng(6);
  const M x = random_matrix(rng, 3, 4), t = random_matrix(rng, 5, 6), w = random_matrix(rng, 3, 8);
  auto loss = [&] {
    auto [tp, xp] = fus.project_inputs(num::constant(t), num::constant(x));
    auto out = fus.decode(xp, tp, {true, true, true, false, true});
    return num::sum(num::mul(out, num::constant(w)));
  };
  const auto r = num::finite_difference_check(loss, store.vars());
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_GT(r.entries_checked, 500u);
}

TEST(Models, ForwardShapesFollowMentionsAndCandidates) {
  const auto f = mmrr::testing::make_grad_fixture(1);
  TrrModel<float> trr(f.vocab, mmrr::testing::tiny_encoder());
  const auto out = trr.forward(f.text, LabelSet::all());
  for (auto l : kAllLabels) {
    EXPECT_EQ(out.pooled.matrices[index_of(l)].value().shape(), (num::Shape{4, 4}));
    EXPECT_EQ(out.null_logits[index_of(l)].value().shape(), (num::Shape{4, 1}));
  }
  MrrModel<float> mrr(f.vocab, mmrr::testing::tiny_mrr());
  const auto scores = mrr.score_objects(f.mm);
  for (auto l : kAllLabels) EXPECT_EQ(scores[index_of(l)].shape(), (num::Shape{4, 6}));
}

TEST(Models, TransferCopiesOnlyEncoder) {
  const auto f = mmrr::testing::make_grad_fixture(1);
  TrrModel<float> trr(f.vocab, mmrr::testing::tiny_encoder());
  mmrr::testing::randomize(trr.parameters(), 9, 0.5);
  MrrModel<float> mrr(f.vocab, mmrr::testing::tiny_mrr());
  const auto before = capture_parameters(mrr.parameters());
  const std::size_t n = copy_parameters(trr.parameters(), mrr.parameters(), "encoder.");
  EXPECT_GT(n, 0u);
  for (const auto& p : capture_parameters(mrr.parameters())) {
    if (p.name.rfind("encoder.", 0) == 0) {
      const auto& src = trr.parameters().get(p.name).value();
      for (std::size_t i = 0; i < p.data.size(); ++i) ASSERT_EQ(p.data[i], src[i]);
    } else {
      auto old = std::find_if(before.begin(), before.end(), [&](const auto& b) { return b.name == p.name; });
      ASSERT_NE(old, before.end());
      EXPECT_EQ(p.data, old->data) << p.name;
    }
  }
}

TEST(Checkpoint, RoundTripRestoresIdenticalModel) {
  const auto f = mmrr::testing::make_grad_fixture(2);
  MrrModel<float> mrr(f.vocab, mmrr::testing::tiny_mrr());
  mmrr::testing::randomize(mrr.parameters(), 3, 0.1);
  const auto ck = make_checkpoint(mrr, preset_labels(LabelPreset::kFullMrr), "mrr", 7, 120);
  const std::string bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_EQ(back.step, 120u);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  const auto restored = mrr_model_from<float>(back);
  const auto a = mrr.score_objects(f.mm), b = restored.score_objects(f.mm);
  for (auto l : kAllLabels) EXPECT_EQ(a[index_of(l)], b[index_of(l)]);
  EXPECT_EQ(content_hash(bytes), content_hash(encode_checkpoint(back)));
  EXPECT_EQ(content_hash(bytes).size(), 16u);
}

TEST(Checkpoint, CorruptOrMismatchedInputRejected) {
  const auto f = mmrr::testing::make_grad_fixture(2);
  TrrModel<float> trr(f.vocab, mmrr::testing::tiny_encoder());
  auto ck = make_checkpoint(trr, LabelSet::all(), "trr", 1, 0);
  std::string bytes = encode_checkpoint(ck);
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointError);
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(ck).substr(0, 40)), CheckpointError);
  EXPECT_THROW(mrr_model_from<float>(ck), CheckpointError);
  ck.params.pop_back();
  EXPECT_THROW(trr_model_from<float>(ck), CheckpointError);
}

TEST(EndToEnd, TrrGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {1, 2}) {
    const auto r = mmrr::testing::check_trr(seed, 3);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed << " abs " << r.max_abs_error;
  }
}

TEST(EndToEnd, MrrGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {1, 2}) {
    const auto r = mmrr::testing::check_mrr(seed, 3);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed << " abs " << r.max_abs_error;
  }
}
