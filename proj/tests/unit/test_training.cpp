#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "induction/constructions.hpp"
#include "induction/error.hpp"
#include "induction/training.hpp"

using namespace induction;

namespace {

std::shared_ptr<const EmbeddingSet> exact_set(std::size_t V, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  return std::make_shared<EmbeddingSet>(make_embeddings(exact_min_dim(V, T), V, T, EmbeddingMode::exact, rng));
}

std::shared_ptr<const EmbeddingSet> gaussian_set(std::size_t d, std::size_t V, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  return std::make_shared<EmbeddingSet>(make_embeddings(d, V, T, EmbeddingMode::gaussian, rng));
}

ForwardTrace fake_trace(const Matrix& logits) {
  ForwardTrace tr;
  tr.T = logits.rows();
  tr.logits = logits;
  return tr;
}

// Restores INDUCTION_THREADS on scope exit.
struct ThreadsEnv {
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("INDUCTION_THREADS")) saved = old;
    setenv("INDUCTION_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (saved.empty()) unsetenv("INDUCTION_THREADS");
    else setenv("INDUCTION_THREADS", saved.c_str(), 1);
  }
  std::string saved;
};

}  // namespace

TEST_CASE("cross-entropy of uniform and saturated logits") {
  const std::size_t V = 7;
  LossTargets lt{{0, 1, 2}, {3, 0, 6}};
  CHECK(masked_xent(fake_trace(Matrix(3, V, 0.0)), lt) == doctest::Approx(std::log(double(V))).epsilon(1e-14));

  Matrix sharp(3, V, 0.0);
  for (std::size_t i = 0; i < 3; ++i) sharp(i, lt.targets[i]) = 30.0;
  CHECK(masked_xent(fake_trace(sharp), lt) < 1e-9);

  CHECK_THROWS_AS(masked_xent(fake_trace(sharp), LossTargets{}), Error);
}

TEST_CASE("loss targets under each mask policy") {
  SequenceSample s;
  s.tokens = {4, 1, 2, 9, 1, 2, 9, 5};
  s.triggers = {{1, 2}};
  s.is_output_position = output_mask(s.tokens, s.triggers);

  const LossTargets out = loss_targets(s, MaskPolicy::outputs_only);
  CHECK(out.positions == std::vector<std::size_t>{1, 4});
  CHECK(out.targets == std::vector<Token>{2, 2});

  const LossTargets all = loss_targets(s, MaskPolicy::all_but_separator, Token{9});
  CHECK(all.positions == std::vector<std::size_t>{0, 1, 3, 4, 6});

  const LossTargets last = loss_targets(s, MaskPolicy::final_position);
  CHECK(last.positions == std::vector<std::size_t>{6});
  CHECK(last.targets == std::vector<Token>{5});

  s.next_token = 7;
  const LossTargets labelled = loss_targets(s, MaskPolicy::final_position);
  CHECK(labelled.positions == std::vector<std::size_t>{7});
  CHECK(labelled.targets == std::vector<Token>{7});

  CHECK(parse_mask_policy(to_string(MaskPolicy::all_but_separator)) == MaskPolicy::all_but_separator);
  CHECK_THROWS_AS(parse_mask_policy("everything"), Error);
}

TEST_CASE("output masks never exceed two per trigger when each trigger appears twice") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    SequenceSample s;
    const std::size_t K = 5;
    for (Token q = 0; q < K; ++q) s.triggers.emplace_back(q, 10 + q);
    for (int rep = 0; rep < 2; ++rep)
      for (Token q = 0; q < K; ++q) s.tokens.insert(s.tokens.end(), {20 + rng.index(5), q, 10 + q});
    s.is_output_position = output_mask(s.tokens, s.triggers);
    CHECK(loss_targets(s, MaskPolicy::outputs_only).size() <= 2 * K);
  }
}

TEST_CASE("plain SGD moves against the gradient") {
  const auto emb = gaussian_set(64, 5, 8, 2);
  TransformerParams p = zero_init_params(emb, PeMode::rpe);
  Gradients g;
  Matrix& gk = g.emplace(ParamName::W_K1, p.wk1);
  gk(3, 4) = 2.0;
  OptState st;
  st.lr = 0.1;
  st.momentum = 0.0;
  st.weight_decay = 0.0;
  sgd_momentum_step(p, g, st);
  CHECK(p.wk1(3, 4) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(p.wk1(0, 0) == 0.0);
}

TEST_CASE("momentum displacement over two steps") {
  const auto emb = gaussian_set(64, 5, 8, 3);
  TransformerParams p = zero_init_params(emb, PeMode::rpe);
  Gradients g;
  g.emplace(ParamName::W_O2, p.wo2)(1, 1) = 1.5;
  OptState st;
  st.lr = 0.2;
  st.momentum = 0.9;
  st.weight_decay = 0.0;
  sgd_momentum_step(p, g, st);
  sgd_momentum_step(p, g, st);
  CHECK(p.wo2(1, 1) == doctest::Approx(-0.2 * 1.5 * (2.0 + 0.9)).epsilon(1e-14));
}

TEST_CASE("weight decay alone shrinks geometrically") {
  const auto emb = gaussian_set(64, 5, 8, 4);
  TransformerParams p = zero_init_params(emb, PeMode::rpe);
  p.wk2(2, 2) = 1.0;
  Gradients g;
  g.emplace(ParamName::W_K2, p.wk2);
  OptState st;
  st.lr = 0.5;
  st.momentum = 0.0;
  st.weight_decay = 0.1;
  for (int i = 0; i < 5; ++i) sgd_momentum_step(p, g, st);
  CHECK(p.wk2(2, 2) == doctest::Approx(std::pow(1.0 - 0.5 * 0.1, 5)).epsilon(1e-14));
}

TEST_CASE("optimizer rejects mismatched shapes") {
  const auto emb = gaussian_set(64, 5, 8, 5);
  TransformerParams p = zero_init_params(emb, PeMode::rpe);
  Gradients g;
  g.emplace(ParamName::W_K1, Matrix(3, 3));
  OptState st;
  CHECK_THROWS_AS(sgd_momentum_step(p, g, st), Error);
}

TEST_CASE("a perfectly fitted target has a vanishing gradient") {
  const std::size_t V = 6;
  const auto emb = exact_set(V, 10, 6);
  TransformerParams p = build_strong_amt(emb, full_vocabulary(V), Matrix(V, V, 1.0 / V), {}, {200, 200, 200});
  p.ffn.reset();
  SequenceSample s;
  s.tokens = {5, 1, 2, 4, 1};
  s.next_token = 2;
  s.is_output_position.assign(5, false);
  const LossAndGrad lg = backward(p, s, MaskPolicy::final_position, default_trainables());
  CHECK(lg.loss < 1e-12);
  CHECK(lg.grads.norm() < 1e-8);
}

TEST_CASE("batch gradient does not depend on the thread count") {
  const auto emb = gaussian_set(64, 10, 32, 7);
  Rng rng(8);
  TransformerParams p = zero_init_params(emb, PeMode::rpe);
  p.wk1 = gaussian_matrix(64, 64, 0.2, rng);
  p.wo2 = gaussian_matrix(64, 64, 0.2, rng);
  const TriggeredBigram m = uniform_bigram(10, 3);
  std::vector<SequenceSample> batch;
  for (int i = 0; i < 37; ++i) batch.push_back(sample_sequence(m, 24, rng));
  LossAndGrad one, four;
  {
    ThreadsEnv env("1");
    one = batch_gradient(p, batch, MaskPolicy::outputs_only, default_trainables());
  }
  {
    ThreadsEnv env("4");
    CHECK(worker_threads() == 4);
    four = batch_gradient(p, batch, MaskPolicy::outputs_only, default_trainables());
  }
  CHECK(one.loss == four.loss);
  for (ParamName n : default_trainables()) CHECK(one.grads.at(n) == four.grads.at(n));
}

TEST_CASE("batch gradient averages over sequences with targets") {
  const auto emb = gaussian_set(64, 10, 32, 9);
  Rng rng(10);
  TransformerParams p = zero_init_params(emb, PeMode::rpe);
  p.wo2 = gaussian_matrix(64, 64, 0.2, rng);
  SequenceSample with = sample_sequence(uniform_bigram(10, 3), 20, rng);
  SequenceSample without = with;
  without.is_output_position.assign(without.size(), false);
  const std::vector<SequenceSample> batch{with, without};
  const LossAndGrad both = batch_gradient(p, batch, MaskPolicy::outputs_only, default_trainables());
  const LossAndGrad single = backward(p, with, MaskPolicy::outputs_only, default_trainables());
  if (!loss_targets(with, MaskPolicy::outputs_only).empty()) CHECK(both.loss == doctest::Approx(single.loss));
}

TEST_CASE("one-step training with zero step size keeps every matrix at zero") {
  const std::size_t V = 6, T = 10;
  const auto emb = exact_set(V, T, 11);
  Rng rng(12);
  const TransformerParams p = sequential_one_step_gd(
      emb, PeMode::rpe, [&](Rng& r) { return sample_two_occurrence_sequence(V, T, r); }, 0.0, 64, rng);
  CHECK(max_abs(p.wk1) == 0.0);
  CHECK(max_abs(p.wk2) == 0.0);
  CHECK(max_abs(p.wo2) == 0.0);
}

TEST_CASE("first one-step stage concentrates the readout on matching tokens") {
  const std::size_t V = 6, T = 10;
  const auto emb = exact_set(V, T, 13);
  Rng rng(14);
  OneStepReport rep;
  const TransformerParams p = sequential_one_step_gd(
      emb, PeMode::rpe, [&](Rng& r) { return sample_two_occurrence_sequence(V, T, r); }, 1.0, 2048, rng, &rep);
  const Matrix ov = matmul(p.wo2, p.wv2);
  for (Token k = 0; k < V; ++k) {
    const double diag = read_score(ov, emb->unembed(k), emb->embed(k));
    CHECK(diag > 0.0);
    for (Token j = 0; j < V; ++j)
      if (j != k) CHECK(diag > read_score(ov, emb->unembed(k), emb->embed(j)));
  }
  CHECK(rep.batch == 2048);
  CHECK(rep.stage_loss[0] == doctest::Approx(std::log(double(V))).epsilon(1e-9));
}

TEST_CASE("one-step training commutes with relabeling the vocabulary") {
  const std::size_t V = 6, T = 10;
  const auto emb = exact_set(V, T, 15);
  const std::vector<Token> perm{3, 0, 5, 1, 4, 2};
  auto plain = [&](Rng& r) { return sample_two_occurrence_sequence(V, T, r); };
  auto relabeled = [&](Rng& r) {
    SequenceSample s = sample_two_occurrence_sequence(V, T, r);
    for (Token& z : s.tokens) z = perm[z];
    s.next_token = perm[*s.next_token];
    for (auto& [q, o] : s.triggers) q = perm[q], o = perm[o];
    return s;
  };
  Rng a(16), b(16);
  const TransformerParams pa = sequential_one_step_gd(emb, PeMode::rpe, plain, 1.0, 256, a);
  const TransformerParams pb = sequential_one_step_gd(emb, PeMode::rpe, relabeled, 1.0, 256, b);
  for (Token v = 0; v < V; ++v)
    for (std::size_t j = 0; j < T; ++j) {
      const double sa = key_query_score(pa.wk1, emb->rel_pos(j), emb->embed(v));
      const double sb = key_query_score(pb.wk1, emb->rel_pos(j), emb->embed(perm[v]));
      CHECK(sa == doctest::Approx(sb).epsilon(1e-12));
    }
}

TEST_CASE("zero iterations leave parameters unchanged") {
  const auto emb = gaussian_set(64, 10, 32, 17);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.T = 16;
  cfg.eval_batch = 4;
  const TransformerParams init = zero_init_params(emb, PeMode::rpe);
  const TrainResult r = train_loop(init, uniform_bigram(10, 3), cfg);
  CHECK(r.params.wk1 == init.wk1);
  CHECK(r.params.wo2 == init.wo2);
}

TEST_CASE("untrained accuracy sits near chance") {
  const std::size_t V = 30;
  const auto emb = gaussian_set(64, V, 64, 18);
  const TriggeredBigram m = uniform_bigram(V, 5);
  Rng rng(19);
  std::vector<SequenceSample> batch;
  for (int i = 0; i < 64; ++i) batch.push_back(sample_sequence(m, 64, rng));
  const double acc = output_token_accuracy(zero_init_params(emb, PeMode::rpe), batch);
  CHECK(acc < 3.0 / V);
}

TEST_CASE("training lowers the loss and is reproducible") {
  const auto emb = gaussian_set(64, 12, 32, 20);
  TriggeredBigram m = restrict_top_k(estimate_char_bigram("the cat sat on the mat while the rat ate a hat"), 12);
  m.triggers_per_sequence = 3;
  TrainConfig cfg;
  cfg.iterations = 60;
  cfg.T = 32;
  cfg.batch = 16;
  cfg.eval_every = 30;
  cfg.eval_batch = 8;
  cfg.seed = 21;
  const TransformerParams init = zero_init_params(emb, PeMode::rpe);
  const TrainResult a = train_loop(init, m, cfg);
  const TrainResult b = train_loop(init, m, cfg);

  std::vector<double> loss;
  for (const auto& r : a.log)
    if (r.metric == "loss") loss.push_back(r.value);
  REQUIRE(loss.size() == 60);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) early += loss[i], late += loss[50 + i];
  CHECK(late < early);

  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].value == b.log[i].value);
  CHECK(a.params.wk1 == b.params.wk1);
}

TEST_CASE("trainable names parse") {
  CHECK(parse_trainables({"W_K1", "W_O2"}) == std::vector<ParamName>{ParamName::W_K1, ParamName::W_O2});
  CHECK_THROWS_AS(parse_trainables({"W_K9"}), Error);
  CHECK(default_trainables().size() == 6);
}
