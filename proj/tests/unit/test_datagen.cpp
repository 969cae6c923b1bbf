#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "induction/datagen.hpp"
#include "induction/error.hpp"

using namespace induction;

namespace {

std::size_t trigger_violations(const SequenceSample& s) {
  std::size_t bad = 0;
  for (std::size_t t = 0; t + 1 < s.size(); ++t)
    for (const auto& [q, o] : s.triggers)
      if (s.tokens[t] == q && s.tokens[t + 1] != o) ++bad;
  return bad;
}

TriggeredBigram random_bigram(std::size_t V, Rng& rng) {
  TriggeredBigram m = uniform_bigram(V, 3);
  for (std::size_t a = 0; a < V; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < V; ++b) sum += m.pi_b(a, b) = 0.1 + rng.uniform();
    for (std::size_t b = 0; b < V; ++b) m.pi_b(a, b) /= sum;
  }
  return m;
}

}  // namespace

TEST_CASE("character bigram from a tiny corpus") {
  const TriggeredBigram m = estimate_char_bigram("ababab");
  CHECK(m.vocab == 2);
  CHECK(m.token_names == std::vector<std::string>{"a", "b"});
  // add-one smoothing: a->b seen 3 times, a->a never
  CHECK(m.pi_b(0, 1) == doctest::Approx(0.8));
  CHECK(m.pi_b(1, 0) == doctest::Approx(0.75));
  CHECK(m.pi_q == m.pi_u);
  m.validate();

  const TriggeredBigram one = estimate_char_bigram("aaaa");
  CHECK(one.vocab == 1);
  CHECK(one.pi_b(0, 0) == 1.0);
  CHECK_THROWS_AS(estimate_char_bigram(""), Error);
}

TEST_CASE("top-k restriction keeps the most frequent tokens") {
  const TriggeredBigram m = restrict_top_k(estimate_char_bigram("aaaabbbcc d"), 2);
  CHECK(m.vocab == 2);
  CHECK(m.token_names == std::vector<std::string>{"a", "b"});
  m.validate();
  CHECK_THROWS_AS(restrict_top_k(m, 3), Error);
}

TEST_CASE("sampled sequences keep the trigger guarantee") {
  Rng rng(1);
  const TriggeredBigram m = random_bigram(12, rng);
  for (int i = 0; i < 500; ++i) {
    const SequenceSample s = sample_sequence(m, 40, rng);
    REQUIRE(s.size() == 40);
    CHECK(trigger_violations(s) == 0);
    CHECK(s.triggers.size() == 3);
    std::vector<Token> qs;
    for (const auto& [q, o] : s.triggers) {
      qs.push_back(q);
      for (const auto& [q2, o2] : s.triggers) CHECK(o != q2);
    }
    std::sort(qs.begin(), qs.end());
    CHECK(std::adjacent_find(qs.begin(), qs.end()) == qs.end());
    CHECK(s.is_output_position == output_mask(s.tokens, s.triggers));
  }
}

TEST_CASE("sampler argument checks") {
  Rng rng(2);
  const TriggeredBigram m = uniform_bigram(4, 5);
  CHECK_THROWS_AS(sample_sequence(m, 10, rng), Error);
  CHECK_THROWS_AS(sample_sequence(uniform_bigram(4, 2), 1, rng), Error);
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  const TriggeredBigram m = uniform_bigram(10, 3);
  Rng a(99), b(99);
  for (int i = 0; i < 20; ++i) CHECK(sample_sequence(m, 30, a).tokens == sample_sequence(m, 30, b).tokens);
}

TEST_CASE("theory sequences place q, v1, v2 as specified") {
  Rng rng(3);
  const TheorySequenceSpec spec{8, 3, 6, 0, 1, 2};
  const SequenceSample s = build_theory_sequence(spec, 6, rng);
  CHECK(s.tokens[1] == 0);
  CHECK(s.tokens[2] == 1);
  CHECK(s.tokens[4] == 0);
  CHECK(s.tokens[5] == 2);
  CHECK(s.tokens[7] == 0);
  CHECK(std::count(s.tokens.begin(), s.tokens.end(), 1) == 1);
  CHECK(std::count(s.tokens.begin(), s.tokens.end(), 2) == 1);

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 6 + rng.index(20);
    const std::size_t t1 = 3 + rng.index(T - 5);
    const std::size_t t2 = t1 + 2 + rng.index(T - t1 - 2);
    const TheorySequenceSpec sp{T, t1, t2, 4, 2, 3};
    const SequenceSample x = build_theory_sequence(sp, 7, rng);
    for (std::size_t t = 1; t <= T; ++t) {
      const bool is_q = t == t1 - 1 || t == t2 - 1 || t == T;
      CHECK((x.tokens[t - 1] == 4) == is_q);
    }
  }
}

TEST_CASE("invalid theory specs are rejected") {
  Rng rng(4);
  CHECK_THROWS_AS(build_theory_sequence({8, 2, 6, 0, 1, 2}, 6, rng), Error);
  CHECK_THROWS_AS(build_theory_sequence({8, 3, 4, 0, 1, 2}, 6, rng), Error);
  CHECK_THROWS_AS(build_theory_sequence({6, 3, 6, 0, 1, 2}, 6, rng), Error);
  CHECK_THROWS_AS(build_theory_sequence({8, 3, 6, 0, 0, 2}, 6, rng), Error);
  CHECK_THROWS_AS(build_theory_sequence({8, 3, 6, 0, 1, 2}, 3, rng), Error);
}

TEST_CASE("collision prompts") {
  const Token A = 0, B1 = 1, B2 = 2, sep = 9;
  CHECK(build_collision_prompt(A, B1, B2, 1, 0, sep).tokens == std::vector<Token>{A, B1, sep, A});
  CHECK(build_collision_prompt(A, B1, B2, 2, 1, sep).tokens ==
        std::vector<Token>{A, B1, sep, A, B1, sep, A, B2, sep, A});
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n1 = rng.index(8), n2 = 1 + rng.index(8);
    CHECK(build_collision_prompt(A, B1, B2, n1, n2, sep).size() == 3 * (n1 + n2) + 1);
  }
  CHECK_THROWS_AS(build_collision_prompt(A, A, B2, 1, 1, sep), Error);
  CHECK_THROWS_AS(build_collision_prompt(A, B1, B2, 0, 0, sep), Error);
}

TEST_CASE("analogy model rows") {
  Rng rng(6);
  const TriggeredBigram single = build_analogy_model(5, {{0, 3}}, 0, {0.1, 0.3}, rng);
  CHECK(single.pi_b(0, 3) == 1.0);
  CHECK(single.separator == Token{5});

  const TriggeredBigram m = build_analogy_model(20, {{0, 10}, {1, 11}, {2, 12}, {3, 13}, {4, 14}}, 3, {0.1, 0.3}, rng);
  m.validate();
  for (std::size_t a = 0; a < m.vocab; ++a) {
    double s = 0.0;
    for (double p : m.pi_b.row(a)) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  // the real target keeps the largest share
  for (Token a = 0; a < 5; ++a) CHECK(m.pi_b(a, 10 + a) > 0.5);
  CHECK_THROWS_AS(build_analogy_model(5, {}, 0, {0.1, 0.3}, rng), Error);
  CHECK_THROWS_AS(build_analogy_model(5, {{0, 1}}, 0, {0.0, 0.3}, rng), Error);
}

TEST_CASE("analogy sequences never use the separator as an output") {
  Rng rng(7);
  TriggeredBigram m = build_analogy_model(12, {{0, 6}, {1, 7}, {2, 8}}, 2, {0.1, 0.3}, rng);
  m.triggers_per_sequence = 3;
  for (int i = 0; i < 200; ++i) {
    const SequenceSample s = sample_sequence(m, 30, rng);
    for (const auto& [q, o] : s.triggers) CHECK(o != *m.separator);
    CHECK(trigger_violations(s) == 0);
  }
}

TEST_CASE("jsonl export") {
  SequenceSample s;
  s.tokens = {1, 2, 1, 2};
  s.triggers = {{1, 2}};
  s.is_output_position = output_mask(s.tokens, s.triggers);
  CHECK(to_jsonl(s) == "{\"mask\":[0,1,0,1],\"tokens\":[1,2,1,2],\"triggers\":[[1,2]]}");
}

TEST_CASE("two-occurrence sequences end at the second trigger") {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const SequenceSample s = sample_two_occurrence_sequence(10, 20, rng);
    REQUIRE(s.size() == 20);
    REQUIRE(s.next_token.has_value());
    const Token q = s.tokens.back();
    CHECK(std::count(s.tokens.begin(), s.tokens.end(), q) == 2);
    const auto first = std::find(s.tokens.begin(), s.tokens.end(), q);
    CHECK(*(first + 1) == *s.next_token);
  }
}
