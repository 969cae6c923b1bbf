#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "induction/numeric.hpp"

namespace induction {

using Token = std::size_t;

/// Bigram language model whose trigger tokens are always followed by their
/// per-sequence output token.
struct TriggeredBigram {
  std::size_t vocab = 0;
  Vector pi_u;  // initial-token distribution
  Vector pi_q;  // trigger distribution
  Vector pi_o;  // output distribution
  Matrix pi_b;  // row i = pi_b(. | i)
  std::size_t triggers_per_sequence = 5;
  /// When set, sequences are written as "source next sep source next sep ...".
  std::optional<Token> separator;
  /// Display strings, one per token; may be empty.
  std::vector<std::string> token_names;

  /// Throws invalid_argument unless every distribution is normalized.
  void validate(double tol = 1e-9) const;
};

struct SequenceSample {
  std::vector<Token> tokens;
  std::vector<std::pair<Token, Token>> triggers;
  /// mask[t] is true when tokens[t-1] is a trigger (tokens[t] is its output).
  std::vector<bool> is_output_position;
  /// Label for the final position when it is not part of `tokens`.
  std::optional<Token> next_token;

  std::size_t size() const noexcept { return tokens.size(); }
};

/// Two-pattern sequence "… q v1 … q v2 … q" with 1-indexed positions.
struct TheorySequenceSpec {
  std::size_t T = 0;
  std::size_t t1 = 0;
  std::size_t t2 = 0;
  Token q = 0;
  Token v1 = 0;
  Token v2 = 0;

  void validate(std::size_t vocab) const;
};

TriggeredBigram estimate_char_bigram(std::string_view corpus);
/// Keep the k most frequent tokens (ties by index) and renormalize every distribution.
TriggeredBigram restrict_top_k(const TriggeredBigram& model, std::size_t k);
/// All distributions uniform over V tokens.
TriggeredBigram uniform_bigram(std::size_t vocab, std::size_t triggers_per_sequence);

SequenceSample sample_sequence(const TriggeredBigram& model, std::size_t T, Rng& rng);

/// Sequence of length T with one trigger q occurring exactly twice, the
/// second time at the final position; `next_token` holds its output, the
/// only training label. All draws are uniform over the vocabulary.
SequenceSample sample_two_occurrence_sequence(std::size_t vocab, std::size_t T, Rng& rng);

SequenceSample build_theory_sequence(const TheorySequenceSpec& spec, std::size_t vocab, Rng& rng);

/// "A B1 sep" n1 times, "A B2 sep" n2 times, then a trailing A.
SequenceSample build_collision_prompt(Token a, Token b1, Token b2, std::size_t n1, std::size_t n2,
                                      Token separator);

/// Bigram over `num_words` words plus a separator token (index num_words)
/// built from source/target pairs with sampled fake targets.
TriggeredBigram build_analogy_model(std::size_t num_words,
                                    const std::vector<std::pair<Token, Token>>& pairs,
                                    std::size_t n_fake, std::pair<double, double> p_range,
                                    Rng& rng);

/// Positions t where tokens[t-1] is one of the sample's triggers.
std::vector<bool> output_mask(const std::vector<Token>& tokens,
                              const std::vector<std::pair<Token, Token>>& triggers);

/// One JSON object without a trailing newline: {"tokens":[…],"triggers":[[q,o],…],"mask":[0/1,…]}.
std::string to_jsonl(const SequenceSample& sample);

}  // namespace induction
