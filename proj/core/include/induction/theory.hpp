#pragma once

#include <span>
#include <vector>

#include "induction/constructions.hpp"
#include "induction/datagen.hpp"
#include "induction/numeric.hpp"

namespace induction {

/// Layer-2 pre-softmax scores p_t (vector index t-1 holds position t) of the
/// associative memory transformer with Q = full vocabulary, W_Q = I and exact
/// embeddings on a two-pattern sequence. Requires 3 <= t1 < t2 - 1 < T - 1.
Vector two_pattern_profile(std::size_t t1, std::size_t t2, std::size_t T);

struct LogitPrediction {
  Vector in_context;  // contribution of the layer-2 readout
  Vector global;      // log max(pi_b(v|q), eps)
  Vector total;       // in_context + global
  /// False when only the tokens whose positions are known (q, v1, v2) carry
  /// an in-context term, i.e. no filler tokens were supplied.
  bool complete = false;
};

/// Predicted final logits for a two-pattern sequence. With `tokens` the
/// in-context term of every vocabulary item is filled in; without it only
/// q, v1 and v2 are.
LogitPrediction predicted_logits_two_pattern(const TheorySequenceSpec& spec, const Matrix& pi_b,
                                             EpsilonPolicy eps, std::span<const Token> tokens = {});

/// Difference of the pre-softmax layer-2 scores at the positions of v2 and v1:
/// (e(t1 - t2) + t1 + e - 1) / ((t1 + e - 1)(t2 + e - 1)). Requires 3 <= t1 < t2.
double logit_gap(std::size_t t1, std::size_t t2);

/// Large-strength limit of the strong construction's final logits. The final
/// token must be q. f(v) counts positions where v directly follows q; the
/// first token counts as following q when it equals q. If q is never
/// followed, layer-2 attention is uniform and the in-context term becomes
/// tau3 · count(v) / T.
LogitPrediction predicted_logits_strong(std::span<const Token> tokens, Token q, const Matrix& pi_b,
                                        EpsilonPolicy eps, double tau3);

struct AgreementReport {
  double max_abs_deviation = 0.0;
  Token forward_argmax = 0;
  Token predicted_argmax = 0;
  bool argmax_agrees = false;
  /// tau1 and tau2 are both at least 20, where the limit formula is expected to hold.
  bool in_regime = false;
};

/// Runs build_strong_amt (Q = full vocabulary) forward on `tokens` and compares
/// the final logits with predicted_logits_strong.
AgreementReport strong_forward_agreement(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> tokens,
                                         const Matrix& pi_b, EpsilonPolicy eps, StrengthParams strengths);

}  // namespace induction
