#pragma once

#include <span>
#include <vector>

#include "induction/datagen.hpp"
#include "induction/model.hpp"

namespace induction {

struct StrengthParams {
  double tau1 = 1.0;
  double tau2 = 1.0;
  double tau3 = 1.0;
};

struct EpsilonPolicy {
  double epsilon = 1e-8;
};

/// All tokens 0..V-1, the default trigger support.
std::vector<Token> full_vocabulary(std::size_t vocab);

/// APE induction head: W_Q = I, W_K1 = Σ_t p_t p_{t-1}ᵀ,
/// W_K2 = Σ_{k∈Q} w_E(k)(Φ1 w_E(k))ᵀ, W_O2 = Σ_v w_U(v)(W_V2 w_E(v))ᵀ.
TransformerParams build_ape_induction(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers);

/// Associative memory transformer: RPE induction head plus an FFN storing log π_b.
TransformerParams build_amt(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers,
                            const Matrix& pi_b, EpsilonPolicy eps);

/// build_amt with W_K1, W_K2, W_O2 scaled by tau1, tau2, tau3.
TransformerParams build_strong_amt(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers,
                                   const Matrix& pi_b, EpsilonPolicy eps, StrengthParams strengths);

/// Three-layer model without positional encoding. The embedding set must
/// reserve 3 leading coordinates; token 0 is the bos token.
TransformerParams build_nope_three_layer(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers,
                                         double C);

/// uᵀ W v
double read_score(const Matrix& W, std::span<const double> u, std::span<const double> v);

/// Attention score of `key` seen from `query` under key matrix W_K with
/// W_Q = I, i.e. (W_K key)ᵀ query = read_score(W_K, query, key).
double key_query_score(const Matrix& wk, std::span<const double> key, std::span<const double> query);

/// W_Q1ᵀ W_K1 transposed so that key_query_score(result, k, q) reproduces the
/// trained model's layer-1 score; equals W_K1 whenever W_Q1 = I.
Matrix effective_layer1_key(const TransformerParams& params);

}  // namespace induction
