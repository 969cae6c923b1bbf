#pragma once

#include <span>
#include <utility>
#include <vector>

#include "induction/datagen.hpp"
#include "induction/embeddings.hpp"
#include "induction/numeric.hpp"

namespace induction {

/// Recall of a bilinear memory: pair (j, i) is a hit when candidate i maximizes
/// u_{i'}ᵀ W v_j over all candidates (lowest index on ties).
struct RecallSpec {
  Matrix memory;      // W
  Matrix candidates;  // rows u_i
  Matrix probes;      // rows v_j
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (probe, target candidate)
};

double memory_recall(const RecallSpec& spec);

/// Fraction of triggers k whose best offset argmax_i score(r_{-i}, w_E(k)) is
/// the previous token (i = 1), with candidates r_0 .. r_{-(T_max-1)} and key→query
/// scores under `wk1`.
double recall_prev_token_rpe(const Matrix& wk1, const EmbeddingSet& emb, std::span<const Token> triggers);

/// Same test per query position t, where only offsets 0..t-1 exist: the
/// fraction of triggers hitting at t. Entry t-2 covers position t = 2..T.
Vector rpe_prev_token_by_position(const Matrix& wk1, const EmbeddingSet& emb, std::span<const Token> triggers,
                                  std::size_t T);

struct PositionRecall {
  std::vector<bool> hits;  // entry t-2 for positions t = 2..T
  double aggregate = 0.0;  // hits / (T - 1)
};

/// For each position t in 2..T, whether argmax_{t'<=T} score(p_{t'}, p_t) = t-1.
PositionRecall recall_prev_token_ape(const Matrix& wk1, const EmbeddingSet& emb, std::size_t T);

/// Mean of per-position values (entry t-2 for position t) over positions [lo, hi].
double bucket_mean(std::span<const double> values, std::size_t lo, std::size_t hi);
Vector as_values(const std::vector<bool>& hits);

struct UniformityReport {
  double mean = 0.0;
  double std = 0.0;
  double cv = 0.0;
  double min_margin = 0.0;
  double median_margin = 0.0;
  Vector scores;   // score(r_{-1}, w_E(v)) per v
  Vector margins;  // score(r_{-1}, v) - max_{j != 1} score(r_{-j}, v)
};

UniformityReport score_uniformity(const Matrix& wk1, const EmbeddingSet& emb);

/// s_t = score(p_{t-1}, p_t) for t = 2..T_max (entry t-2).
Vector ape_decay_profile(const Matrix& wk1, const EmbeddingSet& emb);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace induction
