#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "induction/numeric.hpp"

namespace induction {

enum class EmbeddingMode { gaussian, exact };

const char* to_string(EmbeddingMode mode) noexcept;
EmbeddingMode parse_embedding_mode(const std::string& text);

/// Frozen vector families shared by every model built on top of them.
///
/// Rows of `w_E`, `w_U`, `ape`, `rpe` are unit vectors. `ape` row t holds the
/// absolute encoding of 1-indexed position t+1; `rpe` row j holds the relative
/// encoding of offset -j (row 0 is "same position", row 1 "previous token").
///
/// In exact mode every family occupies a disjoint block of coordinates:
///   [reserved | w_E (V) | w_U (V) | Phi1 w_E (V) | positions (T_max) | spare]
/// and `ape` aliases the position block (see `positional_aliased`).
struct EmbeddingSet {
  std::size_t d = 0;
  std::size_t vocab = 0;
  std::size_t max_len = 0;
  EmbeddingMode mode = EmbeddingMode::gaussian;
  /// Leading coordinates left at zero for bookkeeping (3 for the NoPE layout).
  std::size_t reserved = 0;

  Matrix w_E;   // V × d
  Matrix w_U;   // V × d
  Matrix ape;   // T_max × d
  Matrix rpe;   // T_max × d
  Matrix phi1;  // d × d, layer-1 value-output product
  Matrix w_v2;  // d × d, layer-2 value map
  bool positional_aliased = false;

  std::span<const double> embed(std::size_t token) const { return w_E.row(token); }
  std::span<const double> unembed(std::size_t token) const { return w_U.row(token); }
  /// p_t for 1-indexed position t.
  std::span<const double> abs_pos(std::size_t t) const { return ape.row(t - 1); }
  /// r_{-j} for offset j >= 0.
  std::span<const double> rel_pos(std::size_t j) const { return rpe.row(j); }
};

struct OrthogonalityReport {
  double max_abs_offdiag = 0.0;
  double mean_abs_offdiag = 0.0;
  std::pair<std::size_t, std::size_t> worst_pair{0, 0};
  std::size_t vectors_scanned = 0;
};

/// Smallest dimension that fits the exact-mode block layout.
std::size_t exact_min_dim(std::size_t vocab, std::size_t max_len, std::size_t reserved = 0);

EmbeddingSet make_embeddings(std::size_t d, std::size_t vocab, std::size_t max_len,
                             EmbeddingMode mode, Rng& rng, std::size_t reserved = 0);

OrthogonalityReport orthogonality_report(const EmbeddingSet& set);

/// Largest deviation of a stored vector's norm from 1.
double max_norm_deviation(const EmbeddingSet& set);

}  // namespace induction
