#include "induction/embeddings.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "induction/error.hpp"

namespace induction {

namespace {

constexpr double kRejectThreshold = 0.5;
constexpr int kMaxAttempts = 10000;
constexpr std::size_t kMinGaussianDim = 64;

struct Family {
  Matrix* rows;
};

// Draws each row as a Gaussian unit vector over the content coordinates,
// resampling it until it stays below the rejection threshold against every
// previously accepted vector.
void fill_gaussian(std::vector<Family> families, std::size_t reserved, std::size_t d, Rng& rng) {
  std::vector<std::span<const double>> accepted;
  const std::size_t content = d - reserved;
  for (auto& fam : families) {
    for (std::size_t r = 0; r < fam.rows->rows(); ++r) {
      auto row = fam.rows->row(r);
      int attempt = 0;
      for (;; ++attempt) {
        require(attempt < kMaxAttempts, Errc::dimension_too_small,
                "could not draw a near-orthogonal vector at d=" + std::to_string(d));
        Vector v = gaussian_unit_vector(content, rng);
        std::fill(row.begin(), row.end(), 0.0);
        std::copy(v.begin(), v.end(), row.begin() + static_cast<std::ptrdiff_t>(reserved));
        bool ok = true;
        for (auto other : accepted)
          if (std::abs(dot(row, other)) > kRejectThreshold) {
            ok = false;
            break;
          }
        if (ok) break;
      }
      accepted.push_back(fam.rows->row(r));
    }
  }
}

}  // namespace

const char* to_string(EmbeddingMode mode) noexcept {
  return mode == EmbeddingMode::exact ? "exact" : "gaussian";
}

EmbeddingMode parse_embedding_mode(const std::string& text) {
  if (text == "exact") return EmbeddingMode::exact;
  if (text == "gaussian") return EmbeddingMode::gaussian;
  fail(Errc::invalid_argument, "unknown embedding mode '" + text + "'");
}

std::size_t exact_min_dim(std::size_t vocab, std::size_t max_len, std::size_t reserved) {
  return reserved + 3 * vocab + max_len + 1;
}

EmbeddingSet make_embeddings(std::size_t d, std::size_t vocab, std::size_t max_len,
                             EmbeddingMode mode, Rng& rng, std::size_t reserved) {
  require(vocab >= 1, Errc::invalid_argument, "vocabulary must be nonempty");
  require(max_len >= 1, Errc::invalid_argument, "maximum length must be positive");

  EmbeddingSet set;
  set.d = d;
  set.vocab = vocab;
  set.max_len = max_len;
  set.mode = mode;
  set.reserved = reserved;
  set.w_E = Matrix(vocab, d);
  set.w_U = Matrix(vocab, d);
  set.ape = Matrix(max_len, d);
  set.rpe = Matrix(max_len, d);
  set.phi1 = Matrix(d, d);
  set.w_v2 = Matrix(d, d);

  if (mode == EmbeddingMode::exact) {
    const std::size_t need = exact_min_dim(vocab, max_len, reserved);
    require(d >= need, Errc::dimension_too_small,
            "exact mode needs d >= " + std::to_string(need) + ", got " + std::to_string(d));
    const std::size_t e0 = reserved, u0 = reserved + vocab, f0 = reserved + 2 * vocab,
                      p0 = reserved + 3 * vocab;
    for (std::size_t v = 0; v < vocab; ++v) {
      set.w_E(v, e0 + v) = 1.0;
      set.w_U(v, u0 + v) = 1.0;
      set.phi1(f0 + v, e0 + v) = 1.0;
      set.w_v2(e0 + v, e0 + v) = 1.0;
    }
    for (std::size_t j = 0; j < max_len; ++j) {
      set.rpe(j, p0 + j) = 1.0;
      set.ape(j, p0 + j) = 1.0;
    }
    set.positional_aliased = true;
    return set;
  }

  require(d >= reserved + kMinGaussianDim, Errc::dimension_too_small,
          "gaussian mode needs at least " + std::to_string(kMinGaussianDim) +
              " content dimensions");
  fill_gaussian({{&set.w_E}, {&set.w_U}, {&set.ape}, {&set.rpe}}, reserved, d, rng);
  const std::size_t content = d - reserved;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(content));
  Matrix phi = gaussian_matrix(content, content, stddev, rng);
  Matrix v2 = gaussian_matrix(content, content, stddev, rng);
  for (std::size_t r = 0; r < content; ++r)
    for (std::size_t c = 0; c < content; ++c) {
      set.phi1(reserved + r, reserved + c) = phi(r, c);
      set.w_v2(reserved + r, reserved + c) = v2(r, c);
    }
  return set;
}

OrthogonalityReport orthogonality_report(const EmbeddingSet& set) {
  std::vector<std::span<const double>> vecs;
  for (std::size_t v = 0; v < set.vocab; ++v) vecs.push_back(set.w_E.row(v));
  for (std::size_t v = 0; v < set.vocab; ++v) vecs.push_back(set.w_U.row(v));
  if (!set.positional_aliased)
    for (std::size_t t = 0; t < set.max_len; ++t) vecs.push_back(set.ape.row(t));
  for (std::size_t j = 0; j < set.max_len; ++j) vecs.push_back(set.rpe.row(j));

  OrthogonalityReport rep;
  rep.vectors_scanned = vecs.size();
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (std::size_t j = i + 1; j < vecs.size(); ++j) {
      const double a = std::abs(dot(vecs[i], vecs[j]));
      sum += a;
      ++pairs;
      if (a > rep.max_abs_offdiag) {
        rep.max_abs_offdiag = a;
        rep.worst_pair = {i, j};
      }
    }
  rep.mean_abs_offdiag = pairs ? sum / static_cast<double>(pairs) : 0.0;
  return rep;
}

double max_norm_deviation(const EmbeddingSet& set) {
  double worst = 0.0;
  for (const Matrix* m : {&set.w_E, &set.w_U, &set.ape, &set.rpe})
    for (std::size_t r = 0; r < m->rows(); ++r)
      worst = std::max(worst, std::abs(norm(m->row(r)) - 1.0));
  return worst;
}

}  // namespace induction
