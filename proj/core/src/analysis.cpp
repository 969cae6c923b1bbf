#include "induction/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "induction/error.hpp"

namespace induction {

namespace {

// scores[i] = key_i ᵀ Wᵀ query for every row key_i of `keys`.
Vector key_scores(const Matrix& wk, const Matrix& keys, std::size_t n_keys, std::span<const double> query) {
  const Vector wq = matvec_t(wk, query);
  Vector s(n_keys);
  for (std::size_t i = 0; i < n_keys; ++i) s[i] = dot(keys.row(i), wq);
  return s;
}

Vector ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Vector r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double memory_recall(const RecallSpec& spec) {
  require(!spec.pairs.empty(), Errc::invalid_argument, "recall needs at least one pair");
  require(spec.candidates.rows() > 0, Errc::invalid_argument, "recall needs candidates");
  require(spec.memory.rows() == spec.candidates.cols() && spec.memory.cols() == spec.probes.cols(),
          Errc::shape_mismatch, "memory shape does not match candidate and probe dimensions");
  std::size_t hits = 0;
  for (const auto& [j, i] : spec.pairs) {
    require(j < spec.probes.rows() && i < spec.candidates.rows(), Errc::invalid_argument, "pair index out of range");
    const Vector wv = matvec(spec.memory, spec.probes.row(j));
    Vector s(spec.candidates.rows());
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = dot(spec.candidates.row(c), wv);
    hits += argmax(s) == i ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(spec.pairs.size());
}

double recall_prev_token_rpe(const Matrix& wk1, const EmbeddingSet& emb, std::span<const Token> triggers) {
  require(emb.rpe.rows() >= 2, Errc::invalid_argument, "relative encodings missing");
  RecallSpec spec;
  // key→query score r ᵀ W_Kᵀ w_E, i.e. the memory seen from the key side is W_Kᵀ.
  spec.memory = transpose(wk1);
  spec.candidates = emb.rpe;
  spec.probes = Matrix(triggers.size(), emb.d);
  for (std::size_t j = 0; j < triggers.size(); ++j) {
    auto e = emb.embed(triggers[j]);
    std::copy(e.begin(), e.end(), spec.probes.row(j).begin());
    spec.pairs.emplace_back(j, 1);
  }
  return memory_recall(spec);
}

Vector rpe_prev_token_by_position(const Matrix& wk1, const EmbeddingSet& emb, std::span<const Token> triggers,
                                  std::size_t T) {
  require(T >= 2 && T <= emb.rpe.rows(), Errc::invalid_argument, "T outside the relative encoding range");
  require(!triggers.empty(), Errc::invalid_argument, "no triggers");
  std::vector<Vector> per_trigger;
  for (Token k : triggers) per_trigger.push_back(key_scores(wk1, emb.rpe, T, emb.embed(k)));
  Vector out;
  for (std::size_t t = 2; t <= T; ++t) {
    std::size_t ok = 0;
    for (const Vector& s : per_trigger) ok += argmax(std::span<const double>(s).subspan(0, t)) == 1 ? 1 : 0;
    out.push_back(static_cast<double>(ok) / static_cast<double>(per_trigger.size()));
  }
  return out;
}

PositionRecall recall_prev_token_ape(const Matrix& wk1, const EmbeddingSet& emb, std::size_t T) {
  require(T >= 2 && T <= emb.ape.rows(), Errc::invalid_argument, "T outside the absolute encoding range");
  PositionRecall r;
  std::size_t count = 0;
  for (std::size_t t = 2; t <= T; ++t) {
    const Vector s = key_scores(wk1, emb.ape, T, emb.abs_pos(t));
    const bool hit = argmax(s) == t - 2;  // row t-2 holds p_{t-1}
    r.hits.push_back(hit);
    count += hit ? 1 : 0;
  }
  r.aggregate = static_cast<double>(count) / static_cast<double>(T - 1);
  return r;
}

double bucket_mean(std::span<const double> values, std::size_t lo, std::size_t hi) {
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t t = std::max<std::size_t>(lo, 2); t <= hi && t - 2 < values.size(); ++t) {
    ++n;
    sum += values[t - 2];
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

Vector as_values(const std::vector<bool>& hits) {
  Vector v(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) v[i] = hits[i] ? 1.0 : 0.0;
  return v;
}

UniformityReport score_uniformity(const Matrix& wk1, const EmbeddingSet& emb) {
  require(emb.rpe.rows() >= 2, Errc::invalid_argument, "relative encodings missing");
  UniformityReport r;
  const std::size_t V = emb.vocab;
  for (Token v = 0; v < V; ++v) {
    const Vector s = key_scores(wk1, emb.rpe, emb.rpe.rows(), emb.embed(v));
    double best_other = -INFINITY;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (j != 1) best_other = std::max(best_other, s[j]);
    r.scores.push_back(s[1]);
    r.margins.push_back(s[1] - best_other);
  }
  r.mean = std::accumulate(r.scores.begin(), r.scores.end(), 0.0) / static_cast<double>(V);
  double var = 0.0;
  for (double s : r.scores) var += (s - r.mean) * (s - r.mean);
  r.std = std::sqrt(var / static_cast<double>(V));
  r.cv = r.mean == 0.0 ? (r.std == 0.0 ? 0.0 : INFINITY) : r.std / std::abs(r.mean);
  Vector sorted = r.margins;
  std::sort(sorted.begin(), sorted.end());
  r.min_margin = sorted.front();
  r.median_margin = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                      : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  return r;
}

Vector ape_decay_profile(const Matrix& wk1, const EmbeddingSet& emb) {
  require(emb.ape.rows() >= 2, Errc::invalid_argument, "absolute encodings missing");
  Vector s;
  for (std::size_t t = 2; t <= emb.ape.rows(); ++t) s.push_back(dot(emb.abs_pos(t), matvec(wk1, emb.abs_pos(t - 1))));
  return s;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, Errc::invalid_argument, "spearman needs two equal-length series");
  const Vector rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace induction
