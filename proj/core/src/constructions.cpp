#include "induction/constructions.hpp"

#include <algorithm>
#include <cmath>

#include "induction/error.hpp"

namespace induction {

namespace {

void check_triggers(std::span<const Token> triggers, std::size_t vocab) {
  for (Token k : triggers) require(k < vocab, Errc::invalid_argument, "trigger outside vocabulary");
}

Matrix induction_key2(const EmbeddingSet& emb, const Matrix& phi, std::span<const Token> triggers) {
  Matrix wk2(emb.d, emb.d);
  for (Token k : triggers) {
    const Vector phik = matvec(phi, emb.embed(k));
    add_outer(wk2, emb.embed(k), phik);
  }
  return wk2;
}

Matrix induction_output(const EmbeddingSet& emb, const Matrix& wv) {
  Matrix wo(emb.d, emb.d);
  for (Token v = 0; v < emb.vocab; ++v) {
    const Vector val = matvec(wv, emb.embed(v));
    add_outer(wo, emb.unembed(v), val);
  }
  return wo;
}

}  // namespace

std::vector<Token> full_vocabulary(std::size_t vocab) {
  std::vector<Token> all(vocab);
  for (Token v = 0; v < vocab; ++v) all[v] = v;
  return all;
}

TransformerParams build_ape_induction(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers) {
  require(emb && emb->ape.rows() >= 2, Errc::invalid_argument, "APE construction needs absolute encodings");
  check_triggers(triggers, emb->vocab);
  const std::size_t d = emb->d;
  TransformerParams p;
  p.pe = PeMode::ape;
  p.wq1 = Matrix::identity(d);
  p.wq2 = Matrix::identity(d);
  p.wk1 = Matrix(d, d);
  for (std::size_t t = 2; t <= emb->max_len; ++t) add_outer(p.wk1, emb->abs_pos(t), emb->abs_pos(t - 1));
  p.phi1 = emb->phi1;
  p.wv2 = emb->w_v2;
  p.wk2 = induction_key2(*emb, p.phi1, triggers);
  p.wo2 = induction_output(*emb, p.wv2);
  p.emb = std::move(emb);
  return p;
}

TransformerParams build_amt(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers,
                            const Matrix& pi_b, EpsilonPolicy eps) {
  require(emb && emb->rpe.rows() >= 2, Errc::invalid_argument, "RPE construction needs r_{-1}");
  require(eps.epsilon > 0.0 && eps.epsilon < 1.0, Errc::invalid_argument, "epsilon must lie in (0, 1)");
  require(pi_b.rows() == emb->vocab && pi_b.cols() == emb->vocab, Errc::shape_mismatch, "pi_b must be V x V");
  check_triggers(triggers, emb->vocab);
  const std::size_t d = emb->d, V = emb->vocab;
  TransformerParams p;
  p.pe = PeMode::rpe;
  p.wq1 = Matrix::identity(d);
  p.wq2 = Matrix::identity(d);
  p.wk1 = Matrix(d, d);
  for (Token k : triggers) add_outer(p.wk1, emb->embed(k), emb->rel_pos(1));
  p.phi1 = emb->phi1;
  p.wv2 = emb->w_v2;
  p.wk2 = induction_key2(*emb, p.phi1, triggers);
  p.wo2 = induction_output(*emb, p.wv2);

  FeedForward ffn{Matrix(V, d), Matrix(d, V)};
  for (Token v = 0; v < V; ++v) {
    auto e = emb->embed(v);
    std::copy(e.begin(), e.end(), ffn.w1.row(v).begin());
    for (Token u = 0; u < V; ++u) {
      const double coeff = std::log(std::max(pi_b(v, u), eps.epsilon));
      auto wu = emb->unembed(u);
      for (std::size_t i = 0; i < d; ++i) ffn.w2(i, v) += coeff * wu[i];
    }
  }
  p.ffn = std::move(ffn);
  p.emb = std::move(emb);
  return p;
}

TransformerParams build_strong_amt(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers,
                                   const Matrix& pi_b, EpsilonPolicy eps, StrengthParams s) {
  require(s.tau1 > 0.0 && s.tau2 > 0.0 && s.tau3 > 0.0, Errc::invalid_argument, "strengths must be positive");
  TransformerParams p = build_amt(std::move(emb), triggers, pi_b, eps);
  p.wk1 *= s.tau1;
  p.wk2 *= s.tau2;
  p.wo2 *= s.tau3;
  return p;
}

TransformerParams build_nope_three_layer(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> triggers,
                                         double C) {
  require(emb && emb->reserved >= 3, Errc::invalid_argument,
          "NoPE construction needs 3 reserved bookkeeping coordinates");
  require(C >= 0.0, Errc::invalid_argument, "C must be nonnegative");
  check_triggers(triggers, emb->vocab);
  const std::size_t d = emb->d;
  Matrix content_identity(d, d);
  for (std::size_t i = emb->reserved; i < d; ++i) content_identity(i, i) = 1.0;

  TransformerParams p;
  p.pe = PeMode::nope3;
  // Block 2: query reads the constant row, key reads C · position.
  p.wq2 = Matrix(d, d);
  p.wq2(0, 0) = 1.0;
  p.wk2 = Matrix(d, d);
  p.wk2(0, 2) = C;
  p.wv2 = emb->phi1;
  p.wo2 = content_identity;
  // Block 3: induction head on content coordinates.
  NopeBlocks nb;
  nb.wq3 = content_identity;
  nb.wk3 = induction_key2(*emb, emb->phi1, triggers);
  nb.wv3 = emb->w_v2;
  nb.wo3 = induction_output(*emb, nb.wv3);
  nb.bos = 0;
  p.nope = std::move(nb);
  p.emb = std::move(emb);
  return p;
}

double read_score(const Matrix& W, std::span<const double> u, std::span<const double> v) {
  require(W.rows() == u.size() && W.cols() == v.size(), Errc::invalid_argument,
          "read_score shape mismatch");
  return dot(u, matvec(W, v));
}

double key_query_score(const Matrix& wk, std::span<const double> key, std::span<const double> query) {
  return read_score(wk, query, key);
}

Matrix effective_layer1_key(const TransformerParams& params) {
  // (W_K k)·(W_Q q) = qᵀ (W_Qᵀ W_K) k
  return matmul(transpose(params.wq1), params.wk1);
}

}  // namespace induction
