#include "induction/model.hpp"

#include <cmath>
#include <sstream>

#include "induction/error.hpp"

namespace induction {

namespace {

// Applies the row-wise normalization to the causal prefix [0, t] (or [0, t)
// when strict) and zeroes everything after it.
Matrix causal_normalize(const Matrix& scores, AttentionNorm norm, bool strict) {
  const std::size_t T = scores.rows();
  Matrix attn(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t n = strict ? t : t + 1;
    if (n == 0) continue;
    auto prefix = scores.row(t).subspan(0, n);
    const Vector w = norm == AttentionNorm::softmax ? softmax(prefix) : linearized_softmax(prefix);
    std::copy(w.begin(), w.end(), attn.row(t).begin());
  }
  return attn;
}

Matrix lower_scores(const Matrix& q, const Matrix& k, bool strict) {
  // scores[t][s] = q_t · k_s for the causal prefix, zero elsewhere
  const std::size_t T = q.rows();
  Matrix s = matmul(q, transpose(k));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = strict ? t : t + 1; c < T; ++c) s(t, c) = 0.0;
  return s;
}

Matrix gather_rows(const Matrix& table, std::span<const Token> tokens) {
  Matrix out(tokens.size(), table.cols());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    require(tokens[t] < table.rows(), Errc::invalid_argument, "token id out of range");
    auto src = table.row(tokens[t]);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

Matrix leading_rows(const Matrix& table, std::size_t n) {
  Matrix out(n, table.cols());
  std::copy(table.data().begin(), table.data().begin() + static_cast<std::ptrdiff_t>(n * table.cols()),
            out.data().begin());
  return out;
}

// x · Wᵀ, i.e. W applied to every row of x.
Matrix apply(const Matrix& x, const Matrix& w) { return matmul(x, transpose(w)); }

}  // namespace

const char* to_string(PeMode mode) noexcept {
  switch (mode) {
    case PeMode::ape: return "ape";
    case PeMode::rpe: return "rpe";
    case PeMode::nope3: return "nope3";
  }
  return "?";
}

PeMode parse_pe_mode(const std::string& text) {
  if (text == "ape" || text == "APE") return PeMode::ape;
  if (text == "rpe" || text == "RPE") return PeMode::rpe;
  if (text == "nope3" || text == "NoPE3") return PeMode::nope3;
  fail(Errc::invalid_argument, "unknown positional encoding '" + text + "'");
}

const char* to_string(ParamName name) noexcept {
  switch (name) {
    case ParamName::W_K1: return "W_K1";
    case ParamName::W_Q1: return "W_Q1";
    case ParamName::Phi1: return "Phi1";
    case ParamName::W_K2: return "W_K2";
    case ParamName::W_Q2: return "W_Q2";
    case ParamName::W_V2: return "W_V2";
    case ParamName::W_O2: return "W_O2";
    case ParamName::W_1: return "W_1";
    case ParamName::W_2: return "W_2";
  }
  return "?";
}

ParamName parse_param_name(const std::string& text) {
  for (ParamName n : kAllParams)
    if (text == to_string(n)) return n;
  fail(Errc::invalid_argument, "unknown parameter name '" + text + "'");
}

bool TransformerParams::has(ParamName name) const {
  if (name == ParamName::W_1 || name == ParamName::W_2) return ffn.has_value();
  return !param(name).empty();
}

const Matrix& TransformerParams::param(ParamName name) const {
  switch (name) {
    case ParamName::W_K1: return wk1;
    case ParamName::W_Q1: return wq1;
    case ParamName::Phi1: return phi1;
    case ParamName::W_K2: return wk2;
    case ParamName::W_Q2: return wq2;
    case ParamName::W_V2: return wv2;
    case ParamName::W_O2: return wo2;
    case ParamName::W_1:
      require(ffn.has_value(), Errc::invalid_argument, "model has no FFN");
      return ffn->w1;
    case ParamName::W_2:
      require(ffn.has_value(), Errc::invalid_argument, "model has no FFN");
      return ffn->w2;
  }
  fail(Errc::invalid_argument, "bad parameter name");
}

Matrix& TransformerParams::param(ParamName name) {
  return const_cast<Matrix&>(std::as_const(*this).param(name));
}

void TransformerParams::validate() const {
  require(emb != nullptr, Errc::invalid_argument, "model has no embedding set");
  const std::size_t dd = emb->d;
  auto square = [&](const Matrix& m, const char* what) {
    require(m.rows() == dd && m.cols() == dd, Errc::shape_mismatch,
            std::string(what) + " must be d x d");
  };
  if (pe != PeMode::nope3) {
    square(wq1, "W_Q1");
    square(wk1, "W_K1");
    square(phi1, "Phi1");
  }
  square(wq2, "W_Q2");
  square(wk2, "W_K2");
  square(wv2, "W_V2");
  square(wo2, "W_O2");
  if (ffn) {
    require(ffn->w1.rows() == emb->vocab && ffn->w1.cols() == dd, Errc::shape_mismatch, "W_1 must be V x d");
    require(ffn->w2.rows() == dd && ffn->w2.cols() == emb->vocab, Errc::shape_mismatch, "W_2 must be d x V");
  }
  if (pe == PeMode::nope3) {
    require(nope.has_value(), Errc::invalid_argument, "NoPE model needs block-3 weights");
    require(emb->reserved >= 3, Errc::invalid_argument, "NoPE model needs 3 reserved coordinates");
    square(nope->wq3, "W_Q3");
    square(nope->wk3, "W_K3");
    square(nope->wv3, "W_V3");
    square(nope->wo3, "W_O3");
  }
}

TransformerParams zero_init_params(std::shared_ptr<const EmbeddingSet> emb, PeMode pe) {
  require(pe != PeMode::nope3, Errc::invalid_argument, "zero_init_params builds two-layer models only");
  TransformerParams p;
  const std::size_t d = emb->d;
  p.pe = pe;
  p.wq1 = Matrix::identity(d);
  p.wk1 = Matrix(d, d);
  p.phi1 = emb->phi1;
  p.wq2 = Matrix::identity(d);
  p.wk2 = Matrix(d, d);
  p.wv2 = emb->w_v2;
  p.wo2 = Matrix(d, d);
  p.emb = std::move(emb);
  return p;
}

ForwardTrace forward(const TransformerParams& params, std::span<const Token> tokens) {
  if (params.pe == PeMode::nope3) return forward_three_layer_nope(params, tokens);
  const EmbeddingSet& emb = *params.emb;
  const std::size_t T = tokens.size();
  require(T >= 1, Errc::invalid_argument, "empty token sequence");
  require(T <= emb.max_len, Errc::sequence_too_long,
          "sequence of length " + std::to_string(T) + " exceeds T_max=" + std::to_string(emb.max_len));

  ForwardTrace tr;
  tr.T = T;
  const Matrix E = gather_rows(emb.w_E, tokens);
  if (params.pe == PeMode::ape) {
    Matrix x0 = E + leading_rows(emb.ape, T);
    tr.x0_query = x0;
    tr.x0_key = x0;
    tr.x0_value = x0;
    tr.x0_residual = std::move(x0);
  } else {
    tr.x0_query = E;
    tr.x0_key = E;
    tr.x0_value = E;
    tr.x0_residual = E;
  }

  // Layer 1
  tr.q1 = apply(tr.x0_query, params.wq1);
  tr.k1 = apply(tr.x0_key, params.wk1);
  tr.scores1 = lower_scores(tr.q1, tr.k1, false);
  if (params.pe == PeMode::rpe) {
    tr.k1_rel = apply(leading_rows(emb.rpe, T), params.wk1);
    const Matrix g = matmul(tr.q1, transpose(tr.k1_rel));  // g[t][j] = q_t · W_K1 r_{-j}
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s <= t; ++s) tr.scores1(t, s) += g(t, t - s);
  }
  tr.attn1 = causal_normalize(tr.scores1, AttentionNorm::softmax, false);
  tr.u1 = matmul(tr.attn1, tr.x0_value);
  tr.x1 = apply(tr.u1, params.phi1) + tr.x0_residual;

  // Layer 2
  tr.q2 = apply(tr.x1, params.wq2);
  tr.k2 = apply(tr.x1, params.wk2);
  tr.scores2 = lower_scores(tr.q2, tr.k2, false);
  tr.attn2 = causal_normalize(tr.scores2, params.layer2_norm, false);
  tr.h2 = matmul(tr.attn2, tr.x1);
  tr.g2 = apply(tr.h2, params.wv2);
  tr.x2 = apply(tr.g2, params.wo2) + tr.x1;

  if (params.ffn) {
    tr.ffn_pre = apply(tr.x2, params.ffn->w1);
    Matrix act = tr.ffn_pre;
    for (double& a : act.data()) a = a > 0.0 ? a : 0.0;
    tr.x_out = apply(act, params.ffn->w2) + tr.x2;
  } else {
    tr.x_out = tr.x2;
  }
  tr.logits = apply(tr.x_out, emb.w_U);
  return tr;
}

Token predict_next(const TransformerParams& params, std::span<const Token> tokens) {
  const ForwardTrace tr = forward(params, tokens);
  return argmax(tr.final_logits());
}

ForwardTrace forward_three_layer_nope(const TransformerParams& params, std::span<const Token> tokens) {
  require(params.pe == PeMode::nope3 && params.nope.has_value(), Errc::invalid_argument,
          "forward_three_layer_nope needs a NoPE model");
  const EmbeddingSet& emb = *params.emb;
  const NopeBlocks& nb = *params.nope;
  const std::size_t T = tokens.size();
  require(T >= 1, Errc::invalid_argument, "empty token sequence");
  require(tokens[0] == nb.bos, Errc::invalid_argument, "NoPE input must start with the bos token");
  require(T <= emb.max_len, Errc::sequence_too_long, "sequence exceeds T_max");

  ForwardTrace tr;
  tr.T = T;
  // Block 1 (position-writing oracle): constant row, bos indicator, position, content.
  tr.hidden0 = gather_rows(emb.w_E, tokens);
  for (std::size_t t = 0; t < T; ++t) {
    tr.hidden0(t, 0) = 1.0;
    tr.hidden0(t, 1) = t == 0 ? 1.0 : 0.0;
    tr.hidden0(t, 2) = static_cast<double>(t + 1);
  }

  // Block 2: strict causal previous-token head driven by the position row.
  tr.q1 = apply(tr.hidden0, params.wq2);
  tr.k1 = apply(tr.hidden0, params.wk2);
  tr.scores1 = lower_scores(tr.q1, tr.k1, true);
  tr.attn1 = causal_normalize(tr.scores1, AttentionNorm::softmax, true);
  tr.u1 = matmul(tr.attn1, tr.hidden0);
  tr.x1 = apply(apply(tr.u1, params.wv2), params.wo2) + tr.hidden0;

  // Block 3: induction head on the content coordinates.
  tr.q2 = apply(tr.x1, nb.wq3);
  tr.k2 = apply(tr.x1, nb.wk3);
  tr.scores2 = lower_scores(tr.q2, tr.k2, false);
  tr.attn2 = causal_normalize(tr.scores2, AttentionNorm::softmax, false);
  tr.h2 = matmul(tr.attn2, tr.x1);
  tr.g2 = apply(tr.h2, nb.wv3);
  tr.x2 = apply(tr.g2, nb.wo3) + tr.x1;
  tr.x_out = tr.x2;
  tr.logits = apply(tr.x_out, emb.w_U);
  return tr;
}

std::string heatmap_csv(const ForwardTrace& trace, bool with_header) {
  std::ostringstream os;
  os.precision(17);
  if (with_header) os << "layer,query_pos,key_pos,weight\n";
  const Matrix* layers[] = {&trace.attn1, &trace.attn2};
  for (int l = 0; l < 2; ++l)
    for (std::size_t t = 0; t < trace.T; ++t)
      for (std::size_t s = 0; s <= t; ++s)
        os << (l + 1) << ',' << t << ',' << s << ',' << (*layers[l])(t, s) << '\n';
  return os.str();
}

}  // namespace induction
