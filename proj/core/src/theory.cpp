#include "induction/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "induction/error.hpp"
#include "induction/model.hpp"

namespace induction {

namespace {
constexpr double e = std::numbers::e;

Vector global_term(const Matrix& pi_b, Token q, EpsilonPolicy eps) {
  require(eps.epsilon > 0.0, Errc::invalid_argument, "epsilon must be positive");
  require(q < pi_b.rows(), Errc::invalid_argument, "query token outside pi_b");
  Vector g(pi_b.cols());
  for (std::size_t v = 0; v < g.size(); ++v) g[v] = std::log(std::max(pi_b(q, v), eps.epsilon));
  return g;
}

void finish(LogitPrediction& p) {
  p.total.resize(p.global.size());
  for (std::size_t v = 0; v < p.total.size(); ++v) p.total[v] = p.in_context[v] + p.global[v];
}
}  // namespace

Vector two_pattern_profile(std::size_t t1, std::size_t t2, std::size_t T) {
  require(t1 >= 3 && t1 + 1 < t2 && t2 + 1 <= T, Errc::invalid_argument,
          "two-pattern profile needs 3 <= t1 < t2 - 1 < T - 1");
  Vector p(T, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double td = static_cast<double>(t);
    double v = 0.0;
    if (t + 1 < t1) v = 0.0;
    else if (t + 1 == t1) v = 1.0 / (td + e - 1.0);
    else if (t == t1) v = e / (td + e - 1.0);
    else if (t + 1 < t2) v = 1.0 / (td + e - 1.0);
    else if (t + 1 == t2) v = 2.0 / (td + e - 1.0);
    else if (t == t2) v = (1.0 + e) / (td + e - 1.0);
    else if (t < T) v = 2.0 / (td + e - 1.0);
    else v = 3.0 / (td + e - 1.0);
    p[t - 1] = v;
  }
  return p;
}

LogitPrediction predicted_logits_two_pattern(const TheorySequenceSpec& spec, const Matrix& pi_b,
                                             EpsilonPolicy eps, std::span<const Token> tokens) {
  const std::size_t V = pi_b.rows();
  spec.validate(V);
  const Vector sigma = softmax(two_pattern_profile(spec.t1, spec.t2, spec.T));
  LogitPrediction out;
  out.global = global_term(pi_b, spec.q, eps);
  out.in_context.assign(V, 0.0);
  if (!tokens.empty()) {
    require(tokens.size() == spec.T, Errc::invalid_argument, "token count differs from spec.T");
    require(tokens[spec.t1 - 2] == spec.q && tokens[spec.t1 - 1] == spec.v1 && tokens[spec.t2 - 2] == spec.q &&
                tokens[spec.t2 - 1] == spec.v2 && tokens[spec.T - 1] == spec.q,
            Errc::invalid_argument, "tokens do not follow the two-pattern layout");
    for (std::size_t t = 0; t < spec.T; ++t) out.in_context[tokens[t]] += sigma[t];
    out.complete = true;
  } else {
    out.in_context[spec.v1] = sigma[spec.t1 - 1];
    out.in_context[spec.v2] = sigma[spec.t2 - 1];
    out.in_context[spec.q] = sigma[spec.t1 - 2] + sigma[spec.t2 - 2] + sigma[spec.T - 1];
  }
  finish(out);
  return out;
}

double logit_gap(std::size_t t1, std::size_t t2) {
  require(t1 >= 3 && t1 < t2, Errc::invalid_argument, "logit_gap needs 3 <= t1 < t2");
  const double a = static_cast<double>(t1), b = static_cast<double>(t2);
  return (e * (a - b) + a + e - 1.0) / ((a + e - 1.0) * (b + e - 1.0));
}

LogitPrediction predicted_logits_strong(std::span<const Token> tokens, Token q, const Matrix& pi_b,
                                        EpsilonPolicy eps, double tau3) {
  const std::size_t V = pi_b.rows();
  const std::size_t T = tokens.size();
  require(T >= 1 && tokens.back() == q, Errc::invalid_argument, "final token must be the query");
  LogitPrediction out;
  out.global = global_term(pi_b, q, eps);
  out.in_context.assign(V, 0.0);
  Vector f(V, 0.0);
  double total = 0.0;
  if (tokens[0] == q) {
    f[q] += 1.0;
    total += 1.0;
  }
  for (std::size_t s = 1; s < T; ++s) {
    require(tokens[s] < V, Errc::invalid_argument, "token outside pi_b");
    if (tokens[s - 1] == q) {
      f[tokens[s]] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (std::size_t v = 0; v < V; ++v) out.in_context[v] = tau3 * f[v] / total;
  } else {
    for (Token z : tokens) out.in_context[z] += tau3 / static_cast<double>(T);
  }
  out.complete = true;
  finish(out);
  return out;
}

AgreementReport strong_forward_agreement(std::shared_ptr<const EmbeddingSet> emb, std::span<const Token> tokens,
                                         const Matrix& pi_b, EpsilonPolicy eps, StrengthParams strengths) {
  require(!tokens.empty(), Errc::invalid_argument, "empty token sequence");
  const std::vector<Token> all = full_vocabulary(emb->vocab);
  const TransformerParams model = build_strong_amt(emb, all, pi_b, eps, strengths);
  const ForwardTrace tr = forward(model, tokens);
  const LogitPrediction pred = predicted_logits_strong(tokens, tokens.back(), pi_b, eps, strengths.tau3);
  AgreementReport r;
  auto got = tr.final_logits();
  for (std::size_t v = 0; v < pred.total.size(); ++v)
    r.max_abs_deviation = std::max(r.max_abs_deviation, std::abs(got[v] - pred.total[v]));
  r.forward_argmax = argmax(got);
  r.predicted_argmax = argmax(pred.total);
  r.argmax_agrees = r.forward_argmax == r.predicted_argmax;
  r.in_regime = strengths.tau1 >= 20.0 && strengths.tau2 >= 20.0;
  return r;
}

}  // namespace induction
