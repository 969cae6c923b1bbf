#include "induction/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "induction/error.hpp"

namespace induction {

namespace {

void check_distribution(const Vector& p, std::size_t n, double tol, const char* name) {
  require(p.size() == n, Errc::invalid_argument, std::string(name) + " has wrong length");
  double s = 0.0;
  for (double x : p) {
    require(x >= 0.0 && std::isfinite(x), Errc::invalid_argument,
            std::string(name) + " has a negative or non-finite entry");
    s += x;
  }
  require(std::abs(s - 1.0) <= tol, Errc::invalid_argument, std::string(name) + " does not sum to 1");
}

Vector uniform_over(std::size_t n, const std::vector<Token>& support) {
  Vector p(n, 0.0);
  for (Token t : support) p[t] = 1.0 / static_cast<double>(support.size());
  return p;
}

void normalize(std::span<double> p) {
  double s = 0.0;
  for (double x : p) s += x;
  if (s > 0.0)
    for (double& x : p) x /= s;
}

}  // namespace

void TriggeredBigram::validate(double tol) const {
  require(vocab >= 1, Errc::invalid_argument, "empty vocabulary");
  check_distribution(pi_u, vocab, tol, "pi_u");
  check_distribution(pi_q, vocab, tol, "pi_q");
  check_distribution(pi_o, vocab, tol, "pi_o");
  require(pi_b.rows() == vocab && pi_b.cols() == vocab, Errc::invalid_argument, "pi_b shape");
  for (std::size_t i = 0; i < vocab; ++i) {
    Vector row(pi_b.row(i).begin(), pi_b.row(i).end());
    check_distribution(row, vocab, tol, "pi_b row");
  }
  if (separator) require(*separator < vocab, Errc::invalid_argument, "separator out of range");
}

void TheorySequenceSpec::validate(std::size_t vocab) const {
  require(t1 >= 3, Errc::invalid_argument, "two-pattern spec needs t1 >= 3");
  require(t1 + 1 < t2, Errc::invalid_argument,
          "two-pattern spec needs t1 < t2 - 1 (q must sit between v1 and v2)");
  require(t2 + 1 <= T, Errc::invalid_argument, "two-pattern spec needs t2 <= T - 1");
  require(q < vocab && v1 < vocab && v2 < vocab, Errc::invalid_argument, "token out of range");
  require(q != v1 && q != v2 && v1 != v2, Errc::invalid_argument, "q, v1, v2 must be distinct");
  require(vocab > 3, Errc::invalid_argument, "need a filler token outside {q, v1, v2}");
}

std::vector<bool> output_mask(const std::vector<Token>& tokens,
                              const std::vector<std::pair<Token, Token>>& triggers) {
  std::vector<bool> mask(tokens.size(), false);
  for (std::size_t t = 1; t < tokens.size(); ++t)
    for (const auto& [q, o] : triggers)
      if (tokens[t - 1] == q) mask[t] = true;
  return mask;
}

TriggeredBigram estimate_char_bigram(std::string_view corpus) {
  require(!corpus.empty(), Errc::invalid_argument, "empty corpus");
  std::array<bool, 256> seen{};
  for (unsigned char c : corpus) seen[c] = true;
  std::array<int, 256> index{};
  index.fill(-1);
  TriggeredBigram m;
  for (int c = 0; c < 256; ++c)
    if (seen[static_cast<std::size_t>(c)]) {
      index[static_cast<std::size_t>(c)] = static_cast<int>(m.vocab++);
      m.token_names.emplace_back(1, static_cast<char>(c));
    }
  const std::size_t V = m.vocab;
  m.pi_u.assign(V, 0.0);
  Matrix counts(V, V);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto a = static_cast<std::size_t>(index[static_cast<unsigned char>(corpus[i])]);
    m.pi_u[a] += 1.0;
    if (i + 1 < corpus.size()) {
      const auto b = static_cast<std::size_t>(index[static_cast<unsigned char>(corpus[i + 1])]);
      counts(a, b) += 1.0;
    }
  }
  normalize(m.pi_u);
  m.pi_b = Matrix(V, V);
  for (std::size_t a = 0; a < V; ++a) {
    for (std::size_t b = 0; b < V; ++b) m.pi_b(a, b) = counts(a, b) + 1.0;  // add-one
    normalize(m.pi_b.row(a));
  }
  m.pi_q = m.pi_u;
  m.pi_o.assign(V, 1.0 / static_cast<double>(V));
  m.triggers_per_sequence = std::min<std::size_t>(5, V);
  return m;
}

TriggeredBigram restrict_top_k(const TriggeredBigram& model, std::size_t k) {
  require(k >= 1 && k <= model.vocab, Errc::invalid_argument, "top-k outside [1, V]");
  std::vector<Token> order(model.vocab);
  for (Token t = 0; t < model.vocab; ++t) order[t] = t;
  std::stable_sort(order.begin(), order.end(),
                   [&](Token a, Token b) { return model.pi_u[a] > model.pi_u[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());

  TriggeredBigram m;
  m.vocab = k;
  m.triggers_per_sequence = std::min(model.triggers_per_sequence, k);
  auto pick = [&](const Vector& p) {
    Vector out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = p[order[i]];
    normalize(out);
    return out;
  };
  m.pi_u = pick(model.pi_u);
  m.pi_q = pick(model.pi_q);
  m.pi_o = pick(model.pi_o);
  m.pi_b = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) m.pi_b(i, j) = model.pi_b(order[i], order[j]);
    normalize(m.pi_b.row(i));
  }
  for (Token t : order)
    if (t < model.token_names.size()) m.token_names.push_back(model.token_names[t]);
  return m;
}

TriggeredBigram uniform_bigram(std::size_t vocab, std::size_t triggers_per_sequence) {
  require(vocab >= 1, Errc::invalid_argument, "empty vocabulary");
  TriggeredBigram m;
  m.vocab = vocab;
  const double u = 1.0 / static_cast<double>(vocab);
  m.pi_u.assign(vocab, u);
  m.pi_q.assign(vocab, u);
  m.pi_o.assign(vocab, u);
  m.pi_b = Matrix(vocab, vocab, u);
  m.triggers_per_sequence = triggers_per_sequence;
  return m;
}

SequenceSample sample_sequence(const TriggeredBigram& model, std::size_t T, Rng& rng) {
  const std::size_t K = model.triggers_per_sequence;
  require(T >= 2, Errc::invalid_argument, "sequence length must be at least 2");
  require(K >= 1, Errc::invalid_argument, "need at least one trigger");
  require(K <= model.vocab, Errc::invalid_argument, "more triggers than vocabulary items");

  std::size_t trigger_support = 0;
  for (double p : model.pi_q) trigger_support += p > 0.0 ? 1 : 0;
  require(K <= trigger_support, Errc::invalid_argument, "trigger distribution support smaller than K");

  SequenceSample s;
  Vector q_weights = model.pi_q;
  std::vector<Token> trig;
  while (trig.size() < K) {
    const Token q = rng.categorical(q_weights);
    trig.push_back(q);
    q_weights[q] = 0.0;  // distinct triggers
  }
  Vector o_weights = model.pi_o;
  for (Token q : trig) o_weights[q] = 0.0;  // a trigger is never another trigger's output
  if (model.separator) o_weights[*model.separator] = 0.0;
  for (Token q : trig) s.triggers.emplace_back(q, rng.categorical(o_weights));

  auto output_of = [&](Token z) -> std::optional<Token> {
    for (const auto& [q, o] : s.triggers)
      if (q == z) return o;
    return std::nullopt;
  };

  s.tokens.reserve(T);
  if (model.separator) {
    while (s.tokens.size() < T) {
      const Token src = rng.categorical(model.pi_u);
      s.tokens.push_back(src);
      if (s.tokens.size() == T) break;
      const auto out = output_of(src);
      s.tokens.push_back(out ? *out : rng.categorical(model.pi_b.row(src)));
      if (s.tokens.size() == T) break;
      s.tokens.push_back(*model.separator);
    }
  } else {
    s.tokens.push_back(rng.categorical(model.pi_u));
    while (s.tokens.size() < T) {
      const Token z = s.tokens.back();
      const auto out = output_of(z);
      s.tokens.push_back(out ? *out : rng.categorical(model.pi_b.row(z)));
    }
  }
  s.is_output_position = output_mask(s.tokens, s.triggers);
  return s;
}

SequenceSample sample_two_occurrence_sequence(std::size_t vocab, std::size_t T, Rng& rng) {
  require(vocab >= 2, Errc::invalid_argument, "need at least two tokens");
  require(T >= 4, Errc::invalid_argument, "need T >= 4 for a trigger, its output and a repeat");
  const Token q = rng.index(vocab);
  Token o = rng.index(vocab - 1);
  if (o >= q) ++o;

  SequenceSample s;
  s.triggers = {{q, o}};
  std::vector<Token> z(T);
  for (;;) {
    z[0] = rng.index(vocab);
    for (std::size_t t = 1; t + 1 < T; ++t) z[t] = z[t - 1] == q ? o : rng.index(vocab);
    // q must occur exactly once among the first T-1 tokens, early enough
    // that its output also lands there.
    std::size_t count = 0, pos = 0;
    for (std::size_t t = 0; t + 1 < T; ++t)
      if (z[t] == q) {
        ++count;
        pos = t;
      }
    if (count == 1 && pos + 2 < T) break;
  }
  z[T - 1] = q;
  s.tokens = std::move(z);
  s.is_output_position.assign(T, false);
  s.next_token = o;
  return s;
}

SequenceSample build_theory_sequence(const TheorySequenceSpec& spec, std::size_t vocab, Rng& rng) {
  spec.validate(vocab);
  std::vector<Token> fillers;
  for (Token v = 0; v < vocab; ++v)
    if (v != spec.q && v != spec.v1 && v != spec.v2) fillers.push_back(v);

  SequenceSample s;
  s.tokens.resize(spec.T);
  for (auto& z : s.tokens) z = fillers[rng.index(fillers.size())];
  // 1-indexed positions from TheorySequenceSpec
  s.tokens[spec.t1 - 2] = spec.q;
  s.tokens[spec.t1 - 1] = spec.v1;
  s.tokens[spec.t2 - 2] = spec.q;
  s.tokens[spec.t2 - 1] = spec.v2;
  s.tokens[spec.T - 1] = spec.q;
  s.is_output_position.assign(spec.T, false);
  return s;
}

SequenceSample build_collision_prompt(Token a, Token b1, Token b2, std::size_t n1, std::size_t n2,
                                      Token separator) {
  require(a != b1 && a != b2 && b1 != b2, Errc::invalid_argument, "A, B1, B2 must be distinct");
  require(n1 + n2 >= 1, Errc::invalid_argument, "collision prompt needs n1 + n2 >= 1");
  SequenceSample s;
  s.tokens.reserve(3 * (n1 + n2) + 1);
  for (std::size_t i = 0; i < n1; ++i) s.tokens.insert(s.tokens.end(), {a, b1, separator});
  for (std::size_t i = 0; i < n2; ++i) s.tokens.insert(s.tokens.end(), {a, b2, separator});
  s.tokens.push_back(a);
  s.is_output_position.assign(s.tokens.size(), false);
  return s;
}

TriggeredBigram build_analogy_model(std::size_t num_words,
                                    const std::vector<std::pair<Token, Token>>& pairs,
                                    std::size_t n_fake, std::pair<double, double> p_range,
                                    Rng& rng) {
  require(!pairs.empty(), Errc::invalid_argument, "analogy model needs at least one pair");
  const auto [p_lo, p_hi] = p_range;
  require(0.0 < p_lo && p_lo <= p_hi && p_hi < 1.0, Errc::invalid_argument,
          "fake-target probability range must satisfy 0 < lo <= hi < 1");
  for (const auto& [a, b] : pairs)
    require(a < num_words && b < num_words && a != b, Errc::invalid_argument, "bad analogy pair");

  const std::size_t V = num_words + 1;
  const Token sep = num_words;
  std::map<Token, std::map<Token, double>> counts;  // c_A(B)
  std::set<Token> targets;
  for (const auto& [a, b] : pairs) {
    counts[a][b] += 1.0;
    targets.insert(b);
  }

  TriggeredBigram m;
  m.vocab = V;
  m.separator = sep;
  m.pi_b = Matrix(V, V);
  std::vector<Token> sources;
  for (const auto& [a, row] : counts) {
    sources.push_back(a);
    double total = 0.0;
    for (const auto& [b, c] : row) {
      m.pi_b(a, b) += c;
      total += c;
    }
    const double p_a = p_lo + (p_hi - p_lo) * rng.uniform();
    std::vector<Token> pool;
    for (Token b : targets)
      if (b != a && !row.contains(b)) pool.push_back(b);
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    pool.resize(std::min(n_fake, pool.size()));
    for (Token fake : pool) m.pi_b(a, fake) += p_a * total;
    normalize(m.pi_b.row(a));
  }
  // Rows that generation never consults still have to be distributions.
  std::vector<Token> words(num_words);
  for (Token w = 0; w < num_words; ++w) words[w] = w;
  const Vector src_uniform = uniform_over(V, sources);
  for (Token t = 0; t < V; ++t) {
    if (counts.contains(t)) continue;
    if (t == sep) {
      std::copy(src_uniform.begin(), src_uniform.end(), m.pi_b.row(t).begin());
    } else {
      m.pi_b(t, sep) = 1.0;
    }
  }
  m.pi_u = src_uniform;
  m.pi_q = src_uniform;
  m.pi_o = uniform_over(V, words);
  m.triggers_per_sequence = std::min<std::size_t>(5, sources.size());
  return m;
}

std::string to_jsonl(const SequenceSample& sample) {
  nlohmann::json j;
  j["tokens"] = sample.tokens;
  auto trig = nlohmann::json::array();
  for (const auto& [q, o] : sample.triggers) trig.push_back({q, o});
  j["triggers"] = trig;
  auto mask = nlohmann::json::array();
  for (bool b : sample.is_output_position) mask.push_back(b ? 1 : 0);
  j["mask"] = mask;
  return j.dump();
}

}  // namespace induction
