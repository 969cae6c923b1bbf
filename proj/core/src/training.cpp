#include "induction/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "induction/error.hpp"

namespace induction {

namespace {

constexpr std::size_t kChunk = 8;

bool contains(std::span<const ParamName> names, ParamName n) {
  return std::find(names.begin(), names.end(), n) != names.end();
}

// Row-wise backward of softmax restricted to the causal prefix.
Matrix softmax_backward(const Matrix& attn, const Matrix& d_attn) {
  const std::size_t T = attn.rows();
  Matrix ds(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    double inner = 0.0;
    for (std::size_t s = 0; s <= t; ++s) inner += attn(t, s) * d_attn(t, s);
    for (std::size_t s = 0; s <= t; ++s) ds(t, s) = attn(t, s) * (d_attn(t, s) - inner);
  }
  return ds;
}

// Backward of (1/n)(1 + s_i - mean(s)) over the prefix of length n = t + 1.
Matrix linearized_backward(const Matrix& d_attn) {
  const std::size_t T = d_attn.rows();
  Matrix ds(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    const double n = static_cast<double>(t + 1);
    double mean = 0.0;
    for (std::size_t s = 0; s <= t; ++s) mean += d_attn(t, s);
    mean /= n;
    for (std::size_t s = 0; s <= t; ++s) ds(t, s) = (d_attn(t, s) - mean) / n;
  }
  return ds;
}

Matrix leading_rows(const Matrix& table, std::size_t n) {
  Matrix out(n, table.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(table.row(r).begin(), table.row(r).end(), out.row(r).begin());
  return out;
}

}  // namespace

const char* to_string(MaskPolicy policy) noexcept {
  switch (policy) {
    case MaskPolicy::outputs_only: return "outputs_only";
    case MaskPolicy::all_but_separator: return "all_but_separator";
    case MaskPolicy::final_position: return "final_position";
  }
  return "?";
}

MaskPolicy parse_mask_policy(const std::string& text) {
  for (MaskPolicy p : {MaskPolicy::outputs_only, MaskPolicy::all_but_separator, MaskPolicy::final_position})
    if (text == to_string(p)) return p;
  fail(Errc::invalid_argument, "unknown mask policy '" + text + "'");
}

LossTargets loss_targets(const SequenceSample& sample, MaskPolicy policy, std::optional<Token> separator) {
  const std::size_t T = sample.tokens.size();
  require(T >= 1, Errc::invalid_argument, "empty sequence");
  LossTargets lt;
  auto push = [&](std::size_t pos, Token target) {
    lt.positions.push_back(pos);
    lt.targets.push_back(target);
  };
  switch (policy) {
    case MaskPolicy::outputs_only:
      require(sample.is_output_position.size() == T, Errc::shape_mismatch, "output mask length differs from tokens");
      for (std::size_t t = 1; t < T; ++t)
        if (sample.is_output_position[t]) push(t - 1, sample.tokens[t]);
      if (sample.next_token) push(T - 1, *sample.next_token);
      break;
    case MaskPolicy::all_but_separator:
      for (std::size_t t = 1; t < T; ++t)
        if (!separator || sample.tokens[t] != *separator) push(t - 1, sample.tokens[t]);
      if (sample.next_token && (!separator || *sample.next_token != *separator)) push(T - 1, *sample.next_token);
      break;
    case MaskPolicy::final_position:
      if (sample.next_token) push(T - 1, *sample.next_token);
      else if (T >= 2) push(T - 2, sample.tokens[T - 1]);
      break;
  }
  return lt;
}

double masked_xent(const ForwardTrace& trace, const LossTargets& targets) {
  require(!targets.empty(), Errc::invalid_argument, "loss mask selects no positions");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require(targets.positions[i] < trace.T, Errc::invalid_argument, "loss position outside sequence");
    auto row = trace.logits.row(targets.positions[i]);
    require(targets.targets[i] < row.size(), Errc::invalid_argument, "loss target outside vocabulary");
    total += log_sum_exp(row) - row[targets.targets[i]];
  }
  return total / static_cast<double>(targets.size());
}

double masked_xent(const ForwardTrace& trace, const SequenceSample& sample, MaskPolicy policy,
                   std::optional<Token> separator) {
  return masked_xent(trace, loss_targets(sample, policy, separator));
}

std::vector<ParamName> default_trainables() {
  return {ParamName::W_K1, ParamName::W_Q1, ParamName::W_K2, ParamName::W_Q2, ParamName::W_V2, ParamName::W_O2};
}

std::vector<ParamName> parse_trainables(const std::vector<std::string>& names) {
  std::vector<ParamName> out;
  for (const auto& n : names) {
    const ParamName p = parse_param_name(n);
    if (!contains(out, p)) out.push_back(p);
  }
  return out;
}

Matrix& Gradients::at(ParamName name) {
  require(has(name), Errc::invalid_argument, std::string("no gradient for ") + to_string(name));
  return mats_[index(name)];
}

const Matrix& Gradients::at(ParamName name) const {
  require(has(name), Errc::invalid_argument, std::string("no gradient for ") + to_string(name));
  return mats_[index(name)];
}

Matrix& Gradients::emplace(ParamName name, const Matrix& like) {
  mats_[index(name)] = Matrix(like.rows(), like.cols());
  present_[index(name)] = true;
  return mats_[index(name)];
}

std::vector<ParamName> Gradients::names() const {
  std::vector<ParamName> out;
  for (ParamName n : kAllParams)
    if (has(n)) out.push_back(n);
  return out;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (ParamName n : kAllParams) {
    if (!other.has(n)) continue;
    if (!has(n)) {
      mats_[index(n)] = other.at(n);
      present_[index(n)] = true;
    } else {
      at(n) += other.at(n);
    }
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (ParamName n : kAllParams)
    if (has(n)) at(n) *= s;
  return *this;
}

double Gradients::norm() const {
  double sq = 0.0;
  for (ParamName n : kAllParams)
    if (has(n)) {
      const double f = frobenius(at(n));
      sq += f * f;
    }
  return std::sqrt(sq);
}

LossAndGrad backward(const TransformerParams& params, std::span<const Token> tokens, const LossTargets& targets,
                     std::span<const ParamName> trainables) {
  require(params.pe != PeMode::nope3, Errc::invalid_argument, "backward supports the two-layer model only");
  for (ParamName n : trainables)
    require(params.has(n), Errc::invalid_argument, std::string("trainable ") + to_string(n) + " absent from model");
  const EmbeddingSet& emb = *params.emb;
  const ForwardTrace tr = forward(params, tokens);
  const std::size_t T = tr.T, V = emb.vocab;

  LossAndGrad out;
  out.loss = masked_xent(tr, targets);

  auto wants = [&](ParamName n) { return contains(trainables, n); };
  const bool need_l1 = wants(ParamName::W_K1) || wants(ParamName::W_Q1) || wants(ParamName::Phi1);
  const bool need_attn2 = need_l1 || wants(ParamName::W_K2) || wants(ParamName::W_Q2);
  const bool need_x2 = need_attn2 || wants(ParamName::W_V2) || wants(ParamName::W_O2);
  if (trainables.empty()) return out;

  Matrix d_logits(T, V);
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t pos = targets.positions[i];
    const Vector p = softmax(tr.logits.row(pos));
    for (std::size_t v = 0; v < V; ++v) d_logits(pos, v) += inv_n * p[v];
    d_logits(pos, targets.targets[i]) -= inv_n;
  }
  const Matrix d_out = matmul(d_logits, emb.w_U);

  Matrix d_x2;
  if (params.ffn) {
    const FeedForward& f = *params.ffn;
    Matrix act = tr.ffn_pre;
    for (double& a : act.data()) a = a > 0.0 ? a : 0.0;
    if (wants(ParamName::W_2)) out.grads.emplace(ParamName::W_2, f.w2) = matmul_tn(d_out, act);
    if (wants(ParamName::W_1) || need_x2) {
      Matrix d_pre = matmul(d_out, f.w2);
      for (std::size_t i = 0; i < d_pre.size(); ++i)
        if (tr.ffn_pre.data()[i] <= 0.0) d_pre.data()[i] = 0.0;
      if (wants(ParamName::W_1)) out.grads.emplace(ParamName::W_1, f.w1) = matmul_tn(d_pre, tr.x2);
      if (need_x2) d_x2 = d_out + matmul(d_pre, f.w1);
    }
  } else {
    d_x2 = d_out;
  }
  if (!need_x2) return out;

  // Layer-2 value and output maps.
  if (wants(ParamName::W_O2)) out.grads.emplace(ParamName::W_O2, params.wo2) = matmul_tn(d_x2, tr.g2);
  const bool need_h = need_attn2 || wants(ParamName::W_V2);
  if (!need_h) return out;
  const Matrix d_g = matmul(d_x2, params.wo2);
  if (wants(ParamName::W_V2)) out.grads.emplace(ParamName::W_V2, params.wv2) = matmul_tn(d_g, tr.h2);
  if (!need_attn2) return out;
  const Matrix d_h = matmul(d_g, params.wv2);

  // Layer-2 attention.
  Matrix d_x1 = d_x2 + matmul_tn(tr.attn2, d_h);
  const Matrix d_a2 = matmul_nt(d_h, tr.x1);
  const Matrix d_s2 = params.layer2_norm == AttentionNorm::softmax ? softmax_backward(tr.attn2, d_a2)
                                                                    : linearized_backward(d_a2);
  const Matrix d_q2 = matmul(d_s2, tr.k2);
  const Matrix d_k2 = matmul_tn(d_s2, tr.q2);
  if (wants(ParamName::W_Q2)) out.grads.emplace(ParamName::W_Q2, params.wq2) = matmul_tn(d_q2, tr.x1);
  if (wants(ParamName::W_K2)) out.grads.emplace(ParamName::W_K2, params.wk2) = matmul_tn(d_k2, tr.x1);
  if (!need_l1) return out;
  d_x1 += matmul(d_q2, params.wq2);
  d_x1 += matmul(d_k2, params.wk2);

  // Layer 1.
  if (wants(ParamName::Phi1)) out.grads.emplace(ParamName::Phi1, params.phi1) = matmul_tn(d_x1, tr.u1);
  if (!wants(ParamName::W_K1) && !wants(ParamName::W_Q1)) return out;
  const Matrix d_u = matmul(d_x1, params.phi1);
  const Matrix d_a1 = matmul_nt(d_u, tr.x0_value);
  const Matrix d_s1 = softmax_backward(tr.attn1, d_a1);

  Matrix d_q1 = matmul(d_s1, tr.k1);
  Matrix d_rel;  // d_rel[t][j] = d_s1[t][t-j]
  if (params.pe == PeMode::rpe) {
    d_rel = Matrix(T, T);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s <= t; ++s) d_rel(t, t - s) = d_s1(t, s);
    d_q1 += matmul(d_rel, tr.k1_rel);
  }
  if (wants(ParamName::W_Q1)) out.grads.emplace(ParamName::W_Q1, params.wq1) = matmul_tn(d_q1, tr.x0_query);
  if (wants(ParamName::W_K1)) {
    const Matrix d_k1 = matmul_tn(d_s1, tr.q1);
    Matrix& g = out.grads.emplace(ParamName::W_K1, params.wk1);
    g = matmul_tn(d_k1, tr.x0_key);
    if (params.pe == PeMode::rpe) {
      const Matrix d_k1_rel = matmul_tn(d_rel, tr.q1);
      accumulate_tn(g, d_k1_rel, leading_rows(emb.rpe, T));
    }
  }
  return out;
}

LossAndGrad backward(const TransformerParams& params, const SequenceSample& sample, MaskPolicy policy,
                     std::span<const ParamName> trainables, std::optional<Token> separator) {
  return backward(params, sample.tokens, loss_targets(sample, policy, separator), trainables);
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("INDUCTION_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

LossAndGrad batch_gradient(const TransformerParams& params, std::span<const SequenceSample> batch,
                           MaskPolicy policy, std::span<const ParamName> trainables,
                           std::optional<Token> separator) {
  require(!batch.empty(), Errc::invalid_argument, "empty batch");
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<LossAndGrad> partial(chunks);
  std::vector<std::size_t> used(chunks, 0);
  std::vector<std::exception_ptr> errors(chunks);

  auto run_chunk = [&](std::size_t c) {
    try {
      LossAndGrad acc;
      const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        const LossTargets lt = loss_targets(batch[i], policy, separator);
        if (lt.empty()) continue;
        LossAndGrad one = backward(params, batch[i].tokens, lt, trainables);
        acc.loss += one.loss;
        acc.grads += one.grads;
        ++used[c];
      }
      partial[c] = std::move(acc);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(worker_threads(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  LossAndGrad total;
  std::size_t count = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    total.loss += partial[c].loss;
    total.grads += partial[c].grads;
    count += used[c];
  }
  require(count > 0, Errc::invalid_argument, "no sequence in the batch has a loss position");
  const double inv = 1.0 / static_cast<double>(count);
  total.loss *= inv;
  total.grads *= inv;
  return total;
}

void sgd_momentum_step(TransformerParams& params, const Gradients& grads, OptState& state) {
  for (ParamName n : grads.names()) {
    Matrix& p = params.param(n);
    const Matrix& g = grads.at(n);
    require(p.same_shape(g), Errc::invalid_argument, std::string("gradient shape mismatch for ") + to_string(n));
    if (!state.buffers.has(n)) state.buffers.emplace(n, p);
    Matrix& buf = state.buffers.at(n);
    require(buf.same_shape(p), Errc::invalid_argument, std::string("momentum buffer shape mismatch for ") + to_string(n));
    auto b = buf.data();
    auto pd = p.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = state.momentum * b[i] + gd[i] + state.weight_decay * pd[i];
      pd[i] -= state.lr * b[i];
    }
  }
}

TransformerParams sequential_one_step_gd(std::shared_ptr<const EmbeddingSet> emb, PeMode pe,
                                         const SequenceSampler& sampler, double eta, std::size_t batch, Rng& rng,
                                         OneStepReport* report) {
  require(batch >= 1, Errc::invalid_argument, "batch must be positive");
  require(static_cast<bool>(sampler), Errc::invalid_argument, "no data sampler");
  TransformerParams params = zero_init_params(std::move(emb), pe);

  auto draw = [&](std::uint64_t stage) {
    Rng stream = rng.fork(stage);
    std::vector<SequenceSample> b;
    b.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) b.push_back(sampler(stream));
    return b;
  };
  auto step = [&](ParamName name, int stage) {
    const std::vector<SequenceSample> b = draw(static_cast<std::uint64_t>(stage));
    const ParamName only[] = {name};
    LossAndGrad lg = batch_gradient(params, b, MaskPolicy::final_position, only);
    Matrix update = lg.grads.at(name);
    update *= -eta;
    params.param(name) += update;
    if (report) report->stage_loss[stage] = lg.loss;
  };

  step(ParamName::W_O2, 0);
  step(ParamName::W_K2, 1);
  params.layer2_norm = AttentionNorm::linearized;
  step(ParamName::W_K1, 2);
  params.layer2_norm = AttentionNorm::softmax;
  if (report) {
    report->eta = eta;
    report->batch = batch;
  }
  return params;
}

double output_token_accuracy(const TransformerParams& params, std::span<const SequenceSample> batch) {
  std::size_t hits = 0, total = 0;
  for (const SequenceSample& s : batch) {
    const LossTargets lt = loss_targets(s, MaskPolicy::outputs_only);
    if (lt.empty()) continue;
    const ForwardTrace tr = forward(params, s.tokens);
    for (std::size_t i = 0; i < lt.size(); ++i) {
      const std::size_t pos = lt.positions[i];
      const Token trigger = s.tokens[pos];
      const bool seen = std::find(s.tokens.begin(), s.tokens.begin() + static_cast<std::ptrdiff_t>(pos), trigger) !=
                        s.tokens.begin() + static_cast<std::ptrdiff_t>(pos);
      if (!seen) continue;
      ++total;
      hits += argmax(tr.logits.row(pos)) == lt.targets[i] ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

double previous_token_attention(const TransformerParams& params, std::span<const SequenceSample> batch) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const SequenceSample& s : batch) {
    const ForwardTrace tr = forward(params, s.tokens);
    for (std::size_t t = 1; t < tr.T; ++t) {
      sum += tr.attn1(t, t - 1);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

TrainResult train_loop(TransformerParams params, const TriggeredBigram& model, const TrainConfig& config,
                       const Evaluator& evaluator) {
  require(config.batch >= 1 && config.T >= 2, Errc::invalid_argument, "batch and T must be positive");
  const Rng root(config.seed);
  OptState state;
  state.lr = config.lr;
  state.momentum = config.momentum;
  state.weight_decay = config.weight_decay;
  state.batch_size = config.batch;

  Rng eval_rng = root.fork(0xE7A1);
  std::vector<SequenceSample> eval_batch;
  for (std::size_t i = 0; i < config.eval_batch; ++i) eval_batch.push_back(sample_sequence(model, config.T, eval_rng));

  TrainResult result;
  auto evaluate = [&](std::size_t it) {
    if (!eval_batch.empty())
      result.log.push_back({it, "accuracy", "all", output_token_accuracy(params, eval_batch)});
    if (evaluator) evaluator(it, params, result.log);
  };

  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (config.eval_every > 0 && it % config.eval_every == 0) evaluate(it);
    Rng batch_rng = root.fork(it + 1);
    std::vector<SequenceSample> batch;
    batch.reserve(config.batch);
    for (std::size_t i = 0; i < config.batch; ++i) batch.push_back(sample_sequence(model, config.T, batch_rng));
    const LossAndGrad lg = batch_gradient(params, batch, config.mask_policy, config.trainables, model.separator);
    result.log.push_back({it, "loss", "all", lg.loss});
    sgd_momentum_step(params, lg.grads, state);
  }
  evaluate(config.iterations);
  result.params = std::move(params);
  return result;
}

}  // namespace induction
