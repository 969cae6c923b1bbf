#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "induction/datagen.hpp"
#include "induction/model.hpp"

namespace induction {

enum class MaskPolicy { outputs_only, all_but_separator, final_position };

const char* to_string(MaskPolicy policy) noexcept;
MaskPolicy parse_mask_policy(const std::string& text);

/// Loss terms: logits at positions[i] should predict targets[i].
struct LossTargets {
  std::vector<std::size_t> positions;
  std::vector<Token> targets;

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }
};

/// outputs_only: positions t-1 for every masked t, plus next_token.
/// all_but_separator: every next-token prediction whose target is not the separator.
/// final_position: only the label of the last position (next_token when present).
LossTargets loss_targets(const SequenceSample& sample, MaskPolicy policy,
                         std::optional<Token> separator = std::nullopt);

/// Mean natural-log cross-entropy over the selected positions.
double masked_xent(const ForwardTrace& trace, const LossTargets& targets);
double masked_xent(const ForwardTrace& trace, const SequenceSample& sample, MaskPolicy policy,
                   std::optional<Token> separator = std::nullopt);

/// Attention matrices trained by default; embeddings, Phi1 and the FFN stay frozen.
std::vector<ParamName> default_trainables();
std::vector<ParamName> parse_trainables(const std::vector<std::string>& names);

/// One matrix per trainable parameter; absent entries are frozen.
class Gradients {
 public:
  bool has(ParamName name) const noexcept { return present_[index(name)]; }
  Matrix& at(ParamName name);
  const Matrix& at(ParamName name) const;
  /// Zero matrix shaped like `like`, marked present.
  Matrix& emplace(ParamName name, const Matrix& like);
  std::vector<ParamName> names() const;

  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
  double norm() const;

 private:
  static std::size_t index(ParamName name) noexcept { return static_cast<std::size_t>(name); }
  std::array<Matrix, std::size(kAllParams)> mats_;
  std::array<bool, std::size(kAllParams)> present_{};
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

/// Exact gradient of masked_xent with respect to each trainable matrix.
LossAndGrad backward(const TransformerParams& params, std::span<const Token> tokens, const LossTargets& targets,
                     std::span<const ParamName> trainables);
LossAndGrad backward(const TransformerParams& params, const SequenceSample& sample, MaskPolicy policy,
                     std::span<const ParamName> trainables, std::optional<Token> separator = std::nullopt);

/// Worker count for batch evaluation, read from INDUCTION_THREADS (default 1).
std::size_t worker_threads();

/// Batch-mean loss and gradient over the sequences that have at least one
/// loss position. Sequences are split into fixed chunks that
/// are summed in order, so the result does not depend on the thread count.
LossAndGrad batch_gradient(const TransformerParams& params, std::span<const SequenceSample> batch,
                           MaskPolicy policy, std::span<const ParamName> trainables,
                           std::optional<Token> separator = std::nullopt);

struct OptState {
  double lr = 0.2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  Gradients buffers;
};

/// buffer = momentum·buffer + grad + wd·param; param -= lr·buffer.
void sgd_momentum_step(TransformerParams& params, const Gradients& grads, OptState& state);

using SequenceSampler = std::function<SequenceSample(Rng&)>;

struct OneStepReport {
  double eta = 0.0;
  std::size_t batch = 0;
  double stage_loss[3] = {0.0, 0.0, 0.0};
};

/// Zero-initialized W_O2, W_K2, W_K1 each trained by one gradient step of
/// size eta, top to bottom, on a fresh batch per stage. Stage 3 evaluates the
/// gradient with the layer-2 softmax replaced by its linearization at zero.
TransformerParams sequential_one_step_gd(std::shared_ptr<const EmbeddingSet> emb, PeMode pe,
                                         const SequenceSampler& sampler, double eta, std::size_t batch, Rng& rng,
                                         OneStepReport* report = nullptr);

struct MetricRecord {
  std::size_t iteration = 0;
  std::string metric;
  std::string bucket;
  double value = 0.0;
};

struct TrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch = 64;
  std::size_t T = 64;
  std::vector<ParamName> trainables = default_trainables();
  MaskPolicy mask_policy = MaskPolicy::outputs_only;
  std::size_t eval_every = 100;
  std::size_t eval_batch = 64;
  double lr = 0.2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

using Evaluator = std::function<void(std::size_t iteration, const TransformerParams&, std::vector<MetricRecord>&)>;

struct TrainResult {
  TransformerParams params;
  std::vector<MetricRecord> log;
};

/// Fraction of output positions predicted correctly, counting only outputs
/// whose trigger already appeared earlier in the sequence.
double output_token_accuracy(const TransformerParams& params, std::span<const SequenceSample> batch);

/// Mean layer-1 attention weight on the previous token over positions 2..T.
double previous_token_attention(const TransformerParams& params, std::span<const SequenceSample> batch);

/// SGD with momentum on sequences from `model`. Logs batch loss every
/// iteration and, at every eval point (and the end), output-token accuracy on
/// a held-out batch plus whatever `evaluator` appends.
TrainResult train_loop(TransformerParams params, const TriggeredBigram& model, const TrainConfig& config,
                       const Evaluator& evaluator = {});

}  // namespace induction
