#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "induction/constructions.hpp"
#include "induction/datagen.hpp"
#include "induction/embeddings.hpp"
#include "induction/model.hpp"
#include "induction/training.hpp"

namespace induction {

struct OneStepSettings {
  double eta = 1.0;
  std::size_t batch = 8192;
};

struct CollisionSettings {
  std::size_t total = 10;       // n1 + n2
  std::size_t prompts = 1000;   // per (n1, n2) cell
  std::string mode = "constructed";
  std::string checkpoint;       // trained mode only
};

struct AnalogySettings {
  std::size_t words = 30;
  std::size_t pairs = 10;
  std::size_t fake = 3;
  double p_min = 0.1;
  double p_max = 0.3;
};

struct TheorySettings {
  std::size_t vocab = 12;
  std::size_t max_len = 24;
  std::size_t specs = 60;
  std::size_t prompts = 100;
  double tau = 50.0;
};

/// Every knob of an experiment run. Defaults are the desk-scale settings.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t d = 64;
  std::size_t vocab = 30;
  std::size_t T = 64;
  std::size_t T_max = 128;
  std::size_t triggers = 5;
  PeMode pe = PeMode::rpe;
  EmbeddingMode embedding_mode = EmbeddingMode::gaussian;
  double epsilon = 1e-8;
  StrengthParams strengths{50.0, 50.0, 1.0};

  double lr = 0.2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch = 64;
  std::size_t iterations = 1000;
  std::vector<ParamName> trainables = default_trainables();
  MaskPolicy mask_policy = MaskPolicy::outputs_only;
  std::size_t eval_every = 100;
  std::size_t eval_batch = 64;
  std::size_t buckets = 4;
  std::size_t seeds = 1;
  double init_std = 0.0;

  /// Character corpus; empty means a uniform bigram over `vocab` tokens.
  std::filesystem::path corpus;
  /// "bigram" (corpus or uniform) or "analogy".
  std::string data = "bigram";
  std::size_t sequences = 1000;  // gen-data
  std::filesystem::path out_dir = "out";

  OneStepSettings one_step;
  CollisionSettings collision;
  AnalogySettings analogy;
  TheorySettings theory;

  /// Throws invalid_argument naming the offending field.
  void validate() const;
};

/// Parses the JSON form. Unknown keys are rejected; relative paths resolve
/// against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& cfg);

/// Embedding set for the config; its draws come from a stream of `seed`.
std::shared_ptr<const EmbeddingSet> make_embedding_set(const ExperimentConfig& cfg, std::uint64_t seed);

/// Data model of the config: restricted corpus bigram, uniform bigram or analogy model.
TriggeredBigram make_data_model(const ExperimentConfig& cfg, std::uint64_t seed);

TrainConfig make_train_config(const ExperimentConfig& cfg, std::uint64_t seed);

/// zero_init_params, plus Gaussian noise of std init_std on W_K1, W_K2, W_O2.
TransformerParams make_initial_params(const ExperimentConfig& cfg, std::shared_ptr<const EmbeddingSet> emb,
                                      PeMode pe, std::uint64_t seed);

}  // namespace induction
