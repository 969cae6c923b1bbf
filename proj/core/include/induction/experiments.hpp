#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "induction/config.hpp"

namespace induction {

namespace csv {
inline constexpr const char* kHeatmapHeader = "layer,query_pos,key_pos,weight";
inline constexpr const char* kRecallHeader = "iteration,bucket,model,value,seed";
inline constexpr const char* kCollisionHeader = "n1,n2,frac_b1,frac_b2,frac_global";
inline constexpr const char* kLengthGenHeader = "model,metric,horizon,mean,std";
inline constexpr const char* kMetricHeader = "iteration,metric,bucket,value";

/// Shortest round-trip decimal form of x.
std::string number(double x);
void write_file(const std::filesystem::path& path, const std::string& text);
std::string metric_log(const std::vector<MetricRecord>& log);
}  // namespace csv

struct RecallRow {
  std::size_t iteration = 0;
  std::string bucket;
  std::string model;
  double value = 0.0;
  std::uint64_t seed = 0;
};

struct PrevTokenResult {
  std::vector<RecallRow> recall;
  std::vector<std::filesystem::path> files;
};

/// Bucket labels for per-position recall: "all" then q1..q<n> over positions 2..T_max.
std::vector<std::string> recall_buckets(std::size_t buckets);

/// Recall rows for one model state: the aggregate plus one row per position bucket.
std::vector<RecallRow> recall_rows(const TransformerParams& params, std::size_t buckets, std::size_t iteration,
                                   std::uint64_t seed);

/// Trains APE and RPE models on the same data and writes recall.csv,
/// metrics_<pe>.csv, heatmap_<pe>.csv and model_<pe>.ckpt.
PrevTokenResult run_prev_token_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct LengthGenCell {
  std::string model;
  std::string metric;  // accuracy | prev_token_score
  std::size_t horizon = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct LengthGenResult {
  std::vector<LengthGenCell> cells;
  const LengthGenCell& at(const std::string& model, const std::string& metric, std::size_t horizon) const;
};

/// Trains at T and evaluates at T and 2T for every seed; writes lengthgen.csv.
LengthGenResult run_length_gen_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct CollisionCell {
  std::size_t n1 = 0, n2 = 0;
  double frac_b1 = 0.0, frac_b2 = 0.0, frac_global = 0.0;
};

enum class CollisionMode { constructed, trained };

/// Sweeps n1 = 0..n with n2 = n - n1 over random "A B1 sep … A B2 sep … A" prompts.
/// Constructed mode uses the strong construction on exact embeddings with a
/// flat pi_b; trained mode loads cfg.collision.checkpoint. Writes collision.csv
/// and collision_meta.json.
std::vector<CollisionCell> run_collision_experiment(const ExperimentConfig& cfg, CollisionMode mode,
                                                    const std::filesystem::path& out_dir);

struct TheoryReport {
  bool ok = false;
  double two_pattern_max_dev = 0.0;
  std::size_t two_pattern_specs = 0;
  double strong_max_dev = 0.0;
  double strong_argmax_agreement = 0.0;
  double gap_max_dev = 0.0;
  std::string json;
};

/// Forward vs closed form on exact embeddings; ok is false when any tolerance is exceeded.
TheoryReport run_theory_check(const ExperimentConfig& cfg);

/// Pre-softmax layer-2 score at position t2 minus the one at t1 (1-indexed)
/// from a forward pass of an exact-mode AMT on a sequence with q at t1-1,
/// t2-1 and T = t2+1. Throws invalid_argument unless t1 >= 3 and t2 >= t1+2.
double forward_gap(std::size_t t1, std::size_t t2, std::uint64_t seed);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& xs);

}  // namespace induction
