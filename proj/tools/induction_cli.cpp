#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "induction/analysis.hpp"
#include "induction/checkpoint.hpp"
#include "induction/config.hpp"
#include "induction/error.hpp"
#include "induction/experiments.hpp"

namespace {

using namespace induction;
namespace fs = std::filesystem;

// Flags shared by every experiment subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> seeds;
  std::string pe;
  std::string corpus;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Root seed");
    app->add_option("--out-dir", out_dir, "Output directory");
    app->add_option("--iterations", iterations, "Training iterations");
    app->add_option("--seeds", seeds, "Independent seeds (length-gen)");
    app->add_option("--pe", pe, "Positional encoding: ape or rpe");
    app->add_option("--corpus", corpus, "Character corpus file");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (iterations) cfg.iterations = *iterations;
    if (seeds) cfg.seeds = *seeds;
    if (!pe.empty()) cfg.pe = parse_pe_mode(pe);
    if (!corpus.empty()) cfg.corpus = corpus;
    cfg.validate();
    return cfg;
  }
};

void announce(const fs::path& p) { std::cout << "wrote " << p.string() << '\n'; }

int gen_data(const Common& c) {
  const ExperimentConfig cfg = c.resolve();
  const TriggeredBigram model = make_data_model(cfg, cfg.seed);
  Rng rng = Rng(cfg.seed).fork(2);
  std::string text;
  for (std::size_t i = 0; i < cfg.sequences; ++i) text += to_jsonl(sample_sequence(model, cfg.T, rng)) + "\n";
  const fs::path out = cfg.out_dir / "sequences.jsonl";
  csv::write_file(out, text);
  announce(out);
  return 0;
}

int train(const Common& c) {
  const ExperimentConfig cfg = c.resolve();
  const auto emb = make_embedding_set(cfg, cfg.seed);
  const TriggeredBigram data = make_data_model(cfg, cfg.seed);
  Evaluator eval = [&](std::size_t it, const TransformerParams& p, std::vector<MetricRecord>& log) {
    for (const RecallRow& r : recall_rows(p, cfg.buckets, it, cfg.seed)) log.push_back({it, "recall", r.bucket, r.value});
  };
  const TrainResult tr =
      train_loop(make_initial_params(cfg, emb, cfg.pe, cfg.seed), data, make_train_config(cfg, cfg.seed), eval);
  const fs::path metrics = cfg.out_dir / "metrics.csv";
  const fs::path ckpt = cfg.out_dir / "model.ckpt";
  csv::write_file(metrics, csv::metric_log(tr.log));
  save_checkpoint(tr.params, ckpt, {{"experiment", "train"}, {"seed", std::to_string(cfg.seed)}, {"data", cfg.data}});
  announce(metrics);
  announce(ckpt);
  return 0;
}

int prev_token(const Common& c) {
  const ExperimentConfig cfg = c.resolve();
  for (const fs::path& p : run_prev_token_experiment(cfg, cfg.out_dir).files) announce(p);
  return 0;
}

int length_gen(const Common& c) {
  const ExperimentConfig cfg = c.resolve();
  const LengthGenResult r = run_length_gen_experiment(cfg, cfg.out_dir);
  for (const auto& cell : r.cells)
    std::printf("%-4s %-17s T=%-4zu %.4f +- %.4f\n", cell.model.c_str(), cell.metric.c_str(), cell.horizon, cell.mean,
                cell.std);
  announce(cfg.out_dir / "lengthgen.csv");
  return 0;
}

int collision(const Common& c, const std::string& mode, const std::string& checkpoint,
              std::optional<std::size_t> prompts) {
  ExperimentConfig cfg = c.resolve();
  if (!mode.empty()) cfg.collision.mode = mode;
  if (!checkpoint.empty()) cfg.collision.checkpoint = checkpoint;
  if (prompts) cfg.collision.prompts = *prompts;
  const CollisionMode m = cfg.collision.mode == "trained" ? CollisionMode::trained : CollisionMode::constructed;
  for (const auto& cell : run_collision_experiment(cfg, m, cfg.out_dir))
    std::printf("n1=%-3zu n2=%-3zu B1=%.3f B2=%.3f other=%.3f\n", cell.n1, cell.n2, cell.frac_b1, cell.frac_b2,
                cell.frac_global);
  announce(cfg.out_dir / "collision.csv");
  return 0;
}

int theory_check(const Common& c) {
  const ExperimentConfig cfg = c.resolve();
  const TheoryReport r = run_theory_check(cfg);
  const fs::path out = cfg.out_dir / "theory_report.json";
  csv::write_file(out, r.json);
  std::printf("two-pattern max deviation %.3g over %zu specs\n", r.two_pattern_max_dev, r.two_pattern_specs);
  std::printf("strong-memory max deviation %.3g, argmax agreement %.3f\n", r.strong_max_dev,
              r.strong_argmax_agreement);
  std::printf("gap formula max deviation %.3g\n", r.gap_max_dev);
  announce(out);
  std::cout << (r.ok ? "all tolerances met\n" : "tolerance exceeded\n");
  return r.ok ? 0 : 1;
}

std::vector<Token> parse_tokens(const std::string& text) {
  std::vector<Token> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

int heatmap(const Common& c, const std::string& checkpoint, const std::string& tokens) {
  const ExperimentConfig cfg = c.resolve();
  const TransformerParams params = load_checkpoint(checkpoint).params;
  std::vector<Token> seq;
  if (!tokens.empty()) {
    seq = parse_tokens(tokens);
  } else {
    Rng rng = Rng(cfg.seed).fork(5);
    seq = sample_sequence(make_data_model(cfg, cfg.seed), std::min(cfg.T, params.emb->max_len), rng).tokens;
  }
  const fs::path out = cfg.out_dir / "heatmap.csv";
  csv::write_file(out, heatmap_csv(forward(params, seq)));
  announce(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Induction-head experiments: data generation, training, analysis and theory checks"};
  app.require_subcommand(1);

  Common gen_c, train_c, prev_c, len_c, col_c, theory_c, heat_c;
  auto* gen = app.add_subcommand("gen-data", "Write sampled sequences as JSON lines");
  gen_c.attach(gen);
  auto* tr = app.add_subcommand("train", "Train one model and save metrics and a checkpoint");
  train_c.attach(tr);
  auto* prev = app.add_subcommand("prev-token", "Previous-token recall of APE and RPE models during training");
  prev_c.attach(prev);
  auto* len = app.add_subcommand("length-gen", "Train at T, evaluate at T and 2T");
  len_c.attach(len);

  auto* col = app.add_subcommand("collision", "Sweep repeated-pattern counts on collision prompts");
  col_c.attach(col);
  std::string col_mode, col_ckpt;
  std::optional<std::size_t> col_prompts;
  col->add_option("--mode", col_mode, "constructed or trained")->check(CLI::IsMember({"constructed", "trained"}));
  col->add_option("--checkpoint", col_ckpt, "Trained model for trained mode")->check(CLI::ExistingFile);
  col->add_option("--prompts", col_prompts, "Prompts per cell");

  auto* theory = app.add_subcommand("theory-check", "Compare closed-form logits with forward passes");
  theory_c.attach(theory);

  auto* heat = app.add_subcommand("heatmap", "Attention weights of a checkpoint on one sequence");
  heat_c.attach(heat);
  std::string heat_ckpt, heat_tokens;
  heat->add_option("--checkpoint", heat_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  heat->add_option("--tokens", heat_tokens, "Comma-separated token ids; sampled from the data model if omitted");

  auto* ckpt = app.add_subcommand("checkpoint", "Checkpoint utilities");
  ckpt->require_subcommand(1);
  auto* inspect = ckpt->add_subcommand("inspect", "Print a checkpoint manifest");
  std::string inspect_path;
  inspect->add_option("path", inspect_path, "Checkpoint file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_data(gen_c);
    if (*tr) return train(train_c);
    if (*prev) return prev_token(prev_c);
    if (*len) return length_gen(len_c);
    if (*col) return collision(col_c, col_mode, col_ckpt, col_prompts);
    if (*theory) return theory_check(theory_c);
    if (*heat) return heatmap(heat_c, heat_ckpt, heat_tokens);
    if (*inspect) {
      std::cout << inspect_checkpoint(inspect_path);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
