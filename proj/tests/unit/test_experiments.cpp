#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "induction/checkpoint.hpp"
#include "induction/error.hpp"
#include "induction/experiments.hpp"
#include "induction/theory.hpp"

using namespace induction;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.vocab = 10;
  c.triggers = 3;
  c.T = 16;
  c.T_max = 32;
  c.iterations = 4;
  c.batch = 8;
  c.eval_every = 2;
  c.eval_batch = 4;
  c.collision.prompts = 20;
  c.collision.total = 4;
  return c;
}

struct TempDir {
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
};

}  // namespace

TEST_CASE("numbers print in shortest round-trip form") {
  CHECK(csv::number(0.25) == "0.25");
  CHECK(csv::number(1.0) == "1");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(csv::number(x)) == x);
}

TEST_CASE("metric log csv") {
  const std::string text = csv::metric_log({{3, "loss", "", 1.5}, {3, "recall", "q1", 0.75}});
  CHECK(text == "iteration,metric,bucket,value\n3,loss,,1.5\n3,recall,q1,0.75\n");
}

TEST_CASE("recall rows cover every bucket") {
  CHECK(recall_buckets(4) == std::vector<std::string>{"all", "q1", "q2", "q3", "q4"});
  Rng rng(1);
  auto emb = std::make_shared<EmbeddingSet>(make_embeddings(exact_min_dim(5, 12), 5, 12, EmbeddingMode::exact, rng));
  const TransformerParams amt = build_amt(emb, full_vocabulary(5), Matrix(5, 5, 0.2), {});
  const auto rows = recall_rows(amt, 4, 7, 3);
  REQUIRE(rows.size() == 5);
  for (const auto& r : rows) {
    CHECK(r.value == 1.0);
    CHECK(r.iteration == 7);
    CHECK(r.seed == 3);
    CHECK(r.model == "rpe");
  }
}

TEST_CASE("previous-token experiment writes its files") {
  TempDir dir("induction_prev_test");
  const ExperimentConfig c = tiny();
  const PrevTokenResult r = run_prev_token_experiment(c, dir.path);
  const auto recall = lines(slurp(dir.path / "recall.csv"));
  REQUIRE(!recall.empty());
  CHECK(recall[0] == csv::kRecallHeader);

  std::set<std::size_t> iterations;
  for (const auto& row : r.recall) iterations.insert(row.iteration);
  CHECK(recall.size() - 1 == iterations.size() * recall_buckets(c.buckets).size() * 2);
  CHECK(r.recall.size() == recall.size() - 1);

  for (const char* name : {"metrics_ape.csv", "metrics_rpe.csv", "heatmap_ape.csv", "heatmap_rpe.csv",
                           "model_ape.ckpt", "model_rpe.ckpt"})
    CHECK(fs::exists(dir.path / name));
  CHECK(lines(slurp(dir.path / "heatmap_rpe.csv"))[0] == csv::kHeatmapHeader);
  CHECK(load_checkpoint(dir.path / "model_ape.ckpt").params.pe == PeMode::ape);
}

TEST_CASE("reruns are byte identical") {
  TempDir a("induction_det_a"), b("induction_det_b");
  const ExperimentConfig c = tiny();
  run_prev_token_experiment(c, a.path);
  run_prev_token_experiment(c, b.path);
  run_collision_experiment(c, CollisionMode::constructed, a.path);
  run_collision_experiment(c, CollisionMode::constructed, b.path);
  for (const char* name : {"recall.csv", "metrics_rpe.csv", "heatmap_ape.csv", "model_rpe.ckpt", "collision.csv"})
    CHECK(slurp(a.path / name) == slurp(b.path / name));
}

TEST_CASE("length generalization table") {
  TempDir dir("induction_len_test");
  ExperimentConfig c = tiny();
  c.seeds = 2;
  const LengthGenResult r = run_length_gen_experiment(c, dir.path);
  CHECK(r.cells.size() == 8);
  const auto rows = lines(slurp(dir.path / "lengthgen.csv"));
  CHECK(rows[0] == csv::kLengthGenHeader);
  CHECK(rows.size() == 9);
  CHECK(r.at("rpe", "accuracy", 32).horizon == 32);
  CHECK_THROWS_AS(r.at("rpe", "accuracy", 48), Error);

  c.T_max = 20;
  CHECK_THROWS_AS(run_length_gen_experiment(c, dir.path), Error);
}

TEST_CASE("constructed collision sweep") {
  TempDir dir("induction_col_test");
  ExperimentConfig c = tiny();
  c.collision.total = 6;
  const auto cells = run_collision_experiment(c, CollisionMode::constructed, dir.path);
  REQUIRE(cells.size() == 7);
  for (const auto& cell : cells) {
    CHECK(cell.n1 + cell.n2 == 6);
    CHECK(cell.frac_b1 + cell.frac_b2 + cell.frac_global == doctest::Approx(1.0));
    if (cell.n1 > cell.n2) CHECK(cell.frac_b1 == 1.0);
    if (cell.n1 < cell.n2) CHECK(cell.frac_b1 == 0.0);
  }
  CHECK(slurp(dir.path / "collision_meta.json").find("\"scaled\": false") != std::string::npos);
}

TEST_CASE("trained collision mode needs a checkpoint and marks its output") {
  TempDir dir("induction_col_trained");
  ExperimentConfig c = tiny();
  CHECK_THROWS_AS(run_collision_experiment(c, CollisionMode::trained, dir.path), Error);

  c.data = "analogy";
  c.analogy.words = 12;
  c.analogy.pairs = 4;
  c.mask_policy = MaskPolicy::all_but_separator;
  const auto emb = make_embedding_set(c, 0);
  save_checkpoint(zero_init_params(emb, PeMode::rpe), dir.path / "m.ckpt");
  c.collision.checkpoint = dir.path / "m.ckpt";
  const auto cells = run_collision_experiment(c, CollisionMode::trained, dir.path);
  CHECK(cells.size() == 5);
  CHECK(slurp(dir.path / "collision_meta.json").find("\"scaled\": true") != std::string::npos);
}

TEST_CASE("theory check passes on the default settings") {
  const TheoryReport r = run_theory_check(ExperimentConfig{});
  CHECK(r.ok);
  CHECK(r.two_pattern_specs >= 50);
  CHECK(r.two_pattern_max_dev < 1e-9);
  CHECK(r.strong_max_dev < 1e-3);
  CHECK(r.strong_argmax_agreement == 1.0);
  CHECK(r.json.find("\"realizable\": false") != std::string::npos);
}

TEST_CASE("forward gap reproduces the formula where a sequence exists") {
  for (std::size_t t1 = 3; t1 < 7; ++t1)
    for (std::size_t t2 = t1 + 2; t2 < 12; ++t2) CHECK(std::abs(forward_gap(t1, t2, 1) - logit_gap(t1, t2)) < 1e-12);
  CHECK_THROWS_AS(forward_gap(3, 4, 1), Error);
}

TEST_CASE("mean and sample deviation") {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0});
  CHECK(m == 2.0);
  CHECK(s == 1.0);
  CHECK(mean_std({5.0}).second == 0.0);
}
