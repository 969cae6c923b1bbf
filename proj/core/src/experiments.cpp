#include "induction/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "induction/analysis.hpp"
#include "induction/checkpoint.hpp"
#include "induction/error.hpp"
#include "induction/theory.hpp"

namespace induction {

namespace csv {

std::string number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), Errc::io_error, "short write to " + path.string());
}

std::string metric_log(const std::vector<MetricRecord>& log) {
  std::ostringstream os;
  os << kMetricHeader << '\n';
  for (const auto& r : log) os << r.iteration << ',' << r.metric << ',' << r.bucket << ',' << number(r.value) << '\n';
  return os.str();
}

}  // namespace csv

namespace {

using json = nlohmann::json;

std::string recall_csv(const std::vector<RecallRow>& rows) {
  std::ostringstream os;
  os << csv::kRecallHeader << '\n';
  for (const auto& r : rows)
    os << r.iteration << ',' << r.bucket << ',' << r.model << ',' << csv::number(r.value) << ',' << r.seed << '\n';
  return os.str();
}

std::vector<SequenceSample> draw(const TriggeredBigram& model, std::size_t n, std::size_t T, Rng rng) {
  std::vector<SequenceSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_sequence(model, T, rng));
  return out;
}

std::uint64_t seed_for(const ExperimentConfig& cfg, std::size_t s) {
  return s == 0 ? cfg.seed : mix_seed(cfg.seed, 100 + s);
}

Matrix random_conditional(std::size_t V, Rng& rng, double zero_prob) {
  Matrix pi(V, V);
  for (std::size_t a = 0; a < V; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < V; ++b) {
      pi(a, b) = rng.uniform() < zero_prob ? 0.0 : 0.05 + rng.uniform();
      sum += pi(a, b);
    }
    if (sum == 0.0) {
      pi(a, a) = 1.0;
      sum = 1.0;
    }
    for (std::size_t b = 0; b < V; ++b) pi(a, b) /= sum;
  }
  return pi;
}

// Three distinct tokens from [0, n).
std::array<Token, 3> three_distinct(std::size_t n, Rng& rng) {
  std::array<Token, 3> t{};
  t[0] = rng.index(n);
  do t[1] = rng.index(n);
  while (t[1] == t[0]);
  do t[2] = rng.index(n);
  while (t[2] == t[0] || t[2] == t[1]);
  return t;
}

}  // namespace

std::vector<std::string> recall_buckets(std::size_t buckets) {
  std::vector<std::string> out{"all"};
  for (std::size_t b = 1; b <= buckets; ++b) out.push_back("q" + std::to_string(b));
  return out;
}

std::vector<RecallRow> recall_rows(const TransformerParams& params, std::size_t buckets, std::size_t iteration,
                                   std::uint64_t seed) {
  const EmbeddingSet& emb = *params.emb;
  const Matrix key = effective_layer1_key(params);
  const std::size_t T = emb.max_len;
  double aggregate = 0.0;
  Vector per_position;
  if (params.pe == PeMode::rpe) {
    const std::vector<Token> all = full_vocabulary(emb.vocab);
    aggregate = recall_prev_token_rpe(key, emb, all);
    per_position = rpe_prev_token_by_position(key, emb, all, T);
  } else {
    const PositionRecall r = recall_prev_token_ape(key, emb, T);
    aggregate = r.aggregate;
    per_position = as_values(r.hits);
  }
  const std::string model = to_string(params.pe);
  std::vector<RecallRow> rows{{iteration, "all", model, aggregate, seed}};
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * T / buckets + 1, hi = (b + 1) * T / buckets;
    rows.push_back({iteration, "q" + std::to_string(b + 1), model, bucket_mean(per_position, lo, hi), seed});
  }
  return rows;
}

PrevTokenResult run_prev_token_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  PrevTokenResult result;
  const auto emb = make_embedding_set(cfg, cfg.seed);
  const TriggeredBigram data = make_data_model(cfg, cfg.seed);
  Rng held_rng = Rng(cfg.seed).fork(5);
  const SequenceSample held_out = sample_sequence(data, cfg.T, held_rng);

  for (PeMode pe : {PeMode::ape, PeMode::rpe}) {
    const std::string name = to_string(pe);
    Evaluator eval = [&](std::size_t it, const TransformerParams& p, std::vector<MetricRecord>& log) {
      for (const RecallRow& r : recall_rows(p, cfg.buckets, it, cfg.seed)) {
        result.recall.push_back(r);
        log.push_back({it, "recall", r.bucket, r.value});
      }
    };
    TrainResult tr = train_loop(make_initial_params(cfg, emb, pe, cfg.seed), data, make_train_config(cfg, cfg.seed),
                                eval);
    const auto metrics = out_dir / ("metrics_" + name + ".csv");
    const auto heatmap = out_dir / ("heatmap_" + name + ".csv");
    const auto ckpt = out_dir / ("model_" + name + ".ckpt");
    csv::write_file(metrics, csv::metric_log(tr.log));
    csv::write_file(heatmap, heatmap_csv(forward(tr.params, held_out.tokens)));
    save_checkpoint(tr.params, ckpt, {{"experiment", "prev-token"}, {"seed", std::to_string(cfg.seed)}});
    result.files.insert(result.files.end(), {metrics, heatmap, ckpt});
  }
  const auto recall = out_dir / "recall.csv";
  csv::write_file(recall, recall_csv(result.recall));
  result.files.push_back(recall);
  return result;
}

const LengthGenCell& LengthGenResult::at(const std::string& model, const std::string& metric,
                                         std::size_t horizon) const {
  for (const auto& c : cells)
    if (c.model == model && c.metric == metric && c.horizon == horizon) return c;
  fail(Errc::invalid_argument, "no length-generalization cell " + model + "/" + metric);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  require(!xs.empty(), Errc::invalid_argument, "mean of nothing");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

LengthGenResult run_length_gen_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  require(2 * cfg.T <= cfg.T_max, Errc::invalid_argument, "length generalization needs T_max >= 2T");
  const std::size_t horizons[] = {cfg.T, 2 * cfg.T};
  const PeMode models[] = {PeMode::ape, PeMode::rpe};
  // values[model][metric][horizon] over seeds
  std::vector<double> values[2][2][2];
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = seed_for(cfg, s);
    const auto emb = make_embedding_set(cfg, seed);
    const TriggeredBigram data = make_data_model(cfg, seed);
    const std::vector<SequenceSample> eval[2] = {draw(data, cfg.eval_batch, horizons[0], Rng(seed).fork(6)),
                                                 draw(data, cfg.eval_batch, horizons[1], Rng(seed).fork(7))};
    for (int m = 0; m < 2; ++m) {
      TrainConfig tc = make_train_config(cfg, seed);
      tc.eval_every = 0;
      tc.eval_batch = 0;
      const TrainResult tr = train_loop(make_initial_params(cfg, emb, models[m], seed), data, tc);
      for (int h = 0; h < 2; ++h) {
        values[m][0][h].push_back(output_token_accuracy(tr.params, eval[h]));
        values[m][1][h].push_back(previous_token_attention(tr.params, eval[h]));
      }
    }
  }
  LengthGenResult result;
  std::ostringstream os;
  os << csv::kLengthGenHeader << '\n';
  const char* metrics[] = {"accuracy", "prev_token_score"};
  for (int m = 0; m < 2; ++m)
    for (int k = 0; k < 2; ++k)
      for (int h = 0; h < 2; ++h) {
        const auto [mean, sd] = mean_std(values[m][k][h]);
        result.cells.push_back({to_string(models[m]), metrics[k], horizons[h], mean, sd});
        os << to_string(models[m]) << ',' << metrics[k] << ',' << horizons[h] << ',' << csv::number(mean) << ','
           << csv::number(sd) << '\n';
      }
  csv::write_file(out_dir / "lengthgen.csv", os.str());
  return result;
}

std::vector<CollisionCell> run_collision_experiment(const ExperimentConfig& cfg, CollisionMode mode,
                                                    const std::filesystem::path& out_dir) {
  cfg.validate();
  const std::size_t n = cfg.collision.total;
  const std::size_t T = 3 * n + 1;
  TransformerParams model;
  if (mode == CollisionMode::constructed) {
    const std::size_t V = cfg.vocab;
    require(V >= 4, Errc::invalid_argument, "collision prompts need at least 4 tokens");
    Rng rng = Rng(cfg.seed).fork(8);
    auto emb = std::make_shared<EmbeddingSet>(make_embeddings(exact_min_dim(V, T), V, T, EmbeddingMode::exact, rng));
    const Matrix flat(V, V, 1.0 / static_cast<double>(V));
    model = build_strong_amt(emb, full_vocabulary(V), flat, {cfg.epsilon}, cfg.strengths);
  } else {
    require(!cfg.collision.checkpoint.empty(), Errc::invalid_argument, "trained collision mode needs a checkpoint");
    model = load_checkpoint(cfg.collision.checkpoint).params;
    require(model.emb->max_len >= T, Errc::sequence_too_long, "checkpoint T_max is shorter than the prompts");
    require(model.vocab() >= 4, Errc::invalid_argument, "collision prompts need at least 4 tokens");
  }
  const Token separator = model.vocab() - 1;

  std::vector<CollisionCell> cells;
  std::ostringstream os;
  os << csv::kCollisionHeader << '\n';
  for (std::size_t n1 = 0; n1 <= n; ++n1) {
    Rng rng = Rng(cfg.seed).fork(100 + n1);
    std::size_t b1 = 0, b2 = 0, other = 0;
    for (std::size_t i = 0; i < cfg.collision.prompts; ++i) {
      const auto [a, t1, t2] = three_distinct(separator, rng);
      const SequenceSample p = build_collision_prompt(a, t1, t2, n1, n - n1, separator);
      const Token pred = predict_next(model, p.tokens);
      if (pred == t1) ++b1;
      else if (pred == t2) ++b2;
      else ++other;
    }
    const double total = static_cast<double>(cfg.collision.prompts);
    CollisionCell c{n1, n - n1, b1 / total, b2 / total, other / total};
    cells.push_back(c);
    os << c.n1 << ',' << c.n2 << ',' << csv::number(c.frac_b1) << ',' << csv::number(c.frac_b2) << ','
       << csv::number(c.frac_global) << '\n';
  }
  csv::write_file(out_dir / "collision.csv", os.str());
  json meta = {{"mode", mode == CollisionMode::constructed ? "constructed" : "trained"},
               {"scaled", mode == CollisionMode::trained},
               {"total", n},
               {"prompts", cfg.collision.prompts},
               {"seed", cfg.seed}};
  csv::write_file(out_dir / "collision_meta.json", meta.dump(2) + "\n");
  return cells;
}

double forward_gap(std::size_t t1, std::size_t t2, std::uint64_t seed) {
  require(t1 >= 3 && t1 + 1 < t2, Errc::invalid_argument,
          "no sequence has q at t2-1 and a different token v1 at t1 when t2 = t1+1");
  const std::size_t T = t2 + 1, V = 8;
  const Token q = 0, v1 = 1, v2 = 2;
  Rng rng(seed);
  auto emb = std::make_shared<EmbeddingSet>(make_embeddings(exact_min_dim(V, T), V, T, EmbeddingMode::exact, rng));
  const Matrix flat(V, V, 1.0 / static_cast<double>(V));
  const TransformerParams amt = build_amt(emb, full_vocabulary(V), flat, {});
  std::vector<Token> tokens(T);
  for (auto& z : tokens) z = 3 + rng.index(V - 3);
  tokens[t1 - 2] = q;
  tokens[t1 - 1] = v1;
  tokens[t2 - 2] = q;
  tokens[t2 - 1] = v2;
  tokens[T - 1] = q;
  const ForwardTrace tr = forward(amt, tokens);
  return tr.scores2(T - 1, t2 - 1) - tr.scores2(T - 1, t1 - 1);
}

TheoryReport run_theory_check(const ExperimentConfig& cfg) {
  cfg.validate();
  constexpr double kTwoPatternTol = 1e-9, kStrongTol = 1e-3, kGapTol = 1e-9;
  const std::size_t V = cfg.theory.vocab, Tm = cfg.theory.max_len;
  Rng rng = Rng(cfg.seed).fork(9);
  auto emb = std::make_shared<EmbeddingSet>(make_embeddings(exact_min_dim(V, Tm), V, Tm, EmbeddingMode::exact, rng));
  const Matrix pi_b = random_conditional(V, rng, 0.2);
  const EpsilonPolicy eps{cfg.epsilon};
  const std::vector<Token> all = full_vocabulary(V);
  const TransformerParams amt = build_amt(emb, all, pi_b, eps);

  std::vector<TheorySequenceSpec> specs;
  for (std::size_t T = 6; T <= Tm; ++T)
    for (std::size_t t1 = 3; t1 + 2 <= T - 1; ++t1)
      for (std::size_t t2 = t1 + 2; t2 <= T - 1; ++t2) specs.push_back({T, t1, t2, 0, 0, 0});
  require(!specs.empty(), Errc::invalid_argument, "theory.max_len admits no two-pattern sequence");
  std::vector<TheorySequenceSpec> chosen;
  const std::size_t want = std::min(cfg.theory.specs, specs.size());
  for (std::size_t i = 0; i < want; ++i) chosen.push_back(specs[i * specs.size() / want]);

  TheoryReport rep;
  double full_dev = 0.0;
  for (TheorySequenceSpec& sp : chosen) {
    const auto [q, v1, v2] = three_distinct(V, rng);
    sp.q = q;
    sp.v1 = v1;
    sp.v2 = v2;
    const SequenceSample s = build_theory_sequence(sp, V, rng);
    const ForwardTrace tr = forward(amt, s.tokens);
    const LogitPrediction at_v = predicted_logits_two_pattern(sp, pi_b, eps);
    const LogitPrediction full = predicted_logits_two_pattern(sp, pi_b, eps, s.tokens);
    const auto got = tr.final_logits();
    for (Token v : {sp.v1, sp.v2}) rep.two_pattern_max_dev = std::max(rep.two_pattern_max_dev, std::abs(got[v] - at_v.total[v]));
    for (std::size_t v = 0; v < V; ++v) full_dev = std::max(full_dev, std::abs(got[v] - full.total[v]));
  }
  rep.two_pattern_specs = chosen.size();

  const std::size_t n = 10;
  std::size_t agree = 0;
  auto strong_emb = std::make_shared<EmbeddingSet>(
      make_embeddings(exact_min_dim(V, 3 * n + 1), V, 3 * n + 1, EmbeddingMode::exact, rng));
  const StrengthParams strengths{cfg.theory.tau, cfg.theory.tau, cfg.strengths.tau3};
  for (std::size_t i = 0; i < cfg.theory.prompts; ++i) {
    const std::size_t n1 = rng.index(n + 1);
    const auto [a, b1, b2] = three_distinct(V - 1, rng);
    const SequenceSample p = build_collision_prompt(a, b1, b2, n1, n - n1, V - 1);
    const AgreementReport r = strong_forward_agreement(strong_emb, p.tokens, pi_b, eps, strengths);
    rep.strong_max_dev = std::max(rep.strong_max_dev, r.max_abs_deviation);
    agree += r.argmax_agrees ? 1 : 0;
  }
  rep.strong_argmax_agreement = static_cast<double>(agree) / static_cast<double>(cfg.theory.prompts);

  json gap_table = json::array();
  for (std::size_t t1 = 3; t1 <= 8; ++t1)
    for (std::size_t t2 = t1 + 1; t2 <= t1 + 6; ++t2) {
      const double g = logit_gap(t1, t2);
      json row = {{"t1", t1}, {"t2", t2}, {"gap", g}, {"sign", g > 0 ? 1 : (g < 0 ? -1 : 0)}};
      row["realizable"] = t2 >= t1 + 2;
      if (t2 >= t1 + 2) {
        const double f = forward_gap(t1, t2, cfg.seed);
        row["forward"] = f;
        rep.gap_max_dev = std::max(rep.gap_max_dev, std::abs(f - g));
      }
      gap_table.push_back(row);
    }

  const bool two_ok = rep.two_pattern_max_dev < kTwoPatternTol;
  const bool strong_ok = rep.strong_max_dev < kStrongTol && agree == cfg.theory.prompts;
  const bool gap_ok = rep.gap_max_dev < kGapTol;
  rep.ok = two_ok && strong_ok && gap_ok;
  json j = {{"ok", rep.ok},
            {"seed", cfg.seed},
            {"two_pattern",
             {{"specs", rep.two_pattern_specs},
              {"max_dev_v1_v2", rep.two_pattern_max_dev},
              {"max_dev_all_tokens", full_dev},
              {"tolerance", kTwoPatternTol},
              {"pass", two_ok}}},
            {"strong",
             {{"prompts", cfg.theory.prompts},
              {"tau1", strengths.tau1},
              {"tau2", strengths.tau2},
              {"max_dev", rep.strong_max_dev},
              {"argmax_agreement", rep.strong_argmax_agreement},
              {"tolerance", kStrongTol},
              {"pass", strong_ok}}},
            {"gap",
             {{"table", gap_table},
              {"max_dev_realizable", rep.gap_max_dev},
              {"tolerance", kGapTol},
              {"pass", gap_ok}}}};
  rep.json = j.dump(2) + "\n";
  return rep;
}

}  // namespace induction
