#include "induction/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "induction/error.hpp"

namespace induction {

namespace {

using json = nlohmann::json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  require(obj.is_object(), Errc::invalid_argument, where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    require(ok.count(key) > 0, Errc::invalid_argument, "unknown config key '" + where + key + "'");
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(Errc::invalid_argument, "config key '" + where + key + "' has the wrong type");
  }
}

void positive(std::size_t v, const char* name) {
  require(v > 0, Errc::invalid_argument, std::string("config: ") + name + " must be positive");
}

}  // namespace

void ExperimentConfig::validate() const {
  positive(d, "d");
  positive(vocab, "vocab");
  positive(T, "T");
  positive(T_max, "T_max");
  positive(triggers, "triggers");
  positive(batch, "batch");
  positive(eval_batch, "eval_batch");
  positive(buckets, "buckets");
  positive(seeds, "seeds");
  positive(sequences, "sequences");
  positive(one_step.batch, "one_step.batch");
  positive(collision.prompts, "collision.prompts");
  positive(collision.total, "collision.total");
  positive(theory.specs, "theory.specs");
  positive(theory.prompts, "theory.prompts");
  require(T >= 2 && T <= T_max, Errc::invalid_argument, "config: need 2 <= T <= T_max");
  require(triggers <= vocab, Errc::invalid_argument, "config: more triggers than vocabulary items");
  require(epsilon > 0.0 && epsilon < 1.0, Errc::invalid_argument, "config: epsilon must lie in (0, 1)");
  require(strengths.tau1 > 0.0 && strengths.tau2 > 0.0 && strengths.tau3 > 0.0, Errc::invalid_argument,
          "config: strengths must be positive");
  require(lr >= 0.0 && momentum >= 0.0 && momentum < 1.0 && weight_decay >= 0.0, Errc::invalid_argument,
          "config: optimizer needs lr >= 0, momentum in [0, 1), weight_decay >= 0");
  require(init_std >= 0.0, Errc::invalid_argument, "config: init_std must be nonnegative");
  require(data == "bigram" || data == "analogy", Errc::invalid_argument, "config: data must be bigram or analogy");
  require(collision.mode == "constructed" || collision.mode == "trained", Errc::invalid_argument,
          "config: collision.mode must be constructed or trained");
  require(analogy.pairs >= 1 && analogy.pairs <= analogy.words, Errc::invalid_argument,
          "config: analogy.pairs must lie in [1, words]");
  require(analogy.p_min >= 0.0 && analogy.p_min <= analogy.p_max && analogy.p_max < 1.0, Errc::invalid_argument,
          "config: analogy needs 0 <= p_min <= p_max < 1");
  require(theory.vocab >= 4 && theory.max_len >= 6, Errc::invalid_argument,
          "config: theory needs vocab >= 4 and max_len >= 6");
  require(theory.tau > 0.0, Errc::invalid_argument, "config: theory.tau must be positive");
  for (ParamName n : trainables)
    require(n != ParamName::W_1 && n != ParamName::W_2, Errc::invalid_argument,
            "config: experiment models have no FFN to train");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    fail(Errc::invalid_argument, std::string("config is not valid JSON: ") + ex.what());
  }
  check_keys(j, "", {"seed", "d", "vocab", "T", "T_max", "triggers", "pe_mode", "embedding_mode", "epsilon",
                     "strengths", "optimizer", "trainables", "mask_policy", "eval", "buckets", "seeds",
                     "init_std", "corpus", "data", "sequences", "out_dir", "one_step", "collision", "analogy",
                     "theory"});
  ExperimentConfig c;
  read(j, "seed", c.seed, "");
  read(j, "d", c.d, "");
  read(j, "vocab", c.vocab, "");
  read(j, "T", c.T, "");
  read(j, "T_max", c.T_max, "");
  read(j, "triggers", c.triggers, "");
  read(j, "epsilon", c.epsilon, "");
  read(j, "buckets", c.buckets, "");
  read(j, "seeds", c.seeds, "");
  read(j, "init_std", c.init_std, "");
  read(j, "data", c.data, "");
  read(j, "sequences", c.sequences, "");
  std::string s;
  if (j.contains("pe_mode")) {
    read(j, "pe_mode", s, "");
    c.pe = parse_pe_mode(s);
  }
  if (j.contains("embedding_mode")) {
    read(j, "embedding_mode", s, "");
    c.embedding_mode = parse_embedding_mode(s);
  }
  if (j.contains("mask_policy")) {
    read(j, "mask_policy", s, "");
    c.mask_policy = parse_mask_policy(s);
  }
  if (j.contains("trainables")) {
    std::vector<std::string> names;
    read(j, "trainables", names, "");
    c.trainables = parse_trainables(names);
  }
  auto path_of = [&](const char* key, std::filesystem::path& out) {
    if (!j.contains(key)) return;
    std::string p;
    read(j, key, p, "");
    out = p.empty() || std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_dir / p;
  };
  path_of("corpus", c.corpus);
  path_of("out_dir", c.out_dir);

  if (j.contains("strengths")) {
    const json& o = j["strengths"];
    check_keys(o, "strengths.", {"tau1", "tau2", "tau3"});
    read(o, "tau1", c.strengths.tau1, "strengths.");
    read(o, "tau2", c.strengths.tau2, "strengths.");
    read(o, "tau3", c.strengths.tau3, "strengths.");
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, "optimizer.", {"lr", "momentum", "weight_decay", "batch", "iterations"});
    read(o, "lr", c.lr, "optimizer.");
    read(o, "momentum", c.momentum, "optimizer.");
    read(o, "weight_decay", c.weight_decay, "optimizer.");
    read(o, "batch", c.batch, "optimizer.");
    read(o, "iterations", c.iterations, "optimizer.");
  }
  if (j.contains("eval")) {
    const json& o = j["eval"];
    check_keys(o, "eval.", {"every", "batch"});
    read(o, "every", c.eval_every, "eval.");
    read(o, "batch", c.eval_batch, "eval.");
  }
  if (j.contains("one_step")) {
    const json& o = j["one_step"];
    check_keys(o, "one_step.", {"eta", "batch"});
    read(o, "eta", c.one_step.eta, "one_step.");
    read(o, "batch", c.one_step.batch, "one_step.");
  }
  if (j.contains("collision")) {
    const json& o = j["collision"];
    check_keys(o, "collision.", {"total", "prompts", "mode", "checkpoint"});
    read(o, "total", c.collision.total, "collision.");
    read(o, "prompts", c.collision.prompts, "collision.");
    read(o, "mode", c.collision.mode, "collision.");
    std::string ck;
    read(o, "checkpoint", ck, "collision.");
    if (!ck.empty()) c.collision.checkpoint = std::filesystem::path(ck).is_absolute() ? ck : (base_dir / ck).string();
  }
  if (j.contains("analogy")) {
    const json& o = j["analogy"];
    check_keys(o, "analogy.", {"words", "pairs", "fake", "p_min", "p_max"});
    read(o, "words", c.analogy.words, "analogy.");
    read(o, "pairs", c.analogy.pairs, "analogy.");
    read(o, "fake", c.analogy.fake, "analogy.");
    read(o, "p_min", c.analogy.p_min, "analogy.");
    read(o, "p_max", c.analogy.p_max, "analogy.");
  }
  if (j.contains("theory")) {
    const json& o = j["theory"];
    check_keys(o, "theory.", {"vocab", "max_len", "specs", "prompts", "tau"});
    read(o, "vocab", c.theory.vocab, "theory.");
    read(o, "max_len", c.theory.max_len, "theory.");
    read(o, "specs", c.theory.specs, "theory.");
    read(o, "prompts", c.theory.prompts, "theory.");
    read(o, "tau", c.theory.tau, "theory.");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["d"] = c.d;
  j["vocab"] = c.vocab;
  j["T"] = c.T;
  j["T_max"] = c.T_max;
  j["triggers"] = c.triggers;
  j["pe_mode"] = to_string(c.pe);
  j["embedding_mode"] = to_string(c.embedding_mode);
  j["epsilon"] = c.epsilon;
  j["strengths"] = {{"tau1", c.strengths.tau1}, {"tau2", c.strengths.tau2}, {"tau3", c.strengths.tau3}};
  j["optimizer"] = {{"lr", c.lr},
                    {"momentum", c.momentum},
                    {"weight_decay", c.weight_decay},
                    {"batch", c.batch},
                    {"iterations", c.iterations}};
  std::vector<std::string> names;
  for (ParamName n : c.trainables) names.emplace_back(to_string(n));
  j["trainables"] = names;
  j["mask_policy"] = to_string(c.mask_policy);
  j["eval"] = {{"every", c.eval_every}, {"batch", c.eval_batch}};
  j["buckets"] = c.buckets;
  j["seeds"] = c.seeds;
  j["init_std"] = c.init_std;
  j["corpus"] = c.corpus.string();
  j["data"] = c.data;
  j["sequences"] = c.sequences;
  j["out_dir"] = c.out_dir.string();
  j["one_step"] = {{"eta", c.one_step.eta}, {"batch", c.one_step.batch}};
  j["collision"] = {{"total", c.collision.total},
                    {"prompts", c.collision.prompts},
                    {"mode", c.collision.mode},
                    {"checkpoint", c.collision.checkpoint}};
  j["analogy"] = {{"words", c.analogy.words},
                  {"pairs", c.analogy.pairs},
                  {"fake", c.analogy.fake},
                  {"p_min", c.analogy.p_min},
                  {"p_max", c.analogy.p_max}};
  j["theory"] = {{"vocab", c.theory.vocab},
                 {"max_len", c.theory.max_len},
                 {"specs", c.theory.specs},
                 {"prompts", c.theory.prompts},
                 {"tau", c.theory.tau}};
  return j.dump(2);
}

std::shared_ptr<const EmbeddingSet> make_embedding_set(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(1);
  const std::size_t V = cfg.data == "analogy" ? cfg.analogy.words + 1 : cfg.vocab;
  return std::make_shared<EmbeddingSet>(make_embeddings(cfg.d, V, cfg.T_max, cfg.embedding_mode, rng));
}

TriggeredBigram make_data_model(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.data == "analogy") {
    Rng rng = Rng(seed).fork(2);
    std::vector<std::pair<Token, Token>> pairs;
    // sources are the first `pairs` words, targets the next ones (wrapping)
    for (std::size_t i = 0; i < cfg.analogy.pairs; ++i)
      pairs.emplace_back(i, (cfg.analogy.pairs + i) % cfg.analogy.words);
    TriggeredBigram m = build_analogy_model(cfg.analogy.words, pairs, cfg.analogy.fake,
                                            {cfg.analogy.p_min, cfg.analogy.p_max}, rng);
    m.triggers_per_sequence = std::min(cfg.triggers, cfg.analogy.pairs);
    return m;
  }
  if (cfg.corpus.empty()) return uniform_bigram(cfg.vocab, cfg.triggers);
  std::ifstream in(cfg.corpus, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot open corpus " + cfg.corpus.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  TriggeredBigram m = estimate_char_bigram(ss.str());
  require(m.vocab >= cfg.vocab, Errc::invalid_argument,
          "corpus has " + std::to_string(m.vocab) + " distinct characters, fewer than vocab");
  m = restrict_top_k(m, cfg.vocab);
  m.triggers_per_sequence = cfg.triggers;
  return m;
}

TrainConfig make_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig t;
  t.iterations = cfg.iterations;
  t.batch = cfg.batch;
  t.T = cfg.T;
  t.trainables = cfg.trainables;
  t.mask_policy = cfg.mask_policy;
  t.eval_every = cfg.eval_every;
  t.eval_batch = cfg.eval_batch;
  t.lr = cfg.lr;
  t.momentum = cfg.momentum;
  t.weight_decay = cfg.weight_decay;
  t.seed = mix_seed(seed, 3);
  return t;
}

TransformerParams make_initial_params(const ExperimentConfig& cfg, std::shared_ptr<const EmbeddingSet> emb,
                                      PeMode pe, std::uint64_t seed) {
  const std::size_t d = emb->d;
  TransformerParams p = zero_init_params(std::move(emb), pe);
  if (cfg.init_std > 0.0) {
    Rng rng = Rng(seed).fork(4);
    p.wk1 = gaussian_matrix(d, d, cfg.init_std, rng);
    p.wk2 = gaussian_matrix(d, d, cfg.init_std, rng);
    p.wo2 = gaussian_matrix(d, d, cfg.init_std, rng);
  }
  return p;
}

}  // namespace induction
