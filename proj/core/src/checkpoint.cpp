#include "induction/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "induction/error.hpp"

namespace induction {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'I', 'N', 'D', 'C', 'K', 'P', 'T', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

// Named matrices in a fixed order; empty slots are skipped.
std::vector<std::pair<std::string, const Matrix*>> named_matrices(const TransformerParams& p) {
  const EmbeddingSet& e = *p.emb;
  std::vector<std::pair<std::string, const Matrix*>> out = {
      {"emb.w_E", &e.w_E}, {"emb.w_U", &e.w_U},   {"emb.ape", &e.ape}, {"emb.rpe", &e.rpe},
      {"emb.phi1", &e.phi1}, {"emb.w_v2", &e.w_v2}, {"W_Q1", &p.wq1},   {"W_K1", &p.wk1},
      {"Phi1", &p.phi1},   {"W_Q2", &p.wq2},     {"W_K2", &p.wk2},   {"W_V2", &p.wv2},
      {"W_O2", &p.wo2}};
  if (p.ffn) {
    out.emplace_back("W_1", &p.ffn->w1);
    out.emplace_back("W_2", &p.ffn->w2);
  }
  if (p.nope) {
    out.emplace_back("W_Q3", &p.nope->wq3);
    out.emplace_back("W_K3", &p.nope->wk3);
    out.emplace_back("W_V3", &p.nope->wv3);
    out.emplace_back("W_O3", &p.nope->wo3);
  }
  return out;
}

struct Header {
  json manifest;
  std::size_t payload_start = 0;
};

Header read_header(const std::string& bytes) {
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, 8) == 0, Errc::corrupt_file,
          "not a checkpoint file (bad magic)");
  const std::uint64_t len = get_u64(bytes, 8);
  require(len <= bytes.size() - 16, Errc::corrupt_file, "manifest length exceeds file size");
  Header h;
  try {
    h.manifest = json::parse(bytes.substr(16, len));
  } catch (const json::exception& ex) {
    fail(Errc::corrupt_file, std::string("manifest is not valid JSON: ") + ex.what());
  }
  require(h.manifest.is_object() && h.manifest.contains("version") && h.manifest["version"].is_string(),
          Errc::corrupt_file, "manifest has no version string");
  const std::string version = h.manifest["version"];
  require(version == kCheckpointVersion, Errc::version_mismatch,
          "checkpoint version '" + version + "' is not " + kCheckpointVersion);
  h.payload_start = 16 + len;
  return h;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string serialize_checkpoint(const TransformerParams& params, const std::map<std::string, std::string>& meta) {
  params.validate();
  const EmbeddingSet& e = *params.emb;
  json m;
  m["version"] = kCheckpointVersion;
  m["model"] = {{"pe", to_string(params.pe)},
                {"layer2_norm", params.layer2_norm == AttentionNorm::softmax ? "softmax" : "linearized"},
                {"ffn", params.ffn.has_value()},
                {"bos", params.nope ? static_cast<std::uint64_t>(params.nope->bos) : 0}};
  m["embeddings"] = {{"d", e.d},
                     {"vocab", e.vocab},
                     {"max_len", e.max_len},
                     {"mode", to_string(e.mode)},
                     {"reserved", e.reserved},
                     {"positional_aliased", e.positional_aliased}};
  m["meta"] = meta;
  json entries = json::array();
  std::uint64_t offset = 0;
  const auto mats = named_matrices(params);
  for (const auto& [name, mat] : mats) {
    entries.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}, {"offset", offset}});
    offset += 8 * mat->size();
  }
  m["entries"] = entries;
  m["payload_bytes"] = offset;

  const std::string text = m.dump(1);
  std::string out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& [name, mat] : mats)
    for (double x : mat->data()) put_f64(out, x);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const Header h = read_header(bytes);
  const json& m = h.manifest;
  Checkpoint ck;
  try {
    ck.version = m.at("version");
    for (const auto& [k, v] : m.at("meta").items()) ck.meta[k] = v.get<std::string>();
    const std::uint64_t payload = m.at("payload_bytes");
    require(bytes.size() - h.payload_start == payload, Errc::corrupt_file,
            "payload is " + std::to_string(bytes.size() - h.payload_start) + " bytes, manifest says " +
                std::to_string(payload));

    auto emb = std::make_shared<EmbeddingSet>();
    const json& je = m.at("embeddings");
    emb->d = je.at("d");
    emb->vocab = je.at("vocab");
    emb->max_len = je.at("max_len");
    emb->mode = parse_embedding_mode(je.at("mode"));
    emb->reserved = je.at("reserved");
    emb->positional_aliased = je.at("positional_aliased");

    TransformerParams& p = ck.params;
    const json& jm = m.at("model");
    p.pe = parse_pe_mode(jm.at("pe"));
    const std::string norm = jm.at("layer2_norm");
    require(norm == "softmax" || norm == "linearized", Errc::corrupt_file, "unknown layer-2 norm " + norm);
    p.layer2_norm = norm == "softmax" ? AttentionNorm::softmax : AttentionNorm::linearized;
    if (jm.at("ffn").get<bool>()) p.ffn = FeedForward{};
    if (p.pe == PeMode::nope3) {
      p.nope = NopeBlocks{};
      p.nope->bos = jm.at("bos");
    }

    std::map<std::string, Matrix*> slots = {
        {"emb.w_E", &emb->w_E}, {"emb.w_U", &emb->w_U},   {"emb.ape", &emb->ape}, {"emb.rpe", &emb->rpe},
        {"emb.phi1", &emb->phi1}, {"emb.w_v2", &emb->w_v2}, {"W_Q1", &p.wq1},      {"W_K1", &p.wk1},
        {"Phi1", &p.phi1},      {"W_Q2", &p.wq2},        {"W_K2", &p.wk2},      {"W_V2", &p.wv2},
        {"W_O2", &p.wo2}};
    if (p.ffn) {
      slots["W_1"] = &p.ffn->w1;
      slots["W_2"] = &p.ffn->w2;
    }
    if (p.nope) {
      slots["W_Q3"] = &p.nope->wq3;
      slots["W_K3"] = &p.nope->wk3;
      slots["W_V3"] = &p.nope->wv3;
      slots["W_O3"] = &p.nope->wo3;
    }
    for (const json& je2 : m.at("entries")) {
      CheckpointEntry ent{je2.at("name"), je2.at("rows"), je2.at("cols"), je2.at("offset")};
      auto it = slots.find(ent.name);
      require(it != slots.end(), Errc::corrupt_file, "unexpected matrix '" + ent.name + "'");
      const std::uint64_t n = static_cast<std::uint64_t>(ent.rows) * ent.cols;
      require(ent.offset <= payload && n * 8 <= payload - ent.offset, Errc::corrupt_file,
              "matrix '" + ent.name + "' lies outside the payload");
      Matrix mat(ent.rows, ent.cols);
      const std::size_t base = h.payload_start + ent.offset;
      for (std::uint64_t i = 0; i < n; ++i) mat.data()[i] = std::bit_cast<double>(get_u64(bytes, base + 8 * i));
      *it->second = std::move(mat);
      slots.erase(it);
      ck.entries.push_back(std::move(ent));
    }
    for (const auto& [name, slot] : slots) {
      (void)slot;
      fail(Errc::corrupt_file, "matrix '" + name + "' missing from checkpoint");
    }
    p.emb = std::move(emb);
  } catch (const json::exception& ex) {
    fail(Errc::corrupt_file, std::string("malformed manifest: ") + ex.what());
  }
  ck.params.validate();
  return ck;
}

void save_checkpoint(const TransformerParams& params, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta) {
  const std::string bytes = serialize_checkpoint(params, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), Errc::io_error, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

std::string inspect_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return read_header(bytes).manifest.dump(2);
}

}  // namespace induction
