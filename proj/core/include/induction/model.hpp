#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "induction/datagen.hpp"
#include "induction/embeddings.hpp"
#include "induction/numeric.hpp"

namespace induction {

enum class PeMode { ape, rpe, nope3 };

const char* to_string(PeMode mode) noexcept;
PeMode parse_pe_mode(const std::string& text);

/// Normalization applied to layer-2 attention scores.
enum class AttentionNorm { softmax, linearized };

enum class ParamName { W_K1, W_Q1, Phi1, W_K2, W_Q2, W_V2, W_O2, W_1, W_2 };

inline constexpr ParamName kAllParams[] = {ParamName::W_K1, ParamName::W_Q1, ParamName::Phi1,
                                           ParamName::W_K2, ParamName::W_Q2, ParamName::W_V2,
                                           ParamName::W_O2, ParamName::W_1,  ParamName::W_2};

const char* to_string(ParamName name) noexcept;
ParamName parse_param_name(const std::string& text);

/// Key-value memory: W_1 has one row per vocabulary item, W_2 maps the
/// V-dimensional activation back to the residual stream.
struct FeedForward {
  Matrix w1;  // V × d
  Matrix w2;  // d × V
};

/// Block-3 weights of the NoPE construction (block 2 reuses the W_*2 slots).
struct NopeBlocks {
  Matrix wq3, wk3, wv3, wo3;
  Token bos = 0;
};

struct TransformerParams {
  std::shared_ptr<const EmbeddingSet> emb;
  PeMode pe = PeMode::rpe;
  AttentionNorm layer2_norm = AttentionNorm::softmax;

  Matrix wq1, wk1, phi1;
  Matrix wq2, wk2, wv2, wo2;
  std::optional<FeedForward> ffn;
  std::optional<NopeBlocks> nope;

  std::size_t d() const { return emb->d; }
  std::size_t vocab() const { return emb->vocab; }

  /// Throws unless the named matrix exists in this model.
  Matrix& param(ParamName name);
  const Matrix& param(ParamName name) const;
  bool has(ParamName name) const;

  void validate() const;
};

/// Two-layer model with W_Q = I, the frozen Phi1/W_V2 of the embedding set,
/// zero W_K1, W_K2, W_O2 and no FFN.
TransformerParams zero_init_params(std::shared_ptr<const EmbeddingSet> emb, PeMode pe);

/// Everything computed by one forward pass. Positions are 0-indexed rows.
struct ForwardTrace {
  std::size_t T = 0;
  Matrix scores1, attn1;  // T × T, causal (entries above the diagonal are zero)
  Matrix scores2, attn2;
  Matrix x0_query, x0_key, x0_value, x0_residual;  // layer-1 inputs
  Matrix q1, k1;       // W_Q1 x^{(0,q)}, W_K1 x^{(0,k)} (content part of keys)
  Matrix k1_rel;       // RPE only: row j = W_K1 r_{-j}
  Matrix u1;           // attention-weighted layer-1 values
  Matrix x1;           // x^{(1)}
  Matrix q2, k2;
  Matrix h2;           // attention-weighted layer-2 inputs
  Matrix g2;           // W_V2 h2
  Matrix x2;           // x^{(2)}
  Matrix ffn_pre;      // W_1 x^{(2)} (T × V), empty without FFN
  Matrix x_out;        // x
  Matrix logits;       // T × V
  Matrix hidden0;      // NoPE only: block-1 output H^{(1)}

  std::span<const double> final_logits() const& { return logits.row(T - 1); }
  /// Copy for temporaries, so the result never outlives its trace.
  Vector final_logits() && {
    const auto row = logits.row(T - 1);
    return Vector(row.begin(), row.end());
  }
};

ForwardTrace forward(const TransformerParams& params, std::span<const Token> tokens);
inline ForwardTrace forward(const TransformerParams& params, const SequenceSample& s) {
  return forward(params, s.tokens);
}

/// argmax over the final-position logits, lowest index on ties.
Token predict_next(const TransformerParams& params, std::span<const Token> tokens);

/// Block 1 writes positions directly; block 2 uses strict causal attention.
ForwardTrace forward_three_layer_nope(const TransformerParams& params, std::span<const Token> tokens);

/// CSV rows "layer,query_pos,key_pos,weight" for both attention layers (0-indexed positions, causal entries only).
std::string heatmap_csv(const ForwardTrace& trace, bool with_header = true);

}  // namespace induction
