#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "rectify/paramstore.hpp"
#include "rectify/tape.hpp"
#include "rectify/tensor.hpp"

namespace rectify {

// Decoder-only transformer: pre-layernorm blocks, learned positional
// embeddings, GELU MLP, untied output head.
struct ModelConfig {
    int n_layers = 4;
    int d_model = 128;
    int n_heads = 4;
    int d_ff = 512;
    int vocab_size = 0;
    int max_seq_len = 64;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Canonical parameter order; checkpoint manifests and init follow it.
std::vector<std::string> param_names(const ModelConfig& cfg);
std::vector<int> param_shape(const ModelConfig& cfg, const std::string& name);

// Additive bias vectors (attention q/k/v and output projection, both MLP
// layers) and layer-norm shift vectors of the top top_T blocks; the final
// layer-norm shift joins only when every block is covered. Weight matrices,
// embeddings, layer-norm scales and the head bias never appear.
std::set<std::string> bias_term_names(const ModelConfig& cfg, int top_T);

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardOut {
    std::vector<float> logits;     // next-token logits at the last position
    std::vector<Tensor> hiddens;   // per-block residual stream outputs [t, d]
};

// Full-prefix forward. Deterministic; hiddens are filled only when requested.
ForwardOut forward_logits(const ModelConfig& cfg, const ParamView& params,
                          const std::vector<int>& ids, bool want_hiddens = false);

// Teacher-forced logits for every position, [t, vocab].
Tensor forward_all_logits(const ModelConfig& cfg, const ParamView& params,
                          const std::vector<int>& ids);

struct TapeForward {
    Tape::Value logits;        // [1, vocab] at the last position, or [t, vocab]
    Tape::Value final_hidden;  // [t, d] last block output (pre final layernorm)
};

// Same computation recorded on a tape; active_tunable selects which
// parameters receive gradients. all_positions switches the head projection
// from last-row-only to teacher-forcing shape.
TapeForward forward_tape(Tape& tape, const ModelConfig& cfg, const ParamView& params,
                         const std::vector<int>& ids, const std::set<std::string>& active_tunable,
                         bool all_positions = false);

// exp(mean NLL). Default scores only the continuation (tokens from n_prompt
// on), conditioned on the prompt; include_prompt adds the prompt tokens
// (except the first) to the average.
double sequence_ppl(const ModelConfig& cfg, const ParamView& params,
                    const std::vector<int>& tokens, int n_prompt, bool include_prompt = false);

}  // namespace rectify
