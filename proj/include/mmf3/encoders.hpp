#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmf3/layers.hpp"

namespace mmf3 {

// Post-norm Transformer encoder block: self-attention, add & norm,
// feed-forward, add & norm.
struct EncoderLayer {
    nc::AttentionParams attention;
    nc::LayerNormParams norm1;
    nc::FeedForwardParams ffn;
    nc::LayerNormParams norm2;
};

struct EncoderStack {
    std::vector<EncoderLayer> layers;

    static EncoderStack create(nc::ParamStore& store, const std::string& prefix, const nc::AttentionConfig& attention,
                               Eigen::Index ff_dim, int layers, Rng& rng);
};

struct GcnStack {
    std::vector<nc::Parameter> weights; // d x d per layer

    static GcnStack create(nc::ParamStore& store, const std::string& prefix, Eigen::Index d, int layers, Rng& rng);
};

// Dropout settings for one forward pass; a null rng means evaluation mode.
struct DropoutCtx {
    double rate = 0.0;
    Rng* rng = nullptr;
};

// Runs every block with `key_mask` excluding padded rows as attention keys.
nc::Var encoder_forward(const nc::Var& x, const EncoderStack& stack, const std::vector<bool>& key_mask,
                        DropoutCtx drop = {}, std::vector<nc::AttentionTrace>* traces = nullptr);

// H(l+1) = relu(S H(l) W(l)) for every layer, starting from the frozen node embeddings.
nc::Var gcn_forward(const nc::Var& node_emb, const nc::Matrix& propagation, const GcnStack& stack);

struct CodeEncoding {
    nc::Var token_emb; // raw embeddings, PAD rows zero
    nc::Var encoded;   // X_e^tok
};

// Token embedding + positional encoding, then the encoder stack.
CodeEncoding encode_code(std::span<const int> token_ids, const nc::Var& embedding_table, const EncoderStack& stack,
                         const std::vector<bool>& token_mask, DropoutCtx drop = {},
                         std::vector<nc::AttentionTrace>* traces = nullptr);

// The AST encoder: no positional encoding, rows beyond the real nodes are zero and masked.
nc::Var encode_ast(const nc::Var& x_ast, const EncoderStack& stack, const std::vector<bool>& node_mask,
                   DropoutCtx drop = {}, std::vector<nc::AttentionTrace>* traces = nullptr);

} // namespace mmf3
