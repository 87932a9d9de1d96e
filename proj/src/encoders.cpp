#include "mmf3/encoders.hpp"

#include "mmf3/corpus.hpp"
#include "mmf3/errors.hpp"

namespace mmf3 {

EncoderStack EncoderStack::create(nc::ParamStore& store, const std::string& prefix,
                                  const nc::AttentionConfig& attention, Eigen::Index ff_dim, int layers, Rng& rng) {
    EncoderStack stack;
    for (int l = 0; l < layers; ++l) {
        const auto p = prefix + ".layer" + std::to_string(l);
        EncoderLayer layer;
        layer.attention = nc::AttentionParams::create(store, p + ".attn", attention, rng);
        layer.norm1 = nc::LayerNormParams::create(store, p + ".norm1", attention.d_model);
        layer.ffn = nc::FeedForwardParams::create(store, p + ".ffn", attention.d_model, ff_dim, rng);
        layer.norm2 = nc::LayerNormParams::create(store, p + ".norm2", attention.d_model);
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

GcnStack GcnStack::create(nc::ParamStore& store, const std::string& prefix, Eigen::Index d, int layers, Rng& rng) {
    GcnStack stack;
    for (int l = 0; l < layers; ++l) stack.weights.push_back(store.glorot(prefix + ".w" + std::to_string(l), d, d, rng));
    return stack;
}

nc::Var encoder_forward(const nc::Var& x, const EncoderStack& stack, const std::vector<bool>& key_mask,
                        DropoutCtx drop, std::vector<nc::AttentionTrace>* traces) {
    if (static_cast<Eigen::Index>(key_mask.size()) != x.rows()) throw ShapeError("encoder: mask length differs");
    const auto allowed = nc::key_padding_mask(x.rows(), key_mask);
    nc::Var h = x;
    if (traces) traces->clear();
    for (const auto& layer : stack.layers) {
        nc::AttentionTrace trace;
        const auto a = nc::multi_head_attention(h, h, h, layer.attention, allowed, traces ? &trace : nullptr);
        if (traces) traces->push_back(std::move(trace));
        h = nc::layer_norm(nc::add(h, nc::dropout(a, drop.rate, drop.rng)), layer.norm1);
        const auto f = nc::feed_forward(h, layer.ffn);
        h = nc::layer_norm(nc::add(h, nc::dropout(f, drop.rate, drop.rng)), layer.norm2);
    }
    return h;
}

nc::Var gcn_forward(const nc::Var& node_emb, const nc::Matrix& propagation, const GcnStack& stack) {
    if (propagation.rows() != node_emb.rows() || propagation.cols() != node_emb.rows()) {
        throw ShapeError("gcn: propagation matrix is " + std::to_string(propagation.rows()) + "x" +
                         std::to_string(propagation.cols()) + " for " + std::to_string(node_emb.rows()) + " nodes");
    }
    const auto prop = nc::constant(propagation);
    nc::Var h = node_emb;
    for (const auto& w : stack.weights) h = nc::relu(nc::matmul(prop, nc::matmul(h, w)));
    return h;
}

CodeEncoding encode_code(std::span<const int> token_ids, const nc::Var& embedding_table, const EncoderStack& stack,
                         const std::vector<bool>& token_mask, DropoutCtx drop,
                         std::vector<nc::AttentionTrace>* traces) {
    CodeEncoding out;
    out.token_emb = nc::embedding(embedding_table, token_ids, corpus::kPad);
    const auto pe = nc::constant(nc::positional_encoding(out.token_emb.rows(), out.token_emb.cols()));
    const auto x = nc::dropout(nc::add(out.token_emb, pe), drop.rate, drop.rng);
    out.encoded = encoder_forward(x, stack, token_mask, drop, traces);
    return out;
}

nc::Var encode_ast(const nc::Var& x_ast, const EncoderStack& stack, const std::vector<bool>& node_mask,
                   DropoutCtx drop, std::vector<nc::AttentionTrace>* traces) {
    return encoder_forward(nc::dropout(x_ast, drop.rate, drop.rng), stack, node_mask, drop, traces);
}

} // namespace mmf3
