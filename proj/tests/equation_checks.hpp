#pragma once

// Library-versus-oracle comparisons on seeded random instances. Each returns
// the largest absolute difference found.

#include <cstdint>
#include <string>
#include <vector>

#include "mmf3/decode.hpp"
#include "mmf3/encoders.hpp"
#include "mmf3/fusion.hpp"
#include "mmf3/rng.hpp"
#include "mmf3/toy_corpus.hpp"
#include "oracles.hpp"

namespace checks {

using namespace mmf3;

inline nc::Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    nc::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-1.0, 1.0);
    return m;
}

inline std::vector<bool> random_mask(Rng& rng, std::size_t n, double p_true = 0.7) {
    std::vector<bool> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = rng.uniform() < p_true;
    m[rng.below(n)] = true;
    return m;
}

inline double max_abs(const nc::Matrix& a, const nc::Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
    return (a - b).cwiseAbs().maxCoeff();
}

// Overwrites every parameter with fresh random values so zero biases and unit
// gains do not hide mistakes.
inline void randomize(const nc::ParamStore& store, Rng& rng) {
    for (const auto& p : store.all()) {
        auto& v = p.mutable_value();
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-0.5, 0.5);
    }
}

inline oracle::AttnWeights weights_of(const nc::AttentionParams& p) {
    return {p.w_q.value(), p.w_k.value(), p.w_v.value(), p.w_o.value(), static_cast<int>(p.config.heads),
            static_cast<int>(p.config.d_k)};
}

inline oracle::Mat oracle_encoder(oracle::Mat h, const EncoderStack& stack, const std::vector<bool>& mask) {
    const auto allowed = oracle::key_mask(static_cast<std::size_t>(h.rows()), mask);
    for (const auto& l : stack.layers) {
        const auto a = oracle::mha(h, h, h, weights_of(l.attention), allowed);
        h = oracle::layer_norm(h + a, l.norm1.gain.value(), l.norm1.bias.value());
        const auto f = oracle::ffn(h, l.ffn.w1.value(), l.ffn.b1.value(), l.ffn.w2.value(), l.ffn.b2.value());
        h = oracle::layer_norm(h + f, l.norm2.gain.value(), l.norm2.bias.value());
    }
    return h;
}

inline double gcn_error(std::uint64_t seed) {
    Rng rng(seed);
    nc::ParamStore store;
    const auto stack = GcnStack::create(store, "gcn", 6, 2, rng);
    randomize(store, rng);
    const auto tree = toy::random_sample(rng, "g").tree;
    const std::size_t n = std::min<std::size_t>(tree->size(), 12);
    const auto x = random_matrix(rng, static_cast<Eigen::Index>(n), 6);
    const auto got = gcn_forward(nc::constant(x), ast::build_propagation(*tree, n), stack).value();
    std::vector<oracle::Mat> ws;
    for (const auto& w : stack.weights) ws.push_back(w.value());
    return max_abs(got, oracle::gcn(oracle::propagation(*tree, n), x, ws));
}

inline double attention_error(std::uint64_t seed) {
    Rng rng(seed);
    nc::ParamStore store;
    const auto p = nc::AttentionParams::create(store, "a", {8, 2, 3}, rng);
    const auto q = random_matrix(rng, 5, 8);
    const auto kv = random_matrix(rng, 7, 8);
    const auto keys = random_mask(rng, 7);
    const auto got =
        nc::multi_head_attention(nc::constant(q), nc::constant(kv), nc::constant(kv), p, nc::key_padding_mask(5, keys))
            .value();
    const auto want = oracle::mha(q, kv, kv, weights_of(p), oracle::key_mask(5, keys));
    // Causal self-attention on the same weights.
    const auto x = random_matrix(rng, 6, 8);
    const auto self_keys = random_mask(rng, 6);
    std::vector<bool> sk = self_keys;
    sk[0] = true;
    const auto got2 = nc::multi_head_attention(nc::constant(x), nc::constant(x), nc::constant(x), p,
                                               nc::causal_mask(sk))
                          .value();
    const auto want2 = oracle::mha(x, x, x, weights_of(p), oracle::causal(sk));
    return std::max(max_abs(got, want), max_abs(got2, want2));
}

inline double feed_forward_error(std::uint64_t seed) {
    Rng rng(seed);
    nc::ParamStore store;
    const auto p = nc::FeedForwardParams::create(store, "f", 6, 10, rng);
    randomize(store, rng);
    const auto x = random_matrix(rng, 5, 6);
    const auto got = nc::feed_forward(nc::constant(x), p).value();
    return max_abs(got, oracle::ffn(x, p.w1.value(), p.b1.value(), p.w2.value(), p.b2.value()));
}

struct FusionCase {
    nc::ParamStore store;
    FusionParams params;
    nc::Matrix x_tok, x_ast, tok_emb, ast_emb;
    std::vector<bool> token_mask, node_mask;
    align::MatchMap map;
};

inline FusionCase fusion_case(std::uint64_t seed, FusionMode mode) {
    Rng rng(seed);
    FusionCase c;
    const Eigen::Index l = 7, d = 8;
    c.params = FusionParams::create(c.store, "fusion", mode, {d, 2, 4}, rng);
    randomize(c.store, rng);
    c.x_tok = random_matrix(rng, l, d);
    c.x_ast = random_matrix(rng, l, d);
    c.tok_emb = random_matrix(rng, l, d);
    c.ast_emb = random_matrix(rng, l, d);
    const auto n_tok = 3 + rng.below(5);
    const auto n_ast = 3 + rng.below(5);
    c.token_mask.assign(static_cast<std::size_t>(l), false);
    c.node_mask.assign(static_cast<std::size_t>(l), false);
    for (std::size_t i = 0; i < static_cast<std::size_t>(l); ++i) {
        c.token_mask[i] = i < n_tok;
        c.node_mask[i] = i < n_ast;
    }
    // Padded rows of the embeddings are zero, as the model produces them.
    c.tok_emb = oracle::zero_rows(c.tok_emb, c.token_mask);
    c.ast_emb = oracle::zero_rows(c.ast_emb, c.node_mask);
    std::size_t cursor = 0;
    for (std::size_t leaf = 0; leaf < n_ast && cursor < n_tok; ++leaf) {
        if (rng.uniform() < 0.4) continue;
        const auto start = cursor + rng.below(2);
        const auto end = std::min(n_tok, start + 1 + rng.below(2));
        if (start >= end) break;
        c.map[static_cast<int>(leaf)] = {start, end};
        cursor = end;
    }
    return c;
}

inline oracle::Mat oracle_f1(const FusionCase& c) {
    const auto& p = c.params;
    const auto q = oracle::add_bias(oracle::matmul(c.x_ast, p.w_q.value()), p.b_q.value());
    const auto k = oracle::add_bias(oracle::matmul(c.x_tok, p.w_k.value()), p.b_k.value());
    const auto v = oracle::add_bias(oracle::matmul(c.x_tok, p.w_v.value()), p.b_v.value());
    const auto a = oracle::attention_head(q, k, v, oracle::key_mask(c.node_mask.size(), c.token_mask));
    return oracle::zero_rows(a, c.node_mask);
}

inline oracle::Mat oracle_fuse(const FusionCase& c) {
    const auto f1 = oracle_f1(c);
    oracle::Mat second;
    switch (c.params.mode) {
    case FusionMode::Fgfm:
        second = c.tok_emb;
        for (const auto& [leaf, span] : c.map)
            for (auto r = span.start; r < span.end; ++r)
                for (Eigen::Index j = 0; j < second.cols(); ++j)
                    second(static_cast<Eigen::Index>(r), j) += c.ast_emb(leaf, j);
        break;
    case FusionMode::AstOnly:
        second = c.ast_emb;
        break;
    case FusionMode::SelfAttn:
        second = oracle::zero_rows(oracle::mha(c.ast_emb, c.tok_emb, c.tok_emb, weights_of(*c.params.san),
                                               oracle::key_mask(c.node_mask.size(), c.token_mask)),
                                   c.node_mask);
        break;
    case FusionMode::Concat: {
        oracle::Mat joined(c.tok_emb.rows(), 2 * c.tok_emb.cols());
        for (Eigen::Index i = 0; i < joined.rows(); ++i)
            for (Eigen::Index j = 0; j < c.tok_emb.cols(); ++j) {
                joined(i, j) = c.tok_emb(i, j);
                joined(i, c.tok_emb.cols() + j) = c.ast_emb(i, j);
            }
        std::vector<bool> any(c.token_mask.size());
        for (std::size_t i = 0; i < any.size(); ++i) any[i] = c.token_mask[i] || c.node_mask[i];
        second = oracle::zero_rows(oracle::add_bias(oracle::matmul(joined, c.params.w_cat.value()),
                                                    c.params.b_cat.value()),
                                   any);
        break;
    }
    }
    return f1 + second;
}

inline FusionInputs inputs_of(const FusionCase& c) {
    return {nc::constant(c.x_tok), nc::constant(c.x_ast), nc::constant(c.tok_emb), nc::constant(c.ast_emb),
            c.token_mask, c.node_mask};
}

inline double fuse_f1_error(std::uint64_t seed) {
    const auto c = fusion_case(seed, FusionMode::Fgfm);
    return max_abs(fuse_f1(inputs_of(c), c.params).value(), oracle_f1(c));
}

inline double fuse_error(std::uint64_t seed, FusionMode mode) {
    const auto c = fusion_case(seed, mode);
    return max_abs(fuse(inputs_of(c), c.map, c.params).value(), oracle_fuse(c));
}

struct DecoderCase {
    nc::ParamStore store;
    DecoderParams params;
    nc::Matrix x_tok, fused;
    std::vector<bool> token_mask, fused_mask;
    std::vector<int> input, target;
};

inline DecoderCase decoder_case(std::uint64_t seed) {
    Rng rng(seed);
    DecoderCase c;
    const Eigen::Index d = 8, vocab = 11;
    c.params = DecoderParams::create(c.store, "dec", {d, 2, 4}, 12, 2, vocab, rng);
    randomize(c.store, rng);
    c.x_tok = random_matrix(rng, 6, d);
    c.fused = random_matrix(rng, 6, d);
    c.token_mask = random_mask(rng, 6);
    c.fused_mask = random_mask(rng, 6);
    const auto t = 3 + rng.below(4);
    c.input.push_back(1);
    for (std::size_t i = 1; i < t; ++i) c.input.push_back(static_cast<int>(2 + rng.below(vocab - 2)));
    for (std::size_t i = 1; i < t; ++i) c.target.push_back(c.input[i]);
    c.target.push_back(2);
    if (t > 3) c.input.back() = 0, c.target.back() = 0; // a PAD tail position
    return c;
}

inline oracle::Mat oracle_decoder(const DecoderCase& c) {
    const auto t = static_cast<Eigen::Index>(c.input.size());
    const auto& emb = c.params.embedding.value();
    oracle::Mat y(t, emb.cols());
    for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index j = 0; j < emb.cols(); ++j)
            y(i, j) = c.input[static_cast<std::size_t>(i)] == 0 ? 0.0 : emb(c.input[static_cast<std::size_t>(i)], j);
    y += oracle::sinusoid(t, emb.cols());
    std::vector<bool> self_keys(c.input.size());
    for (std::size_t i = 0; i < c.input.size(); ++i) self_keys[i] = c.input[i] != 0;
    for (const auto& l : c.params.layers) {
        auto a = oracle::mha(y, y, y, weights_of(l.self_attention), oracle::causal(self_keys));
        const auto y_d = oracle::layer_norm(y + a, l.norm1.gain.value(), l.norm1.bias.value());
        auto b = oracle::mha(y_d, c.x_tok, c.x_tok, weights_of(l.code_attention),
                             oracle::key_mask(c.input.size(), c.token_mask));
        const auto y_tok = oracle::layer_norm(y_d + b, l.norm2.gain.value(), l.norm2.bias.value());
        auto f = oracle::mha(y_tok, c.fused, c.fused, weights_of(l.fgf_attention),
                             oracle::key_mask(c.input.size(), c.fused_mask));
        const auto y_td = oracle::layer_norm(y_tok + f, l.norm3.gain.value(), l.norm3.bias.value());
        const auto h = oracle::ffn(y_td, l.ffn.w1.value(), l.ffn.b1.value(), l.ffn.w2.value(), l.ffn.b2.value());
        y = oracle::layer_norm(y_td + h, l.norm4.gain.value(), l.norm4.bias.value());
    }
    return oracle::add_bias(oracle::matmul(y, c.params.w_out.value()), c.params.b_out.value());
}

inline DecoderMemory memory_of(const DecoderCase& c) {
    return {nc::constant(c.x_tok), c.token_mask, nc::constant(c.fused), c.fused_mask};
}

inline double decoder_error(std::uint64_t seed) {
    const auto c = decoder_case(seed);
    return max_abs(decoder_forward(c.input, memory_of(c), c.params).value(), oracle_decoder(c));
}

inline double cross_entropy_error(std::uint64_t seed) {
    const auto c = decoder_case(seed);
    const auto logits = decoder_forward(c.input, memory_of(c), c.params);
    const double got = cross_entropy(logits, c.target).value()(0, 0);
    return std::abs(got - oracle::cross_entropy(logits.value(), c.target));
}

inline double encoder_error(std::uint64_t seed) {
    Rng rng(seed);
    nc::ParamStore store;
    const auto stack = EncoderStack::create(store, "enc", {8, 2, 4}, 12, 2, rng);
    randomize(store, rng);
    const auto x = random_matrix(rng, 6, 8);
    const auto mask = random_mask(rng, 6);
    return max_abs(encoder_forward(nc::constant(x), stack, mask).value(), oracle_encoder(x, stack, mask));
}

} // namespace checks
