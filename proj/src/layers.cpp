#include "mmf3/layers.hpp"

#include <cmath>

#include "mmf3/errors.hpp"

namespace mmf3::nc {

Matrix positional_encoding(Eigen::Index length, Eigen::Index d_model) {
    if (d_model <= 0 || d_model % 2 != 0) throw std::invalid_argument("positional encoding needs an even d_model");
    Matrix pe(length, d_model);
    for (Eigen::Index pos = 0; pos < length; ++pos) {
        for (Eigen::Index i = 0; i < d_model / 2; ++i) {
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
            pe(pos, 2 * i) = std::sin(angle);
            pe(pos, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

AttentionParams AttentionParams::create(ParamStore& store, const std::string& prefix, const AttentionConfig& config,
                                        Rng& rng) {
    if (config.d_model <= 0 || config.heads <= 0 || config.d_k <= 0) {
        throw std::invalid_argument("attention dimensions must be positive");
    }
    const auto inner = config.heads * config.d_k;
    AttentionParams p;
    p.config = config;
    p.w_q = store.glorot(prefix + ".w_q", config.d_model, inner, rng);
    p.w_k = store.glorot(prefix + ".w_k", config.d_model, inner, rng);
    p.w_v = store.glorot(prefix + ".w_v", config.d_model, inner, rng);
    p.w_o = store.glorot(prefix + ".w_o", inner, config.d_model, rng);
    return p;
}

Var multi_head_attention(const Var& query_in, const Var& key_in, const Var& value_in, const AttentionParams& p,
                         const BoolMatrix& allowed, AttentionTrace* trace) {
    const auto& cfg = p.config;
    if (query_in.cols() != cfg.d_model || key_in.cols() != cfg.d_model || value_in.cols() != cfg.d_model) {
        throw ShapeError("multi_head_attention: input width differs from d_model");
    }
    if (key_in.rows() != value_in.rows()) throw ShapeError("multi_head_attention: key/value row counts differ");
    const bool masked = allowed.size() != 0;
    if (masked && (allowed.rows() != query_in.rows() || allowed.cols() != key_in.rows())) {
        throw ShapeError("multi_head_attention: mask must be queries x keys");
    }

    const Var q = matmul(query_in, p.w_q);
    const Var k = matmul(key_in, p.w_k);
    const Var v = matmul(value_in, p.w_v);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));

    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg.heads));
    if (trace) trace->weights.clear();
    for (Eigen::Index h = 0; h < cfg.heads; ++h) {
        const auto off = h * cfg.d_k;
        const Var scores = scale(matmul_nt(slice_cols(q, off, cfg.d_k), slice_cols(k, off, cfg.d_k)), inv_sqrt_dk);
        const Var weights = masked ? masked_softmax(scores, allowed) : softmax_rows(scores);
        if (trace) trace->weights.push_back(weights.value());
        heads.push_back(matmul(weights, slice_cols(v, off, cfg.d_k)));
    }
    const Var joined = heads.size() == 1 ? heads.front() : concat_cols(std::span<const Var>(heads));
    return matmul(joined, p.w_o);
}

FeedForwardParams FeedForwardParams::create(ParamStore& store, const std::string& prefix, Eigen::Index d,
                                            Eigen::Index ff, Rng& rng) {
    FeedForwardParams p;
    p.w1 = store.glorot(prefix + ".w1", d, ff, rng);
    p.b1 = store.constant(prefix + ".b1", 1, ff, 0.0);
    p.w2 = store.glorot(prefix + ".w2", ff, d, rng);
    p.b2 = store.constant(prefix + ".b2", 1, d, 0.0);
    return p;
}

Var feed_forward(const Var& x, const FeedForwardParams& p) {
    if (x.cols() != p.w1.value().rows()) throw ShapeError("feed_forward: input width differs from W1 rows");
    return add_row(matmul(relu(add_row(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

LayerNormParams LayerNormParams::create(ParamStore& store, const std::string& prefix, Eigen::Index d) {
    return {store.constant(prefix + ".gain", 1, d, 1.0), store.constant(prefix + ".bias", 1, d, 0.0)};
}

BoolMatrix key_padding_mask(Eigen::Index queries, const std::vector<bool>& key_mask) {
    BoolMatrix m(queries, static_cast<Eigen::Index>(key_mask.size()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j).setConstant(key_mask[static_cast<std::size_t>(j)]);
    return m;
}

BoolMatrix causal_mask(const std::vector<bool>& key_mask) {
    const auto n = static_cast<Eigen::Index>(key_mask.size());
    BoolMatrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i && key_mask[static_cast<std::size_t>(j)];
    }
    return m;
}

} // namespace mmf3::nc
