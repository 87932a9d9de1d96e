#pragma once

#include <string>

#include "mmf3/tensor.hpp"

namespace mmf3::nc {

// Sinusoidal table: (pos, 2i) = sin(pos / 10000^(2i/d)), (pos, 2i+1) = cos(...).
Matrix positional_encoding(Eigen::Index length, Eigen::Index d_model);

struct AttentionConfig {
    Eigen::Index d_model = 64;
    Eigen::Index heads = 4;
    Eigen::Index d_k = 64; // per-head width of Q, K and V
};

// Per-head projections are stored side by side: head j owns columns
// [j*d_k, (j+1)*d_k) of w_q, w_k and w_v.
struct AttentionParams {
    AttentionConfig config;
    Parameter w_q; // d_model x heads*d_k
    Parameter w_k;
    Parameter w_v;
    Parameter w_o; // heads*d_k x d_model

    static AttentionParams create(ParamStore& store, const std::string& prefix, const AttentionConfig& config,
                                  Rng& rng);
};

// Optional capture of the per-head attention weights (rows = queries).
struct AttentionTrace {
    std::vector<Matrix> weights;
};

// Concat_j softmax(Q_j K_j^T / sqrt(d_k)) V_j, then W_o. `allowed`, when
// non-empty, marks which key rows each query row may attend to.
Var multi_head_attention(const Var& query_in, const Var& key_in, const Var& value_in, const AttentionParams& p,
                         const BoolMatrix& allowed = {}, AttentionTrace* trace = nullptr);

struct FeedForwardParams {
    Parameter w1; // d x ff
    Parameter b1; // 1 x ff
    Parameter w2; // ff x d
    Parameter b2; // 1 x d

    static FeedForwardParams create(ParamStore& store, const std::string& prefix, Eigen::Index d, Eigen::Index ff,
                                    Rng& rng);
};

// max(0, x W1 + b1) W2 + b2
Var feed_forward(const Var& x, const FeedForwardParams& p);

struct LayerNormParams {
    Parameter gain;
    Parameter bias;

    static LayerNormParams create(ParamStore& store, const std::string& prefix, Eigen::Index d);
};

inline Var layer_norm(const Var& x, const LayerNormParams& p) { return layer_norm(x, p.gain, p.bias); }

// allowed(i, j) = key_mask[j]
BoolMatrix key_padding_mask(Eigen::Index queries, const std::vector<bool>& key_mask);
// allowed(i, j) = j <= i && key_mask[j]
BoolMatrix causal_mask(const std::vector<bool>& key_mask);

} // namespace mmf3::nc
