#include "mmf3/fusion.hpp"

#include <cmath>

#include "mmf3/errors.hpp"

namespace mmf3 {

FusionParams FusionParams::create(nc::ParamStore& store, const std::string& prefix, FusionMode mode,
                                  const nc::AttentionConfig& attention, Rng& rng) {
    const auto d = attention.d_model;
    FusionParams p;
    p.mode = mode;
    p.d_k = attention.d_k;
    p.w_q = store.glorot(prefix + ".w_q", d, p.d_k, rng);
    p.b_q = store.constant(prefix + ".b_q", 1, p.d_k, 0.0);
    p.w_k = store.glorot(prefix + ".w_k", d, p.d_k, rng);
    p.b_k = store.constant(prefix + ".b_k", 1, p.d_k, 0.0);
    p.w_v = store.glorot(prefix + ".w_v", d, d, rng);
    p.b_v = store.constant(prefix + ".b_v", 1, d, 0.0);
    if (mode == FusionMode::SelfAttn) {
        p.san = nc::AttentionParams::create(store, prefix + ".san", attention, rng);
    } else if (mode == FusionMode::Concat) {
        p.w_cat = store.glorot(prefix + ".w_cat", 2 * d, d, rng);
        p.b_cat = store.constant(prefix + ".b_cat", 1, d, 0.0);
    }
    return p;
}

namespace {

void check_inputs(const FusionInputs& in) {
    const auto l = in.x_e_tok.rows();
    const auto d = in.x_e_tok.cols();
    for (const auto* v : {&in.x_e_ast, &in.token_emb, &in.ast_emb}) {
        if (v->rows() != l || v->cols() != d) throw ShapeError("fusion: inputs must all be L x d");
    }
    if (static_cast<Eigen::Index>(in.token_mask.size()) != l || static_cast<Eigen::Index>(in.node_mask.size()) != l) {
        throw ShapeError("fusion: mask lengths must equal L");
    }
}

} // namespace

std::vector<bool> fused_mask(const std::vector<bool>& token_mask, const std::vector<bool>& node_mask) {
    if (token_mask.size() != node_mask.size()) throw ShapeError("fused_mask: lengths differ");
    std::vector<bool> out(token_mask.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = token_mask[i] || node_mask[i];
    return out;
}

nc::Var fuse_f1(const FusionInputs& in, const FusionParams& params, nc::Matrix* weights) {
    check_inputs(in);
    const auto q = nc::add_row(nc::matmul(in.x_e_ast, params.w_q), params.b_q);
    const auto k = nc::add_row(nc::matmul(in.x_e_tok, params.w_k), params.b_k);
    const auto v = nc::add_row(nc::matmul(in.x_e_tok, params.w_v), params.b_v);
    const auto scores = nc::scale(nc::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(params.d_k)));
    const auto attn = nc::masked_softmax(scores, nc::key_padding_mask(scores.rows(), in.token_mask));
    if (weights) *weights = attn.value();
    return nc::mask_rows(nc::matmul(attn, v), in.node_mask);
}

nc::Var fuse_f2(const nc::Var& token_emb, const nc::Var& ast_emb, const align::MatchMap& map) {
    align::check_match_map(map, static_cast<std::size_t>(token_emb.rows()), static_cast<std::size_t>(ast_emb.rows()));
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    for (const auto& [leaf, span] : map) {
        for (auto r = span.start; r < span.end; ++r) pairs.emplace_back(leaf, static_cast<Eigen::Index>(r));
    }
    return nc::scatter_add_rows(token_emb, ast_emb, pairs);
}

nc::Var fuse(const FusionInputs& in, const align::MatchMap& map, const FusionParams& params) {
    const auto f1 = fuse_f1(in, params);
    nc::Var second;
    switch (params.mode) {
    case FusionMode::Fgfm:
        second = fuse_f2(in.token_emb, in.ast_emb, map);
        break;
    case FusionMode::AstOnly:
        second = in.ast_emb;
        break;
    case FusionMode::SelfAttn: {
        if (!params.san) throw ShapeError("fusion: self_attn mode without attention parameters");
        const auto allowed = nc::key_padding_mask(in.ast_emb.rows(), in.token_mask);
        second = nc::mask_rows(nc::multi_head_attention(in.ast_emb, in.token_emb, in.token_emb, *params.san, allowed),
                               in.node_mask);
        break;
    }
    case FusionMode::Concat: {
        const auto joined = nc::concat_cols(in.token_emb, in.ast_emb);
        second = nc::mask_rows(nc::add_row(nc::matmul(joined, params.w_cat), params.b_cat),
                               fused_mask(in.token_mask, in.node_mask));
        break;
    }
    default:
        throw std::invalid_argument("fusion: unknown mode");
    }
    return nc::add(f1, second);
}

} // namespace mmf3
