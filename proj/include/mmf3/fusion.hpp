#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmf3/align.hpp"
#include "mmf3/config.hpp"
#include "mmf3/layers.hpp"

namespace mmf3 {

struct FusionParams {
    FusionMode mode = FusionMode::Fgfm;
    Eigen::Index d_k = 64;
    // Per-position ("1x1 convolution") projections for F1.
    nc::Parameter w_q, b_q; // from X_e^ast, d x d_k
    nc::Parameter w_k, b_k; // from X_e^tok, d x d_k
    nc::Parameter w_v, b_v; // from X_e^tok, d x d
    // self_attn mode: attention with the AST embedding as query, token embedding as key/value.
    std::optional<nc::AttentionParams> san;
    // concat mode: [token_emb | ast_emb] (L x 2d) projected back to d.
    nc::Parameter w_cat, b_cat;

    static FusionParams create(nc::ParamStore& store, const std::string& prefix, FusionMode mode,
                               const nc::AttentionConfig& attention, Rng& rng);
};

// Inputs share one row count L. Masks are true on real token / real node rows.
struct FusionInputs {
    nc::Var x_e_tok;
    nc::Var x_e_ast;
    nc::Var token_emb;
    nc::Var ast_emb;
    std::vector<bool> token_mask;
    std::vector<bool> node_mask;
};

// F1 = softmax(Q_ae K_te^T / sqrt(d_k)) V_te with PAD token keys excluded and
// padded AST query rows zeroed.
nc::Var fuse_f1(const FusionInputs& in, const FusionParams& params, nc::Matrix* weights = nullptr);

// F2 = token_emb with matched leaf rows of ast_emb added across their spans.
nc::Var fuse_f2(const nc::Var& token_emb, const nc::Var& ast_emb, const align::MatchMap& map);

// F = F1 + (mode-specific second term). Rows that are neither a real token
// nor a real node carry only F1's zeros.
nc::Var fuse(const FusionInputs& in, const align::MatchMap& map, const FusionParams& params);

// Keys visible to attention over F: real token or real node rows.
std::vector<bool> fused_mask(const std::vector<bool>& token_mask, const std::vector<bool>& node_mask);

} // namespace mmf3
