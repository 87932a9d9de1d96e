#include "mmf3/align.hpp"

#include <algorithm>

#include "mmf3/errors.hpp"

namespace mmf3::align {

MatchMap build_match_map(const ast::Ast& tree, const corpus::TokenSeq& tokens) {
    MatchMap map;
    std::size_t cursor = 0;
    for (int id : ast::leaf_ids(tree)) {
        const auto value = corpus::tokenize_code(ast::leaf_value(tree[static_cast<std::size_t>(id)]));
        if (value.empty() || value.size() > tokens.size()) continue;
        const auto hit = std::search(tokens.begin() + static_cast<std::ptrdiff_t>(cursor), tokens.end(),
                                     value.begin(), value.end());
        if (hit == tokens.end()) continue;
        const auto start = static_cast<std::size_t>(hit - tokens.begin());
        map.emplace(id, Span{start, start + value.size()});
        cursor = start + value.size();
    }
    return map;
}

MatchMap clip_match_map(const MatchMap& map, std::size_t max_tokens, std::size_t max_nodes) {
    MatchMap out;
    for (const auto& [leaf, span] : map) {
        if (static_cast<std::size_t>(leaf) < max_nodes && span.end <= max_tokens) out.emplace(leaf, span);
    }
    return out;
}

void check_match_map(const MatchMap& map, std::size_t token_rows, std::size_t node_rows) {
    std::size_t prev_end = 0;
    for (const auto& [leaf, span] : map) {
        if (leaf < 0 || static_cast<std::size_t>(leaf) >= node_rows) {
            throw ShapeError("match map leaf " + std::to_string(leaf) + " outside " + std::to_string(node_rows) +
                             " AST rows");
        }
        if (span.start >= span.end || span.end > token_rows) {
            throw ShapeError("match map span for leaf " + std::to_string(leaf) + " outside " +
                             std::to_string(token_rows) + " token rows");
        }
        if (span.start < prev_end) {
            throw ShapeError("match map spans overlap or are out of order at leaf " + std::to_string(leaf));
        }
        prev_end = span.end;
    }
}

Eigen::MatrixXd apply_f2(const Eigen::MatrixXd& token_emb, const Eigen::MatrixXd& ast_emb, const MatchMap& map) {
    if (token_emb.cols() != ast_emb.cols()) throw ShapeError("apply_f2: embedding widths differ");
    check_match_map(map, static_cast<std::size_t>(token_emb.rows()), static_cast<std::size_t>(ast_emb.rows()));
    Eigen::MatrixXd f2 = token_emb;
    for (const auto& [leaf, span] : map) {
        for (auto r = span.start; r < span.end; ++r) {
            f2.row(static_cast<Eigen::Index>(r)) += ast_emb.row(leaf);
        }
    }
    return f2;
}

nlohmann::json to_json(const MatchMap& map) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [leaf, span] : map) j[std::to_string(leaf)] = {span.start, span.end};
    return j;
}

} // namespace mmf3::align
