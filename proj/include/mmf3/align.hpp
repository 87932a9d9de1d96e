#pragma once

#include <cstddef>
#include <map>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mmf3/ast.hpp"
#include "mmf3/corpus.hpp"

namespace mmf3::align {

// Half-open token range [start, end).
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Span&, const Span&) = default;
};

// Leaf id -> matched token span, ordered by leaf id.
using MatchMap = std::map<int, Span>;

// Walks leaves in pre-order. Each leaf value is normalized with the code
// tokenizer and matched against the first equal contiguous token span at or
// after a cursor; a match moves the cursor past the span, a miss leaves it.
MatchMap build_match_map(const ast::Ast& tree, const corpus::TokenSeq& tokens);

// Drops entries whose leaf id is >= max_nodes or whose span ends past
// max_tokens: leaves cut by truncation are treated as unmatched.
MatchMap clip_match_map(const MatchMap& map, std::size_t max_tokens, std::size_t max_nodes);

// Throws ShapeError unless spans are in range, disjoint and increasing.
void check_match_map(const MatchMap& map, std::size_t token_rows, std::size_t node_rows);

// F2: token embeddings with each matched leaf row added onto every row of its span.
Eigen::MatrixXd apply_f2(const Eigen::MatrixXd& token_emb, const Eigen::MatrixXd& ast_emb, const MatchMap& map);

// {"<leaf_id>": [start, end], ...}
nlohmann::json to_json(const MatchMap& map);

} // namespace mmf3::align
