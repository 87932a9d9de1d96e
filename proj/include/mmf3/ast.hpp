#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mmf3::ast {

inline constexpr std::string_view kLeafPrefix = "ter_";

struct AstNode {
    int id = 0;
    std::string label;
    std::vector<int> children;
    bool is_leaf = false;
};

// Unchecked node list as read from the interchange format.
struct AstRecord {
    std::vector<AstNode> nodes;
};

enum class AstErrorKind { Malformed, CycleError, MultipleRoots, LeafPrefixViolation, BadIdOrder };

std::string_view to_string(AstErrorKind kind);

class AstError : public std::runtime_error {
  public:
    AstError(AstErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    AstErrorKind kind() const { return kind_; }

  private:
    AstErrorKind kind_;
};

// A validated tree: ids are 0..n-1 in pre-order, node 0 is the root, leaves
// are exactly the childless nodes and exactly the "ter_"-labelled ones.
class Ast {
  public:
    const std::vector<AstNode>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    const AstNode& operator[](std::size_t i) const { return nodes_[i]; }

    nlohmann::json to_json() const;

    friend bool operator==(const Ast& a, const Ast& b);

  private:
    friend Ast validate_ast(AstRecord record);
    std::vector<AstNode> nodes_;
};

// Parses {"nodes":[{"id":..,"label":..,"children":[..]}, ...]} without
// checking tree invariants. Schema problems raise AstError(Malformed).
AstRecord parse_ast_record(const nlohmann::json& j);

Ast validate_ast(AstRecord record);

Ast load_ast_file(const std::filesystem::path& path);

inline constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

// Number of nodes kept when the tree is cut to its first `limit` pre-order ids.
inline std::size_t kept_nodes(const Ast& ast, std::size_t limit) { return std::min(ast.size(), limit); }

// Leaf ids in ascending (pre-order) order, restricted to ids < limit.
std::vector<int> leaf_ids(const Ast& ast, std::size_t limit = kNoLimit);

// Leaf label with the "ter_" prefix removed.
std::string_view leaf_value(const AstNode& node);

// Undirected parent<->child adjacency over the kept prefix of the tree.
Eigen::MatrixXd adjacency(const Ast& ast, std::size_t limit = kNoLimit);

// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
Eigen::MatrixXd build_propagation(const Ast& ast, std::size_t limit = kNoLimit);

// Frozen per-label vectors: each row is drawn from a generator seeded by a
// stable hash of the label mixed with `seed`, entries ~ N(0, 1/dim).
Eigen::MatrixXd init_node_embeddings(const Ast& ast, std::size_t dim, std::uint64_t seed,
                                     std::size_t limit = kNoLimit);

Eigen::VectorXd label_embedding(std::string_view label, std::size_t dim, std::uint64_t seed);

} // namespace mmf3::ast
