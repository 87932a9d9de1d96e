#include "mmf3/ast.hpp"

#include <fstream>

#include "mmf3/rng.hpp"

namespace mmf3::ast {

std::string_view to_string(AstErrorKind kind) {
    switch (kind) {
    case AstErrorKind::Malformed: return "Malformed";
    case AstErrorKind::CycleError: return "CycleError";
    case AstErrorKind::MultipleRoots: return "MultipleRoots";
    case AstErrorKind::LeafPrefixViolation: return "LeafPrefixViolation";
    case AstErrorKind::BadIdOrder: return "BadIdOrder";
    }
    return "Unknown";
}

namespace {

bool has_leaf_prefix(std::string_view label) { return label.substr(0, kLeafPrefix.size()) == kLeafPrefix; }

} // namespace

bool operator==(const Ast& a, const Ast& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].label != b[i].label || a[i].children != b[i].children) return false;
    }
    return true;
}

nlohmann::json Ast::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nodes.push_back({{"id", n.id}, {"label", n.label}, {"children", n.children}});
    }
    return {{"nodes", std::move(nodes)}};
}

AstRecord parse_ast_record(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("nodes") || !j.at("nodes").is_array()) {
        throw AstError(AstErrorKind::Malformed, "expected an object with a \"nodes\" array");
    }
    AstRecord record;
    for (const auto& jn : j.at("nodes")) {
        if (!jn.is_object() || !jn.contains("id") || !jn.contains("label") || !jn.at("id").is_number_integer() ||
            !jn.at("label").is_string()) {
            throw AstError(AstErrorKind::Malformed, "node needs integer \"id\" and string \"label\"");
        }
        AstNode node;
        node.id = jn.at("id").get<int>();
        node.label = jn.at("label").get<std::string>();
        if (jn.contains("children")) {
            const auto& jc = jn.at("children");
            if (!jc.is_array()) throw AstError(AstErrorKind::Malformed, "\"children\" must be an array");
            for (const auto& c : jc) {
                if (!c.is_number_integer()) throw AstError(AstErrorKind::Malformed, "child ids must be integers");
                node.children.push_back(c.get<int>());
            }
        }
        record.nodes.push_back(std::move(node));
    }
    return record;
}

Ast validate_ast(AstRecord record) {
    auto& nodes = record.nodes;
    const auto n = static_cast<int>(nodes.size());
    if (n == 0) throw AstError(AstErrorKind::Malformed, "empty node list");

    for (int i = 0; i < n; ++i) {
        if (nodes[i].id != i) {
            throw AstError(AstErrorKind::BadIdOrder,
                           "node at position " + std::to_string(i) + " has id " + std::to_string(nodes[i].id));
        }
        for (int c : nodes[i].children) {
            if (c < 0 || c >= n) {
                throw AstError(AstErrorKind::Malformed,
                               "node " + std::to_string(i) + " links to missing child " + std::to_string(c));
            }
        }
    }

    for (auto& node : nodes) {
        const bool prefixed = has_leaf_prefix(node.label);
        const bool childless = node.children.empty();
        if (prefixed != childless) {
            throw AstError(AstErrorKind::LeafPrefixViolation,
                           "node " + std::to_string(node.id) + " (\"" + node.label + "\") " +
                               (prefixed ? "has children" : "is a leaf without the ter_ prefix"));
        }
        node.is_leaf = childless;
    }

    std::vector<int> parents(n, 0);
    for (const auto& node : nodes) {
        for (int c : node.children) {
            if (++parents[c] > 1) {
                throw AstError(AstErrorKind::CycleError, "node " + std::to_string(c) + " has more than one parent");
            }
        }
    }
    int roots = 0;
    for (int i = 0; i < n; ++i) roots += parents[i] == 0 ? 1 : 0;
    if (roots > 1) throw AstError(AstErrorKind::MultipleRoots, std::to_string(roots) + " parentless nodes");
    if (roots == 0 || parents[0] != 0) {
        // Every node has a parent, or node 0 does: either way a cycle runs through the links.
        throw AstError(roots == 0 ? AstErrorKind::CycleError : AstErrorKind::BadIdOrder,
                       roots == 0 ? "no parentless node" : "root is not node 0");
    }

    // Iterative pre-order walk; visiting order must reproduce 0..n-1.
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    int expected = 0;
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (seen[id]) throw AstError(AstErrorKind::CycleError, "node " + std::to_string(id) + " reached twice");
        seen[id] = 1;
        if (id != expected) {
            throw AstError(AstErrorKind::BadIdOrder, "pre-order position " + std::to_string(expected) +
                                                         " holds node " + std::to_string(id));
        }
        ++expected;
        const auto& ch = nodes[id].children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    if (expected != n) throw AstError(AstErrorKind::CycleError, "nodes unreachable from the root");

    Ast ast;
    ast.nodes_ = std::move(nodes);
    return ast;
}

Ast load_ast_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AstError(AstErrorKind::Malformed, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw AstError(AstErrorKind::Malformed, path.string() + ": " + e.what());
    }
    return validate_ast(parse_ast_record(j));
}

std::vector<int> leaf_ids(const Ast& ast, std::size_t limit) {
    std::vector<int> out;
    const auto n = kept_nodes(ast, limit);
    for (std::size_t i = 0; i < n; ++i) {
        if (ast[i].is_leaf) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::string_view leaf_value(const AstNode& node) {
    std::string_view label = node.label;
    if (has_leaf_prefix(label)) label.remove_prefix(kLeafPrefix.size());
    return label;
}

Eigen::MatrixXd adjacency(const Ast& ast, std::size_t limit) {
    const auto n = static_cast<Eigen::Index>(kept_nodes(ast, limit));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c : ast[i].children) {
            if (c < n) {
                a(i, c) = 1.0;
                a(c, i) = 1.0;
            }
        }
    }
    return a;
}

Eigen::MatrixXd build_propagation(const Ast& ast, std::size_t limit) {
    Eigen::MatrixXd a_hat = adjacency(ast, limit);
    a_hat.diagonal().array() += 1.0;
    const Eigen::VectorXd inv_sqrt_deg = a_hat.rowwise().sum().array().rsqrt();
    return inv_sqrt_deg.asDiagonal() * a_hat * inv_sqrt_deg.asDiagonal();
}

Eigen::VectorXd label_embedding(std::string_view label, std::size_t dim, std::uint64_t seed) {
    Rng rng(mix64(fnv1a(label) ^ mix64(seed)));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = rng.normal() * scale;
    return v;
}

Eigen::MatrixXd init_node_embeddings(const Ast& ast, std::size_t dim, std::uint64_t seed, std::size_t limit) {
    const auto n = static_cast<Eigen::Index>(kept_nodes(ast, limit));
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = label_embedding(ast[i].label, dim, seed).transpose();
    return x;
}

} // namespace mmf3::ast
