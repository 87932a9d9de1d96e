#pragma once

// Dense reverse-mode autodiff over row-major-agnostic Eigen matrices. Every
// value is a 2-D double matrix; scalars are 1x1. Each op records its parents
// and a backward closure when any input requires a gradient.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace mmf3 {
class Rng;
}

namespace mmf3::nc {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
// allowed(i, j): query row i may attend to key row j.
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Node {
    Matrix value;
    Matrix grad; // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
};

class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    // Gradient accumulated by backward(); zero-filled when nothing flowed in.
    Matrix grad() const;

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var leaf(Matrix value, bool requires_grad);

bool grad_enabled();

// Disables graph recording for its lifetime (inference, finite differences).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

// Reverse sweep from a 1x1 loss. Gradients accumulate into every reachable
// node that requires one (parameters keep theirs across calls).
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b); // a * b^T
Var add(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row); // broadcast a 1xC row over every row of a
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var hadamard_const(const Var& a, const Matrix& m);
Var sum(const Var& a);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index width);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(const Var& a, const Var& b);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
// Zeroes rows where keep(r) is false.
Var mask_rows(const Var& a, const std::vector<bool>& keep);

// Row softmax with disallowed entries pinned to exactly 0. A row with no
// allowed entry raises NumericError.
Var masked_softmax(const Var& scores, const BoolMatrix& allowed);
Var softmax_rows(const Var& scores);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Row lookup into an embedding table; rows whose id equals `zero_id` are zero.
Var embedding(const Var& table, std::span<const int> ids, int zero_id = -1);

// out = a, then for each (src, dst) pair row dst of out += row src of b.
Var scatter_add_rows(const Var& a, const Var& b, std::span<const std::pair<Eigen::Index, Eigen::Index>> src_dst);

// Inverted dropout; identity when rng is null or rate is 0.
Var dropout(const Var& x, double rate, Rng* rng);

// Sum over rows with mask(r) of -log softmax(logits.row(r))[targets[r]], as 1x1.
Var cross_entropy_sum(const Var& logits, std::span<const int> targets, const std::vector<bool>& mask);

// Plain-value helpers shared by inference and tests.
Matrix softmax_value(const Matrix& scores);
RowVector log_softmax_row(const RowVector& logits);

class Parameter {
  public:
    Parameter() = default;
    Parameter(std::string name, Matrix value, bool trainable)
        : name_(std::move(name)), var_(leaf(std::move(value), trainable)), trainable_(trainable) {}

    const std::string& name() const { return name_; }
    const Var& var() const { return var_; }
    operator const Var&() const { return var_; }
    bool trainable() const { return trainable_; }

    const Matrix& value() const { return var_.value(); }
    Matrix& mutable_value() const { return var_.node().value; }
    Matrix& grad_storage() const { return var_.node().grad; }
    void zero_grad() const { var_.node().grad.resize(0, 0); }

  private:
    std::string name_;
    Var var_;
    bool trainable_ = true;
};

// Ordered registry of named parameters (insertion order is the checkpoint order).
class ParamStore {
  public:
    // Glorot-uniform in +-sqrt(6 / (rows + cols)).
    Parameter glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng);
    Parameter constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double fill);
    Parameter add(Parameter p);

    const std::vector<Parameter>& all() const { return params_; }
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const { return params_.size(); }

    void zero_grad() const;
    double grad_norm() const;
    std::size_t scalar_count() const;

  private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace mmf3::nc
