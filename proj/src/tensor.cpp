#include "mmf3/tensor.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "mmf3/errors.hpp"
#include "mmf3/rng.hpp"

namespace mmf3::nc {

namespace {

thread_local bool g_grad_enabled = true;

void accumulate(Node& n, const Matrix& g) {
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

template <typename Fn>
Var make_op(Matrix value, std::vector<std::shared_ptr<Node>> parents, Fn&& fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        if (any) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward = std::forward<Fn>(fn);
        }
    }
    return Var(std::move(node));
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

} // namespace

Matrix Var::grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
}

Var constant(Matrix value) { return leaf(std::move(value), false); }

Var leaf(Matrix value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be a 1x1 scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
    visited.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && p->backward && visited.insert(p).second) stack.emplace_back(p, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    accumulate(loss.node(), Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
    // Interior gradients are only needed during the sweep.
    for (Node* n : order) {
        if (n->backward) n->grad.resize(0, 0);
    }
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out = a.value() * b.value();
    return make_op(std::move(out), {a.ptr(), b.ptr()}, [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
        if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Matrix out = a.value() * b.value().transpose();
    return make_op(std::move(out), {a.ptr(), b.ptr()}, [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad * pb.value);
        if (pb.requires_grad) accumulate(pb, self.grad.transpose() * pa.value);
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value() + b.value();
    return make_op(std::move(out), {a.ptr(), b.ptr()}, [](Node& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make_op(std::move(out), {a.ptr(), row.ptr()}, [](Node& self) {
        accumulate(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) accumulate(*self.parents[1], self.grad.colwise().sum());
    });
}

Var scale(const Var& a, double s) {
    Matrix out = a.value() * s;
    return make_op(std::move(out), {a.ptr()}, [s](Node& self) { accumulate(*self.parents[0], self.grad * s); });
}

Var relu(const Var& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return make_op(std::move(out), {a.ptr()}, [](Node& self) {
        const auto& x = self.parents[0]->value;
        accumulate(*self.parents[0], (x.array() > 0.0).select(self.grad, 0.0).matrix());
    });
}

Var hadamard_const(const Var& a, const Matrix& m) {
    require_same_shape(a.value(), m, "hadamard_const");
    Matrix out = a.value().cwiseProduct(m);
    return make_op(std::move(out), {a.ptr()},
                   [m](Node& self) { accumulate(*self.parents[0], self.grad.cwiseProduct(m)); });
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_op(std::move(out), {a.ptr()}, [](Node& self) {
        const auto& p = *self.parents[0];
        accumulate(*self.parents[0], Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index width) {
    if (start < 0 || width < 0 || start + width > a.cols()) throw ShapeError("slice_cols: range out of bounds");
    Matrix out = a.value().middleCols(start, width);
    return make_op(std::move(out), {a.ptr()}, [start, width](Node& self) {
        auto& p = *self.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(start, width) = self.grad;
        accumulate(p, g);
    });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
    Matrix out = a.value().middleRows(start, count);
    return make_op(std::move(out), {a.ptr()}, [start, count](Node& self) {
        auto& p = *self.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleRows(start, count) = self.grad;
        accumulate(p, g);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
    const auto rows = parts.front().rows();
    Eigen::Index cols = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<Eigen::Index> widths;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
        widths.push_back(p.cols());
        parents.push_back(p.ptr());
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_op(std::move(out), std::move(parents), [widths](Node& self) {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            accumulate(*self.parents[i], self.grad.middleCols(off, widths[i]));
            off += widths[i];
        }
    });
}

Var concat_cols(const Var& a, const Var& b) {
    const Var parts[] = {a, b};
    return concat_cols(std::span<const Var>(parts));
}

Var mask_rows(const Var& a, const std::vector<bool>& keep) {
    if (static_cast<Eigen::Index>(keep.size()) != a.rows()) throw ShapeError("mask_rows: mask length differs");
    Matrix out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        if (!keep[static_cast<std::size_t>(r)]) out.row(r).setZero();
    }
    return make_op(std::move(out), {a.ptr()}, [keep](Node& self) {
        Matrix g = self.grad;
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            if (!keep[static_cast<std::size_t>(r)]) g.row(r).setZero();
        }
        accumulate(*self.parents[0], g);
    });
}

namespace {

Matrix masked_softmax_value(const Matrix& s, const BoolMatrix* allowed) {
    Matrix p = Matrix::Zero(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < s.cols(); ++c) {
            if (!allowed || (*allowed)(r, c)) mx = std::max(mx, s(r, c));
        }
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw NumericError("softmax row " + std::to_string(r) + " has every position masked");
        }
        double total = 0.0;
        for (Eigen::Index c = 0; c < s.cols(); ++c) {
            if (!allowed || (*allowed)(r, c)) {
                p(r, c) = std::exp(s(r, c) - mx);
                total += p(r, c);
            }
        }
        p.row(r) /= total;
    }
    return p;
}

Var softmax_impl(const Var& scores, const BoolMatrix* allowed) {
    Matrix p = masked_softmax_value(scores.value(), allowed);
    return make_op(p, {scores.ptr()}, [p](Node& self) {
        const Eigen::VectorXd dot = (self.grad.cwiseProduct(p)).rowwise().sum();
        Matrix g = p.cwiseProduct(self.grad.colwise() - dot);
        accumulate(*self.parents[0], g);
    });
}

} // namespace

Var masked_softmax(const Var& scores, const BoolMatrix& allowed) {
    if (allowed.rows() != scores.rows() || allowed.cols() != scores.cols()) {
        throw ShapeError("masked_softmax: mask shape differs from scores");
    }
    return softmax_impl(scores, &allowed);
}

Var softmax_rows(const Var& scores) { return softmax_impl(scores, nullptr); }

Matrix softmax_value(const Matrix& scores) { return masked_softmax_value(scores, nullptr); }

RowVector log_softmax_row(const RowVector& logits) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const auto d = x.cols();
    if (d < 2) throw ShapeError("layer_norm: needs at least two features");
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
        throw ShapeError("layer_norm: gain/bias must be 1 x features");
    }
    const Matrix& xv = x.value();
    Eigen::VectorXd inv_std(xv.rows());
    Matrix xhat(xv.rows(), d);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix().rowwise() + bias.value().row(0);
    return make_op(std::move(out), {x.ptr(), gain.ptr(), bias.ptr()}, [xhat, inv_std](Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const Matrix& dy = self.grad;
        if (pg.requires_grad) accumulate(pg, dy.cwiseProduct(xhat).colwise().sum());
        if (pb.requires_grad) accumulate(pb, dy.colwise().sum());
        if (px.requires_grad) {
            const Matrix dxhat = (dy.array().rowwise() * pg.value.row(0).array()).matrix();
            const Eigen::VectorXd mean_d = dxhat.rowwise().mean();
            const Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
            Matrix dx = dxhat;
            dx.colwise() -= mean_d;
            dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
            dx = (dx.array().colwise() * inv_std.array()).matrix();
            accumulate(px, dx);
        }
    });
}

Var embedding(const Var& table, std::span<const int> ids, int zero_id) {
    const auto n = static_cast<Eigen::Index>(ids.size());
    Matrix out = Matrix::Zero(n, table.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const int id = ids[static_cast<std::size_t>(r)];
        if (id == zero_id) continue;
        if (id < 0 || id >= table.rows()) {
            throw DataError("token id " + std::to_string(id) + " outside embedding table of " +
                            std::to_string(table.rows()) + " rows");
        }
        out.row(r) = table.value().row(id);
    }
    std::vector<int> kept(ids.begin(), ids.end());
    return make_op(std::move(out), {table.ptr()}, [kept, zero_id](Node& self) {
        auto& p = *self.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (std::size_t r = 0; r < kept.size(); ++r) {
            if (kept[r] != zero_id) g.row(kept[r]) += self.grad.row(static_cast<Eigen::Index>(r));
        }
        accumulate(p, g);
    });
}

Var scatter_add_rows(const Var& a, const Var& b,
                     std::span<const std::pair<Eigen::Index, Eigen::Index>> src_dst) {
    if (a.cols() != b.cols()) throw ShapeError("scatter_add_rows: column counts differ");
    Matrix out = a.value();
    for (const auto& [src, dst] : src_dst) {
        if (src < 0 || src >= b.rows() || dst < 0 || dst >= a.rows()) {
            throw ShapeError("scatter_add_rows: row index out of range");
        }
        out.row(dst) += b.value().row(src);
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs(src_dst.begin(), src_dst.end());
    return make_op(std::move(out), {a.ptr(), b.ptr()}, [pairs](Node& self) {
        accumulate(*self.parents[0], self.grad);
        auto& pb = *self.parents[1];
        if (pb.requires_grad) {
            Matrix g = Matrix::Zero(pb.value.rows(), pb.value.cols());
            for (const auto& [src, dst] : pairs) g.row(src) += self.grad.row(dst);
            accumulate(pb, g);
        }
    });
}

Var dropout(const Var& x, double rate, Rng* rng) {
    if (rng == nullptr || rate <= 0.0) return x;
    if (rate >= 1.0) throw std::invalid_argument("dropout rate must be below 1");
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix m(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng->uniform() < rate ? 0.0 : keep_scale;
    return hadamard_const(x, m);
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets, const std::vector<bool>& mask) {
    const auto rows = logits.rows();
    if (static_cast<Eigen::Index>(targets.size()) != rows || static_cast<Eigen::Index>(mask.size()) != rows) {
        throw ShapeError("cross_entropy: targets/mask length differs from logits rows");
    }
    Matrix probs = Matrix::Zero(rows, logits.cols());
    double loss = 0.0;
    bool any = false;
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        any = true;
        const int t = targets[static_cast<std::size_t>(r)];
        if (t < 0 || t >= logits.cols()) throw DataError("target id " + std::to_string(t) + " outside vocabulary");
        const RowVector lp = log_softmax_row(logits.value().row(r));
        loss -= lp(t);
        probs.row(r) = lp.array().exp();
    }
    if (!any) throw DataError("cross_entropy: target row has no non-PAD position");
    Matrix out(1, 1);
    out(0, 0) = loss;
    std::vector<int> tg(targets.begin(), targets.end());
    return make_op(std::move(out), {logits.ptr()}, [probs, tg, mask](Node& self) {
        Matrix g = probs;
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            if (mask[static_cast<std::size_t>(r)]) g(r, tg[static_cast<std::size_t>(r)]) -= 1.0;
        }
        accumulate(*self.parents[0], g * self.grad(0, 0));
    });
}

Parameter ParamStore::glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    // Column-major fill order is part of the seeded contract.
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-limit, limit);
    return add(Parameter(name, std::move(m), true));
}

Parameter ParamStore::constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double fill) {
    return add(Parameter(name, Matrix::Constant(rows, cols, fill), true));
}

Parameter ParamStore::add(Parameter p) {
    if (contains(p.name())) throw std::invalid_argument("duplicate parameter name " + p.name());
    index_.emplace(p.name(), params_.size());
    params_.push_back(p);
    return p;
}

const Parameter& ParamStore::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
}

void ParamStore::zero_grad() const {
    for (const auto& p : params_) p.zero_grad();
}

double ParamStore::grad_norm() const {
    double total = 0.0;
    for (const auto& p : params_) {
        if (p.trainable() && p.grad_storage().size() != 0) total += p.grad_storage().squaredNorm();
    }
    return std::sqrt(total);
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value().size());
    return n;
}

} // namespace mmf3::nc
