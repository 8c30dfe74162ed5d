#pragma once

// Tape-based reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation applied to its Vars. backward() walks the
// record in reverse and accumulates gradients; parameter leaves forward
// their gradients into Parameter::grad. A tape built with recording off
// evaluates values only.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "gtr/params.hpp"
#include "gtr/tagging.hpp"

namespace gtr {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
public:
    Var() = default;

    [[nodiscard]] const Eigen::MatrixXd& value() const;
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] int id() const noexcept { return id_; }
    [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    /// Receives the output gradient and the output value.
    using Backward = std::function<void(Tape&, const Eigen::MatrixXd& grad, const Eigen::MatrixXd& out)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool recording() const noexcept { return record_; }

    /// Value that never receives a gradient.
    Var constant(Eigen::MatrixXd value);
    /// Free input whose gradient can be read back with grad().
    Var input(Eigen::MatrixXd value);
    /// Leaf bound to a parameter; one node per parameter per tape. On a
    /// recording tape its gradient is added to p.grad by backward().
    Var parameter(const Parameter& p);

    /// Records an op result. `fn` receives the output gradient and must
    /// accumulate into the inputs via accumulate().
    Var record(Eigen::MatrixXd value, std::span<const Var> inputs, Backward fn);
    Var record(Eigen::MatrixXd value, std::initializer_list<Var> inputs, Backward fn) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
    }

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
    void backward(Var out);

    [[nodiscard]] bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].needs_grad; }
    [[nodiscard]] const Eigen::MatrixXd& value(Var v) const;
    /// Gradient of the last backward() w.r.t. v (zeros when unreached).
    [[nodiscard]] Eigen::MatrixXd grad(Var v) const;

    template <typename Derived>
    void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
        Node& n = nodes_[static_cast<std::size_t>(v.id())];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Eigen::MatrixXd value;
        const Eigen::MatrixXd* external = nullptr;
        Eigen::MatrixXd grad;
        Backward backward;
        const Parameter* param = nullptr;
        bool needs_grad = false;
    };

    Var push(Node node);

    bool record_;
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Eigen::MatrixXd& Var::value() const { return tape_->value(*this); }

namespace ag {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds row vector b (1 x n) to every row of a.
Var add_row(Var a, Var b);
Var add_constant(Var a, const Eigen::MatrixXd& c);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// 1 - a, element-wise.
Var one_minus(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Sum of all entries as a 1x1 value.
Var sum(Var a);
/// Row-wise softmax of (scores + mask); rows with every mask entry at or
/// below kMaskedThreshold are uniform and pass no gradient.
Var masked_softmax(Var scores, const Eigen::MatrixXd& mask);
/// Per-row normalisation to zero mean / unit variance, then gain and bias
/// (both 1 x d).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Rows of `table` selected by ids.
Var embedding(Var table, std::span<const TokenId> ids);
/// Element-wise product with a fixed mask (already scaled by 1/(1-p)).
Var apply_dropout(Var x, const Eigen::MatrixXd& keep_scaled);

/// Sum over non-ignored rows of the label-smoothed negative log-likelihood
/// (1-eps)*NLL + eps*mean_v(-log p_v). Rows whose target equals `ignore`
/// contribute nothing.
Var label_smoothed_nll(Var logits, std::span<const TokenId> targets, double epsilon, TokenId ignore);

}  // namespace ag

}  // namespace gtr
