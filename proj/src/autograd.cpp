#include "gtr/autograd.hpp"

#include <cmath>

#include "gtr/attention.hpp"
#include "gtr/errors.hpp"

namespace gtr {

using Eigen::MatrixXd;

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(MatrixXd value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::input(MatrixXd value) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_;
    return push(std::move(n));
}

Var Tape::parameter(const Parameter& p) {
    if (const auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Node n;
    n.external = &p.value;
    n.param = &p;
    n.needs_grad = record_;
    Var v = push(std::move(n));
    param_nodes_.emplace(&p, v.id());
    return v;
}

Var Tape::record(MatrixXd value, std::span<const Var> inputs, Backward fn) {
    Node n;
    n.value = std::move(value);
    if (record_) {
        for (const Var& in : inputs) n.needs_grad = n.needs_grad || needs_grad(in);
        if (n.needs_grad) n.backward = std::move(fn);
    }
    return push(std::move(n));
}

const MatrixXd& Tape::value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    return n.external != nullptr ? *n.external : n.value;
}

MatrixXd Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (n.grad.size() == 0) return MatrixXd::Zero(value(v).rows(), value(v).cols());
    return n.grad;
}

void Tape::backward(Var out) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward needs a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(out.id())].grad = MatrixXd::Ones(1, 1);
    for (std::size_t i = static_cast<std::size_t>(out.id()) + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, n.grad, n.external != nullptr ? *n.external : n.value);
        if (n.param != nullptr) n.param->grad += n.grad;
    }
}

namespace ag {

namespace {

void require_same_shape(Var a, Var b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    return a.tape().record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const MatrixXd& g, const MatrixXd&) {
        if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
        if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
    });
}

Var matmul_nt(Var a, Var b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: widths differ");
    return a.tape().record(a.value() * b.value().transpose(), {a, b},
                           [a, b](Tape& t, const MatrixXd& g, const MatrixXd&) {
                               if (t.needs_grad(a)) t.accumulate(a, g * b.value());
                               if (t.needs_grad(b)) t.accumulate(b, g.transpose() * a.value());
                           });
}

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const MatrixXd& g, const MatrixXd&) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const MatrixXd& g, const MatrixXd&) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Var add_row(Var a, Var b) {
    if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    MatrixXd out = a.value();
    out.rowwise() += b.value().row(0);
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const MatrixXd& g, const MatrixXd&) {
        t.accumulate(a, g);
        if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
    });
}

Var add_constant(Var a, const MatrixXd& c) {
    if (a.rows() != c.rows() || a.cols() != c.cols()) throw ShapeError("add_constant: shape mismatch");
    return a.tape().record(a.value() + c, {a}, [a](Tape& t, const MatrixXd& g, const MatrixXd&) { t.accumulate(a, g); });
}

Var hadamard(Var a, Var b) {
    require_same_shape(a, b, "hadamard");
    return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                           [a, b](Tape& t, const MatrixXd& g, const MatrixXd&) {
                               if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                               if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                           });
}

Var scale(Var a, double s) {
    return a.tape().record(a.value() * s, {a}, [a, s](Tape& t, const MatrixXd& g, const MatrixXd&) {
        t.accumulate(a, g * s);
    });
}

Var one_minus(Var a) {
    return a.tape().record((1.0 - a.value().array()).matrix(), {a},
                           [a](Tape& t, const MatrixXd& g, const MatrixXd&) { t.accumulate(a, -g); });
}

Var relu(Var a) {
    return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const MatrixXd& g, const MatrixXd&) {
        t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
    });
}

Var sigmoid(Var a) {
    MatrixXd out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const MatrixXd& g, const MatrixXd& y) {
        t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    MatrixXd out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts.front().tape().record(std::move(out), parts,
                                       [inputs](Tape& t, const MatrixXd& g, const MatrixXd&) {
                                           Eigen::Index off = 0;
                                           for (const Var& p : inputs) {
                                               t.accumulate(p, g.middleCols(off, p.cols()));
                                               off += p.cols();
                                           }
                                       });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    return a.tape().record(a.value().middleCols(start, count), {a},
                           [a, start, count](Tape& t, const MatrixXd& g, const MatrixXd&) {
                               MatrixXd full = MatrixXd::Zero(a.rows(), a.cols());
                               full.middleCols(start, count) = g;
                               t.accumulate(a, full);
                           });
}

Var sum(Var a) {
    MatrixXd out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const MatrixXd& g, const MatrixXd&) {
        t.accumulate(a, MatrixXd::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

Var masked_softmax(Var scores, const MatrixXd& mask) {
    MatrixXd p = gtr::masked_softmax(scores.value(), mask);
    std::vector<char> frozen(static_cast<std::size_t>(mask.rows()), 0);
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        frozen[static_cast<std::size_t>(i)] = (mask.row(i).array() <= kMaskedThreshold).all() ? 1 : 0;
    }
    return scores.tape().record(std::move(p), {scores},
                                [scores, frozen](Tape& t, const MatrixXd& g, const MatrixXd& y) {
                                    // dz = y * (g - <g, y>) per row
                                    MatrixXd dz = y.cwiseProduct(g);
                                    const Eigen::VectorXd dot = dz.rowwise().sum();
                                    dz -= y.cwiseProduct(dot.replicate(1, y.cols()));
                                    for (std::size_t i = 0; i < frozen.size(); ++i) {
                                        if (frozen[i]) dz.row(static_cast<Eigen::Index>(i)).setZero();
                                    }
                                    t.accumulate(scores, dz);
                                });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Eigen::Index d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
        throw ShapeError("layer_norm: gain/bias must be 1 x d");
    }
    const MatrixXd& xv = x.value();
    const Eigen::VectorXd mean = xv.rowwise().mean();
    MatrixXd centered = xv.colwise() - mean;
    const Eigen::VectorXd var = centered.array().square().rowwise().mean();
    const Eigen::VectorXd inv_std = (var.array() + eps).rsqrt();
    MatrixXd xhat = centered.array().colwise() * inv_std.array();
    MatrixXd out = xhat.array().rowwise() * gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);
    return x.tape().record(std::move(out), {x, gain, bias},
                           [x, gain, bias, xhat, inv_std](Tape& t, const MatrixXd& g, const MatrixXd&) {
                               if (t.needs_grad(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                               if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
                               if (!t.needs_grad(x)) return;
                               const MatrixXd gh = g.array().rowwise() * gain.value().row(0).array();
                               const double n = static_cast<double>(xhat.cols());
                               const Eigen::VectorXd mean_gh = gh.rowwise().sum() / n;
                               const Eigen::VectorXd mean_ghx = gh.cwiseProduct(xhat).rowwise().sum() / n;
                               MatrixXd dx = gh;
                               dx.colwise() -= mean_gh;
                               dx -= xhat.cwiseProduct(mean_ghx.replicate(1, xhat.cols()));
                               dx = dx.array().colwise() * inv_std.array();
                               t.accumulate(x, dx);
                           });
}

Var embedding(Var table, std::span<const TokenId> ids) {
    const MatrixXd& tv = table.value();
    MatrixXd out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows()) throw ShapeError("embedding: token id out of range");
        out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
    }
    std::vector<TokenId> rows(ids.begin(), ids.end());
    return table.tape().record(std::move(out), {table}, [table, rows](Tape& t, const MatrixXd& g, const MatrixXd&) {
        MatrixXd dt = MatrixXd::Zero(table.rows(), table.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) dt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(table, dt);
    });
}

Var apply_dropout(Var x, const MatrixXd& keep_scaled) {
    if (keep_scaled.rows() != x.rows() || keep_scaled.cols() != x.cols()) throw ShapeError("dropout: mask shape");
    return x.tape().record(x.value().cwiseProduct(keep_scaled), {x},
                           [x, keep_scaled](Tape& t, const MatrixXd& g, const MatrixXd&) {
                               t.accumulate(x, g.cwiseProduct(keep_scaled));
                           });
}

Var label_smoothed_nll(Var logits, std::span<const TokenId> targets, double epsilon, TokenId ignore) {
    const MatrixXd& z = logits.value();
    if (static_cast<Eigen::Index>(targets.size()) != z.rows()) throw ShapeError("loss: one target per row required");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");
    const Eigen::Index vocab = z.cols();
    MatrixXd probs(z.rows(), vocab);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const TokenId y = targets[static_cast<std::size_t>(i)];
        if (y == ignore) {
            probs.row(i).setZero();
            continue;
        }
        if (y < 0 || y >= vocab) throw ShapeError("loss: target id out of range");
        const double top = z.row(i).maxCoeff();
        const double lse = top + std::log((z.row(i).array() - top).exp().sum());
        const Eigen::RowVectorXd logp = z.row(i).array() - lse;
        loss += -(1.0 - epsilon) * logp(y) - epsilon * logp.mean();
        probs.row(i) = logp.array().exp();
    }
    MatrixXd out(1, 1);
    out(0, 0) = loss;
    std::vector<TokenId> ys(targets.begin(), targets.end());
    return logits.tape().record(std::move(out), {logits},
                                [logits, probs, ys, epsilon, ignore](Tape& t, const MatrixXd& g, const MatrixXd&) {
                                    MatrixXd dz = probs;
                                    const double uniform = epsilon / static_cast<double>(probs.cols());
                                    for (std::size_t i = 0; i < ys.size(); ++i) {
                                        const auto r = static_cast<Eigen::Index>(i);
                                        if (ys[i] == ignore) continue;
                                        dz.row(r).array() -= uniform;
                                        dz(r, ys[i]) -= 1.0 - epsilon;
                                    }
                                    t.accumulate(logits, dz * g(0, 0));
                                });
}

}  // namespace ag
}  // namespace gtr
