#include "streamdit/tape.hpp"

#include <algorithm>
#include <cmath>

namespace streamdit {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_bwd(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}
}  // namespace

Tape::Id Tape::push(Node n) {
    check(!ran_backward_, "tape: cannot record after backward");
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(const Tensor& v, const std::string& name) {
    check(!name.empty(), "tape: leaf needs a name");
    auto it = leaves_.find(name);
    if (it != leaves_.end())
        return it->second;
    Node n;
    n.op = Op::Leaf;
    n.value = v;
    n.name = name;
    Id id = push(std::move(n));
    leaves_[name] = id;
    return id;
}

Tape::Id Tape::constant(Tensor v) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(v);
    return push(std::move(n));
}

Tape::Id Tape::leaf_id(const std::string& name) const {
    auto it = leaves_.find(name);
    check(it != leaves_.end(), "tape: unknown leaf");
    return it->second;
}

Tape::Id Tape::add(Id a, Id b) {
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.value = streamdit::add(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
    Node n;
    n.op = Op::Sub;
    n.in = {a, b};
    n.value = streamdit::sub(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
    Node n;
    n.op = Op::Mul;
    n.in = {a, b};
    n.value = streamdit::mul(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {a};
    n.aux = s;
    n.value = streamdit::scale(val(a), s);
    return push(std::move(n));
}

Tape::Id Tape::add_rowvec(Id x, Id b) {
    const Tensor& xv = val(x);
    const Tensor& bv = val(b);
    check(xv.rank() == 2 && bv.rank() == 2 && bv.rows() == 1 && bv.cols() == xv.cols(),
          "add_rowvec: need [n,m] + [1,m]");
    Node n;
    n.op = Op::AddRowVec;
    n.in = {x, b};
    Tensor out = xv;
    for (long i = 0; i < xv.rows(); ++i)
        for (long j = 0; j < xv.cols(); ++j)
            out.at(i, j) += bv.at(0, j);
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
    Node n;
    n.op = Op::MatMul;
    n.in = {a, b};
    n.value = streamdit::matmul(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
    Node n;
    n.op = Op::Transpose;
    n.in = {a};
    n.value = streamdit::transpose(val(a));
    return push(std::move(n));
}

Tape::Id Tape::gelu(Id a) {
    Node n;
    n.op = Op::Gelu;
    n.in = {a};
    Tensor out = val(a);
    for (auto& x : out.data)
        x = gelu_fwd(x);
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id scores) {
    const Tensor& s = val(scores);
    Node n;
    n.op = Op::Softmax;
    n.in = {scores};
    n.value = streamdit::softmax_rows(s);
    return push(std::move(n));
}

Tape::Id Tape::softmax_rows_masked(Id scores, BoolMat mask) {
    const Tensor& s = val(scores);
    Node n;
    n.op = Op::Softmax;
    n.in = {scores};
    n.value = streamdit::softmax_rows_masked(s, mask);
    n.mask = std::move(mask);
    return push(std::move(n));
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id bias, double eps) {
    const Tensor& xv = val(x);
    const Tensor& g = val(gain);
    const Tensor& b = val(bias);
    check(xv.rank() == 2, "layer_norm: rank-2 required");
    check(g.rows() == 1 && g.cols() == xv.cols() && b.rows() == 1 && b.cols() == xv.cols(),
          "layer_norm: gain/bias must be [1,m]");
    Node n;
    n.op = Op::LayerNorm;
    n.in = {x, gain, bias};
    n.aux = eps;
    const long m = xv.cols();
    Tensor out({xv.rows(), m});
    Tensor inv_std({xv.rows(), 1});
    for (long i = 0; i < xv.rows(); ++i) {
        double mean = 0.0;
        for (long j = 0; j < m; ++j)
            mean += xv.at(i, j);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (long j = 0; j < m; ++j) {
            const double d = xv.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = is;
        for (long j = 0; j < m; ++j)
            out.at(i, j) = (xv.at(i, j) - mean) * is * g.at(0, j) + b.at(0, j);
    }
    n.value = std::move(out);
    n.saved = std::move(inv_std);
    return push(std::move(n));
}

Tape::Id Tape::slice_rows(Id a, long r0, long cnt) {
    const Tensor& av = val(a);
    check(av.rank() == 2 && r0 >= 0 && cnt >= 0 && r0 + cnt <= av.rows(), "slice_rows: bounds");
    Node n;
    n.op = Op::SliceRows;
    n.in = {a};
    n.p0 = r0;
    n.p1 = cnt;
    Tensor out({cnt, av.cols()});
    std::copy(av.data.begin() + r0 * av.cols(), av.data.begin() + (r0 + cnt) * av.cols(),
              out.data.begin());
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, long c0, long cnt) {
    const Tensor& av = val(a);
    check(av.rank() == 2 && c0 >= 0 && cnt >= 0 && c0 + cnt <= av.cols(), "slice_cols: bounds");
    Node n;
    n.op = Op::SliceCols;
    n.in = {a};
    n.p0 = c0;
    n.p1 = cnt;
    Tensor out({av.rows(), cnt});
    for (long i = 0; i < av.rows(); ++i)
        for (long j = 0; j < cnt; ++j)
            out.at(i, j) = av.at(i, c0 + j);
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
    check(!parts.empty(), "concat_rows: empty");
    const long m = val(parts[0]).cols();
    long total = 0;
    for (Id p : parts) {
        check(val(p).rank() == 2 && val(p).cols() == m, "concat_rows: col mismatch");
        total += val(p).rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.in = parts;
    Tensor out({total, m});
    long r = 0;
    for (Id p : parts) {
        const Tensor& pv = val(p);
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + r * m);
        r += pv.rows();
    }
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    check(!parts.empty(), "concat_cols: empty");
    const long rows = val(parts[0]).rows();
    long total = 0;
    for (Id p : parts) {
        check(val(p).rank() == 2 && val(p).rows() == rows, "concat_cols: row mismatch");
        total += val(p).cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.in = parts;
    Tensor out({rows, total});
    long c = 0;
    for (Id p : parts) {
        const Tensor& pv = val(p);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < pv.cols(); ++j)
                out.at(i, c + j) = pv.at(i, j);
        c += pv.cols();
    }
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
    Node n;
    n.op = Op::SumAll;
    n.in = {a};
    double s = 0.0;
    for (double x : val(a).data)
        s += x;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
    Node n;
    n.op = Op::MeanAll;
    n.in = {a};
    double s = 0.0;
    for (double x : val(a).data)
        s += x;
    n.value = Tensor::scalar(s / static_cast<double>(val(a).numel()));
    return push(std::move(n));
}

const Tensor* Tape::adjoint(Id id) const {
    if (static_cast<size_t>(id) >= adj_.size() || !adj_[static_cast<size_t>(id)].has_value())
        return nullptr;
    return &*adj_[static_cast<size_t>(id)];
}

void Tape::backward(Id root, Tensor cotangent) {
    check(!ran_backward_, "tape: backward may run once");
    ran_backward_ = true;
    check(cotangent.same_shape(val(root)), "backward: cotangent shape mismatch");
    adj_.assign(nodes_.size(), std::nullopt);
    adj_[static_cast<size_t>(root)] = std::move(cotangent);

    auto acc = [&](Id id, const Tensor& g) {
        auto& slot = adj_[static_cast<size_t>(id)];
        if (!slot.has_value())
            slot = g;
        else
            for (long i = 0; i < g.numel(); ++i)
                slot->at(i) += g.at(i);
    };

    for (Id id = root; id >= 0; --id) {
        const auto& slot = adj_[static_cast<size_t>(id)];
        if (!slot.has_value())
            continue;
        const Node& n = nodes_[static_cast<size_t>(id)];
        const Tensor& d = *slot;
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::Add:
                acc(n.in[0], d);
                acc(n.in[1], d);
                break;
            case Op::Sub: {
                acc(n.in[0], d);
                acc(n.in[1], streamdit::scale(d, -1.0));
                break;
            }
            case Op::Mul:
                acc(n.in[0], streamdit::mul(d, val(n.in[1])));
                acc(n.in[1], streamdit::mul(d, val(n.in[0])));
                break;
            case Op::Scale:
                acc(n.in[0], streamdit::scale(d, n.aux));
                break;
            case Op::AddRowVec: {
                acc(n.in[0], d);
                Tensor gb({1, d.cols()});
                for (long i = 0; i < d.rows(); ++i)
                    for (long j = 0; j < d.cols(); ++j)
                        gb.at(0, j) += d.at(i, j);
                acc(n.in[1], gb);
                break;
            }
            case Op::MatMul: {
                acc(n.in[0], streamdit::matmul(d, streamdit::transpose(val(n.in[1]))));
                acc(n.in[1], streamdit::matmul(streamdit::transpose(val(n.in[0])), d));
                break;
            }
            case Op::Transpose:
                acc(n.in[0], streamdit::transpose(d));
                break;
            case Op::Gelu: {
                const Tensor& x = val(n.in[0]);
                Tensor g = d;
                for (long i = 0; i < g.numel(); ++i)
                    g.at(i) *= gelu_bwd(x.at(i));
                acc(n.in[0], g);
                break;
            }
            case Op::Softmax: {
                const Tensor& y = n.value;
                Tensor g({y.rows(), y.cols()});
                for (long i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (long j = 0; j < y.cols(); ++j)
                        dot += d.at(i, j) * y.at(i, j);
                    for (long j = 0; j < y.cols(); ++j)
                        g.at(i, j) = y.at(i, j) * (d.at(i, j) - dot);
                }
                acc(n.in[0], g);
                break;
            }
            case Op::LayerNorm: {
                const Tensor& x = val(n.in[0]);
                const Tensor& gain = val(n.in[1]);
                const long m = x.cols();
                Tensor gx({x.rows(), m});
                Tensor gg({1, m});
                Tensor gb({1, m});
                for (long i = 0; i < x.rows(); ++i) {
                    const double is = n.saved.at(i, 0);
                    double mean = 0.0;
                    for (long j = 0; j < m; ++j)
                        mean += x.at(i, j);
                    mean /= static_cast<double>(m);
                    // dxhat, plus the two row reductions of the LN jacobian
                    double s1 = 0.0, s2 = 0.0;
                    for (long j = 0; j < m; ++j) {
                        const double xh = (x.at(i, j) - mean) * is;
                        const double dxh = d.at(i, j) * gain.at(0, j);
                        s1 += dxh;
                        s2 += dxh * xh;
                        gg.at(0, j) += d.at(i, j) * xh;
                        gb.at(0, j) += d.at(i, j);
                    }
                    for (long j = 0; j < m; ++j) {
                        const double xh = (x.at(i, j) - mean) * is;
                        const double dxh = d.at(i, j) * gain.at(0, j);
                        gx.at(i, j) =
                            is * (dxh - (s1 + xh * s2) / static_cast<double>(m));
                    }
                }
                acc(n.in[0], gx);
                acc(n.in[1], gg);
                acc(n.in[2], gb);
                break;
            }
            case Op::SliceRows: {
                const Tensor& x = val(n.in[0]);
                Tensor g({x.rows(), x.cols()});
                std::copy(d.data.begin(), d.data.end(), g.data.begin() + n.p0 * x.cols());
                acc(n.in[0], g);
                break;
            }
            case Op::SliceCols: {
                const Tensor& x = val(n.in[0]);
                Tensor g({x.rows(), x.cols()});
                for (long i = 0; i < x.rows(); ++i)
                    for (long j = 0; j < n.p1; ++j)
                        g.at(i, n.p0 + j) = d.at(i, j);
                acc(n.in[0], g);
                break;
            }
            case Op::ConcatRows: {
                long r = 0;
                for (Id p : n.in) {
                    const Tensor& pv = val(p);
                    Tensor g({pv.rows(), pv.cols()});
                    std::copy(d.data.begin() + r * pv.cols(),
                              d.data.begin() + (r + pv.rows()) * pv.cols(), g.data.begin());
                    acc(p, g);
                    r += pv.rows();
                }
                break;
            }
            case Op::ConcatCols: {
                long c = 0;
                for (Id p : n.in) {
                    const Tensor& pv = val(p);
                    Tensor g({pv.rows(), pv.cols()});
                    for (long i = 0; i < pv.rows(); ++i)
                        for (long j = 0; j < pv.cols(); ++j)
                            g.at(i, j) = d.at(i, c + j);
                    acc(p, g);
                    c += pv.cols();
                }
                break;
            }
            case Op::SumAll: {
                acc(n.in[0], Tensor::full(val(n.in[0]).shape, d.at(0)));
                break;
            }
            case Op::MeanAll: {
                acc(n.in[0], Tensor::full(val(n.in[0]).shape,
                                          d.at(0) / static_cast<double>(val(n.in[0]).numel())));
                break;
            }
        }
    }
}

ParamStore Tape::grads(const ParamStore& reference) const {
    ParamStore out;
    for (const auto& [name, tensor] : reference) {
        auto it = leaves_.find(name);
        const Tensor* g = it == leaves_.end() ? nullptr : adjoint(it->second);
        out[name] = g ? *g : Tensor::zeros(tensor.shape);
    }
    return out;
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& params,
                         const Tensor& analytic_grad, double h) {
    check(h >= 1e-6 && h <= 1e-4, "finite_diff_check: h outside [1e-6, 1e-4]");
    check(analytic_grad.same_shape(params), "finite_diff_check: gradient shape");
    double worst = 0.0;
    Tensor p = params;
    for (long i = 0; i < p.numel(); ++i) {
        const double orig = p.at(i);
        p.at(i) = orig + h;
        const double fp = f(p);
        p.at(i) = orig - h;
        const double fm = f(p);
        p.at(i) = orig;
        check(std::isfinite(fp) && std::isfinite(fm), "finite_diff_check: non-finite f");
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic_grad.at(i) - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

double finite_diff_check_store(ParamStore& store,
                               const std::function<double(const ParamStore&)>& eval_loss,
                               const ParamStore& analytic, double h) {
    check(h >= 1e-6 && h <= 1e-4, "finite_diff_check_store: h outside [1e-6, 1e-4]");
    double worst = 0.0;
    for (auto& [name, tensor] : store) {
        const Tensor& g = analytic.at(name);
        for (long i = 0; i < tensor.numel(); ++i) {
            const double orig = tensor.at(i);
            tensor.at(i) = orig + h;
            const double fp = eval_loss(store);
            tensor.at(i) = orig - h;
            const double fm = eval_loss(store);
            tensor.at(i) = orig;
            check(std::isfinite(fp) && std::isfinite(fm), "finite_diff_check_store: non-finite f");
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(g.at(i) - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace streamdit
