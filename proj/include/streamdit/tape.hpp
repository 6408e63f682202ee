#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "streamdit/tensor.hpp"

namespace streamdit {

/// Reverse-mode gradient tape over dense tensors. Operations append nodes in
/// topological order; backward() replays the tape once, accumulating a
/// vector-Jacobian product into every reachable leaf exactly once per use.
/// A tape is single-owner and not shareable while recording.
class Tape {
  public:
    using Id = int;

    Id leaf(const Tensor& v, const std::string& name);
    Id constant(Tensor v);

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id a, double s);
    Id add_rowvec(Id x, Id b);  // x:[n,m] + b:[1,m] broadcast over rows
    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id gelu(Id a);
    Id softmax_rows(Id scores);
    Id softmax_rows_masked(Id scores, BoolMat mask);
    Id layer_norm(Id x, Id gain, Id bias, double eps);
    Id slice_rows(Id a, long r0, long n);
    Id slice_cols(Id a, long c0, long n);
    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(const std::vector<Id>& parts);
    Id sum_all(Id a);   // -> [1]
    Id mean_all(Id a);  // -> [1]

    const Tensor& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    double scalar(Id id) const { return val(id).data.at(0); }
    long size() const { return static_cast<long>(nodes_.size()); }

    /// Replay backward from `root` seeded with `cotangent` (shape of root's
    /// value). May be called once per tape.
    void backward(Id root, Tensor cotangent);

    /// Adjoint of a node after backward(); nullptr if unreached.
    const Tensor* adjoint(Id id) const;

    /// Gradients of all named leaves after backward(); absent leaves get zeros.
    ParamStore grads(const ParamStore& reference) const;

    Id leaf_id(const std::string& name) const;

  private:
    enum class Op {
        Leaf,
        Const,
        Add,
        Sub,
        Mul,
        Scale,
        AddRowVec,
        MatMul,
        Transpose,
        Gelu,
        Softmax,
        LayerNorm,
        SliceRows,
        SliceCols,
        ConcatRows,
        ConcatCols,
        SumAll,
        MeanAll,
    };

    struct Node {
        Op op;
        std::vector<Id> in;
        Tensor value;
        std::string name;      // leaves
        double aux = 0.0;      // Scale factor, LayerNorm eps
        long p0 = 0, p1 = 0;   // slice offset/length
        BoolMat mask;          // Softmax
        Tensor saved;          // LayerNorm: per-row inv-std
    };

    Id push(Node n);
    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor>> adj_;
    std::map<std::string, Id> leaves_;
    bool ran_backward_ = false;
};

/// Max over parameter entries of |analytic - central difference| /
/// max(1, |central difference|). `f` must be evaluable at perturbed inputs;
/// non-finite values are rejected.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& params,
                         const Tensor& analytic_grad, double h);

/// Same check over a whole parameter store. `eval_loss` is a pure function of
/// the store contents; `analytic` holds a gradient tensor per parameter name.
double finite_diff_check_store(ParamStore& store,
                               const std::function<double(const ParamStore&)>& eval_loss,
                               const ParamStore& analytic, double h);

}  // namespace streamdit
