#include "streamdit/tensor.hpp"

#include <algorithm>
#include <limits>

namespace streamdit {

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 required");
    check(a.cols() == b.rows(), "matmul: inner extents differ");
    const long n = a.rows(), k = a.cols(), m = b.cols();
    Tensor c({n, m});
    for (long i = 0; i < n; ++i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * m;
        for (long p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0)
                continue;
            const double* brow = b.data.data() + p * m;
            for (long j = 0; j < m; ++j)
                crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    check(a.rank() == 2, "transpose: rank-2 required");
    Tensor t({a.cols(), a.rows()});
    for (long i = 0; i < a.rows(); ++i)
        for (long j = 0; j < a.cols(); ++j)
            t.at(j, i) = a.at(i, j);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "add: shape mismatch");
    Tensor c = a;
    for (long i = 0; i < c.numel(); ++i)
        c.at(i) += b.at(i);
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "sub: shape mismatch");
    Tensor c = a;
    for (long i = 0; i < c.numel(); ++i)
        c.at(i) -= b.at(i);
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "mul: shape mismatch");
    Tensor c = a;
    for (long i = 0; i < c.numel(); ++i)
        c.at(i) *= b.at(i);
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (auto& x : c.data)
        x *= s;
    return c;
}

Tensor softmax_rows(const Tensor& x) {
    check(x.rank() == 2, "softmax_rows: rank-2 required");
    check(x.finite(), "softmax_rows: non-finite input");
    Tensor y({x.rows(), x.cols()});
    for (long i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (long j = 0; j < x.cols(); ++j)
            mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (long j = 0; j < x.cols(); ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            y.at(i, j) = e;
            sum += e;
        }
        for (long j = 0; j < x.cols(); ++j)
            y.at(i, j) /= sum;
    }
    return y;
}

Tensor softmax_rows_masked(const Tensor& x, const BoolMat& mask) {
    check(x.rank() == 2, "softmax_rows_masked: rank-2 required");
    check(x.rows() == mask.rows && x.cols() == mask.cols, "softmax_rows_masked: mask shape");
    check(x.finite(), "softmax_rows_masked: non-finite input");
    Tensor y({x.rows(), x.cols()});
    for (long i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (long j = 0; j < x.cols(); ++j)
            if (mask.at(i, j))
                mx = std::max(mx, x.at(i, j));
        check(std::isfinite(mx), "softmax_rows_masked: fully masked row");
        double sum = 0.0;
        for (long j = 0; j < x.cols(); ++j) {
            const double e = mask.at(i, j) ? std::exp(x.at(i, j) - mx) : 0.0;
            y.at(i, j) = e;
            sum += e;
        }
        for (long j = 0; j < x.cols(); ++j)
            y.at(i, j) /= sum;
    }
    return y;
}

}  // namespace streamdit
