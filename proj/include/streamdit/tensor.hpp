#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamdit {

/// Dense row-major tensor of 64-bit floats. Immutable by convention once
/// handed to other modules; all reductions run in a fixed sequential order.
struct Tensor {
    std::vector<long> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<long> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<long> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<size_t>(numel_of(shape)) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static long numel_of(const std::vector<long>& s) {
        long n = 1;
        for (long e : s) {
            if (e < 0)
                throw std::invalid_argument("tensor: negative extent");
            n *= e;
        }
        return n;
    }

    long numel() const { return static_cast<long>(data.size()); }
    long rank() const { return static_cast<long>(shape.size()); }
    long rows() const { return shape.at(0); }
    long cols() const { return shape.at(1); }

    double& at(long i) { return data[static_cast<size_t>(i)]; }
    double at(long i) const { return data[static_cast<size_t>(i)]; }
    double& at(long r, long c) { return data[static_cast<size_t>(r * cols() + c)]; }
    double at(long r, long c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    bool finite() const {
        for (double x : data)
            if (!std::isfinite(x))
                return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static Tensor zeros(std::vector<long> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<long> s, double v) {
        Tensor t(std::move(s));
        for (auto& x : t.data)
            x = v;
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
};

/// Square/rectangular boolean matrix; true = allowed. Used for attention masks.
struct BoolMat {
    long rows = 0, cols = 0;
    std::vector<uint8_t> v;

    BoolMat() = default;
    BoolMat(long r, long c, bool init = false)
        : rows(r), cols(c), v(static_cast<size_t>(r * c), init ? 1 : 0) {}

    uint8_t& at(long i, long j) { return v[static_cast<size_t>(i * cols + j)]; }
    bool at(long i, long j) const { return v[static_cast<size_t>(i * cols + j)] != 0; }

    static BoolMat ones(long r, long c) { return BoolMat(r, c, true); }
};

// Plain (non-tape) kernels shared by the tape and by oracle tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Row-wise softmax with row-max subtraction; rejects non-finite input.
Tensor softmax_rows(const Tensor& x);
/// Masked variant: disallowed entries get exactly zero weight. Every row must
/// admit at least one entry.
Tensor softmax_rows_masked(const Tensor& x, const BoolMat& mask);

inline void check(bool cond, const char* msg) {
    if (!cond)
        throw std::invalid_argument(msg);
}

using ParamStore = std::map<std::string, Tensor>;

}  // namespace streamdit
