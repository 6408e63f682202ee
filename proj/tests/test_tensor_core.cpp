#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "streamdit/checkpoint.hpp"
#include "streamdit/rng.hpp"
#include "streamdit/tape.hpp"

using namespace streamdit;

namespace {
// Independent extended-care evaluation of softmax for the frozen spot values.
double softmax_entry(const std::vector<double>& row, size_t i) {
    double mx = row[0];
    for (double x : row)
        mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : row)
        sum += std::exp(x - mx);
    return std::exp(row[i] - mx) / sum;
}
}  // namespace

TEST_SUITE("tensor-core") {
    TEST_CASE("softmax rows: symmetry, shift invariance, spot values") {
        Tensor flat({1, 2}, {0.0, 0.0});
        Tensor y = softmax_rows(flat);
        CHECK(y.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(y.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

        Tensor big({1, 3}, {1000.0, 1000.0, 1000.0});
        y = softmax_rows(big);
        for (long j = 0; j < 3; ++j)
            CHECK(y.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

        Tensor x({1, 3}, {0.0, -1.0, -2.0});
        y = softmax_rows(x);
        CHECK(std::abs(y.at(0, 0) - 0.66524) < 1e-5);
        CHECK(std::abs(y.at(0, 1) - 0.24473) < 1e-5);
        CHECK(std::abs(y.at(0, 2) - 0.09003) < 1e-5);
        for (long j = 0; j < 3; ++j)
            CHECK(y.at(0, j) == doctest::Approx(softmax_entry({0, -1, -2},
                                                              static_cast<size_t>(j)))
                                    .epsilon(1e-15));

        // rows sum to 1 and shifting a row by a constant changes nothing
        Rng rng(3);
        Tensor r = rng.normal_tensor({5, 7});
        Tensor yr = softmax_rows(r);
        for (long i = 0; i < 5; ++i) {
            double s = 0.0;
            for (long j = 0; j < 7; ++j) {
                CHECK(yr.at(i, j) >= 0.0);
                s += yr.at(i, j);
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
        Tensor shifted = r;
        for (long i = 0; i < 5; ++i)
            for (long j = 0; j < 7; ++j)
                shifted.at(i, j) += 3.25 * static_cast<double>(i + 1);
        Tensor ys = softmax_rows(shifted);
        for (long i = 0; i < ys.numel(); ++i)
            CHECK(std::abs(ys.at(i) - yr.at(i)) <= 1e-14);

        Tensor bad({1, 2}, {std::nan(""), 0.0});
        CHECK_THROWS(softmax_rows(bad));
    }

    TEST_CASE("rng: identical seed gives identical sequence, forks are independent") {
        Rng a(42), b(42);
        for (int i = 0; i < 100; ++i)
            CHECK(a.next_u64() == b.next_u64());
        Rng c(42);
        c.fork(1);  // forking must not perturb the parent
        Rng d(42);
        for (int i = 0; i < 10; ++i)
            CHECK(c.next_u64() == d.next_u64());
        Rng f1 = Rng(42).fork(1), f2 = Rng(42).fork(2);
        CHECK(f1.next_u64() != f2.next_u64());
        // normals are standard-ish
        Rng g(7);
        double m = 0.0, v = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double x = g.normal();
            m += x;
            v += x * x;
        }
        m /= n;
        v = v / n - m * m;
        CHECK(std::abs(m) < 0.03);
        CHECK(std::abs(v - 1.0) < 0.05);
    }

    TEST_CASE("finite_diff_check: polynomial exact and softmax dot") {
        // f(x) = x^2 at x=3: analytic 6
        auto f = [](const Tensor& p) { return p.at(0) * p.at(0); };
        const double err =
            finite_diff_check(f, Tensor({1}, {3.0}), Tensor({1}, {6.0}), 1e-5);
        CHECK(err <= 1e-9);

        // f(x) = sum(softmax(x) . w) at random x, gradient from the tape
        Rng rng(9);
        Tensor x = rng.normal_tensor({1, 6});
        Tensor w = rng.normal_tensor({1, 6});
        Tape tape;
        const Tape::Id xid = tape.leaf(x, "x");
        const Tape::Id loss = tape.sum_all(tape.mul(tape.softmax_rows(xid), tape.constant(w)));
        tape.backward(loss, Tensor::scalar(1.0));
        auto eval = [&](const Tensor& p) {
            double s = 0.0;
            Tensor y = softmax_rows(p);
            for (long i = 0; i < y.numel(); ++i)
                s += y.at(i) * w.at(i);
            return s;
        };
        CHECK(finite_diff_check(eval, x, *tape.adjoint(xid), 1e-5) <= 1e-6);

        CHECK_THROWS(finite_diff_check(f, Tensor({1}, {3.0}), Tensor({1}, {6.0}), 1e-3));
        auto bad = [](const Tensor&) { return std::nan(""); };
        CHECK_THROWS(finite_diff_check(bad, Tensor({1}, {0.0}), Tensor({1}, {0.0}), 1e-5));
    }

    TEST_CASE("tape: every primitive's VJP matches central differences") {
        Rng rng(11);
        const double h = 1e-5;
        const double tol = 1e-6;

        // one composite graph exercising all primitives at once
        Tensor a0 = rng.normal_tensor({3, 4});
        Tensor b0 = rng.normal_tensor({4, 5});
        Tensor g0 = rng.uniform_tensor({1, 5}, 0.5, 1.5);
        Tensor c0 = rng.normal_tensor({1, 5});
        BoolMat mask(3, 3, true);
        mask.at(0, 2) = 0;
        mask.at(2, 0) = 0;

        auto build = [&](const Tensor& a, const Tensor& b, const Tensor& g, const Tensor& c,
                         Tape& tape, Tape::Id& aid, Tape::Id& bid, Tape::Id& gid, Tape::Id& cid) {
            aid = tape.leaf(a, "a");
            bid = tape.leaf(b, "b");
            gid = tape.leaf(g, "g");
            cid = tape.leaf(c, "c");
            const Tape::Id mm = tape.matmul(aid, bid);                        // [3,5]
            const Tape::Id ln = tape.layer_norm(mm, gid, cid, 1e-8);          // [3,5]
            const Tape::Id ge = tape.gelu(ln);                                // [3,5]
            const Tape::Id rv = tape.add_rowvec(ge, cid);                     // [3,5]
            const Tape::Id s1 = tape.slice_cols(rv, 0, 3);                    // [3,3]
            const Tape::Id s2 = tape.slice_cols(rv, 2, 3);                    // [3,3]
            const Tape::Id sm = tape.softmax_rows_masked(
                tape.scale(tape.matmul(s1, tape.transpose(s2)), 0.7), mask);  // [3,3]
            const Tape::Id cat = tape.concat_cols({sm, s1});                  // [3,6]
            const Tape::Id rows = tape.concat_rows({tape.slice_rows(cat, 0, 2),
                                                    tape.slice_rows(cat, 1, 2)});  // [4,6]
            const Tape::Id prod = tape.mul(rows, rows);
            const Tape::Id diff = tape.sub(prod, tape.scale(rows, 0.3));
            const Tape::Id shifted = tape.add(diff, tape.constant(Tensor::full({4, 6}, 0.1)));
            return tape.mean_all(shifted);
        };

        Tape tape;
        Tape::Id aid, bid, gid, cid;
        const Tape::Id loss = build(a0, b0, g0, c0, tape, aid, bid, gid, cid);
        tape.backward(loss, Tensor::scalar(1.0));

        auto eval_with = [&](const Tensor& a, const Tensor& b, const Tensor& g, const Tensor& c) {
            Tape t2;
            Tape::Id x1, x2, x3, x4;
            return t2.scalar(build(a, b, g, c, t2, x1, x2, x3, x4));
        };
        CHECK(finite_diff_check([&](const Tensor& p) { return eval_with(p, b0, g0, c0); }, a0,
                                *tape.adjoint(aid), h) <= tol);
        CHECK(finite_diff_check([&](const Tensor& p) { return eval_with(a0, p, g0, c0); }, b0,
                                *tape.adjoint(bid), h) <= tol);
        CHECK(finite_diff_check([&](const Tensor& p) { return eval_with(a0, b0, p, c0); }, g0,
                                *tape.adjoint(gid), h) <= tol);
        CHECK(finite_diff_check([&](const Tensor& p) { return eval_with(a0, b0, g0, p); }, c0,
                                *tape.adjoint(cid), h) <= tol);
    }

    TEST_CASE("tape: reused leaf accumulates its adjoint once per use") {
        Tensor x0({1, 1}, {1.7});
        Tape tape;
        const Tape::Id x = tape.leaf(x0, "x");
        const Tape::Id y = tape.mul(x, x);  // y = x^2, dy/dx = 2x
        tape.backward(y, Tensor::scalar(1.0));
        CHECK(tape.adjoint(x)->at(0) == doctest::Approx(3.4).epsilon(1e-15));
    }

    TEST_CASE("checkpoint: byte-exact round trip") {
        Rng rng(13);
        ParamStore params;
        params["alpha"] = rng.normal_tensor({3, 5});
        params["beta"] = rng.normal_tensor({7});
        params["gamma/deep.name"] = Tensor({1}, {-0.0});
        const std::string path = "ckpt_roundtrip.bin";
        save_checkpoint(path, params);
        ParamStore loaded = load_checkpoint(path);
        REQUIRE(loaded.size() == params.size());
        for (const auto& [name, t] : params) {
            REQUIRE(loaded.count(name) == 1);
            CHECK(loaded.at(name).shape == t.shape);
            for (long i = 0; i < t.numel(); ++i) {
                // byte-exact, including signed zero
                const double a = loaded.at(name).at(i), b = t.at(i);
                CHECK(std::memcmp(&a, &b, 8) == 0);
            }
        }
        save_checkpoint("ckpt_roundtrip2.bin", loaded);
        std::ifstream f1(path, std::ios::binary), f2("ckpt_roundtrip2.bin", std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
    }

    TEST_CASE("reductions are sequential and reproducible") {
        Rng r1(99), r2(99);
        Tensor a = r1.normal_tensor({64, 3});
        Tensor b = r2.normal_tensor({64, 3});
        Tape t1, t2;
        const double s1 = t1.scalar(t1.sum_all(t1.constant(a)));
        const double s2 = t2.scalar(t2.sum_all(t2.constant(b)));
        CHECK(s1 == s2);
    }
}
