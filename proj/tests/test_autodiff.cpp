#include <cmath>

#include "doctest.h"
#include "seedsr/autodiff.hpp"
#include "seedsr/rng.hpp"

using namespace seedsr;

namespace {

Tensor random_tensor(std::vector<int> dims, uint64_t seed, double scale = 1.0) {
    Philox rng(seed);
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

// six-nested-loop reference convolution
Tensor conv_reference(const Tensor& in, const Tensor& k, const Tensor& bias, int stride, int pad) {
    const int H = in.dim(0), W = in.dim(1), Ci = in.dim(2);
    const int kh = k.dim(0), kw = k.dim(1), Co = k.dim(3);
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor out({Ho, Wo, Co});
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
            for (int oc = 0; oc < Co; ++oc) {
                double acc = bias[oc];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int ci = 0; ci < Ci; ++ci) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += in.at(iy, ix, ci) * k.at(ky, kx, ci, oc);
                        }
                out.at(oy, ox, oc) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("conv2d identity and window-sum cases") {
    Tensor x({1, 1, 1}, {5.0});
    Tensor k({1, 1, 1, 1}, {1.0});
    Tensor b({1}, {0.0});
    NodePtr out = conv2d(make_const(x), make_const(k), make_const(b), 1, 0);
    CHECK(out->value[0] == doctest::Approx(5.0));

    Tensor ones = Tensor::full({3, 3, 1}, 1.0);
    Tensor kk = Tensor::full({3, 3, 1, 1}, 1.0);
    NodePtr s = conv2d(make_const(ones), make_const(kk), make_const(b), 1, 0);
    CHECK(s->value.numel() == 1);
    CHECK(s->value[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d matches the brute-force loop oracle exactly") {
    Tensor in = random_tensor({5, 5, 2}, 11);
    Tensor k = random_tensor({3, 3, 2, 4}, 12);
    Tensor b = random_tensor({4}, 13);
    for (int pad : {0, 1}) {
        for (int stride : {1, 2}) {
            Tensor ref = conv_reference(in, k, b, stride, pad);
            Tensor got = conv2d_value(in, k, &b, stride, pad);
            REQUIRE(got.same_dims(ref));
            for (int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("conv2d shape errors name the offending axis") {
    Tensor in = random_tensor({4, 4, 3}, 1);
    Tensor k = random_tensor({3, 3, 2, 4}, 2);  // Cin mismatch
    CHECK_THROWS_WITH_AS(conv2d_value(in, k, nullptr, 1, 1),
                         doctest::Contains("channel axis"), ShapeError);
}

TEST_CASE("transposed_conv2d trivial and target-size cases") {
    Tensor x({1, 1, 1}, {3.0});
    Tensor k({1, 1, 1, 1}, {2.0});
    NodePtr out = transposed_conv2d(make_const(x), make_const(k), nullptr, 1, 0, 1, 1);
    CHECK(out->value[0] == doctest::Approx(6.0));

    Tensor in7 = random_tensor({7, 7, 3}, 21);
    Tensor k3 = random_tensor({3, 3, 2, 3}, 22);
    NodePtr up = transposed_conv2d(make_const(in7), make_const(k3), nullptr, 2, 0, 15, 15);
    CHECK(up->value.dims() == std::vector<int>{15, 15, 2});

    // target below the minimal stride span
    CHECK_THROWS_AS(transposed_conv2d(make_const(in7), make_const(k3), nullptr, 2, 0, 12, 12),
                    ShapeError);
}

TEST_CASE("transposed_conv2d is the adjoint of conv2d") {
    Philox rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const int H = 6 + static_cast<int>(rng.uniform_int(5));
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int pad = static_cast<int>(rng.uniform_int(2));
        Tensor x = random_tensor({H, H, 2}, 100 + trial);
        Tensor k = random_tensor({3, 3, 2, 3}, 200 + trial);
        int Ho = 0, Wo = 0;
        conv2d_shape(x.dims(), k.dims(), stride, pad, Ho, Wo);
        Tensor y = random_tensor({Ho, Wo, 3}, 300 + trial);

        NodePtr cx = conv2d(make_const(x), make_const(k), nullptr, stride, pad);
        NodePtr ty = transposed_conv2d(make_const(y), make_const(k), nullptr, stride, pad, H, H);
        const double lhs = dot(cx->value, y);
        const double rhs = dot(x, ty->value);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("maxpool2d floor semantics and tie-break gradient") {
    Tensor x({2, 2, 1}, {1, 2, 3, 4});
    NodePtr p = maxpool2d(make_leaf(x));
    CHECK(p->value.numel() == 1);
    CHECK(p->value[0] == doctest::Approx(4.0));

    Tensor x15 = random_tensor({15, 15, 4}, 41);
    NodePtr p15 = maxpool2d(make_const(x15));
    CHECK(p15->value.dims() == std::vector<int>{7, 7, 4});

    // constant window: all gradient mass lands on the first element
    NodePtr c = make_leaf(Tensor::full({2, 2, 1}, 3.0));
    NodePtr loss = sum(maxpool2d(c));
    backward(loss);
    CHECK(c->grad[0] == doctest::Approx(1.0));
    CHECK(c->grad[1] == doctest::Approx(0.0));
    CHECK(c->grad[2] == doctest::Approx(0.0));
    CHECK(c->grad[3] == doctest::Approx(0.0));
}

TEST_CASE("layernorm statistics and affine invariance") {
    Tensor g({2}, {1.0, 1.0});
    Tensor s({2}, {0.0, 0.0});
    Tensor x({1, 1, 2}, {1.0, 3.0});
    NodePtr out = layernorm(make_const(x), make_const(g), make_const(s), 1e-12);
    CHECK(out->value[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(out->value[1] == doctest::Approx(1.0).epsilon(1e-9));

    // constant channel vector -> zeros plus shift
    Tensor sh({3}, {0.5, -0.25, 2.0});
    Tensor g3 = Tensor::full({3}, 1.0);
    NodePtr c = layernorm(make_const(Tensor::full({2, 2, 3}, 7.0)), make_const(g3),
                          make_const(sh), 1e-5);
    for (int pos = 0; pos < 4; ++pos)
        for (int ch = 0; ch < 3; ++ch)
            CHECK(c->value[pos * 3 + ch] == doctest::Approx(sh[ch]).epsilon(1e-9));

    // per-position mean 0 variance 1 on random input
    Tensor r = random_tensor({4, 4, 16}, 55);
    Tensor g16 = Tensor::full({16}, 1.0);
    Tensor s16 = Tensor::zeros({16});
    NodePtr n = layernorm(make_const(r), make_const(g16), make_const(s16), 1e-12);
    for (int pos = 0; pos < 16; ++pos) {
        double mu = 0.0, var = 0.0;
        for (int ch = 0; ch < 16; ++ch) mu += n->value[pos * 16 + ch];
        mu /= 16;
        for (int ch = 0; ch < 16; ++ch) {
            const double d = n->value[pos * 16 + ch] - mu;
            var += d * d;
        }
        var /= 16;
        CHECK(std::abs(mu) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }

    // layernorm(a*x + b) == layernorm(x) for a > 0
    Tensor r2 = random_tensor({2, 2, 8}, 56);
    Tensor r2ab = r2;
    for (int64_t i = 0; i < r2ab.numel(); ++i) r2ab[i] = 2.75 * r2ab[i] - 1.25;
    Tensor g8 = Tensor::full({8}, 1.0);
    Tensor s8 = Tensor::zeros({8});
    NodePtr a = layernorm(make_const(r2), make_const(g8), make_const(s8), 1e-12);
    NodePtr bb = layernorm(make_const(r2ab), make_const(g8), make_const(s8), 1e-12);
    for (int64_t i = 0; i < a->value.numel(); ++i) {
        CHECK(a->value[i] == doctest::Approx(bb->value[i]).epsilon(1e-9));
    }
}

TEST_CASE("attention trivial cases and brute-force oracle") {
    // single token: softmax over one element is 1, output = value projection
    Tensor q({1, 4}, {0.3, -0.2, 0.9, 0.1});
    Tensor v({1, 4}, {1.0, 2.0, 3.0, 4.0});
    Tensor wo = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) wo.at(i, (i + 1) % 4) = 1.0;  // permutation projection
    NodePtr out = attention(make_const(q), make_const(q), make_const(v), make_const(wo), 2);
    for (int j = 0; j < 4; ++j) {
        CHECK(out->value[j] == doctest::Approx(v[(j + 3) % 4]).epsilon(1e-12));
    }

    // two identical key tokens: weights are exactly [0.5, 0.5]
    Tensor k2({2, 2}, {0.7, -0.4, 0.7, -0.4});
    Tensor v2({2, 2}, {2.0, 8.0, 4.0, -2.0});
    Tensor q1({1, 2}, {0.9, 0.2});
    Tensor id2 = Tensor::zeros({2, 2});
    id2.at(0, 0) = id2.at(1, 1) = 1.0;
    NodePtr o2 = attention(make_const(q1), make_const(k2), make_const(v2), make_const(id2), 1);
    CHECK(o2->value[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(o2->value[1] == doctest::Approx(3.0).epsilon(1e-12));

    // random 4-token single-head case vs a directly coded reference
    Tensor qq = random_tensor({4, 3}, 61);
    Tensor kk = random_tensor({4, 3}, 62);
    Tensor vv = random_tensor({4, 5}, 63);
    Tensor id5 = Tensor::zeros({5, 5});
    for (int i = 0; i < 5; ++i) id5.at(i, i) = 1.0;
    NodePtr got = attention(make_const(qq), make_const(kk), make_const(vv), make_const(id5), 1);
    for (int i = 0; i < 4; ++i) {
        double srow[4], mx = -1e300;
        for (int j = 0; j < 4; ++j) {
            double d = 0.0;
            for (int c = 0; c < 3; ++c) d += qq.at(i, c) * kk.at(j, c);
            srow[j] = d / std::sqrt(3.0);
            mx = std::max(mx, srow[j]);
        }
        double z = 0.0;
        for (int j = 0; j < 4; ++j) {
            srow[j] = std::exp(srow[j] - mx);
            z += srow[j];
        }
        for (int c = 0; c < 5; ++c) {
            double ref = 0.0;
            for (int j = 0; j < 4; ++j) ref += srow[j] / z * vv.at(j, c);
            CHECK(got->value.at(i, c) == doctest::Approx(ref).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention outputs are convex combinations of value rows") {
    Philox rng(77);
    Tensor q = random_tensor({6, 8}, 71);
    Tensor k = random_tensor({5, 8}, 72);
    Tensor v = random_tensor({5, 8}, 73);
    Tensor id = Tensor::zeros({8, 8});
    for (int i = 0; i < 8; ++i) id.at(i, i) = 1.0;
    for (int heads : {1, 2, 4}) {
        NodePtr out = attention(make_const(q), make_const(k), make_const(v), make_const(id), heads);
        const int hv = 8 / heads;
        for (int i = 0; i < 6; ++i) {
            for (int c = 0; c < 8; ++c) {
                const int h = c / hv;
                double lo = 1e300, hi = -1e300;
                for (int j = 0; j < 5; ++j) {
                    lo = std::min(lo, v.at(j, c));
                    hi = std::max(hi, v.at(j, c));
                }
                (void)h;
                CHECK(out->value.at(i, c) >= lo - 1e-12);
                CHECK(out->value.at(i, c) <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("attention rejects head counts that do not divide the feature dim") {
    Tensor q = random_tensor({3, 6}, 81);
    Tensor v = random_tensor({3, 6}, 82);
    Tensor id = Tensor::zeros({6, 6});
    CHECK_THROWS_AS(attention(make_const(q), make_const(q), make_const(v), make_const(id), 4),
                    ConfigError);
}

TEST_CASE("activations") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    NodePtr r = relu(make_const(x));
    CHECK(r->value[0] == 0.0);
    CHECK(r->value[1] == 0.0);
    CHECK(r->value[2] == 2.0);
    NodePtr s = sigmoid(make_const(Tensor({1}, {0.0})));
    CHECK(s->value[0] == doctest::Approx(0.5));
    Philox rng(91);
    for (int i = 0; i < 20; ++i) {
        const double xv = 4.0 * rng.normal();
        const double a = 1.0 / (1.0 + std::exp(-xv));
        const double b = 1.0 / (1.0 + std::exp(xv));
        CHECK(a + b == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("ops are pure: repeated evaluation is bit-identical") {
    Tensor in = random_tensor({6, 6, 3}, 101);
    Tensor k = random_tensor({3, 3, 3, 5}, 102);
    Tensor b = random_tensor({5}, 103);
    Tensor a1 = conv2d_value(in, k, &b, 1, 1);
    Tensor a2 = conv2d_value(in, k, &b, 1, 1);
    for (int64_t i = 0; i < a1.numel(); ++i) CHECK(a1[i] == a2[i]);
}

TEST_CASE("grad_check closed-form case: f(x)=x^2 at x=3") {
    Tensor p({1}, {3.0});
    const double err = grad_check([](NodePtr x) { return mul(x, x); }, p, 1e-5);
    CHECK(err < 1e-9);
}

TEST_CASE("every differentiable op passes grad_check in isolation") {
    const double tol = 1e-6;

    SUBCASE("conv2d w.r.t. kernel, input, bias") {
        Tensor in = random_tensor({5, 5, 2}, 201);
        Tensor k = random_tensor({3, 3, 2, 3}, 202);
        Tensor b = random_tensor({3}, 203);
        Tensor w = random_tensor({5, 5, 3}, 204);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(conv2d(make_const(in), p, make_const(b), 1, 1), w);
              }, k, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(conv2d(p, make_const(k), make_const(b), 1, 1), w);
              }, in, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(conv2d(make_const(in), make_const(k), p, 1, 1), w);
              }, b, 1e-5) < tol);
    }

    SUBCASE("transposed_conv2d") {
        Tensor in = random_tensor({3, 3, 2}, 211);
        Tensor k = random_tensor({3, 3, 4, 2}, 212);
        Tensor w = random_tensor({7, 7, 4}, 213);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(transposed_conv2d(make_const(in), p, nullptr, 2, 0, 7, 7), w);
              }, k, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(transposed_conv2d(p, make_const(k), nullptr, 2, 0, 7, 7), w);
              }, in, 1e-5) < tol);
    }

    SUBCASE("maxpool2d") {
        Tensor in = random_tensor({6, 6, 2}, 221);
        Tensor w = random_tensor({3, 3, 2}, 222);
        CHECK(grad_check([&](NodePtr p) { return dot_const(maxpool2d(p), w); }, in, 1e-6) < tol);
    }

    SUBCASE("layernorm") {
        Tensor in = random_tensor({3, 3, 6}, 231);
        Tensor g = random_tensor({6}, 232);
        Tensor s = random_tensor({6}, 233);
        Tensor w = random_tensor({3, 3, 6}, 234);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(layernorm(p, make_const(g), make_const(s)), w);
              }, in, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(layernorm(make_const(in), p, make_const(s)), w);
              }, g, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(layernorm(make_const(in), make_const(g), p), w);
              }, s, 1e-5) < tol);
    }

    SUBCASE("attention w.r.t. q, k, v, w_out") {
        Tensor q = random_tensor({4, 4}, 241, 0.5);
        Tensor k = random_tensor({5, 4}, 242, 0.5);
        Tensor v = random_tensor({5, 4}, 243);
        Tensor wo = random_tensor({4, 4}, 244);
        Tensor w = random_tensor({4, 4}, 245);
        auto head2 = [&](NodePtr qn, NodePtr kn, NodePtr vn, NodePtr won) {
            return dot_const(attention(qn, kn, vn, won, 2), w);
        };
        CHECK(grad_check([&](NodePtr p) {
                  return head2(p, make_const(k), make_const(v), make_const(wo));
              }, q, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return head2(make_const(q), p, make_const(v), make_const(wo));
              }, k, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return head2(make_const(q), make_const(k), p, make_const(wo));
              }, v, 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) {
                  return head2(make_const(q), make_const(k), make_const(v), p);
              }, wo, 1e-5) < tol);
    }

    SUBCASE("matmul, bilinear_resize, biases, reductions, activations") {
        Tensor a = random_tensor({3, 4}, 251);
        Tensor b = random_tensor({4, 5}, 252);
        Tensor w = random_tensor({3, 5}, 253);
        CHECK(grad_check([&](NodePtr p) { return dot_const(matmul(p, make_const(b)), w); }, a,
                         1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) { return dot_const(matmul(make_const(a), p), w); }, b,
                         1e-5) < tol);

        Tensor img = random_tensor({4, 4, 2}, 254);
        Tensor w2 = random_tensor({7, 5, 2}, 255);
        CHECK(grad_check([&](NodePtr p) { return dot_const(bilinear_resize(p, 7, 5), w2); }, img,
                         1e-5) < tol);

        Tensor cb = random_tensor({2}, 256);
        Tensor w3 = random_tensor({4, 4, 2}, 257);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(add_channel_bias(make_const(img), p), w3);
              }, cb, 1e-5) < tol);

        Tensor t = random_tensor({3, 3}, 258);
        CHECK(grad_check([&](NodePtr p) { return mse(p, make_const(t)); },
                         random_tensor({3, 3}, 259), 1e-5) < tol);

        Tensor mask({2, 2}, {1.0, 0.0, 1.0, 1.0});
        CHECK(grad_check([&](NodePtr p) { return bce_with_logits(p, mask); },
                         random_tensor({2, 2}, 260), 1e-5) < tol);

        CHECK(grad_check([&](NodePtr p) { return sum(relu(p)); },
                         random_tensor({3, 3}, 261), 1e-5) < tol);
        CHECK(grad_check([&](NodePtr p) { return sum(sigmoid(p)); },
                         random_tensor({3, 3}, 262), 1e-5) < tol);

        Tensor c1 = random_tensor({3, 3, 2}, 263);
        Tensor w4 = random_tensor({3, 3, 5}, 264);
        CHECK(grad_check([&](NodePtr p) {
                  return dot_const(concat_channels({make_const(c1), p}), w4);
              }, random_tensor({3, 3, 3}, 265), 1e-5) < tol);
    }
}

TEST_CASE("grad_check rejects non-finite values") {
    Tensor p({1}, {2.0});
    CHECK_THROWS_AS(grad_check([](NodePtr x) {
                        Tensor inf({1}, {std::numeric_limits<double>::infinity()});
                        return mul(x, make_const(inf));
                    }, p, 1e-5),
                    NumericError);
}
