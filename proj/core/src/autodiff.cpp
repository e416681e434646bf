#include "seedsr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "seedsr/rng.hpp"

namespace seedsr {

Tensor& Node::grad_ref() {
    if (grad.empty()) grad = Tensor::zeros(value.dims());
    return grad;
}

void Node::accumulate(const Tensor& g) {
    require_same_dims(value, g, op);
    grad_ref() += g;
}

void Node::accumulate_at(int64_t i, double g) { grad_ref()[i] += g; }

NodePtr make_leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

NodePtr make_const(Tensor v) {
    auto n = make_leaf(std::move(v));
    n->needs_grad = false;
    return n;
}

namespace {

NodePtr make_op(const char* op, Tensor value, std::vector<NodePtr> parents,
                std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->needs_grad = false;
    for (const auto& p : n->parents) n->needs_grad = n->needs_grad || p->needs_grad;
    if (n->needs_grad) n->backward_fn = std::move(bwd);
    return n;
}

}  // namespace

void backward(const NodePtr& root) {
    if (root->value.numel() != 1) {
        throw ShapeError(std::string("backward: root must be scalar, got ") +
                         root->value.shape_str());
    }
    // iterative post-order DFS -> topological order
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }
    root->grad_ref()[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise & linear algebra
// ---------------------------------------------------------------------------

NodePtr add(NodePtr a, NodePtr b) {
    require_same_dims(a->value, b->value, "add");
    Tensor out = a->value;
    out += b->value;
    return make_op("add", std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->needs_grad) n.parents[1]->accumulate(n.grad);
    });
}

NodePtr sub(NodePtr a, NodePtr b) {
    require_same_dims(a->value, b->value, "sub");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op("sub", std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->needs_grad) {
            Tensor& g = n.parents[1]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

NodePtr mul(NodePtr a, NodePtr b) {
    require_same_dims(a->value, b->value, "mul");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op("mul", std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->needs_grad) {
            Tensor& g = pa->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * pb->value[i];
        }
        if (pb->needs_grad) {
            Tensor& g = pb->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * pa->value[i];
        }
    });
}

NodePtr scale(NodePtr a, double s) {
    Tensor out = a->value;
    out *= s;
    return make_op("scale", std::move(out), {a}, [s](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
    });
}

NodePtr relu(NodePtr a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make_op("relu", std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        const Tensor& x = n.parents[0]->value;
        // gradient at exactly 0 defined as 0
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += x[i] > 0.0 ? n.grad[i] : 0.0;
    });
}

NodePtr sigmoid(NodePtr a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return make_op("sigmoid", std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double y = n.value[i];
            g[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

NodePtr matmul(NodePtr a, NodePtr b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    if (A.ndim() != 2 || B.ndim() != 2 || A.dim(1) != B.dim(0)) {
        throw ShapeError("matmul: inner axis mismatch " + A.shape_str() + " x " + B.shape_str());
    }
    const int N = A.dim(0), K = A.dim(1), M = B.dim(1);
    Tensor out({N, M});
    for (int i = 0; i < N; ++i) {
        double* orow = &out.at(i, 0);
        for (int k = 0; k < K; ++k) {
            const double s = A.at(i, k);
            const double* brow = &B.at(k, 0);
            for (int j = 0; j < M; ++j) orow[j] += s * brow[j];
        }
    }
    return make_op("matmul", std::move(out), {a, b}, [N, K, M](Node& n) {
        const Tensor& A = n.parents[0]->value;
        const Tensor& B = n.parents[1]->value;
        if (n.parents[0]->needs_grad) {
            Tensor& dA = n.parents[0]->grad_ref();  // dA = dOut * B^T
            for (int i = 0; i < N; ++i) {
                const double* grow = &n.grad.at(i, 0);
                for (int k = 0; k < K; ++k) {
                    const double* brow = &B.at(k, 0);
                    double s = 0.0;
                    for (int j = 0; j < M; ++j) s += grow[j] * brow[j];
                    dA.at(i, k) += s;
                }
            }
        }
        if (n.parents[1]->needs_grad) {
            Tensor& dB = n.parents[1]->grad_ref();  // dB = A^T * dOut
            for (int i = 0; i < N; ++i) {
                const double* grow = &n.grad.at(i, 0);
                for (int k = 0; k < K; ++k) {
                    const double s = A.at(i, k);
                    double* drow = &dB.at(k, 0);
                    for (int j = 0; j < M; ++j) drow[j] += s * grow[j];
                }
            }
        }
    });
}

NodePtr reshape(NodePtr a, std::vector<int> dims) {
    Tensor out = a->value.reshaped(dims);
    return make_op("reshape", std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

NodePtr add_row_bias(NodePtr x, NodePtr b) {
    const Tensor& X = x->value;
    const Tensor& B = b->value;
    if (X.ndim() != 2 || B.ndim() != 1 || B.dim(0) != X.dim(1)) {
        throw ShapeError("add_row_bias: " + X.shape_str() + " + " + B.shape_str());
    }
    const int N = X.dim(0), M = X.dim(1);
    Tensor out = X;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j) out.at(i, j) += B[j];
    return make_op("add_row_bias", std::move(out), {x, b}, [N, M](Node& n) {
        if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->needs_grad) {
            Tensor& db = n.parents[1]->grad_ref();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < M; ++j) db[j] += n.grad.at(i, j);
        }
    });
}

NodePtr add_channel_bias(NodePtr x, NodePtr b) {
    const Tensor& X = x->value;
    const Tensor& B = b->value;
    if (X.ndim() != 3 || B.ndim() != 1 || B.dim(0) != X.dim(2)) {
        throw ShapeError("add_channel_bias: " + X.shape_str() + " + " + B.shape_str());
    }
    const int C = X.dim(2);
    const int64_t sites = X.numel() / C;
    Tensor out = X;
    for (int64_t s = 0; s < sites; ++s)
        for (int c = 0; c < C; ++c) out[s * C + c] += B[c];
    return make_op("add_channel_bias", std::move(out), {x, b}, [sites, C](Node& n) {
        if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->needs_grad) {
            Tensor& db = n.parents[1]->grad_ref();
            for (int64_t s = 0; s < sites; ++s)
                for (int c = 0; c < C; ++c) db[c] += n.grad[s * C + c];
        }
    });
}

NodePtr concat_channels(const std::vector<NodePtr>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    const int H = xs[0]->value.dim(0), W = xs[0]->value.dim(1);
    int C = 0;
    for (const auto& x : xs) {
        if (x->value.ndim() != 3 || x->value.dim(0) != H || x->value.dim(1) != W) {
            throw ShapeError("concat_channels: spatial mismatch " + x->value.shape_str() +
                             " vs (" + std::to_string(H) + "," + std::to_string(W) + ",*)");
        }
        C += x->value.dim(2);
    }
    Tensor out({H, W, C});
    const int64_t sites = static_cast<int64_t>(H) * W;
    std::vector<int> offs;
    int off = 0;
    for (const auto& x : xs) {
        const int ci = x->value.dim(2);
        offs.push_back(off);
        for (int64_t s = 0; s < sites; ++s) {
            std::memcpy(out.raw() + s * C + off, x->value.raw() + s * ci,
                        sizeof(double) * static_cast<size_t>(ci));
        }
        off += ci;
    }
    return make_op("concat_channels", std::move(out), xs, [sites, C, offs](Node& n) {
        for (size_t p = 0; p < n.parents.size(); ++p) {
            if (!n.parents[p]->needs_grad) continue;
            Tensor& g = n.parents[p]->grad_ref();
            const int ci = n.parents[p]->value.dim(2);
            const int off = offs[p];
            for (int64_t s = 0; s < sites; ++s)
                for (int c = 0; c < ci; ++c) g[s * ci + c] += n.grad[s * C + off + c];
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

NodePtr sum(NodePtr a) {
    double s = 0.0;
    for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_op("sum", Tensor::scalar(s), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        const double gs = n.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += gs;
    });
}

NodePtr mean(NodePtr a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.numel())); }

NodePtr mse(NodePtr pred, NodePtr target) {
    require_same_dims(pred->value, target->value, "mse");
    const int64_t n = pred->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = pred->value[i] - target->value[i];
        s += d * d;
    }
    return make_op("mse", Tensor::scalar(s / static_cast<double>(n)), {pred, target},
                   [n](Node& nd) {
                       const double gs = nd.grad[0] * 2.0 / static_cast<double>(n);
                       const Tensor& p = nd.parents[0]->value;
                       const Tensor& t = nd.parents[1]->value;
                       if (nd.parents[0]->needs_grad) {
                           Tensor& g = nd.parents[0]->grad_ref();
                           for (int64_t i = 0; i < n; ++i) g[i] += gs * (p[i] - t[i]);
                       }
                       if (nd.parents[1]->needs_grad) {
                           Tensor& g = nd.parents[1]->grad_ref();
                           for (int64_t i = 0; i < n; ++i) g[i] -= gs * (p[i] - t[i]);
                       }
                   });
}

NodePtr bce_with_logits(NodePtr logits, const Tensor& targets) {
    require_same_dims(logits->value, targets, "bce_with_logits");
    const int64_t n = logits->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double z = logits->value[i];
        const double y = targets[i];
        s += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor tc = targets;
    return make_op("bce_with_logits", Tensor::scalar(s / static_cast<double>(n)), {logits},
                   [n, tc = std::move(tc)](Node& nd) {
                       Tensor& g = nd.parents[0]->grad_ref();
                       const double gs = nd.grad[0] / static_cast<double>(n);
                       const Tensor& z = nd.parents[0]->value;
                       for (int64_t i = 0; i < n; ++i) {
                           g[i] += gs * (1.0 / (1.0 + std::exp(-z[i])) - tc[i]);
                       }
                   });
}

NodePtr dot_const(NodePtr a, const Tensor& w) {
    require_same_dims(a->value, w, "dot_const");
    double s = dot(a->value, w);
    Tensor wc = w;
    return make_op("dot_const", Tensor::scalar(s), {a}, [wc = std::move(wc)](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        const double gs = n.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += gs * wc[i];
    });
}

// ---------------------------------------------------------------------------
// convolution family
// ---------------------------------------------------------------------------

void conv2d_shape(const std::vector<int>& in, const std::vector<int>& kernel, int stride,
                  int padding, int& out_h, int& out_w) {
    if (in.size() != 3) throw ShapeError("conv2d: input must be [H,W,Cin], got " + shape_str(in));
    if (kernel.size() != 4) {
        throw ShapeError("conv2d: kernel must be [kh,kw,Cin,Cout], got " + shape_str(kernel));
    }
    if (kernel[2] != in[2]) {
        throw ShapeError("conv2d: input channel axis " + std::to_string(in[2]) +
                         " != kernel Cin axis " + std::to_string(kernel[2]));
    }
    out_h = (in[0] + 2 * padding - kernel[0]) / stride + 1;
    out_w = (in[1] + 2 * padding - kernel[1]) / stride + 1;
    if (out_h < 1 || out_w < 1) {
        throw ShapeError("conv2d: output spatial size collapses for input " + shape_str(in) +
                         " kernel " + shape_str(kernel) + " stride " + std::to_string(stride) +
                         " padding " + std::to_string(padding));
    }
}

Tensor conv2d_value(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride,
                    int padding) {
    int Ho = 0, Wo = 0;
    conv2d_shape(input.dims(), kernel.dims(), stride, padding, Ho, Wo);
    const int H = input.dim(0), W = input.dim(1), Ci = input.dim(2);
    const int kh = kernel.dim(0), kw = kernel.dim(1), Co = kernel.dim(3);
    if (bias && (bias->ndim() != 1 || bias->dim(0) != Co)) {
        throw ShapeError("conv2d: bias axis " + bias->shape_str() + " != Cout " +
                         std::to_string(Co));
    }
    Tensor out({Ho, Wo, Co});
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            double* orow = &out.at(oy, ox, 0);
            if (bias) std::memcpy(orow, bias->raw(), sizeof(double) * static_cast<size_t>(Co));
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= W) continue;
                    const double* irow = &input.at(iy, ix, 0);
                    const double* kbase = &kernel.at(ky, kx, 0, 0);
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double a = irow[ci];
                        if (a == 0.0) continue;
                        const double* krow = kbase + static_cast<size_t>(ci) * Co;
                        for (int oc = 0; oc < Co; ++oc) orow[oc] += a * krow[oc];
                    }
                }
            }
        }
    }
    return out;
}

NodePtr conv2d(NodePtr input, NodePtr kernel, NodePtr bias, int stride, int padding) {
    Tensor out = conv2d_value(input->value, kernel->value, bias ? &bias->value : nullptr, stride,
                              padding);
    std::vector<NodePtr> parents = {input, kernel};
    if (bias) parents.push_back(bias);
    const bool has_bias = bias != nullptr;
    return make_op("conv2d", std::move(out), std::move(parents),
                   [stride, padding, has_bias](Node& n) {
        const Tensor& in = n.parents[0]->value;
        const Tensor& K = n.parents[1]->value;
        const int H = in.dim(0), W = in.dim(1), Ci = in.dim(2);
        const int kh = K.dim(0), kw = K.dim(1), Co = K.dim(3);
        const int Ho = n.value.dim(0), Wo = n.value.dim(1);
        const bool gin = n.parents[0]->needs_grad;
        const bool gker = n.parents[1]->needs_grad;
        Tensor* din = gin ? &n.parents[0]->grad_ref() : nullptr;
        Tensor* dker = gker ? &n.parents[1]->grad_ref() : nullptr;
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                const double* grow = &n.grad.at(oy, ox, 0);
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= W) continue;
                        const double* irow = &in.at(iy, ix, 0);
                        const double* kbase = &K.at(ky, kx, 0, 0);
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double* krow = kbase + static_cast<size_t>(ci) * Co;
                            if (gin) {
                                double s = 0.0;
                                for (int oc = 0; oc < Co; ++oc) s += grow[oc] * krow[oc];
                                din->at(iy, ix, ci) += s;
                            }
                            if (gker) {
                                const double a = irow[ci];
                                if (a == 0.0) continue;
                                double* dkrow = &dker->at(ky, kx, ci, 0);
                                for (int oc = 0; oc < Co; ++oc) dkrow[oc] += a * grow[oc];
                            }
                        }
                    }
                }
            }
        }
        if (has_bias && n.parents[2]->needs_grad) {
            Tensor& db = n.parents[2]->grad_ref();
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    const double* grow = &n.grad.at(oy, ox, 0);
                    for (int oc = 0; oc < Co; ++oc) db[oc] += grow[oc];
                }
        }
    });
}

namespace {

// Shared forward for transposed conv: scatter-add of input rows through the
// kernel into the (target_h, target_w) canvas, the exact adjoint of conv2d.
Tensor tconv_value(const Tensor& in, const Tensor& K, const Tensor* bias, int stride, int padding,
                   int target_h, int target_w) {
    if (in.ndim() != 3) throw ShapeError("transposed_conv2d: input must be [h,w,Cout]");
    if (K.ndim() != 4) throw ShapeError("transposed_conv2d: kernel must be [kh,kw,Cin,Cout]");
    if (K.dim(3) != in.dim(2)) {
        throw ShapeError("transposed_conv2d: input channel axis " + std::to_string(in.dim(2)) +
                         " != kernel Cout axis " + std::to_string(K.dim(3)));
    }
    const int h = in.dim(0), w = in.dim(1), Co = in.dim(2);
    const int kh = K.dim(0), kw = K.dim(1), Ci = K.dim(2);
    const int min_h = (h - 1) * stride + 1 - 2 * padding;
    const int min_w = (w - 1) * stride + 1 - 2 * padding;
    if (target_h < min_h || target_w < min_w) {
        throw ShapeError("transposed_conv2d: target (" + std::to_string(target_h) + "," +
                         std::to_string(target_w) + ") smaller than minimal upsample (" +
                         std::to_string(min_h) + "," + std::to_string(min_w) + ")");
    }
    Tensor out({target_h, target_w, Ci});
    for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
            const double* irow = &in.at(iy, ix, 0);
            for (int ky = 0; ky < kh; ++ky) {
                const int ty = iy * stride + ky - padding;
                if (ty < 0 || ty >= target_h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int tx = ix * stride + kx - padding;
                    if (tx < 0 || tx >= target_w) continue;
                    double* orow = &out.at(ty, tx, 0);
                    const double* kbase = &K.at(ky, kx, 0, 0);
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double* krow = kbase + static_cast<size_t>(ci) * Co;
                        double s = 0.0;
                        for (int oc = 0; oc < Co; ++oc) s += irow[oc] * krow[oc];
                        orow[ci] += s;
                    }
                }
            }
        }
    }
    if (bias) {
        if (bias->ndim() != 1 || bias->dim(0) != Ci) {
            throw ShapeError("transposed_conv2d: bias axis " + bias->shape_str() + " != Cin " +
                             std::to_string(Ci));
        }
        const int64_t sites = static_cast<int64_t>(target_h) * target_w;
        for (int64_t s = 0; s < sites; ++s)
            for (int c = 0; c < Ci; ++c) out[s * Ci + c] += (*bias)[c];
    }
    return out;
}

}  // namespace

NodePtr transposed_conv2d(NodePtr input, NodePtr kernel, NodePtr bias, int stride, int padding,
                          int target_h, int target_w) {
    Tensor out = tconv_value(input->value, kernel->value, bias ? &bias->value : nullptr, stride,
                             padding, target_h, target_w);
    std::vector<NodePtr> parents = {input, kernel};
    if (bias) parents.push_back(bias);
    const bool has_bias = bias != nullptr;
    return make_op("transposed_conv2d", std::move(out), std::move(parents),
                   [stride, padding, target_h, target_w, has_bias](Node& n) {
        const Tensor& in = n.parents[0]->value;
        const Tensor& K = n.parents[1]->value;
        const int h = in.dim(0), w = in.dim(1), Co = in.dim(2);
        const int kh = K.dim(0), kw = K.dim(1), Ci = K.dim(2);
        const bool gin = n.parents[0]->needs_grad;
        const bool gker = n.parents[1]->needs_grad;
        Tensor* din = gin ? &n.parents[0]->grad_ref() : nullptr;
        Tensor* dker = gker ? &n.parents[1]->grad_ref() : nullptr;
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                const double* irow = &in.at(iy, ix, 0);
                double* dirow = gin ? &din->at(iy, ix, 0) : nullptr;
                for (int ky = 0; ky < kh; ++ky) {
                    const int ty = iy * stride + ky - padding;
                    if (ty < 0 || ty >= target_h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int tx = ix * stride + kx - padding;
                        if (tx < 0 || tx >= target_w) continue;
                        const double* grow = &n.grad.at(ty, tx, 0);
                        const double* kbase = &K.at(ky, kx, 0, 0);
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double* krow = kbase + static_cast<size_t>(ci) * Co;
                            const double g = grow[ci];
                            if (gin) {
                                for (int oc = 0; oc < Co; ++oc) dirow[oc] += g * krow[oc];
                            }
                            if (gker) {
                                double* dkrow = &dker->at(ky, kx, ci, 0);
                                for (int oc = 0; oc < Co; ++oc) dkrow[oc] += g * irow[oc];
                            }
                        }
                    }
                }
            }
        }
        if (has_bias && n.parents[2]->needs_grad) {
            Tensor& db = n.parents[2]->grad_ref();
            const int64_t sites = static_cast<int64_t>(target_h) * target_w;
            for (int64_t s = 0; s < sites; ++s)
                for (int c = 0; c < Ci; ++c) db[c] += n.grad[s * Ci + c];
        }
    });
}

NodePtr maxpool2d(NodePtr input) {
    const Tensor& in = input->value;
    if (in.ndim() != 3 || in.dim(0) < 2 || in.dim(1) < 2) {
        throw ShapeError("maxpool2d: need [H>=2,W>=2,C], got " + in.shape_str());
    }
    const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
    const int Ho = H / 2, Wo = W / 2;
    Tensor out({Ho, Wo, C});
    std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            for (int c = 0; c < C; ++c) {
                // first index in scan order wins ties
                double best = in.at(2 * oy, 2 * ox, c);
                int64_t best_i = (static_cast<int64_t>(2 * oy) * W + 2 * ox) * C + c;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const double v = in.at(2 * oy + dy, 2 * ox + dx, c);
                        if (v > best) {
                            best = v;
                            best_i = (static_cast<int64_t>(2 * oy + dy) * W + 2 * ox + dx) * C + c;
                        }
                    }
                }
                out.at(oy, ox, c) = best;
                argmax[(static_cast<size_t>(oy) * Wo + ox) * C + c] = best_i;
            }
        }
    }
    return make_op("maxpool2d", std::move(out), {input}, [argmax = std::move(argmax)](Node& n) {
        Tensor& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < n.grad.numel(); ++i) g[argmax[static_cast<size_t>(i)]] += n.grad[i];
    });
}

NodePtr layernorm(NodePtr input, NodePtr gain, NodePtr shift, double eps) {
    const Tensor& x = input->value;
    if (x.ndim() != 3) throw ShapeError("layernorm: input must be [H,W,C], got " + x.shape_str());
    const int C = x.dim(2);
    if (gain->value.ndim() != 1 || gain->value.dim(0) != C) {
        throw ShapeError("layernorm: gain axis " + gain->value.shape_str() + " != C " +
                         std::to_string(C));
    }
    require_same_dims(gain->value, shift->value, "layernorm gain/shift");
    if (eps <= 0.0) throw ConfigError("layernorm: eps must be > 0");
    const int64_t sites = x.numel() / C;
    Tensor out(x.dims());
    Tensor inv_std({static_cast<int>(sites)});
    Tensor xhat(x.dims());
    for (int64_t s = 0; s < sites; ++s) {
        const double* row = x.raw() + s * C;
        double mu = 0.0;
        for (int c = 0; c < C; ++c) mu += row[c];
        mu /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = row[c] - mu;
            var += d * d;
        }
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[s] = is;
        double* orow = out.raw() + s * C;
        double* hrow = xhat.raw() + s * C;
        for (int c = 0; c < C; ++c) {
            const double h = (row[c] - mu) * is;
            hrow[c] = h;
            orow[c] = gain->value[c] * h + shift->value[c];
        }
    }
    return make_op("layernorm", std::move(out), {input, gain, shift},
                   [sites, C, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& n) {
        const Tensor& g = n.parents[1]->value;
        const bool gi = n.parents[0]->needs_grad;
        const bool gg = n.parents[1]->needs_grad;
        const bool gs = n.parents[2]->needs_grad;
        Tensor* din = gi ? &n.parents[0]->grad_ref() : nullptr;
        Tensor* dgain = gg ? &n.parents[1]->grad_ref() : nullptr;
        Tensor* dshift = gs ? &n.parents[2]->grad_ref() : nullptr;
        for (int64_t s = 0; s < sites; ++s) {
            const double* grow = n.grad.raw() + s * C;
            const double* hrow = xhat.raw() + s * C;
            if (gg || gs) {
                for (int c = 0; c < C; ++c) {
                    if (gg) (*dgain)[c] += grow[c] * hrow[c];
                    if (gs) (*dshift)[c] += grow[c];
                }
            }
            if (gi) {
                // dx = is/C * (C*dh - sum(dh) - xhat*sum(dh*xhat)), dh = g*dy
                double sum_dh = 0.0, sum_dh_h = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double dh = grow[c] * g[c];
                    sum_dh += dh;
                    sum_dh_h += dh * hrow[c];
                }
                const double is = inv_std[s];
                double* drow = din->raw() + s * C;
                for (int c = 0; c < C; ++c) {
                    const double dh = grow[c] * g[c];
                    drow[c] += is * (dh - (sum_dh + hrow[c] * sum_dh_h) / C);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// bilinear resize (half-pixel centers, border replicated)
// ---------------------------------------------------------------------------

namespace {

struct Lerp {
    int i0, i1;
    double w0, w1;
};

std::vector<Lerp> lerp_table(int in_n, int out_n) {
    std::vector<Lerp> t(static_cast<size_t>(out_n));
    const double r = static_cast<double>(in_n) / out_n;
    for (int i = 0; i < out_n; ++i) {
        const double src = (i + 0.5) * r - 0.5;
        const double f = std::floor(src);
        const double frac = src - f;
        int i0 = static_cast<int>(f);
        int i1 = i0 + 1;
        i0 = std::clamp(i0, 0, in_n - 1);
        i1 = std::clamp(i1, 0, in_n - 1);
        t[static_cast<size_t>(i)] = {i0, i1, 1.0 - frac, frac};
    }
    return t;
}

}  // namespace

Tensor bilinear_resize_value(const Tensor& input, int out_h, int out_w) {
    if (input.ndim() != 3) {
        throw ShapeError("bilinear_resize: input must be [H,W,C], got " + input.shape_str());
    }
    const int H = input.dim(0), W = input.dim(1), C = input.dim(2);
    const auto ty = lerp_table(H, out_h);
    const auto tx = lerp_table(W, out_w);
    Tensor out({out_h, out_w, C});
    for (int oy = 0; oy < out_h; ++oy) {
        const Lerp& ly = ty[static_cast<size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
            const Lerp& lx = tx[static_cast<size_t>(ox)];
            const double* r00 = &input.at(ly.i0, lx.i0, 0);
            const double* r01 = &input.at(ly.i0, lx.i1, 0);
            const double* r10 = &input.at(ly.i1, lx.i0, 0);
            const double* r11 = &input.at(ly.i1, lx.i1, 0);
            double* orow = &out.at(oy, ox, 0);
            for (int c = 0; c < C; ++c) {
                orow[c] = ly.w0 * (lx.w0 * r00[c] + lx.w1 * r01[c]) +
                          ly.w1 * (lx.w0 * r10[c] + lx.w1 * r11[c]);
            }
        }
    }
    return out;
}

NodePtr bilinear_resize(NodePtr input, int out_h, int out_w) {
    Tensor out = bilinear_resize_value(input->value, out_h, out_w);
    return make_op("bilinear_resize", std::move(out), {input}, [out_h, out_w](Node& n) {
        const Tensor& in = n.parents[0]->value;
        const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
        const auto ty = lerp_table(H, out_h);
        const auto tx = lerp_table(W, out_w);
        Tensor& g = n.parents[0]->grad_ref();
        for (int oy = 0; oy < out_h; ++oy) {
            const Lerp& ly = ty[static_cast<size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
                const Lerp& lx = tx[static_cast<size_t>(ox)];
                const double* grow = &n.grad.at(oy, ox, 0);
                for (int c = 0; c < C; ++c) {
                    const double gv = grow[c];
                    g.at(ly.i0, lx.i0, c) += ly.w0 * lx.w0 * gv;
                    g.at(ly.i0, lx.i1, c) += ly.w0 * lx.w1 * gv;
                    g.at(ly.i1, lx.i0, c) += ly.w1 * lx.w0 * gv;
                    g.at(ly.i1, lx.i1, c) += ly.w1 * lx.w1 * gv;
                }
            }
        }
    });
}

Tensor avgpool_to_value(const Tensor& input, int out_hw) {
    if (input.ndim() != 3) {
        throw ShapeError("avgpool_to: input must be [H,W,C], got " + input.shape_str());
    }
    const int H = input.dim(0), W = input.dim(1), C = input.dim(2);
    if (H % out_hw != 0 || W % out_hw != 0) {
        throw ShapeError("avgpool_to: " + input.shape_str() + " not divisible into " +
                         std::to_string(out_hw) + "x" + std::to_string(out_hw));
    }
    const int fy = H / out_hw, fx = W / out_hw;
    Tensor out({out_hw, out_hw, C});
    const double inv = 1.0 / (fy * fx);
    for (int oy = 0; oy < out_hw; ++oy)
        for (int ox = 0; ox < out_hw; ++ox) {
            double* orow = &out.at(oy, ox, 0);
            for (int dy = 0; dy < fy; ++dy)
                for (int dx = 0; dx < fx; ++dx) {
                    const double* irow = &input.at(oy * fy + dy, ox * fx + dx, 0);
                    for (int c = 0; c < C; ++c) orow[c] += irow[c];
                }
            for (int c = 0; c < C; ++c) orow[c] *= inv;
        }
    return out;
}

// ---------------------------------------------------------------------------
// multi-head attention (streaming scores, recomputing backward)
// ---------------------------------------------------------------------------

namespace {

// Score rows for query i across all heads: s[h*Nk + j]. Softmax in place.
void attn_softmax_rows(const Tensor& q, const Tensor& k, int i, int heads, int hd,
                       std::vector<double>& s) {
    const int Nk = k.dim(0);
    const int D = q.dim(1);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    const double* qi = &q.at(i, 0);
    for (int j = 0; j < Nk; ++j) {
        const double* kj = &k.at(j, 0);
        for (int h = 0; h < heads; ++h) {
            double acc = 0.0;
            const int base = h * hd;
            for (int d = 0; d < hd; ++d) acc += qi[base + d] * kj[base + d];
            s[static_cast<size_t>(h) * Nk + j] = acc * inv_sqrt;
        }
    }
    (void)D;
    for (int h = 0; h < heads; ++h) {
        double* row = s.data() + static_cast<size_t>(h) * Nk;
        double m = row[0];
        for (int j = 1; j < Nk; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < Nk; ++j) {
            row[j] = std::exp(row[j] - m);
            z += row[j];
        }
        const double iz = 1.0 / z;
        for (int j = 0; j < Nk; ++j) row[j] *= iz;
    }
}

}  // namespace

NodePtr attention(NodePtr query, NodePtr key, NodePtr value, NodePtr w_out, int heads) {
    const Tensor& q = query->value;
    const Tensor& k = key->value;
    const Tensor& v = value->value;
    const Tensor& wo = w_out->value;
    if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) {
        throw ShapeError("attention: query/key/value must be 2-D token matrices");
    }
    const int Nq = q.dim(0), D = q.dim(1);
    const int Nk = k.dim(0), Dv = v.dim(1);
    if (k.dim(1) != D) {
        throw ShapeError("attention: key feature axis " + std::to_string(k.dim(1)) +
                         " != query feature axis " + std::to_string(D));
    }
    if (v.dim(0) != Nk) {
        throw ShapeError("attention: value token axis " + std::to_string(v.dim(0)) +
                         " != key token axis " + std::to_string(Nk));
    }
    if (heads < 1 || D % heads != 0) {
        throw ConfigError("attention: heads " + std::to_string(heads) +
                          " does not divide feature dim " + std::to_string(D));
    }
    if (Dv % heads != 0) {
        throw ConfigError("attention: heads " + std::to_string(heads) +
                          " does not divide value dim " + std::to_string(Dv));
    }
    if (wo.ndim() != 2 || wo.dim(0) != Dv || wo.dim(1) != Dv) {
        throw ShapeError("attention: output projection must be [" + std::to_string(Dv) + "," +
                         std::to_string(Dv) + "], got " + wo.shape_str());
    }
    const int hd = D / heads, hv = Dv / heads;

    Tensor concat({Nq, Dv});
    std::vector<double> srow(static_cast<size_t>(heads) * Nk);
    for (int i = 0; i < Nq; ++i) {
        attn_softmax_rows(q, k, i, heads, hd, srow);
        double* crow = &concat.at(i, 0);
        for (int j = 0; j < Nk; ++j) {
            const double* vj = &v.at(j, 0);
            for (int h = 0; h < heads; ++h) {
                const double p = srow[static_cast<size_t>(h) * Nk + j];
                const int base = h * hv;
                for (int c = 0; c < hv; ++c) crow[base + c] += p * vj[base + c];
            }
        }
    }
    // out = concat * w_out
    Tensor out({Nq, Dv});
    for (int i = 0; i < Nq; ++i) {
        const double* crow = &concat.at(i, 0);
        double* orow = &out.at(i, 0);
        for (int a = 0; a < Dv; ++a) {
            const double s = crow[a];
            const double* wrow = &wo.at(a, 0);
            for (int b = 0; b < Dv; ++b) orow[b] += s * wrow[b];
        }
    }

    return make_op("attention", std::move(out), {query, key, value, w_out},
                   [heads, hd, hv, Nq, Nk, Dv, concat = std::move(concat)](Node& n) {
        const Tensor& q = n.parents[0]->value;
        const Tensor& k = n.parents[1]->value;
        const Tensor& v = n.parents[2]->value;
        const Tensor& wo = n.parents[3]->value;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

        // dConcat = dOut * wo^T ; dWo = concat^T * dOut
        Tensor dconcat({Nq, Dv});
        for (int i = 0; i < Nq; ++i) {
            const double* grow = &n.grad.at(i, 0);
            double* drow = &dconcat.at(i, 0);
            for (int a = 0; a < Dv; ++a) {
                const double* wrow = &wo.at(a, 0);
                double s = 0.0;
                for (int b = 0; b < Dv; ++b) s += grow[b] * wrow[b];
                drow[a] = s;
            }
        }
        if (n.parents[3]->needs_grad) {
            Tensor& dwo = n.parents[3]->grad_ref();
            for (int i = 0; i < Nq; ++i) {
                const double* crow = &concat.at(i, 0);
                const double* grow = &n.grad.at(i, 0);
                for (int a = 0; a < Dv; ++a) {
                    const double s = crow[a];
                    double* dwrow = &dwo.at(a, 0);
                    for (int b = 0; b < Dv; ++b) dwrow[b] += s * grow[b];
                }
            }
        }

        const bool gq = n.parents[0]->needs_grad;
        const bool gk = n.parents[1]->needs_grad;
        const bool gv = n.parents[2]->needs_grad;
        if (!(gq || gk || gv)) return;
        Tensor* dq = gq ? &n.parents[0]->grad_ref() : nullptr;
        Tensor* dk = gk ? &n.parents[1]->grad_ref() : nullptr;
        Tensor* dv = gv ? &n.parents[2]->grad_ref() : nullptr;

        std::vector<double> srow(static_cast<size_t>(heads) * Nk);
        std::vector<double> dprow(static_cast<size_t>(heads) * Nk);
        for (int i = 0; i < Nq; ++i) {
            attn_softmax_rows(q, k, i, heads, hd, srow);
            const double* dcrow = &dconcat.at(i, 0);
            // dP and softmax jacobian per head
            for (int h = 0; h < heads; ++h) {
                const double* p = srow.data() + static_cast<size_t>(h) * Nk;
                double* dp = dprow.data() + static_cast<size_t>(h) * Nk;
                const int vb = h * hv;
                double delta = 0.0;
                for (int j = 0; j < Nk; ++j) {
                    const double* vj = &v.at(j, vb);
                    double s = 0.0;
                    for (int c = 0; c < hv; ++c) s += dcrow[vb + c] * vj[c];
                    dp[j] = s;
                    delta += p[j] * s;
                }
                // reuse dp as dRaw = p*(dp - delta)/sqrt(hd)
                for (int j = 0; j < Nk; ++j) dp[j] = p[j] * (dp[j] - delta) * inv_sqrt;
            }
            const double* qi = &q.at(i, 0);
            double* dqi = gq ? &dq->at(i, 0) : nullptr;
            for (int j = 0; j < Nk; ++j) {
                const double* kj = &k.at(j, 0);
                double* dkj = gk ? &dk->at(j, 0) : nullptr;
                double* dvj = gv ? &dv->at(j, 0) : nullptr;
                for (int h = 0; h < heads; ++h) {
                    const double draw = dprow[static_cast<size_t>(h) * Nk + j];
                    const double p = srow[static_cast<size_t>(h) * Nk + j];
                    const int qb = h * hd;
                    const int vb = h * hv;
                    if (gq) {
                        for (int d = 0; d < hd; ++d) dqi[qb + d] += draw * kj[qb + d];
                    }
                    if (gk) {
                        for (int d = 0; d < hd; ++d) dkj[qb + d] += draw * qi[qb + d];
                    }
                    if (gv) {
                        for (int c = 0; c < hv; ++c) dvj[vb + c] += p * dcrow[vb + c];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

double grad_check(const std::function<NodePtr(NodePtr)>& f, const Tensor& params, double h,
                  int max_coords, uint64_t seed) {
    NodePtr p = make_leaf(params);
    NodePtr root = f(p);
    if (!root->value.all_finite()) throw NumericError("grad_check: non-finite function value");
    backward(root);
    Tensor analytic = p->grad.empty() ? Tensor::zeros(params.dims()) : p->grad;

    std::vector<int64_t> coords;
    const int64_t n = params.numel();
    if (max_coords < 0 || n <= max_coords) {
        coords.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
        Philox rng(seed, 0x67636b);  // "gck"
        std::unordered_set<int64_t> picked;
        while (static_cast<int>(picked.size()) < max_coords) {
            picked.insert(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
        }
        coords.assign(picked.begin(), picked.end());
        std::sort(coords.begin(), coords.end());
    }

    double max_err = 0.0;
    Tensor probe = params;
    for (int64_t i : coords) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(make_const(probe))->value[0];
        probe[i] = orig - h;
        const double fm = f(make_const(probe))->value[0];
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("grad_check: non-finite function value at probe");
        }
        const double central = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(analytic[i]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace seedsr
