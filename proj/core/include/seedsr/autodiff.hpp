#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "seedsr/tensor.hpp"

namespace seedsr {

// Reverse-mode autodiff over a DAG of dense tensors. Ops build Nodes eagerly;
// backward() toposorts from the root and visits each node exactly once.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulate
    const char* op = "leaf";
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // pulls this->grad into parents
    bool needs_grad = true;

    Tensor& grad_ref();
    void accumulate(const Tensor& g);
    void accumulate_at(int64_t i, double g);
};

NodePtr make_leaf(Tensor v);
NodePtr make_const(Tensor v);

// Seeds root (must be scalar) with grad 1 and propagates.
void backward(const NodePtr& root);

// ---- elementwise / linear algebra ----
NodePtr add(NodePtr a, NodePtr b);
NodePtr sub(NodePtr a, NodePtr b);
NodePtr mul(NodePtr a, NodePtr b);
NodePtr scale(NodePtr a, double s);
NodePtr relu(NodePtr a);
NodePtr sigmoid(NodePtr a);
NodePtr matmul(NodePtr a, NodePtr b);              // [N,K] x [K,M]
NodePtr reshape(NodePtr a, std::vector<int> dims);
NodePtr add_row_bias(NodePtr x, NodePtr b);        // [N,M] + [M] per row
NodePtr add_channel_bias(NodePtr x, NodePtr b);    // [H,W,C] + [C] per position
NodePtr concat_channels(const std::vector<NodePtr>& xs);  // [H,W,Ci] -> [H,W,sum Ci]

// ---- reductions ----
NodePtr sum(NodePtr a);
NodePtr mean(NodePtr a);
NodePtr mse(NodePtr pred, NodePtr target);  // mean squared error over all elements
NodePtr bce_with_logits(NodePtr logits, const Tensor& targets);  // mean, numerically stable
NodePtr dot_const(NodePtr a, const Tensor& w);

// ---- spatial ops ([H,W,C] maps) ----
// Cross-correlation with kernel [kh,kw,Cin,Cout]; bias may be null.
NodePtr conv2d(NodePtr input, NodePtr kernel, NodePtr bias, int stride, int padding);
// Exact adjoint of conv2d(.; kernel, stride, padding) from [h,w,Cout] to
// [target_h, target_w, Cin]; zero-pads / crops so the output spatial size is
// exactly the requested target.
NodePtr transposed_conv2d(NodePtr input, NodePtr kernel, NodePtr bias, int stride, int padding,
                          int target_h, int target_w);
NodePtr maxpool2d(NodePtr input);  // window 2, stride 2, floor semantics
NodePtr layernorm(NodePtr input, NodePtr gain, NodePtr shift, double eps = 1e-5);
NodePtr bilinear_resize(NodePtr input, int out_h, int out_w);

// Multi-head attention: softmax(QK^T/sqrt(D/heads))V per head, heads
// concatenated, then projected by w_out [Dv,Dv]. Scores are streamed row by
// row (never materialized); backward recomputes them.
NodePtr attention(NodePtr query, NodePtr key, NodePtr value, NodePtr w_out, int heads);

// ---- plain-tensor helpers shared with non-graph code ----
Tensor conv2d_value(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride,
                    int padding);
Tensor bilinear_resize_value(const Tensor& input, int out_h, int out_w);
Tensor avgpool_to_value(const Tensor& input, int out_hw);
void conv2d_shape(const std::vector<int>& in, const std::vector<int>& kernel, int stride,
                  int padding, int& out_h, int& out_w);

// Max relative error between the analytic gradient of f (a scalar-valued graph
// of one parameter tensor) and central differences, over sampled coordinates.
double grad_check(const std::function<NodePtr(NodePtr)>& f, const Tensor& params, double h = 1e-5,
                  int max_coords = -1, uint64_t seed = 0);

}  // namespace seedsr
