#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "aunerf/kernels.hpp"
#include "aunerf/tensor.hpp"

namespace aunerf {

struct GraphError : std::runtime_error {
    explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Op : uint8_t {
    Input,
    Param,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    MatMulNN,  // A * B
    MatMulNT,  // A * B^T
    MatMulTN,  // A^T * B
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
    Softplus,
    Exp,
    LogClamped,
    Sqrt,
    Abs,
    Sign,
    Step,
    Affine,  // a*x + b
    SumAll,
    MeanAll,
    RowSum,
    ColSum,
    BroadcastRow,     // [n] -> (m,n)
    BroadcastCol,     // [m] -> (m,n)
    BroadcastScalar,  // [1] -> shape
    ConcatCols,
    SliceCols,
    Reshape,
    Im2Col,
    Col2Im,
    Upsample2,
    DownSum2,
    VolumeRender,
    VolumeRenderVjpSigma,
    VolumeRenderVjpRgb,
};

const char* op_name(Op op);

using NodeId = int32_t;

struct Node {
    Op op;
    Shape shape;
    std::vector<NodeId> inputs;
    double a = 0.0, b = 0.0;      // scalar attributes (slopes, clamps, affine coefs)
    kernels::Conv2dDims conv{};   // Im2Col / Col2Im geometry
    int64_t i0 = 0, i1 = 0;       // slice bounds / (rays, samples)
    std::string name;             // Input / Param only
};

using Bindings = std::unordered_map<std::string, Tensor>;

// A static compute graph over named leaves. Nodes are appended in topological
// order by construction. Backward passes are built symbolically: the gradient
// of a scalar root w.r.t. a leaf is itself a node made of the same op set, so
// gradients of gradients (the critic penalty) come out of the same machinery.
class Graph {
public:
    NodeId input(const std::string& name, Shape shape);
    NodeId param(const std::string& name, Tensor init);
    NodeId constant(Tensor value);

    NodeId add(NodeId x, NodeId y);
    NodeId sub(NodeId x, NodeId y);
    NodeId mul(NodeId x, NodeId y);
    NodeId div(NodeId x, NodeId y);
    NodeId matmul(NodeId x, NodeId y);
    NodeId matmul_nt(NodeId x, NodeId y);
    NodeId matmul_tn(NodeId x, NodeId y);
    NodeId relu(NodeId x);
    NodeId leaky_relu(NodeId x, double slope);
    NodeId sigmoid(NodeId x);
    NodeId tanh(NodeId x);
    NodeId softplus(NodeId x);
    NodeId exp(NodeId x);
    NodeId log_clamped(NodeId x, double floor = 1e-12);
    NodeId sqrt(NodeId x);
    NodeId abs(NodeId x);
    NodeId sign(NodeId x);
    NodeId step(NodeId x);
    NodeId affine(NodeId x, double a, double b);
    NodeId sum_all(NodeId x);
    NodeId mean_all(NodeId x);
    NodeId row_sum(NodeId x);
    NodeId col_sum(NodeId x);
    NodeId broadcast_row(NodeId v, int64_t m);
    NodeId broadcast_col(NodeId v, int64_t n);
    NodeId broadcast_scalar(NodeId s, Shape shape);
    NodeId concat_cols(NodeId x, NodeId y);
    NodeId slice_cols(NodeId x, int64_t c0, int64_t c1);
    NodeId reshape(NodeId x, Shape shape);
    NodeId im2col(NodeId x, int64_t kh, int64_t kw, int64_t stride, int64_t pad);
    NodeId col2im(NodeId g, const kernels::Conv2dDims& dims);
    NodeId upsample2(NodeId x);
    NodeId downsum2(NodeId x);
    // sigma (R,S), rgb (R*S,3), delta (R,S), bg [3] -> colors (R,3).
    // Differentiable w.r.t. sigma and rgb only.
    NodeId volume_render(NodeId sigma, NodeId rgb, NodeId delta, NodeId bg);

    // Convenience compounds.
    NodeId zeros_like(NodeId x);
    NodeId ones_like(NodeId x);
    NodeId add_row_bias(NodeId x, NodeId bias);
    NodeId square(NodeId x) { return mul(x, x); }

    // Symbolic gradient of a scalar root w.r.t. one leaf, as a graph node.
    NodeId gradient_node(NodeId root, NodeId leaf);
    // sqrt(sum(g^2)) where g = d root / d input_leaf; a scalar node that can
    // feed further graph outputs (the gradient penalty differentiates it).
    NodeId input_gradient_norm(NodeId root, NodeId input_leaf);

    Tensor evaluate(NodeId out, const Bindings& bindings) const;
    std::vector<Tensor> evaluate_many(const std::vector<NodeId>& outs,
                                      const Bindings& bindings) const;
    // d root / d leaf for each named leaf (param or input). Leaves with no
    // path to the root get zero tensors of their shape. Extra node values can
    // ride along in the same execution pass.
    std::map<std::string, Tensor> gradient(NodeId root, const Bindings& bindings,
                                           const std::vector<std::string>& wrt,
                                           const std::vector<NodeId>& extra = {},
                                           std::vector<Tensor>* extra_values = nullptr);

    const Node& node(NodeId id) const { return nodes_[(size_t)id]; }
    size_t size() const { return nodes_.size(); }
    NodeId leaf_id(const std::string& name) const;
    bool has_leaf(const std::string& name) const { return leaves_.count(name) > 0; }
    Tensor& param_value(const std::string& name);
    const Tensor& param_value(const std::string& name) const;
    // Parameter names in creation order (stable for optimizers/checkpoints).
    const std::vector<std::string>& param_names() const { return param_order_; }

private:
    NodeId push(Node n);
    NodeId elementwise_binary(Op op, NodeId x, NodeId y);
    NodeId unary_node(Op op, NodeId x, double a = 0.0, double b = 0.0);
    void check_id(NodeId id) const;
    const Shape& shape_of(NodeId id) const { return nodes_[(size_t)id].shape; }
    [[noreturn]] void fail(NodeId at, const std::string& msg) const;

    // Builds adjoint nodes for every node on a path from root to any of the
    // given leaves; returns leaf -> gradient node.
    std::unordered_map<NodeId, NodeId> build_backward(NodeId root,
                                                      const std::vector<NodeId>& leaves);
    std::vector<std::optional<NodeId>> vjp(NodeId id, NodeId adj);

    struct Plan {
        std::vector<NodeId> order;
        std::vector<std::vector<NodeId>> free_after;
    };
    const Plan& plan_for(const std::vector<NodeId>& outs) const;

    std::vector<Node> nodes_;
    std::unordered_map<std::string, NodeId> leaves_;
    std::vector<std::string> param_order_;
    std::unordered_map<std::string, Tensor> param_values_;
    std::vector<Tensor> const_values_;             // indexed by node i0 for Const
    std::map<std::vector<NodeId>, std::unordered_map<NodeId, NodeId>> backward_cache_;
    mutable std::map<std::vector<NodeId>, Plan> plan_cache_;
};

// Max relative error between the analytic gradient of a scalar root and
// central finite differences, over every coordinate of the named leaves.
double grad_check(Graph& g, NodeId root, const Bindings& bindings,
                  const std::vector<std::string>& wrt, double h = 1e-5);

}  // namespace aunerf
