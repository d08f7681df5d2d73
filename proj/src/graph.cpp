#include "aunerf/graph.hpp"

#include <algorithm>
#include <cmath>

namespace aunerf {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::Const: return "const";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::MatMulNN: return "matmul";
        case Op::MatMulNT: return "matmul_nt";
        case Op::MatMulTN: return "matmul_tn";
        case Op::Relu: return "relu";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Softplus: return "softplus";
        case Op::Exp: return "exp";
        case Op::LogClamped: return "log_clamped";
        case Op::Sqrt: return "sqrt";
        case Op::Abs: return "abs";
        case Op::Sign: return "sign";
        case Op::Step: return "step";
        case Op::Affine: return "affine";
        case Op::SumAll: return "sum_all";
        case Op::MeanAll: return "mean_all";
        case Op::RowSum: return "row_sum";
        case Op::ColSum: return "col_sum";
        case Op::BroadcastRow: return "broadcast_row";
        case Op::BroadcastCol: return "broadcast_col";
        case Op::BroadcastScalar: return "broadcast_scalar";
        case Op::ConcatCols: return "concat_cols";
        case Op::SliceCols: return "slice_cols";
        case Op::Reshape: return "reshape";
        case Op::Im2Col: return "im2col";
        case Op::Col2Im: return "col2im";
        case Op::Upsample2: return "upsample2";
        case Op::DownSum2: return "downsum2";
        case Op::VolumeRender: return "volume_render";
        case Op::VolumeRenderVjpSigma: return "volume_render_vjp_sigma";
        case Op::VolumeRenderVjpRgb: return "volume_render_vjp_rgb";
    }
    return "?";
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || (size_t)id >= nodes_.size()) throw GraphError("invalid node id");
}

void Graph::fail(NodeId at, const std::string& msg) const {
    std::string where = at >= 0 ? ("node #" + std::to_string(at) + " (" +
                                   op_name(nodes_[(size_t)at].op) + ")")
                                : "graph";
    throw GraphError(where + ": " + msg);
}

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return (NodeId)(nodes_.size() - 1);
}

NodeId Graph::input(const std::string& name, Shape shape) {
    if (leaves_.count(name)) throw GraphError("duplicate leaf name '" + name + "'");
    Node n;
    n.op = Op::Input;
    n.shape = std::move(shape);
    n.name = name;
    NodeId id = push(std::move(n));
    leaves_[name] = id;
    return id;
}

NodeId Graph::param(const std::string& name, Tensor init) {
    if (leaves_.count(name)) throw GraphError("duplicate leaf name '" + name + "'");
    Node n;
    n.op = Op::Param;
    n.shape = init.shape;
    n.name = name;
    NodeId id = push(std::move(n));
    leaves_[name] = id;
    param_order_.push_back(name);
    param_values_.emplace(name, std::move(init));
    return id;
}

NodeId Graph::constant(Tensor value) {
    Node n;
    n.op = Op::Const;
    n.shape = value.shape;
    n.i0 = (int64_t)const_values_.size();
    const_values_.push_back(std::move(value));
    return push(std::move(n));
}

NodeId Graph::elementwise_binary(Op op, NodeId x, NodeId y) {
    check_id(x);
    check_id(y);
    if (shape_of(x) != shape_of(y))
        fail(x, std::string(op_name(op)) + ": shape mismatch " + shape_str(shape_of(x)) +
                    " vs " + shape_str(shape_of(y)));
    Node n;
    n.op = op;
    n.shape = shape_of(x);
    n.inputs = {x, y};
    return push(std::move(n));
}

NodeId Graph::unary_node(Op op, NodeId x, double a, double b) {
    check_id(x);
    Node n;
    n.op = op;
    n.shape = shape_of(x);
    n.inputs = {x};
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

NodeId Graph::add(NodeId x, NodeId y) { return elementwise_binary(Op::Add, x, y); }
NodeId Graph::sub(NodeId x, NodeId y) { return elementwise_binary(Op::Sub, x, y); }
NodeId Graph::mul(NodeId x, NodeId y) { return elementwise_binary(Op::Mul, x, y); }
NodeId Graph::div(NodeId x, NodeId y) { return elementwise_binary(Op::Div, x, y); }

NodeId Graph::matmul(NodeId x, NodeId y) {
    check_id(x);
    check_id(y);
    const Shape &sx = shape_of(x), &sy = shape_of(y);
    if (sx.size() != 2 || sy.size() != 2 || sx[1] != sy[0])
        fail(x, "matmul: incompatible shapes " + shape_str(sx) + " x " + shape_str(sy));
    Node n;
    n.op = Op::MatMulNN;
    n.shape = {sx[0], sy[1]};
    n.inputs = {x, y};
    return push(std::move(n));
}

NodeId Graph::matmul_nt(NodeId x, NodeId y) {
    check_id(x);
    check_id(y);
    const Shape &sx = shape_of(x), &sy = shape_of(y);
    if (sx.size() != 2 || sy.size() != 2 || sx[1] != sy[1])
        fail(x, "matmul_nt: incompatible shapes " + shape_str(sx) + " x " + shape_str(sy));
    Node n;
    n.op = Op::MatMulNT;
    n.shape = {sx[0], sy[0]};
    n.inputs = {x, y};
    return push(std::move(n));
}

NodeId Graph::matmul_tn(NodeId x, NodeId y) {
    check_id(x);
    check_id(y);
    const Shape &sx = shape_of(x), &sy = shape_of(y);
    if (sx.size() != 2 || sy.size() != 2 || sx[0] != sy[0])
        fail(x, "matmul_tn: incompatible shapes " + shape_str(sx) + " x " + shape_str(sy));
    Node n;
    n.op = Op::MatMulTN;
    n.shape = {sx[1], sy[1]};
    n.inputs = {x, y};
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) { return unary_node(Op::Relu, x); }
NodeId Graph::leaky_relu(NodeId x, double slope) { return unary_node(Op::LeakyRelu, x, slope); }
NodeId Graph::sigmoid(NodeId x) { return unary_node(Op::Sigmoid, x); }
NodeId Graph::tanh(NodeId x) { return unary_node(Op::Tanh, x); }
NodeId Graph::softplus(NodeId x) { return unary_node(Op::Softplus, x); }
NodeId Graph::exp(NodeId x) { return unary_node(Op::Exp, x); }
NodeId Graph::log_clamped(NodeId x, double floor) { return unary_node(Op::LogClamped, x, floor); }
NodeId Graph::sqrt(NodeId x) { return unary_node(Op::Sqrt, x); }
NodeId Graph::abs(NodeId x) { return unary_node(Op::Abs, x); }
NodeId Graph::sign(NodeId x) { return unary_node(Op::Sign, x); }
NodeId Graph::step(NodeId x) { return unary_node(Op::Step, x); }
NodeId Graph::affine(NodeId x, double a, double b) { return unary_node(Op::Affine, x, a, b); }

NodeId Graph::sum_all(NodeId x) {
    check_id(x);
    Node n;
    n.op = Op::SumAll;
    n.shape = {1};
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::mean_all(NodeId x) {
    check_id(x);
    Node n;
    n.op = Op::MeanAll;
    n.shape = {1};
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::row_sum(NodeId x) {
    check_id(x);
    const Shape& s = shape_of(x);
    if (s.size() != 2) fail(x, "row_sum expects a matrix, got " + shape_str(s));
    Node n;
    n.op = Op::RowSum;
    n.shape = {s[0]};
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::col_sum(NodeId x) {
    check_id(x);
    const Shape& s = shape_of(x);
    if (s.size() != 2) fail(x, "col_sum expects a matrix, got " + shape_str(s));
    Node n;
    n.op = Op::ColSum;
    n.shape = {s[1]};
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::broadcast_row(NodeId v, int64_t m) {
    check_id(v);
    const Shape& s = shape_of(v);
    if (s.size() != 1) fail(v, "broadcast_row expects a vector, got " + shape_str(s));
    Node n;
    n.op = Op::BroadcastRow;
    n.shape = {m, s[0]};
    n.inputs = {v};
    return push(std::move(n));
}

NodeId Graph::broadcast_col(NodeId v, int64_t cols) {
    check_id(v);
    const Shape& s = shape_of(v);
    if (s.size() != 1) fail(v, "broadcast_col expects a vector, got " + shape_str(s));
    Node n;
    n.op = Op::BroadcastCol;
    n.shape = {s[0], cols};
    n.inputs = {v};
    return push(std::move(n));
}

NodeId Graph::broadcast_scalar(NodeId s, Shape shape) {
    check_id(s);
    if (shape_numel(shape_of(s)) != 1) fail(s, "broadcast_scalar expects a scalar");
    Node n;
    n.op = Op::BroadcastScalar;
    n.shape = std::move(shape);
    n.inputs = {s};
    return push(std::move(n));
}

NodeId Graph::concat_cols(NodeId x, NodeId y) {
    check_id(x);
    check_id(y);
    const Shape &sx = shape_of(x), &sy = shape_of(y);
    if (sx.size() != 2 || sy.size() != 2 || sx[0] != sy[0])
        fail(x, "concat_cols: incompatible shapes " + shape_str(sx) + " | " + shape_str(sy));
    Node n;
    n.op = Op::ConcatCols;
    n.shape = {sx[0], sx[1] + sy[1]};
    n.inputs = {x, y};
    return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId x, int64_t c0, int64_t c1) {
    check_id(x);
    const Shape& s = shape_of(x);
    if (s.size() != 2 || c0 < 0 || c1 > s[1] || c0 >= c1)
        fail(x, "slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                    ") for " + shape_str(s));
    Node n;
    n.op = Op::SliceCols;
    n.shape = {s[0], c1 - c0};
    n.inputs = {x};
    n.i0 = c0;
    n.i1 = c1;
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
    check_id(x);
    if (shape_numel(shape) != shape_numel(shape_of(x)))
        fail(x, "reshape: element count mismatch " + shape_str(shape_of(x)) + " -> " +
                    shape_str(shape));
    Node n;
    n.op = Op::Reshape;
    n.shape = std::move(shape);
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::im2col(NodeId x, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    check_id(x);
    const Shape& s = shape_of(x);
    if (s.size() != 4) fail(x, "im2col expects NHWC, got " + shape_str(s));
    kernels::Conv2dDims d;
    d.n = s[0];
    d.h = s[1];
    d.w = s[2];
    d.c = s[3];
    d.kh = kh;
    d.kw = kw;
    d.stride = stride;
    d.pad = pad;
    d.oh = kernels::conv_out(d.h, kh, stride, pad);
    d.ow = kernels::conv_out(d.w, kw, stride, pad);
    if (d.oh <= 0 || d.ow <= 0) fail(x, "im2col: empty output for " + shape_str(s));
    Node n;
    n.op = Op::Im2Col;
    n.shape = {d.n * d.oh * d.ow, kh * kw * d.c};
    n.inputs = {x};
    n.conv = d;
    return push(std::move(n));
}

NodeId Graph::col2im(NodeId g, const kernels::Conv2dDims& dims) {
    check_id(g);
    const Shape& s = shape_of(g);
    if (s.size() != 2 || s[0] != dims.n * dims.oh * dims.ow ||
        s[1] != dims.kh * dims.kw * dims.c)
        fail(g, "col2im: column matrix " + shape_str(s) + " does not match geometry");
    Node n;
    n.op = Op::Col2Im;
    n.shape = {dims.n, dims.h, dims.w, dims.c};
    n.inputs = {g};
    n.conv = dims;
    return push(std::move(n));
}

NodeId Graph::upsample2(NodeId x) {
    check_id(x);
    const Shape& s = shape_of(x);
    if (s.size() != 4) fail(x, "upsample2 expects NHWC, got " + shape_str(s));
    Node n;
    n.op = Op::Upsample2;
    n.shape = {s[0], 2 * s[1], 2 * s[2], s[3]};
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::downsum2(NodeId x) {
    check_id(x);
    const Shape& s = shape_of(x);
    if (s.size() != 4 || s[1] % 2 || s[2] % 2)
        fail(x, "downsum2 expects NHWC with even H,W, got " + shape_str(s));
    Node n;
    n.op = Op::DownSum2;
    n.shape = {s[0], s[1] / 2, s[2] / 2, s[3]};
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::volume_render(NodeId sigma, NodeId rgb, NodeId delta, NodeId bg) {
    check_id(sigma);
    check_id(rgb);
    check_id(delta);
    check_id(bg);
    const Shape &ss = shape_of(sigma), &sr = shape_of(rgb), &sd = shape_of(delta),
                &sb = shape_of(bg);
    if (ss.size() != 2) fail(sigma, "volume_render: sigma must be (rays, samples)");
    const int64_t rays = ss[0], samples = ss[1];
    if (sr != Shape{rays * samples, 3})
        fail(rgb, "volume_render: rgb must be (rays*samples, 3), got " + shape_str(sr));
    if (sd != ss) fail(delta, "volume_render: delta shape " + shape_str(sd) + " != sigma");
    if (shape_numel(sb) != 3) fail(bg, "volume_render: background must have 3 entries");
    Node n;
    n.op = Op::VolumeRender;
    n.shape = {rays, 3};
    n.inputs = {sigma, rgb, delta, bg};
    n.i0 = rays;
    n.i1 = samples;
    return push(std::move(n));
}

NodeId Graph::zeros_like(NodeId x) {
    return broadcast_scalar(constant(Tensor::scalar(0.0)), shape_of(x));
}

NodeId Graph::ones_like(NodeId x) {
    return broadcast_scalar(constant(Tensor::scalar(1.0)), shape_of(x));
}

NodeId Graph::add_row_bias(NodeId x, NodeId bias) {
    const Shape& s = shape_of(x);
    if (s.size() != 2) fail(x, "add_row_bias expects a matrix");
    return add(x, broadcast_row(bias, s[0]));
}

NodeId Graph::leaf_id(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw GraphError("no leaf named '" + name + "'");
    return it->second;
}

Tensor& Graph::param_value(const std::string& name) {
    auto it = param_values_.find(name);
    if (it == param_values_.end()) throw GraphError("no parameter named '" + name + "'");
    return it->second;
}

const Tensor& Graph::param_value(const std::string& name) const {
    auto it = param_values_.find(name);
    if (it == param_values_.end()) throw GraphError("no parameter named '" + name + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// Backward construction

std::vector<std::optional<NodeId>> Graph::vjp(NodeId id, NodeId adj) {
    const Node nd = nodes_[(size_t)id];  // copy: push() may reallocate nodes_
    std::vector<std::optional<NodeId>> out(nd.inputs.size());
    switch (nd.op) {
        case Op::Input:
        case Op::Param:
        case Op::Const:
            break;
        case Op::Add:
            out[0] = adj;
            out[1] = adj;
            break;
        case Op::Sub:
            out[0] = adj;
            out[1] = affine(adj, -1.0, 0.0);
            break;
        case Op::Mul:
            out[0] = mul(adj, nd.inputs[1]);
            out[1] = mul(adj, nd.inputs[0]);
            break;
        case Op::Div: {
            // y = a/b: da = g/b, db = -g*a/b^2
            NodeId a = nd.inputs[0], b = nd.inputs[1];
            out[0] = div(adj, b);
            out[1] = affine(div(mul(adj, a), mul(b, b)), -1.0, 0.0);
            break;
        }
        case Op::MatMulNN:
            out[0] = matmul_nt(adj, nd.inputs[1]);
            out[1] = matmul_tn(nd.inputs[0], adj);
            break;
        case Op::MatMulNT:
            out[0] = matmul(adj, nd.inputs[1]);
            out[1] = matmul_tn(adj, nd.inputs[0]);
            break;
        case Op::MatMulTN:
            out[0] = matmul_nt(nd.inputs[1], adj);
            out[1] = matmul(nd.inputs[0], adj);
            break;
        case Op::Relu:
            out[0] = mul(adj, step(nd.inputs[0]));
            break;
        case Op::LeakyRelu:
            out[0] = mul(adj, affine(step(nd.inputs[0]), 1.0 - nd.a, nd.a));
            break;
        case Op::Sigmoid:
            out[0] = mul(adj, mul(id, affine(id, -1.0, 1.0)));
            break;
        case Op::Tanh:
            out[0] = mul(adj, affine(mul(id, id), -1.0, 1.0));
            break;
        case Op::Softplus:
            out[0] = mul(adj, sigmoid(nd.inputs[0]));
            break;
        case Op::Exp:
            out[0] = mul(adj, id);
            break;
        case Op::LogClamped: {
            // d/dx log(max(x,f)) = [x > f] / max(x,f); 1/max(x,f) = exp(-y)
            NodeId gate = step(affine(nd.inputs[0], 1.0, -nd.a));
            out[0] = mul(adj, mul(gate, exp(affine(id, -1.0, 0.0))));
            break;
        }
        case Op::Sqrt:
            out[0] = mul(adj, affine(div(ones_like(id), id), 0.5, 0.0));
            break;
        case Op::Abs:
            out[0] = mul(adj, sign(nd.inputs[0]));
            break;
        case Op::Sign:
        case Op::Step:
            // derivative is zero almost everywhere
            out[0] = zeros_like(nd.inputs[0]);
            break;
        case Op::Affine:
            out[0] = affine(adj, nd.a, 0.0);
            break;
        case Op::SumAll:
            out[0] = broadcast_scalar(adj, shape_of(nd.inputs[0]));
            break;
        case Op::MeanAll: {
            double inv = 1.0 / (double)shape_numel(shape_of(nd.inputs[0]));
            out[0] = affine(broadcast_scalar(adj, shape_of(nd.inputs[0])), inv, 0.0);
            break;
        }
        case Op::RowSum:
            out[0] = broadcast_col(adj, shape_of(nd.inputs[0])[1]);
            break;
        case Op::ColSum:
            out[0] = broadcast_row(adj, shape_of(nd.inputs[0])[0]);
            break;
        case Op::BroadcastRow:
            out[0] = col_sum(adj);
            break;
        case Op::BroadcastCol:
            out[0] = row_sum(adj);
            break;
        case Op::BroadcastScalar:
            out[0] = sum_all(adj);
            break;
        case Op::ConcatCols: {
            int64_t na = shape_of(nd.inputs[0])[1];
            int64_t nb = shape_of(nd.inputs[1])[1];
            out[0] = slice_cols(adj, 0, na);
            out[1] = slice_cols(adj, na, na + nb);
            break;
        }
        case Op::SliceCols: {
            const Shape& s = shape_of(nd.inputs[0]);
            NodeId zero = constant(Tensor::scalar(0.0));
            NodeId g = adj;
            if (nd.i0 > 0) g = concat_cols(broadcast_scalar(zero, {s[0], nd.i0}), g);
            if (nd.i1 < s[1]) g = concat_cols(g, broadcast_scalar(zero, {s[0], s[1] - nd.i1}));
            out[0] = g;
            break;
        }
        case Op::Reshape:
            out[0] = reshape(adj, shape_of(nd.inputs[0]));
            break;
        case Op::Im2Col:
            out[0] = col2im(adj, nd.conv);
            break;
        case Op::Col2Im:
            out[0] = im2col(adj, nd.conv.kh, nd.conv.kw, nd.conv.stride, nd.conv.pad);
            break;
        case Op::Upsample2:
            out[0] = downsum2(adj);
            break;
        case Op::DownSum2:
            out[0] = upsample2(adj);
            break;
        case Op::VolumeRender: {
            NodeId sigma = nd.inputs[0], rgb = nd.inputs[1], delta = nd.inputs[2],
                   bg = nd.inputs[3];
            Node vs;
            vs.op = Op::VolumeRenderVjpSigma;
            vs.shape = shape_of(sigma);
            vs.inputs = {sigma, rgb, delta, bg, adj};
            vs.i0 = nd.i0;
            vs.i1 = nd.i1;
            out[0] = push(std::move(vs));
            Node vr;
            vr.op = Op::VolumeRenderVjpRgb;
            vr.shape = shape_of(rgb);
            vr.inputs = {sigma, rgb, delta, bg, adj};
            vr.i0 = nd.i0;
            vr.i1 = nd.i1;
            out[1] = push(std::move(vr));
            // depths and background are not differentiated
            break;
        }
        case Op::VolumeRenderVjpSigma:
        case Op::VolumeRenderVjpRgb:
            // no registered second derivative
            break;
    }
    return out;
}

std::unordered_map<NodeId, NodeId> Graph::build_backward(NodeId root,
                                                         const std::vector<NodeId>& leaves) {
    check_id(root);
    if (shape_numel(shape_of(root)) != 1)
        fail(root, "gradient root must be scalar, got " + shape_str(shape_of(root)));
    // needs[i]: some requested leaf is reachable from i through its inputs
    std::vector<char> needs(nodes_.size(), 0);
    for (NodeId l : leaves) {
        check_id(l);
        needs[(size_t)l] = 1;
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (needs[i]) continue;
        for (NodeId in : nodes_[i].inputs) {
            if (needs[(size_t)in]) {
                needs[i] = 1;
                break;
            }
        }
    }

    std::unordered_map<NodeId, NodeId> adj;
    if (!needs[(size_t)root]) return adj;  // no leaf on any path; all gradients zero
    adj[root] = constant(Tensor::scalar(1.0));
    for (NodeId i = root; i >= 0; --i) {
        auto it = adj.find(i);
        if (it == adj.end()) continue;
        // copy: vjp() appends nodes and may reallocate nodes_
        const Op op = nodes_[(size_t)i].op;
        const std::vector<NodeId> inputs = nodes_[(size_t)i].inputs;
        if (inputs.empty()) continue;
        bool any = false;
        for (NodeId in : inputs) any = any || needs[(size_t)in];
        if (!any) continue;
        auto grads = vjp(i, it->second);
        for (size_t k = 0; k < inputs.size(); ++k) {
            NodeId in = inputs[k];
            if (!needs[(size_t)in]) continue;
            if (!grads[k])
                fail(i, std::string("no registered derivative for input ") +
                            std::to_string(k) + " of " + op_name(op));
            auto found = adj.find(in);
            if (found == adj.end())
                adj[in] = *grads[k];
            else
                found->second = add(found->second, *grads[k]);
        }
    }
    return adj;
}

NodeId Graph::gradient_node(NodeId root, NodeId leaf) {
    std::vector<NodeId> key{root, leaf};
    auto it = backward_cache_.find(key);
    if (it == backward_cache_.end()) {
        auto adj = build_backward(root, {leaf});
        if (!adj.count(leaf)) adj[leaf] = zeros_like(leaf);
        it = backward_cache_.emplace(key, std::move(adj)).first;
    }
    return it->second.at(leaf);
}

NodeId Graph::input_gradient_norm(NodeId root, NodeId input_leaf) {
    NodeId g = gradient_node(root, input_leaf);
    return sqrt(sum_all(mul(g, g)));
}

std::map<std::string, Tensor> Graph::gradient(NodeId root, const Bindings& bindings,
                                              const std::vector<std::string>& wrt,
                                              const std::vector<NodeId>& extra,
                                              std::vector<Tensor>* extra_values) {
    std::vector<NodeId> leaf_ids;
    leaf_ids.reserve(wrt.size());
    for (const auto& name : wrt) leaf_ids.push_back(leaf_id(name));

    std::vector<NodeId> key = leaf_ids;
    std::sort(key.begin(), key.end());
    key.insert(key.begin(), root);
    auto it = backward_cache_.find(key);
    if (it == backward_cache_.end())
        it = backward_cache_.emplace(key, build_backward(root, leaf_ids)).first;
    const auto& adj = it->second;

    std::vector<NodeId> outs;
    std::vector<size_t> out_slot;
    for (size_t i = 0; i < leaf_ids.size(); ++i) {
        auto found = adj.find(leaf_ids[i]);
        if (found != adj.end()) {
            outs.push_back(found->second);
            out_slot.push_back(i);
        }
    }
    const size_t ngrad = outs.size();
    for (NodeId e : extra) outs.push_back(e);
    std::vector<Tensor> vals = evaluate_many(outs, bindings);

    if (extra_values) {
        extra_values->clear();
        for (size_t j = 0; j < extra.size(); ++j)
            extra_values->push_back(std::move(vals[ngrad + j]));
    }
    std::map<std::string, Tensor> result;
    for (size_t i = 0; i < wrt.size(); ++i)
        result[wrt[i]] = Tensor::zeros(shape_of(leaf_ids[i]));
    for (size_t j = 0; j < ngrad; ++j) result[wrt[out_slot[j]]] = std::move(vals[j]);
    return result;
}

// ---------------------------------------------------------------------------
// Execution

const Graph::Plan& Graph::plan_for(const std::vector<NodeId>& outs) const {
    auto it = plan_cache_.find(outs);
    if (it != plan_cache_.end()) return it->second;

    std::vector<char> need(nodes_.size(), 0);
    std::vector<NodeId> stack = outs;
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        if (id < 0 || (size_t)id >= nodes_.size()) throw GraphError("invalid output id");
        if (need[(size_t)id]) continue;
        need[(size_t)id] = 1;
        for (NodeId in : nodes_[(size_t)id].inputs) stack.push_back(in);
    }

    Plan plan;
    std::vector<int64_t> pos(nodes_.size(), -1);
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!need[i]) continue;
        pos[i] = (int64_t)plan.order.size();
        plan.order.push_back((NodeId)i);
    }
    std::vector<int64_t> last_use(nodes_.size(), -1);
    for (NodeId id : plan.order)
        for (NodeId in : nodes_[(size_t)id].inputs)
            last_use[(size_t)in] = std::max(last_use[(size_t)in], pos[(size_t)id]);
    for (NodeId out : outs) last_use[(size_t)out] = (int64_t)plan.order.size();  // keep

    plan.free_after.resize(plan.order.size());
    for (NodeId id : plan.order) {
        Op op = nodes_[(size_t)id].op;
        if (op == Op::Input || op == Op::Param || op == Op::Const) continue;
        int64_t lu = last_use[(size_t)id];
        if (lu >= 0 && lu < (int64_t)plan.order.size()) plan.free_after[(size_t)lu].push_back(id);
    }
    return plan_cache_.emplace(outs, std::move(plan)).first->second;
}

Tensor Graph::evaluate(NodeId out, const Bindings& bindings) const {
    return std::move(evaluate_many({out}, bindings)[0]);
}

std::vector<Tensor> Graph::evaluate_many(const std::vector<NodeId>& outs,
                                         const Bindings& bindings) const {
    namespace K = kernels;
    const Plan& plan = plan_for(outs);
    std::vector<Tensor> vals(nodes_.size());
    std::vector<const Tensor*> ref(nodes_.size(), nullptr);

    auto in = [&](NodeId id, size_t k) -> const Tensor& {
        return *ref[(size_t)nodes_[(size_t)id].inputs[k]];
    };

    for (size_t p = 0; p < plan.order.size(); ++p) {
        NodeId id = plan.order[p];
        const Node& nd = nodes_[(size_t)id];
        switch (nd.op) {
            case Op::Input: {
                auto it = bindings.find(nd.name);
                if (it == bindings.end()) throw GraphError("unbound input leaf '" + nd.name + "'");
                if (it->second.shape != nd.shape)
                    fail(id, "binding '" + nd.name + "' has shape " +
                                 shape_str(it->second.shape) + ", expected " +
                                 shape_str(nd.shape));
                ref[(size_t)id] = &it->second;
                break;
            }
            case Op::Param:
                ref[(size_t)id] = &param_values_.at(nd.name);
                break;
            case Op::Const:
                ref[(size_t)id] = &const_values_[(size_t)nd.i0];
                break;
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div: {
                const Tensor &a = in(id, 0), &b = in(id, 1);
                Tensor y(nd.shape);
                K::Binary op = nd.op == Op::Add   ? K::Binary::Add
                               : nd.op == Op::Sub ? K::Binary::Sub
                               : nd.op == Op::Mul ? K::Binary::Mul
                                                  : K::Binary::Div;
                K::binary(op, y.numel(), a.data.data(), b.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::MatMulNN:
            case Op::MatMulNT:
            case Op::MatMulTN: {
                const Tensor &a = in(id, 0), &b = in(id, 1);
                Tensor y(nd.shape);
                if (nd.op == Op::MatMulNN)
                    K::matmul_nn(a.shape[0], a.shape[1], b.shape[1], a.data.data(),
                                 b.data.data(), y.data.data());
                else if (nd.op == Op::MatMulNT)
                    K::matmul_nt(a.shape[0], a.shape[1], b.shape[0], a.data.data(),
                                 b.data.data(), y.data.data());
                else
                    K::matmul_tn(a.shape[1], a.shape[0], b.shape[1], a.data.data(),
                                 b.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::Relu:
            case Op::LeakyRelu:
            case Op::Sigmoid:
            case Op::Tanh:
            case Op::Softplus:
            case Op::Exp:
            case Op::LogClamped:
            case Op::Sqrt:
            case Op::Abs:
            case Op::Sign:
            case Op::Step:
            case Op::Affine: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::Unary u;
                switch (nd.op) {
                    case Op::Relu: u = K::Unary::Relu; break;
                    case Op::LeakyRelu: u = K::Unary::LeakyRelu; break;
                    case Op::Sigmoid: u = K::Unary::Sigmoid; break;
                    case Op::Tanh: u = K::Unary::Tanh; break;
                    case Op::Softplus: u = K::Unary::Softplus; break;
                    case Op::Exp: u = K::Unary::Exp; break;
                    case Op::LogClamped: u = K::Unary::LogClamped; break;
                    case Op::Sqrt: u = K::Unary::Sqrt; break;
                    case Op::Abs: u = K::Unary::Abs; break;
                    case Op::Sign: u = K::Unary::Sign; break;
                    case Op::Step: u = K::Unary::Step; break;
                    default: u = K::Unary::Affine; break;
                }
                K::unary(u, y.numel(), x.data.data(), y.data.data(), nd.a, nd.b);
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::SumAll: {
                const Tensor& x = in(id, 0);
                vals[(size_t)id] = Tensor::scalar(K::sum_blocked(x.numel(), x.data.data()));
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::MeanAll: {
                const Tensor& x = in(id, 0);
                vals[(size_t)id] = Tensor::scalar(K::sum_blocked(x.numel(), x.data.data()) /
                                                  (double)x.numel());
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::RowSum: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::row_sum(x.shape[0], x.shape[1], x.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::ColSum: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::col_sum(x.shape[0], x.shape[1], x.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::BroadcastRow: {
                const Tensor& v = in(id, 0);
                Tensor y(nd.shape);
                K::broadcast_row(nd.shape[0], nd.shape[1], v.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::BroadcastCol: {
                const Tensor& v = in(id, 0);
                Tensor y(nd.shape);
                K::broadcast_col(nd.shape[0], nd.shape[1], v.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::BroadcastScalar: {
                const Tensor& s = in(id, 0);
                vals[(size_t)id] = Tensor::full(nd.shape, s.data[0]);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::ConcatCols: {
                const Tensor &a = in(id, 0), &b = in(id, 1);
                Tensor y(nd.shape);
                K::concat_cols(a.shape[0], a.shape[1], b.shape[1], a.data.data(), b.data.data(),
                               y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::SliceCols: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::slice_cols(x.shape[0], x.shape[1], nd.i0, nd.i1, x.data.data(),
                              y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::Reshape: {
                const Tensor& x = in(id, 0);
                vals[(size_t)id] = Tensor(nd.shape, x.data);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::Im2Col: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::im2col(nd.conv, x.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::Col2Im: {
                const Tensor& g = in(id, 0);
                Tensor y(nd.shape);
                K::col2im(nd.conv, g.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::Upsample2: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::upsample2(x.shape[0], x.shape[1], x.shape[2], x.shape[3], x.data.data(),
                             y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::DownSum2: {
                const Tensor& x = in(id, 0);
                Tensor y(nd.shape);
                K::downsum2(nd.shape[0], nd.shape[1], nd.shape[2], nd.shape[3], x.data.data(),
                            y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::VolumeRender: {
                const Tensor &sg = in(id, 0), &rgb = in(id, 1), &dl = in(id, 2), &bg = in(id, 3);
                Tensor y(nd.shape);
                K::volume_render_fwd(nd.i0, nd.i1, sg.data.data(), rgb.data.data(),
                                     dl.data.data(), bg.data.data(), y.data.data());
                vals[(size_t)id] = std::move(y);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
            case Op::VolumeRenderVjpSigma:
            case Op::VolumeRenderVjpRgb: {
                const Tensor &sg = in(id, 0), &rgb = in(id, 1), &dl = in(id, 2), &bg = in(id, 3),
                             &gc = in(id, 4);
                Tensor ds({nd.i0, nd.i1});
                Tensor dr({nd.i0 * nd.i1, 3});
                K::volume_render_vjp(nd.i0, nd.i1, sg.data.data(), rgb.data.data(),
                                     dl.data.data(), bg.data.data(), gc.data.data(),
                                     ds.data.data(), dr.data.data());
                vals[(size_t)id] =
                    nd.op == Op::VolumeRenderVjpSigma ? std::move(ds) : std::move(dr);
                ref[(size_t)id] = &vals[(size_t)id];
                break;
            }
        }
        for (NodeId f : plan.free_after[p]) {
            bool is_out = false;
            for (NodeId o : outs) is_out = is_out || (o == f);
            if (!is_out) {
                vals[(size_t)f] = Tensor();
                ref[(size_t)f] = nullptr;
            }
        }
    }

    std::vector<Tensor> result;
    result.reserve(outs.size());
    for (NodeId o : outs) result.push_back(*ref[(size_t)o]);
    return result;
}

// ---------------------------------------------------------------------------

double grad_check(Graph& g, NodeId root, const Bindings& bindings,
                  const std::vector<std::string>& wrt, double h) {
    auto grads = g.gradient(root, bindings, wrt);
    Bindings local = bindings;
    double max_err = 0.0;
    for (const auto& name : wrt) {
        NodeId leaf = g.leaf_id(name);
        const bool is_param = g.node(leaf).op == Op::Param;
        Tensor* store = is_param ? &g.param_value(name) : &local.at(name);
        const Tensor& analytic = grads.at(name);
        for (int64_t i = 0; i < store->numel(); ++i) {
            const double orig = store->data[(size_t)i];
            store->data[(size_t)i] = orig + h;
            const double fp = g.evaluate(root, local).data[0];
            store->data[(size_t)i] = orig - h;
            const double fm = g.evaluate(root, local).data[0];
            store->data[(size_t)i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic.data[(size_t)i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            max_err = std::max(max_err, std::fabs(a - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace aunerf
