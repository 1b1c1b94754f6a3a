#include "ssga/tape.hpp"

#include <cstdio>
#include <sstream>

#include "ssga/error.hpp"
#include "ssga/ops.hpp"

namespace ssga::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::offset: return "offset";
        case Op::matmul: return "matmul";
        case Op::transpose: return "transpose";
        case Op::conv2d: return "conv2d";
        case Op::conv2d_grad_input: return "conv2d_grad_input";
        case Op::conv2d_grad_weight: return "conv2d_grad_weight";
        case Op::upsample2x: return "upsample2x";
        case Op::mean_pool2x: return "mean_pool2x";
        case Op::broadcast_to: return "broadcast_to";
        case Op::reduce_sum_to: return "reduce_sum_to";
        case Op::leaky_relu: return "leaky_relu";
        case Op::leaky_relu_slope: return "leaky_relu_slope";
        case Op::tanh: return "tanh";
        case Op::sigmoid: return "sigmoid";
        case Op::softplus: return "softplus";
        case Op::sqrt: return "sqrt";
        case Op::safe_reciprocal: return "safe_reciprocal";
        case Op::reshape: return "reshape";
        case Op::concat_cols: return "concat_cols";
        case Op::slice_cols: return "slice_cols";
        case Op::pad_cols: return "pad_cols";
    }
    return "?";
}

const Tensor& Var::value() const { return tape->node(id).value; }

Var Tape::push_leaf(LeafKind kind, const std::string& name, Tensor value) {
    if (!name.empty() && leaves_.count(name)) throw config_error("tape: duplicate leaf name '" + name + "'");
    Node n;
    n.leaf = kind;
    n.name = name;
    n.value = std::move(value);
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(n));
    if (!name.empty()) leaves_[name] = id;
    return {this, id};
}

Var Tape::constant(Tensor value) { return push_leaf(LeafKind::constant, "", std::move(value)); }
Var Tape::input(const std::string& name, Tensor value) { return push_leaf(LeafKind::input, name, std::move(value)); }
Var Tape::parameter(const std::string& name, Tensor value) {
    return push_leaf(LeafKind::parameter, name, std::move(value));
}

namespace {

Tensor compute(const std::vector<Node>& nodes, NodeId self, Op op, const std::vector<NodeId>& inputs,
               const Attrs& attrs) {
    std::vector<const Tensor*> vals;
    vals.reserve(inputs.size());
    bool any_f32 = false;
    for (auto id : inputs) {
        if (id >= self) throw config_error("tape: node " + std::to_string(self) + " references later node");
        vals.push_back(&nodes[id].value);
        any_f32 = any_f32 || nodes[id].value.dtype() == DType::f32;
    }
    try {
        Tensor out = evaluate(op, vals, attrs);
        return any_f32 ? out.cast(DType::f32) : out;
    } catch (const Error& e) {
        throw Error(e.kind(), "node " + std::to_string(self) + ": " + e.what());
    }
}

}  // namespace

Var Tape::record(Op op, std::vector<NodeId> inputs, Attrs attrs) {
    const auto id = static_cast<NodeId>(nodes_.size());
    Node n;
    n.op = op;
    n.value = compute(nodes_, id, op, inputs, attrs);
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    nodes_.push_back(std::move(n));
    return {this, id};
}

void Tape::truncate(std::size_t size) {
    if (size >= nodes_.size()) return;
    nodes_.resize(size);
    std::erase_if(leaves_, [size](const auto& kv) { return kv.second >= size; });
    std::erase_if(outputs_, [size](const auto& kv) { return kv.second >= size; });
}

std::optional<Var> Tape::find(const std::string& name) {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) return std::nullopt;
    return Var{this, it->second};
}

std::map<std::string, NodeId> Tape::parameters() const {
    std::map<std::string, NodeId> out;
    for (const auto& [name, id] : leaves_)
        if (nodes_[id].leaf == LeafKind::parameter) out[name] = id;
    return out;
}

void Tape::mark_output(const std::string& name, Var v) { outputs_[name] = v.id; }

// ---------------------------------------------------------------------------
// Reverse mode

namespace {

bool differentiable(Op op) { return op != Op::leaky_relu_slope; }

}  // namespace

std::vector<Var> Tape::grad(const GradientRequest& request) {
    const NodeId out = request.output;
    if (out >= nodes_.size()) throw config_error("grad: output node out of range");
    if (nodes_[out].value.size() != 1)
        throw config_error("grad: output node " + std::to_string(out) + " is not scalar, shape " +
                           shape_str(nodes_[out].value.shape()));

    // depends[i]: node i is a function of some requested input
    std::vector<char> depends(out + 1, 0);
    for (auto id : request.inputs) {
        if (id >= nodes_.size()) throw config_error("grad: input node out of range");
        if (id <= out) depends[id] = 1;
    }
    for (NodeId i = 0; i <= out; ++i) {
        if (depends[i] || !differentiable(nodes_[i].op)) continue;
        for (auto in : nodes_[i].inputs)
            if (depends[in]) {
                depends[i] = 1;
                break;
            }
    }

    std::vector<std::optional<NodeId>> adj(out + 1);
    adj[out] = constant(Tensor::full(nodes_[out].value.shape(), 1.0)).id;

    auto accumulate = [&](NodeId target, Var contribution) {
        if (!depends[target]) return;
        adj[target] = adj[target] ? add(Var{this, *adj[target]}, contribution).id : contribution.id;
    };

    for (NodeId i = out + 1; i-- > 0;) {
        if (!adj[i] || !depends[i] || nodes_[i].op == Op::leaf) continue;
        // Copy what we need: recording below may reallocate nodes_.
        const Op op = nodes_[i].op;
        const std::vector<NodeId> in = nodes_[i].inputs;
        const Attrs at = nodes_[i].attrs;
        const Var g{this, *adj[i]};
        const Var self{this, i};
        auto arg = [&](std::size_t k) { return Var{this, in[k]}; };
        auto need = [&](std::size_t k) { return depends[in[k]] != 0; };
        auto shape_of = [&](std::size_t k) { return nodes_[in[k]].value.shape(); };

        switch (op) {
            case Op::leaf:
            case Op::leaky_relu_slope:
                break;
            case Op::add:
                accumulate(in[0], g);
                accumulate(in[1], g);
                break;
            case Op::sub:
                accumulate(in[0], g);
                if (need(1)) accumulate(in[1], scale(g, -1.0));
                break;
            case Op::mul:
                if (need(0)) accumulate(in[0], mul(g, arg(1)));
                if (need(1)) accumulate(in[1], mul(g, arg(0)));
                break;
            case Op::scale:
                accumulate(in[0], scale(g, at.c));
                break;
            case Op::offset:
                accumulate(in[0], g);
                break;
            case Op::matmul:
                if (need(0)) accumulate(in[0], matmul(g, transpose(arg(1))));
                if (need(1)) accumulate(in[1], matmul(transpose(arg(0)), g));
                break;
            case Op::transpose:
                accumulate(in[0], transpose(g));
                break;
            case Op::conv2d:
                if (need(0)) accumulate(in[0], conv2d_grad_input(g, arg(1), shape_of(0), at.i0));
                if (need(1)) accumulate(in[1], conv2d_grad_weight(arg(0), g, shape_of(1), at.i0));
                break;
            case Op::conv2d_grad_input:  // inputs (gout, w)
                if (need(0)) accumulate(in[0], conv2d(g, arg(1), at.i0));
                if (need(1)) accumulate(in[1], conv2d_grad_weight(g, arg(0), shape_of(1), at.i0));
                break;
            case Op::conv2d_grad_weight:  // inputs (x, gout)
                if (need(0)) accumulate(in[0], conv2d_grad_input(arg(1), g, shape_of(0), at.i0));
                if (need(1)) accumulate(in[1], conv2d(arg(0), g, at.i0));
                break;
            case Op::upsample2x:
                accumulate(in[0], scale(mean_pool2x(g), 4.0));
                break;
            case Op::mean_pool2x:
                accumulate(in[0], scale(upsample2x(g), 0.25));
                break;
            case Op::broadcast_to:
                accumulate(in[0], reduce_sum_to(g, shape_of(0)));
                break;
            case Op::reduce_sum_to:
                accumulate(in[0], broadcast_to(g, shape_of(0)));
                break;
            case Op::leaky_relu:
                accumulate(in[0], mul(g, leaky_relu_slope(arg(0), at.c)));
                break;
            case Op::tanh:
                accumulate(in[0], mul(g, offset(scale(mul(self, self), -1.0), 1.0)));
                break;
            case Op::sigmoid:
                accumulate(in[0], mul(g, mul(self, offset(scale(self, -1.0), 1.0))));
                break;
            case Op::softplus:
                accumulate(in[0], mul(g, sigmoid(arg(0))));
                break;
            case Op::sqrt:
                accumulate(in[0], mul(g, scale(safe_reciprocal(self), 0.5)));
                break;
            case Op::safe_reciprocal:
                accumulate(in[0], scale(mul(g, mul(self, self)), -1.0));
                break;
            case Op::reshape:
                accumulate(in[0], reshape(g, shape_of(0)));
                break;
            case Op::concat_cols: {
                const auto wa = shape_of(0)[1];
                const auto wb = shape_of(1)[1];
                if (need(0)) accumulate(in[0], slice_cols(g, 0, wa));
                if (need(1)) accumulate(in[1], slice_cols(g, wa, wb));
                break;
            }
            case Op::slice_cols:
                accumulate(in[0], pad_cols(g, at.i0, shape_of(0)[1]));
                break;
            case Op::pad_cols:
                accumulate(in[0], slice_cols(g, at.i0, shape_of(0)[1]));
                break;
        }
    }

    std::vector<Var> result;
    result.reserve(request.inputs.size());
    for (auto id : request.inputs) {
        if (id <= out && adj[id])
            result.push_back({this, *adj[id]});
        else
            result.push_back(constant(Tensor::zeros(nodes_[id].value.shape())));
    }
    return result;
}

std::vector<Tensor> Tape::grad_values(Var output, std::span<const Var> wrt) {
    const std::size_t mark = nodes_.size();
    GradientRequest req{output.id, {}, false};
    for (auto v : wrt) req.inputs.push_back(v.id);
    auto vars = grad(req);
    std::vector<Tensor> values;
    values.reserve(vars.size());
    for (auto v : vars) values.push_back(nodes_[v.id].value);
    truncate(mark);
    return values;
}

// ---------------------------------------------------------------------------
// Replay and serialization

void Tape::replay(const std::map<std::string, Tensor>& inputs) {
    for (const auto& [name, value] : inputs) {
        auto it = leaves_.find(name);
        if (it == leaves_.end()) throw config_error("replay: no input named '" + name + "'");
        Node& n = nodes_[it->second];
        if (n.value.shape() != value.shape())
            throw config_error("replay: node " + std::to_string(it->second) + " ('" + name + "') expects shape " +
                               shape_str(n.value.shape()) + ", got " + shape_str(value.shape()));
        n.value = value;
    }
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op == Op::leaf) continue;
        nodes_[i].value = compute(nodes_, i, nodes_[i].op, nodes_[i].inputs, nodes_[i].attrs);
    }
}

std::map<std::string, Tensor> forward(Tape& tape, const std::map<std::string, Tensor>& inputs) {
    tape.replay(inputs);
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : tape.outputs()) out[name] = tape.node(id).value;
    return out;
}

namespace {

void write_shape(std::ostream& os, const Shape& s) {
    os << s.size();
    for (auto d : s) os << ' ' << d;
}

Shape read_shape(std::istream& is) {
    std::size_t rank = 0;
    is >> rank;
    Shape s(rank);
    for (auto& d : s) is >> d;
    return s;
}

void write_double(std::ostream& os, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    os << buf;
}

double read_double(std::istream& is) {
    std::string tok;
    is >> tok;
    return std::strtod(tok.c_str(), nullptr);
}

}  // namespace

// Line-oriented text; doubles are written as hex floats so replay is exact.
std::string Tape::serialize() const {
    std::ostringstream os;
    os << "ssga-tape 1 " << nodes_.size() << '\n';
    for (const auto& n : nodes_) {
        os << static_cast<int>(n.op) << ' ' << static_cast<int>(n.leaf) << ' ' << n.inputs.size();
        for (auto id : n.inputs) os << ' ' << id;
        os << ' ';
        write_double(os, n.attrs.c);
        os << ' ' << n.attrs.i0 << ' ' << n.attrs.i1 << ' ';
        write_shape(os, n.attrs.shape);
        os << " [" << n.name << "] ";
        if (n.op == Op::leaf) {
            os << static_cast<int>(n.value.dtype()) << ' ';
            write_shape(os, n.value.shape());
            for (double v : n.value.data()) {
                os << ' ';
                write_double(os, v);
            }
        }
        os << '\n';
    }
    os << "outputs " << outputs_.size() << '\n';
    for (const auto& [name, id] : outputs_) os << name << ' ' << id << '\n';
    return os.str();
}

Tape Tape::deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    is >> magic >> version >> count;
    if (magic != "ssga-tape" || version != 1) throw config_error("tape: bad header");
    Tape tape;
    for (std::size_t k = 0; k < count; ++k) {
        int op = 0, leaf = 0;
        std::size_t nin = 0;
        is >> op >> leaf >> nin;
        std::vector<NodeId> inputs(nin);
        for (auto& id : inputs) is >> id;
        Attrs at;
        at.c = read_double(is);
        is >> at.i0 >> at.i1;
        at.shape = read_shape(is);
        std::string name;
        is >> name;
        if (name.size() < 2) throw config_error("tape: bad name field");
        name = name.substr(1, name.size() - 2);
        if (!is) throw config_error("tape: truncated node " + std::to_string(k));
        if (static_cast<Op>(op) == Op::leaf) {
            int dtype = 0;
            is >> dtype;
            Shape shape = read_shape(is);
            std::vector<double> data(numel(shape));
            for (auto& v : data) v = read_double(is);
            tape.push_leaf(static_cast<LeafKind>(leaf), name,
                           Tensor(std::move(shape), std::move(data), static_cast<DType>(dtype)));
        } else {
            tape.record(static_cast<Op>(op), std::move(inputs), std::move(at));
        }
    }
    std::string tag;
    std::size_t nout = 0;
    is >> tag >> nout;
    for (std::size_t k = 0; k < nout; ++k) {
        std::string name;
        NodeId id = 0;
        is >> name >> id;
        tape.outputs_[name] = id;
    }
    if (!is) throw config_error("tape: truncated outputs");
    return tape;
}

}  // namespace ssga::ad
