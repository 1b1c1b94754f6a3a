#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssga/tensor.hpp"

namespace ssga::ad {

using NodeId = std::uint32_t;

// Closed primitive set. Every backward rule is expressed with these same ops,
// so a recorded backward pass can itself be differentiated.
enum class Op : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    scale,   // c * x
    offset,  // x + c
    matmul,
    transpose,
    conv2d,
    conv2d_grad_input,
    conv2d_grad_weight,
    upsample2x,
    mean_pool2x,
    broadcast_to,
    reduce_sum_to,
    leaky_relu,
    leaky_relu_slope,  // piecewise-constant derivative mask, not differentiable
    tanh,
    sigmoid,
    softplus,
    sqrt,
    safe_reciprocal,  // 1/x with 1/0 := 0
    reshape,
    concat_cols,
    slice_cols,
    pad_cols,
};

const char* op_name(Op op);

enum class LeafKind : std::uint8_t { none, constant, input, parameter };

struct Attrs {
    double c = 0.0;         // scale factor, offset, leaky slope
    std::size_t i0 = 0;     // conv padding, column offset
    std::size_t i1 = 0;     // total column count for pad_cols
    Shape shape;            // target shape for reshape/broadcast/reduce/conv adjoints

    friend bool operator==(const Attrs&, const Attrs&) = default;
};

struct Node {
    Op op = Op::leaf;
    LeafKind leaf = LeafKind::none;
    std::vector<NodeId> inputs;
    Attrs attrs;
    Tensor value;
    std::string name;  // leaves only
};

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    NodeId id = 0;

    const Tensor& value() const;
    Shape shape() const { return value().shape(); }
};

struct GradientRequest {
    NodeId output = 0;
    std::vector<NodeId> inputs;
    bool create_graph = false;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Tensor value);
    Var input(const std::string& name, Tensor value);
    Var parameter(const std::string& name, Tensor value);

    /// Evaluates the op eagerly and appends it. Throws on shape errors, naming
    /// the offending node.
    Var record(Op op, std::vector<NodeId> inputs, Attrs attrs = {});

    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }
    /// Drops every node with id >= size.
    void truncate(std::size_t size);

    std::optional<Var> find(const std::string& name);
    const std::map<std::string, NodeId>& leaves() const noexcept { return leaves_; }
    std::map<std::string, NodeId> parameters() const;

    void mark_output(const std::string& name, Var v);
    const std::map<std::string, NodeId>& outputs() const noexcept { return outputs_; }

    /// Reverse-mode gradient of a scalar node. The backward pass is always
    /// recorded; with create_graph unset the recorded nodes are dropped again
    /// after the values are read out, so the returned Vars are only valid when
    /// create_graph is set. Inputs the output does not depend on get zeros.
    std::vector<Var> grad(const GradientRequest& request);
    std::vector<Tensor> grad_values(Var output, std::span<const Var> wrt);

    /// Rebinds named input leaves and recomputes every node in order.
    void replay(const std::map<std::string, Tensor>& inputs);

    std::string serialize() const;
    static Tape deserialize(const std::string& text);

private:
    Var push_leaf(LeafKind kind, const std::string& name, Tensor value);

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> leaves_;
    std::map<std::string, NodeId> outputs_;
};

/// forward(tape, inputs) -> outputs: replays the tape with new input bindings
/// and returns every marked output.
std::map<std::string, Tensor> forward(Tape& tape, const std::map<std::string, Tensor>& inputs);

/// Evaluates a single op on concrete values.
Tensor evaluate(Op op, std::span<const Tensor* const> inputs, const Attrs& attrs);

}  // namespace ssga::ad
