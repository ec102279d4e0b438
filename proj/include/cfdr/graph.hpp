#pragma once

#include <vector>

#include "cfdr/tensor.hpp"

namespace cfdr {

// Reverse-mode tape over dense Tensors. A graph is built fresh for every
// forward pass (define by run); node ids only ever reference earlier nodes,
// so creation order is a valid topological order and backward() is a single
// reverse sweep. One backward per graph.
class Graph {
public:
    using Id = int;

    enum class Op {
        Leaf,
        MatMul,
        AddRow,
        MulRow,
        Add,
        Sub,
        Mul,
        Div,
        AddScalar,
        MulScalar,
        Relu,
        Sigmoid,
        Exp,
        Log,
        Clamp,
        ConcatCols,
        SliceCols,
        Sum,
    };

    // Leaves. Constants never receive gradients; trainable leaves do.
    Id leaf(Tensor v, bool needs_grad = false);

    Id matmul(Id a, Id b);
    Id add_row(Id a, Id row);       // [n,m] + [1,m], broadcast over rows
    Id mul_row(Id a, Id row);       // [n,m] * [1,m], broadcast over rows
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);
    Id add_scalar(Id a, double c);
    Id mul_scalar(Id a, double c);
    Id relu(Id a);
    Id sigmoid(Id a);
    Id exp(Id a);
    Id log(Id a);
    Id clamp(Id a, double lo, double hi);
    Id concat_cols(Id a, Id b);
    Id slice_cols(Id a, int j0, int j1);  // half-open [j0, j1)
    Id sum(Id a);                          // full reduction to 1x1

    const Tensor& value(Id id) const;
    // Valid after backward(); exactly zero for trainable leaves unreachable
    // from the loss. Error for nodes that do not carry gradients.
    const Tensor& grad(Id id) const;
    void backward(Id loss);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Op op;
        Id a = -1;
        Id b = -1;
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        double s0 = 0.0;  // scalar operand / clamp lo
        double s1 = 0.0;  // clamp hi
        int j0 = 0;       // slice bounds
        int j1 = 0;
    };

    Id push(Node n);
    const Node& node(Id id) const;
    void backward_node(Node& n);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Mean over every entry; the common "average over the batch" reduction for
// per-row scalar columns.
inline Graph::Id mean_all(Graph& g, Graph::Id a) {
    const Tensor& v = g.value(a);
    CFDR_CHECK(v.size() > 0, "mean_all: empty tensor");
    return g.mul_scalar(g.sum(a), 1.0 / static_cast<double>(v.size()));
}

inline Graph::Id one_minus(Graph& g, Graph::Id a) {
    return g.add_scalar(g.mul_scalar(a, -1.0), 1.0);
}

}  // namespace cfdr
