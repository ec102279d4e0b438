#include "cfdr/graph.hpp"

#include <cmath>

namespace cfdr {

namespace {

// C[n,m] += A[n,p] * B[p,m]
void matmul_acc(const double* a, const double* b, double* c, int n, int p, int m) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<size_t>(i) * p;
        double* ci = c + static_cast<size_t>(i) * m;
        for (int k = 0; k < p; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b + static_cast<size_t>(k) * m;
            for (int j = 0; j < m; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C[n,p] += G[n,m] * B[p,m]^T  (rows of G dotted with rows of B)
void matmul_acc_bt(const double* g, const double* b, double* c, int n, int m, int p) {
    for (int i = 0; i < n; ++i) {
        const double* gi = g + static_cast<size_t>(i) * m;
        double* ci = c + static_cast<size_t>(i) * p;
        for (int k = 0; k < p; ++k) {
            const double* bk = b + static_cast<size_t>(k) * m;
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += gi[j] * bk[j];
            ci[k] += acc;
        }
    }
}

// C[p,m] += A[n,p]^T * G[n,m]
void matmul_acc_at(const double* a, const double* g, double* c, int n, int p, int m) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<size_t>(i) * p;
        const double* gi = g + static_cast<size_t>(i) * m;
        for (int k = 0; k < p; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            double* ck = c + static_cast<size_t>(k) * m;
            for (int j = 0; j < m; ++j) ck[j] += aik * gi[j];
        }
    }
}

double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Graph::Id Graph::push(Node n) {
    CFDR_CHECK(!backward_done_, "graph: cannot extend a graph after backward");
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

const Graph::Node& Graph::node(Id id) const {
    CFDR_CHECK(id >= 0 && id < size(), "graph: invalid node id " << id);
    return nodes_[static_cast<size_t>(id)];
}

Graph::Id Graph::leaf(Tensor v, bool needs_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::matmul(Id a, Id b) {
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    CFDR_CHECK(va.cols == vb.rows, "matmul: inner dimensions " << va.cols << " vs " << vb.rows);
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.value = Tensor(va.rows, vb.cols);
    matmul_acc(va.data.data(), vb.data.data(), n.value.data.data(), va.rows, va.cols, vb.cols);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::add_row(Id a, Id row) {
    const Tensor& va = node(a).value;
    const Tensor& vr = node(row).value;
    CFDR_CHECK(vr.rows == 1 && vr.cols == va.cols,
               "add_row: row is " << vr.rows << "x" << vr.cols << ", want 1x" << va.cols);
    Node n;
    n.op = Op::AddRow;
    n.a = a;
    n.b = row;
    n.value = va;
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) n.value.at(i, j) += vr.data[j];
    n.needs_grad = node(a).needs_grad || node(row).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::mul_row(Id a, Id row) {
    const Tensor& va = node(a).value;
    const Tensor& vr = node(row).value;
    CFDR_CHECK(vr.rows == 1 && vr.cols == va.cols,
               "mul_row: row is " << vr.rows << "x" << vr.cols << ", want 1x" << va.cols);
    Node n;
    n.op = Op::MulRow;
    n.a = a;
    n.b = row;
    n.value = va;
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) n.value.at(i, j) *= vr.data[j];
    n.needs_grad = node(a).needs_grad || node(row).needs_grad;
    return push(std::move(n));
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    CFDR_CHECK(a.rows == b.rows && a.cols == b.cols,
               op << ": shape mismatch " << a.rows << "x" << a.cols << " vs " << b.rows << "x"
                  << b.cols);
}
}  // namespace

Graph::Id Graph::add(Id a, Id b) {
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    check_same_shape(va, vb, "add");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = va;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += vb.data[i];
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::sub(Id a, Id b) {
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    check_same_shape(va, vb, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = va;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= vb.data[i];
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::mul(Id a, Id b) {
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    check_same_shape(va, vb, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = va;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= vb.data[i];
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::div(Id a, Id b) {
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    check_same_shape(va, vb, "div");
    Node n;
    n.op = Op::Div;
    n.a = a;
    n.b = b;
    n.value = va;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] /= vb.data[i];
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::add_scalar(Id a, double c) {
    Node n;
    n.op = Op::AddScalar;
    n.a = a;
    n.s0 = c;
    n.value = node(a).value;
    for (double& v : n.value.data) v += c;
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::mul_scalar(Id a, double c) {
    Node n;
    n.op = Op::MulScalar;
    n.a = a;
    n.s0 = c;
    n.value = node(a).value;
    for (double& v : n.value.data) v *= c;
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::relu(Id a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.value = node(a).value;
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::sigmoid(Id a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.value = node(a).value;
    for (double& v : n.value.data) v = sigmoid_stable(v);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::exp(Id a) {
    Node n;
    n.op = Op::Exp;
    n.a = a;
    n.value = node(a).value;
    for (double& v : n.value.data) v = std::exp(v);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::log(Id a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.value = node(a).value;
    for (double& v : n.value.data) v = std::log(v);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::clamp(Id a, double lo, double hi) {
    CFDR_CHECK(lo <= hi, "clamp: lo " << lo << " > hi " << hi);
    Node n;
    n.op = Op::Clamp;
    n.a = a;
    n.s0 = lo;
    n.s1 = hi;
    n.value = node(a).value;
    for (double& v : n.value.data) v = v < lo ? lo : (v > hi ? hi : v);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::concat_cols(Id a, Id b) {
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    CFDR_CHECK(va.rows == vb.rows,
               "concat_cols: row mismatch " << va.rows << " vs " << vb.rows);
    Node n;
    n.op = Op::ConcatCols;
    n.a = a;
    n.b = b;
    n.value = Tensor(va.rows, va.cols + vb.cols);
    for (int i = 0; i < va.rows; ++i) {
        for (int j = 0; j < va.cols; ++j) n.value.at(i, j) = va.at(i, j);
        for (int j = 0; j < vb.cols; ++j) n.value.at(i, va.cols + j) = vb.at(i, j);
    }
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::slice_cols(Id a, int j0, int j1) {
    const Tensor& va = node(a).value;
    CFDR_CHECK(0 <= j0 && j0 < j1 && j1 <= va.cols,
               "slice_cols: bounds [" << j0 << "," << j1 << ") on width " << va.cols);
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.j0 = j0;
    n.j1 = j1;
    n.value = Tensor(va.rows, j1 - j0);
    for (int i = 0; i < va.rows; ++i)
        for (int j = j0; j < j1; ++j) n.value.at(i, j - j0) = va.at(i, j);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Graph::Id Graph::sum(Id a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    double acc = 0.0;
    for (double v : node(a).value.data) acc += v;
    n.value = Tensor::scalar(acc);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

const Tensor& Graph::value(Id id) const { return node(id).value; }

const Tensor& Graph::grad(Id id) const {
    const Node& n = node(id);
    CFDR_CHECK(backward_done_, "graph: grad() before backward()");
    CFDR_CHECK(n.needs_grad, "graph: node " << id << " does not carry gradients");
    return n.grad;
}

void Graph::backward(Id loss) {
    const Node& ln = node(loss);
    CFDR_CHECK(!backward_done_, "graph: backward() ran already");
    CFDR_CHECK(ln.value.rows == 1 && ln.value.cols == 1,
               "graph: loss must be scalar, got " << ln.value.rows << "x" << ln.value.cols);

    for (Id i = 0; i <= loss; ++i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.needs_grad) n.grad = Tensor(n.value.rows, n.value.cols);
    }
    nodes_[static_cast<size_t>(loss)].grad.data[0] = 1.0;

    for (Id i = loss; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.needs_grad && n.op != Op::Leaf) backward_node(n);
    }
    backward_done_ = true;
}

void Graph::backward_node(Node& n) {
    const Tensor& g = n.grad;
    auto in_needs = [&](Id id) { return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad; };
    auto ingrad = [&](Id id) -> Tensor& { return nodes_[static_cast<size_t>(id)].grad; };
    auto inval = [&](Id id) -> const Tensor& { return nodes_[static_cast<size_t>(id)].value; };

    switch (n.op) {
        case Op::MatMul: {
            const Tensor& va = inval(n.a);
            const Tensor& vb = inval(n.b);
            if (in_needs(n.a))
                matmul_acc_bt(g.data.data(), vb.data.data(), ingrad(n.a).data.data(), va.rows,
                              vb.cols, va.cols);
            if (in_needs(n.b))
                matmul_acc_at(va.data.data(), g.data.data(), ingrad(n.b).data.data(), va.rows,
                              va.cols, vb.cols);
            break;
        }
        case Op::AddRow: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            if (in_needs(n.b)) {
                Tensor& gr = ingrad(n.b);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) gr.data[j] += g.at(i, j);
            }
            break;
        }
        case Op::MulRow: {
            const Tensor& va = inval(n.a);
            const Tensor& vr = inval(n.b);
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) ga.at(i, j) += g.at(i, j) * vr.data[j];
            }
            if (in_needs(n.b)) {
                Tensor& gr = ingrad(n.b);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) gr.data[j] += g.at(i, j) * va.at(i, j);
            }
            break;
        }
        case Op::Add: {
            for (Id which : {n.a, n.b}) {
                if (!in_needs(which)) continue;
                Tensor& gi = ingrad(which);
                for (size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
            }
            break;
        }
        case Op::Sub: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            if (in_needs(n.b)) {
                Tensor& gb = ingrad(n.b);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& va = inval(n.a);
            const Tensor& vb = inval(n.b);
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
            }
            if (in_needs(n.b)) {
                Tensor& gb = ingrad(n.b);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
            }
            break;
        }
        case Op::Div: {
            const Tensor& vb = inval(n.b);
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / vb.data[i];
            }
            if (in_needs(n.b)) {
                Tensor& gb = ingrad(n.b);
                for (size_t i = 0; i < g.size(); ++i)
                    gb.data[i] -= g.data[i] * n.value.data[i] / vb.data[i];
            }
            break;
        }
        case Op::AddScalar: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            break;
        }
        case Op::MulScalar: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.s0;
            }
            break;
        }
        case Op::Relu: {
            if (in_needs(n.a)) {
                const Tensor& va = inval(n.a);
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i)
                    if (va.data[i] > 0.0) ga.data[i] += g.data[i];
            }
            break;
        }
        case Op::Sigmoid: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value.data[i];
                    ga.data[i] += g.data[i] * s * (1.0 - s);
                }
            }
            break;
        }
        case Op::Exp: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.value.data[i];
            }
            break;
        }
        case Op::Log: {
            if (in_needs(n.a)) {
                const Tensor& va = inval(n.a);
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / va.data[i];
            }
            break;
        }
        case Op::Clamp: {
            if (in_needs(n.a)) {
                const Tensor& va = inval(n.a);
                Tensor& ga = ingrad(n.a);
                for (size_t i = 0; i < g.size(); ++i)
                    if (va.data[i] >= n.s0 && va.data[i] <= n.s1) ga.data[i] += g.data[i];
            }
            break;
        }
        case Op::ConcatCols: {
            const Tensor& va = inval(n.a);
            const Tensor& vb = inval(n.b);
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (int i = 0; i < va.rows; ++i)
                    for (int j = 0; j < va.cols; ++j) ga.at(i, j) += g.at(i, j);
            }
            if (in_needs(n.b)) {
                Tensor& gb = ingrad(n.b);
                for (int i = 0; i < vb.rows; ++i)
                    for (int j = 0; j < vb.cols; ++j) gb.at(i, j) += g.at(i, va.cols + j);
            }
            break;
        }
        case Op::SliceCols: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) ga.at(i, n.j0 + j) += g.at(i, j);
            }
            break;
        }
        case Op::Sum: {
            if (in_needs(n.a)) {
                Tensor& ga = ingrad(n.a);
                const double gs = g.data[0];
                for (double& v : ga.data) v += gs;
            }
            break;
        }
        case Op::Leaf:
            break;
    }
}

}  // namespace cfdr
