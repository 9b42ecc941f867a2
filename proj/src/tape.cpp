#include "rectify/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "rectify/kernels.hpp"

namespace rectify {

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Param: return "param";
        case Op::Matmul: return "matmul";
        case Op::Add: return "add";
        case Op::AddBias: return "add_bias";
        case Op::LayerNorm: return "layernorm";
        case Op::Gelu: return "gelu";
        case Op::Attention: return "causal_attention";
        case Op::SoftmaxRows: return "softmax_rows";
        case Op::GatherRows: return "gather_rows";
        case Op::SliceRows: return "slice_rows";
        case Op::MeanPoolRows: return "mean_pool_rows";
        case Op::Log: return "log";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Sum: return "sum";
        case Op::Pick: return "pick";
        case Op::CrossEntropyRows: return "cross_entropy_rows";
    }
    return "?";
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::node(Value v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
const Tape::Node& Tape::cnode(Value v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

const Tensor& Tape::val(Value v) const { return cnode(v).val; }

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.val.shape);
    return n.grad;
}

Tape::Value Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.val = std::move(t);
    return Value{push(std::move(n))};
}

Tape::Value Tape::param(const std::string& name, const Tensor& t, bool tunable) {
    Node n;
    n.op = Op::Param;
    n.val = t;
    n.name = name;
    n.tunable = tunable;
    n.need_grad = tunable;
    int id = push(std::move(n));
    if (tunable) {
        tunable_ids_.push_back(id);
        param_index_[name] = id;
    } else {
        frozen_params_.insert(name);
    }
    return Value{id};
}

Tape::Value Tape::matmul(Value a, Value b, bool trans_b) {
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    int m = na.val.rows(), k = na.val.cols();
    int bk = trans_b ? nb.val.cols() : nb.val.rows();
    int n = trans_b ? nb.val.rows() : nb.val.cols();
    if (k != bk) throw std::invalid_argument("matmul: inner dimension mismatch");
    Node out;
    out.op = Op::Matmul;
    out.in0 = a.id;
    out.in1 = b.id;
    out.i0 = trans_b ? 1 : 0;
    out.need_grad = na.need_grad || nb.need_grad;
    out.val = Tensor({m, n});
    kern::matmul(na.val.data.data(), nb.val.data.data(), out.val.data.data(), m, k, n, trans_b, false);
    return Value{push(std::move(out))};
}

Tape::Value Tape::add(Value a, Value b) {
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    if (!na.val.same_shape(nb.val)) throw std::invalid_argument("add: shape mismatch");
    Node out;
    out.op = Op::Add;
    out.in0 = a.id;
    out.in1 = b.id;
    out.need_grad = na.need_grad || nb.need_grad;
    out.val = na.val;
    for (std::size_t i = 0; i < out.val.numel(); ++i) out.val[i] += nb.val[i];
    return Value{push(std::move(out))};
}

Tape::Value Tape::add_bias(Value x, Value b) {
    const Node& nx = cnode(x);
    const Node& nb = cnode(b);
    if (nb.val.numel() != static_cast<std::size_t>(nx.val.cols()))
        throw std::invalid_argument("add_bias: bias length mismatch");
    Node out;
    out.op = Op::AddBias;
    out.in0 = x.id;
    out.in1 = b.id;
    out.need_grad = nx.need_grad || nb.need_grad;
    out.val = Tensor(nx.val.shape);
    kern::add_rows(nx.val.data.data(), nb.val.data.data(), out.val.data.data(),
                   nx.val.rows(), nx.val.cols());
    return Value{push(std::move(out))};
}

Tape::Value Tape::layernorm(Value x, Value w, Value b, float eps) {
    const Node& nx = cnode(x);
    const Node& nw = cnode(w);
    const Node& nb = cnode(b);
    int rows = nx.val.rows(), cols = nx.val.cols();
    if (nw.val.numel() != static_cast<std::size_t>(cols) || nb.val.numel() != static_cast<std::size_t>(cols))
        throw std::invalid_argument("layernorm: weight/bias length mismatch");
    Node out;
    out.op = Op::LayerNorm;
    out.in0 = x.id;
    out.in1 = w.id;
    out.in2 = b.id;
    out.f0 = eps;
    out.need_grad = nx.need_grad || nw.need_grad || nb.need_grad;
    out.val = Tensor(nx.val.shape);
    out.aux0 = Tensor({rows});  // mean
    out.aux1 = Tensor({rows});  // rstd
    kern::layernorm_forward(nx.val.data.data(), nw.val.data.data(), nb.val.data.data(),
                            out.val.data.data(), out.aux0.data.data(), out.aux1.data.data(),
                            rows, cols, eps);
    return Value{push(std::move(out))};
}

Tape::Value Tape::gelu(Value x) {
    const Node& nx = cnode(x);
    Node out;
    out.op = Op::Gelu;
    out.in0 = x.id;
    out.need_grad = nx.need_grad;
    out.val = Tensor(nx.val.shape);
    kern::gelu_forward(nx.val.data.data(), out.val.data.data(),
                       static_cast<std::int64_t>(nx.val.numel()));
    return Value{push(std::move(out))};
}

Tape::Value Tape::causal_attention(Value q, Value k, Value v, int n_heads) {
    const Node& nq = cnode(q);
    const Node& nk = cnode(k);
    const Node& nv = cnode(v);
    int t = nq.val.rows(), d = nq.val.cols();
    if (!nk.val.same_shape(nq.val) || !nv.val.same_shape(nq.val))
        throw std::invalid_argument("attention: q/k/v shape mismatch");
    if (d % n_heads != 0) throw std::invalid_argument("attention: heads must divide width");
    Node out;
    out.op = Op::Attention;
    out.in0 = q.id;
    out.in1 = k.id;
    out.in2 = v.id;
    out.i0 = n_heads;
    out.need_grad = nq.need_grad || nk.need_grad || nv.need_grad;
    out.val = Tensor(nq.val.shape);
    out.aux0 = Tensor({n_heads * t, t});
    kern::attention_forward(nq.val.data.data(), nk.val.data.data(), nv.val.data.data(),
                            out.val.data.data(), out.aux0.data.data(), t, d, n_heads);
    return Value{push(std::move(out))};
}

Tape::Value Tape::softmax_rows(Value x) {
    const Node& nx = cnode(x);
    Node out;
    out.op = Op::SoftmaxRows;
    out.in0 = x.id;
    out.need_grad = nx.need_grad;
    out.val = Tensor(nx.val.shape);
    kern::softmax_rows(nx.val.data.data(), out.val.data.data(), nx.val.rows(), nx.val.cols(), false);
    return Value{push(std::move(out))};
}

Tape::Value Tape::gather_rows(Value table, std::vector<int> ids) {
    const Node& nt = cnode(table);
    int cols = nt.val.cols();
    Node out;
    out.op = Op::GatherRows;
    out.in0 = table.id;
    out.ids = std::move(ids);
    out.need_grad = nt.need_grad;
    out.val = Tensor({static_cast<int>(out.ids.size()), cols});
    for (std::size_t r = 0; r < out.ids.size(); ++r) {
        int src = out.ids[r];
        if (src < 0 || src >= nt.val.rows()) throw std::out_of_range("gather_rows: id out of range");
        for (int c = 0; c < cols; ++c) out.val.at(static_cast<int>(r), c) = nt.val.at(src, c);
    }
    return Value{push(std::move(out))};
}

Tape::Value Tape::slice_rows(Value x, int start, int len) {
    const Node& nx = cnode(x);
    if (start < 0 || len < 1 || start + len > nx.val.rows())
        throw std::out_of_range("slice_rows: range out of bounds");
    Node out;
    out.op = Op::SliceRows;
    out.in0 = x.id;
    out.i0 = start;
    out.i1 = len;
    out.need_grad = nx.need_grad;
    int cols = nx.val.cols();
    out.val = Tensor({len, cols});
    for (int r = 0; r < len; ++r)
        for (int c = 0; c < cols; ++c) out.val.at(r, c) = nx.val.at(start + r, c);
    return Value{push(std::move(out))};
}

Tape::Value Tape::mean_pool_rows(Value x, int upto) {
    const Node& nx = cnode(x);
    if (upto < 1 || upto > nx.val.rows()) throw std::out_of_range("mean_pool_rows: bad range");
    Node out;
    out.op = Op::MeanPoolRows;
    out.in0 = x.id;
    out.i0 = upto;
    out.need_grad = nx.need_grad;
    int cols = nx.val.cols();
    out.val = Tensor({cols});
    for (int c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < upto; ++r) acc += nx.val.at(r, c);
        out.val[static_cast<std::size_t>(c)] = static_cast<float>(acc / upto);
    }
    return Value{push(std::move(out))};
}

Tape::Value Tape::log(Value x) {
    const Node& nx = cnode(x);
    Node out;
    out.op = Op::Log;
    out.in0 = x.id;
    out.need_grad = nx.need_grad;
    out.val = Tensor(nx.val.shape);
    for (std::size_t i = 0; i < nx.val.numel(); ++i) {
        if (!(nx.val[i] > 0.0f)) throw std::domain_error("log: non-positive input");
        out.val[i] = std::log(nx.val[i]);
    }
    return Value{push(std::move(out))};
}

Tape::Value Tape::mul(Value a, Value b) {
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    if (!na.val.same_shape(nb.val)) throw std::invalid_argument("mul: shape mismatch");
    Node out;
    out.op = Op::Mul;
    out.in0 = a.id;
    out.in1 = b.id;
    out.need_grad = na.need_grad || nb.need_grad;
    out.val = na.val;
    for (std::size_t i = 0; i < out.val.numel(); ++i) out.val[i] *= nb.val[i];
    return Value{push(std::move(out))};
}

Tape::Value Tape::scale(Value x, float s) {
    const Node& nx = cnode(x);
    Node out;
    out.op = Op::Scale;
    out.in0 = x.id;
    out.f0 = s;
    out.need_grad = nx.need_grad;
    out.val = nx.val;
    for (std::size_t i = 0; i < out.val.numel(); ++i) out.val[i] *= s;
    return Value{push(std::move(out))};
}

Tape::Value Tape::sum(Value x) {
    const Node& nx = cnode(x);
    Node out;
    out.op = Op::Sum;
    out.in0 = x.id;
    out.need_grad = nx.need_grad;
    double acc = 0.0;
    for (std::size_t i = 0; i < nx.val.numel(); ++i) acc += nx.val[i];
    out.val = Tensor({1});
    out.val[0] = static_cast<float>(acc);
    return Value{push(std::move(out))};
}

Tape::Value Tape::pick(Value x, int index) {
    const Node& nx = cnode(x);
    if (index < 0 || static_cast<std::size_t>(index) >= nx.val.numel())
        throw std::out_of_range("pick: index out of range");
    Node out;
    out.op = Op::Pick;
    out.in0 = x.id;
    out.i0 = index;
    out.need_grad = nx.need_grad;
    out.val = Tensor({1});
    out.val[0] = nx.val[static_cast<std::size_t>(index)];
    return Value{push(std::move(out))};
}

Tape::Value Tape::cross_entropy_rows(Value logits, std::vector<int> targets) {
    const Node& nl = cnode(logits);
    int rows = nl.val.rows(), cols = nl.val.cols();
    if (static_cast<int>(targets.size()) != rows)
        throw std::invalid_argument("cross_entropy_rows: target count mismatch");
    Node out;
    out.op = Op::CrossEntropyRows;
    out.in0 = logits.id;
    out.ids = std::move(targets);
    out.need_grad = nl.need_grad;
    out.aux0 = Tensor({rows, cols});
    kern::softmax_rows(nl.val.data.data(), out.aux0.data.data(), rows, cols, false);
    double acc = 0.0;
    int count = 0;
    for (int r = 0; r < rows; ++r) {
        int tgt = out.ids[static_cast<std::size_t>(r)];
        if (tgt < 0) continue;
        if (tgt >= cols) throw std::out_of_range("cross_entropy_rows: target out of range");
        acc -= std::log(static_cast<double>(out.aux0.at(r, tgt)));
        ++count;
    }
    if (count == 0) throw std::invalid_argument("cross_entropy_rows: no targets");
    out.i0 = count;
    out.val = Tensor({1});
    out.val[0] = static_cast<float>(acc / count);
    return Value{push(std::move(out))};
}

void Tape::backward(Value loss) {
    if (cnode(loss).val.numel() != 1) throw std::invalid_argument("loss is not scalar");
    if (tunable_ids_.empty()) throw std::logic_error("no tunable parameters on tape");
    ran_backward_ = true;
    for (int id : tunable_ids_) grad_buf(id);
    grad_buf(loss.id)[0] = 1.0f;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.need_grad || n.grad.numel() == 0) continue;
        backward_node(id);
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& dy = n.grad;

    auto in_grad = [&](int in_id, Tensor& scratch) -> float* {
        Node& src = nodes_[static_cast<std::size_t>(in_id)];
        if (src.need_grad) return grad_buf(in_id).data.data();
        if (scratch.numel() == 0) scratch = Tensor::zeros(src.val.shape);
        return scratch.data.data();
    };
    Tensor scratch0, scratch1, scratch2;

    switch (n.op) {
        case Op::Constant:
        case Op::Param:
            return;
        case Op::Matmul: {
            Node& a = nodes_[static_cast<std::size_t>(n.in0)];
            Node& b = nodes_[static_cast<std::size_t>(n.in1)];
            bool trans_b = n.i0 != 0;
            int m = a.val.rows(), k = a.val.cols(), nn = n.val.cols();
            if (a.need_grad) {
                // dA = dY * B^T (trans_b=false) or dY * B (trans_b=true)
                kern::matmul(dy.data.data(), b.val.data.data(), grad_buf(n.in0).data.data(),
                             m, nn, k, !trans_b, true);
            }
            if (b.need_grad) {
                if (!trans_b) {
                    // dB[k,n] = A^T dY
                    kern::matmul_tn(a.val.data.data(), dy.data.data(), grad_buf(n.in1).data.data(),
                                    m, k, nn, true);
                } else {
                    // dB[n,k] = dY^T A
                    kern::matmul_tn(dy.data.data(), a.val.data.data(), grad_buf(n.in1).data.data(),
                                    m, nn, k, true);
                }
            }
            break;
        }
        case Op::Add: {
            for (int in : {n.in0, n.in1}) {
                Node& src = nodes_[static_cast<std::size_t>(in)];
                if (!src.need_grad) continue;
                Tensor& g = grad_buf(in);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i];
            }
            break;
        }
        case Op::AddBias: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            Node& b = nodes_[static_cast<std::size_t>(n.in1)];
            if (x.need_grad) {
                Tensor& g = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i];
            }
            if (b.need_grad) {
                Tensor colsum({n.val.cols()});
                kern::col_sums(dy.data.data(), colsum.data.data(), n.val.rows(), n.val.cols());
                Tensor& g = grad_buf(n.in1);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += colsum[i];
            }
            break;
        }
        case Op::LayerNorm: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            Node& w = nodes_[static_cast<std::size_t>(n.in1)];
            Node& b = nodes_[static_cast<std::size_t>(n.in2)];
            float* dx = in_grad(n.in0, scratch0);
            float* dw = w.need_grad ? grad_buf(n.in1).data.data() : nullptr;
            float* db = b.need_grad ? grad_buf(n.in2).data.data() : nullptr;
            kern::layernorm_backward(x.val.data.data(), w.val.data.data(), dy.data.data(),
                                     n.aux0.data.data(), n.aux1.data.data(),
                                     dx, dw, db, x.val.rows(), x.val.cols());
            break;
        }
        case Op::Gelu: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad)
                kern::gelu_backward(x.val.data.data(), dy.data.data(), grad_buf(n.in0).data.data(),
                                    static_cast<std::int64_t>(x.val.numel()));
            break;
        }
        case Op::Attention: {
            Node& q = nodes_[static_cast<std::size_t>(n.in0)];
            Node& k = nodes_[static_cast<std::size_t>(n.in1)];
            Node& v = nodes_[static_cast<std::size_t>(n.in2)];
            float* dq = in_grad(n.in0, scratch0);
            float* dk = in_grad(n.in1, scratch1);
            float* dv = in_grad(n.in2, scratch2);
            kern::attention_backward(q.val.data.data(), k.val.data.data(), v.val.data.data(),
                                     n.aux0.data.data(), dy.data.data(), dq, dk, dv,
                                     q.val.rows(), q.val.cols(), n.i0);
            break;
        }
        case Op::SoftmaxRows: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad)
                kern::softmax_rows_backward(n.val.data.data(), dy.data.data(),
                                            grad_buf(n.in0).data.data(),
                                            n.val.rows(), n.val.cols());
            break;
        }
        case Op::GatherRows: {
            Node& t = nodes_[static_cast<std::size_t>(n.in0)];
            if (t.need_grad) {
                Tensor& g = grad_buf(n.in0);
                int cols = t.val.cols();
                for (std::size_t r = 0; r < n.ids.size(); ++r)
                    for (int c = 0; c < cols; ++c)
                        g.at(n.ids[r], c) += dy.at(static_cast<int>(r), c);
            }
            break;
        }
        case Op::SliceRows: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad) {
                Tensor& g = grad_buf(n.in0);
                int cols = x.val.cols();
                for (int r = 0; r < n.i1; ++r)
                    for (int c = 0; c < cols; ++c)
                        g.at(n.i0 + r, c) += dy.at(r, c);
            }
            break;
        }
        case Op::MeanPoolRows: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad) {
                Tensor& g = grad_buf(n.in0);
                int cols = x.val.cols();
                float inv = 1.0f / static_cast<float>(n.i0);
                for (int r = 0; r < n.i0; ++r)
                    for (int c = 0; c < cols; ++c)
                        g.at(r, c) += dy[static_cast<std::size_t>(c)] * inv;
            }
            break;
        }
        case Op::Log: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad) {
                Tensor& g = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i] / x.val[i];
            }
            break;
        }
        case Op::Mul: {
            Node& a = nodes_[static_cast<std::size_t>(n.in0)];
            Node& b = nodes_[static_cast<std::size_t>(n.in1)];
            if (a.need_grad) {
                Tensor& g = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i] * b.val[i];
            }
            if (b.need_grad) {
                Tensor& g = grad_buf(n.in1);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i] * a.val[i];
            }
            break;
        }
        case Op::Scale: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad) {
                Tensor& g = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i] * n.f0;
            }
            break;
        }
        case Op::Sum: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad) {
                Tensor& g = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[0];
            }
            break;
        }
        case Op::Pick: {
            Node& x = nodes_[static_cast<std::size_t>(n.in0)];
            if (x.need_grad) grad_buf(n.in0)[static_cast<std::size_t>(n.i0)] += dy[0];
            break;
        }
        case Op::CrossEntropyRows: {
            Node& l = nodes_[static_cast<std::size_t>(n.in0)];
            if (l.need_grad) {
                Tensor& g = grad_buf(n.in0);
                int rows = l.val.rows(), cols = l.val.cols();
                float s = dy[0] / static_cast<float>(n.i0);
                for (int r = 0; r < rows; ++r) {
                    int tgt = n.ids[static_cast<std::size_t>(r)];
                    if (tgt < 0) continue;
                    for (int c = 0; c < cols; ++c)
                        g.at(r, c) += s * (n.aux0.at(r, c) - (c == tgt ? 1.0f : 0.0f));
                }
            }
            break;
        }
    }

    // Non-finite gradients stop the pass immediately, naming the op.
    for (int in : {n.in0, n.in1, n.in2}) {
        if (in < 0) continue;
        Node& src = nodes_[static_cast<std::size_t>(in)];
        if (!src.need_grad || src.grad.numel() == 0) continue;
        if (!src.grad.all_finite())
            throw std::runtime_error(std::string("NaN in backward pass at op ") + op_name(n.op));
    }
}

std::map<std::string, Tensor> Tape::tunable_grads() const {
    std::map<std::string, Tensor> out;
    for (int id : tunable_ids_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        out[n.name] = n.grad.numel() ? n.grad : Tensor::zeros(n.val.shape);
    }
    return out;
}

const Tensor& Tape::grad_of_param(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) {
        if (frozen_params_.count(name))
            throw std::logic_error("gradient query for non-tunable parameter: " + name);
        throw std::out_of_range("unknown parameter on tape: " + name);
    }
    return nodes_[static_cast<std::size_t>(it->second)].grad;
}

std::map<std::string, Tensor> grad_selected(Tape& tape, Tape::Value loss) {
    tape.backward(loss);
    return tape.tunable_grads();
}

std::map<std::string, Tensor> finite_diff_grad(
    const std::function<double(const ParamStore&)>& loss_fn,
    const ParamStore& store, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
    ParamStore work = store;
    std::map<std::string, Tensor> out;
    for (const auto& name : store.tunable) {
        Tensor& t = work.at_mut(name);
        Tensor g = Tensor::zeros(t.shape);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            float orig = t[i];
            float xp = static_cast<float>(static_cast<double>(orig) + step);
            float xm = static_cast<float>(static_cast<double>(orig) - step);
            t[i] = xp;
            double lp = loss_fn(work);
            t[i] = xm;
            double lm = loss_fn(work);
            t[i] = orig;
            double denom = static_cast<double>(xp) - static_cast<double>(xm);
            g[i] = static_cast<float>((lp - lm) / denom);
        }
        out[name] = std::move(g);
    }
    return out;
}

}  // namespace rectify
