#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rectify/paramstore.hpp"
#include "rectify/tensor.hpp"

namespace rectify {

// Reverse-mode tape. Gradients are produced only for parameter leaves marked
// tunable; everything else is either a constant or a frozen parameter that
// gradients merely flow through. One tape per loss evaluation, confined to
// the task that built it.
class Tape {
public:
    struct Value {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Value constant(Tensor t);
    Value param(const std::string& name, const Tensor& t, bool tunable);

    Value matmul(Value a, Value b, bool trans_b = false);
    Value add(Value a, Value b);                    // same shape
    Value add_bias(Value x, Value b);               // row broadcast
    Value layernorm(Value x, Value w, Value b, float eps = 1e-5f);
    Value gelu(Value x);
    Value causal_attention(Value q, Value k, Value v, int n_heads);
    Value softmax_rows(Value x);
    Value gather_rows(Value table, std::vector<int> ids);
    Value slice_rows(Value x, int start, int len);
    Value mean_pool_rows(Value x, int upto);
    Value log(Value x);
    Value mul(Value a, Value b);                    // elementwise
    Value scale(Value x, float s);
    Value sum(Value x);                             // -> shape {1}
    Value pick(Value x, int index);                 // element of a vector -> shape {1}
    Value cross_entropy_rows(Value logits, std::vector<int> targets);  // mean NLL, -1 ignores

    const Tensor& val(Value v) const;

    // Reverse pass from a scalar loss. Throws if the loss is not scalar or if
    // a backward step produces non-finite values (the op is named).
    void backward(Value loss);

    bool has_tunable() const { return !tunable_ids_.empty(); }
    // Gradients for every tunable parameter leaf, keyed by name.
    std::map<std::string, Tensor> tunable_grads() const;
    // Single-name query; rejected for non-tunable parameters.
    const Tensor& grad_of_param(const std::string& name) const;

private:
    enum class Op {
        Constant, Param, Matmul, Add, AddBias, LayerNorm, Gelu, Attention,
        SoftmaxRows, GatherRows, SliceRows, MeanPoolRows, Log, Mul, Scale,
        Sum, Pick, CrossEntropyRows
    };
    static const char* op_name(Op op);

    struct Node {
        Op op;
        int in0 = -1, in1 = -1, in2 = -1;
        Tensor val;
        Tensor grad;
        bool need_grad = false;
        bool tunable = false;
        std::string name;           // param leaves
        int i0 = 0;                 // trans_b / start / upto / n_heads / pick index
        int i1 = 0;                 // len
        float f0 = 0.0f;            // scale factor / layernorm eps
        std::vector<int> ids;       // gather / cross-entropy targets
        Tensor aux0, aux1;          // saved stats (ln mean/rstd, attention or softmax probs)
    };

    int push(Node n);
    Node& node(Value v);
    const Node& cnode(Value v) const;
    Tensor& grad_buf(int id);
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<int> tunable_ids_;
    std::map<std::string, int> param_index_;
    std::set<std::string> frozen_params_;
    bool ran_backward_ = false;
};

// Gradients of a recorded scalar loss for every tunable leaf on the tape.
std::map<std::string, Tensor> grad_selected(Tape& tape, Tape::Value loss);

// Central-difference oracle over the tunable entries of a store. loss_fn is
// any scalar evaluation of the store (typically a 64-bit shadow of the loss).
std::map<std::string, Tensor> finite_diff_grad(
    const std::function<double(const ParamStore&)>& loss_fn,
    const ParamStore& store, double step);

}  // namespace rectify
