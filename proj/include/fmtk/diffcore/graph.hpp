#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

enum class OpKind {
  Input,
  Conv2d,
  Relu,
  MaxPool2x2,
  GlobalAvgPool,
  Dense,
  Sigmoid,
  Softmax,
  ResidualAdd,
  Flatten,
};

const char* op_kind_name(OpKind k);

struct Node {
  OpKind kind;
  std::string name;
  std::vector<int> inputs;   // node ids, always lower than this node's id
  Tensor* weight = nullptr;  // conv kernel (KH,KW,Cin,Cout) or dense (Din,Dout)
  Tensor* bias = nullptr;    // (Cout) / (Dout)

  Tensor out;                    // cached forward output
  std::vector<double> out_grad;  // d objective / d out, same size as out

  // scratch caches
  std::vector<double> patches;   // conv im2col, (N*H*W) x (KH*KW*Cin)
  std::vector<int32_t> argmax;   // maxpool winner offsets
};

// Reverse-mode differentiable computation graph over a fixed layer set.
// Nodes are appended in topological order (an op can only consume already
// existing nodes), so the graph is acyclic by construction and backward is
// a single reverse sweep over the node array.
//
// Tensors flow as (N, H, W, C) through spatial ops and (N, D) after
// flatten/pool. The leading batch dimension is taken from the input at
// forward time; everything else is validated against the declared
// per-sample input shape.
class Graph {
 public:
  // input_shape excludes the batch dimension, e.g. {32, 32, 3}.
  explicit Graph(std::vector<int> input_shape);

  int input() const { return 0; }

  int conv2d(int in, Tensor* kernel, Tensor* bias, std::string name);
  int relu(int in, std::string name = "relu");
  int maxpool2x2(int in, std::string name = "maxpool");
  int global_avg_pool(int in, std::string name = "gap");
  int dense(int in, Tensor* weight, Tensor* bias, std::string name);
  int sigmoid(int in, std::string name = "sigmoid");
  int softmax(int in, std::string name = "softmax");
  int residual_add(int a, int b, std::string name = "add");
  int flatten(int in, std::string name = "flatten");

  void set_output(int node);
  int output() const;

  int node_count() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // Runs all nodes, caching every output. Returns the designated output.
  const Tensor& forward(const Tensor& batch);

  // Seeds d(objective)/d(output) at the designated output node and sweeps
  // backwards. Parameter gradients accumulate additively into each
  // parameter's grad buffer until Tensor::zero_grad is called.
  void backward(const Tensor& output_grad);

  // Same, but seeding several nodes at once (multi-head objectives).
  void backward_multi(const std::vector<std::pair<int, const Tensor*>>& seeds);

  const Tensor& node_output(int id) const;
  // d(objective)/d(node output) from the last backward sweep.
  const std::vector<double>& node_grad(int id) const;

  // Unique parameter tensors in first-use order.
  std::vector<Tensor*> parameters() const;
  void zero_param_grads();

  // When enabled, forward folds every relu gate and pool winner into a
  // signature hash; a signature change between two perturbed passes means
  // the objective is non-smooth along that perturbation. Used by the
  // finite-difference checker, off (and costless) during training.
  void set_record_gates(bool on) { record_gates_ = on; }
  uint64_t gate_signature() const { return gate_sig_; }

  const std::vector<int>& input_shape() const { return input_shape_; }

 private:
  int add_node(Node n);
  void check_input_id(int id, const char* op) const;
  void forward_node(Node& n, int64_t batch);
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  std::vector<int> input_shape_;
  int output_ = -1;
  bool forward_done_ = false;
  bool record_gates_ = false;
  uint64_t gate_sig_ = 0;
};

}  // namespace fmtk
