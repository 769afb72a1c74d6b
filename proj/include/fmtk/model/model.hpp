#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fmtk/diffcore/graph.hpp"
#include "fmtk/diffcore/sgd.hpp"
#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Small residual CNN: a stem conv, `widths.size()` stages of
// `blocks_per_stage` residual conv3x3+relu blocks with 2x2 max pooling
// between stages, then global average pooling and a dense embedding.
struct BackboneConfig {
  int input_size = 32;
  std::vector<int> widths = {8, 16, 32};
  int blocks_per_stage = 2;
  int embed_dim = 64;
  int num_classes = 3;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

// Shared backbone plus up to two heads: a softmax head for overall
// quality (task B) and a sigmoid multilabel head over the three quality
// details (task A). Both heads read the same embedding tensor. The
// Teacher is a model carrying only the detail head.
class Model {
 public:
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  static Model single_task(const BackboneConfig& cfg, uint64_t seed);
  static Model teacher(const BackboneConfig& cfg, uint64_t seed);

  Model clone() const;

  bool has_head_a() const { return has_head_a_; }
  bool has_head_b() const { return has_head_b_; }

  // Adds a freshly initialized detail head; every existing parameter is
  // left bit-for-bit untouched. Error when the head already exists.
  void attach_head_a(uint64_t seed);

  struct Outputs {
    Tensor z;        // (N, embed_dim)
    Tensor probs_b;  // (N, C) softmax rows, empty when no head B
    Tensor probs_a;  // (N, 3) sigmoids, empty when no head A
  };
  Outputs forward(const Tensor& batch);

  // Seeds d(loss)/d(probs) at the present heads and backpropagates.
  // Passing a gradient for a missing head is an error; both present is
  // the multi-task case.
  void backward_heads(const Tensor* d_probs_b, const Tensor* d_probs_a);

  void zero_grads();
  NamedParams trainable();
  int64_t parameter_count() const;

  const BackboneConfig& config() const { return cfg_; }
  Graph& graph() { return *graph_; }
  int feature_node() const { return feature_node_; }  // final conv feature map
  int z_node() const { return z_node_; }
  int logits_b_node() const { return logits_b_node_; }
  int logits_a_node() const { return logits_a_node_; }

  // prefix.fmtk holds the tensors, prefix.json the architecture.
  void save(const std::string& prefix) const;
  static Model load(const std::string& prefix);

 private:
  Model() = default;
  void init_tensor(const std::string& name, Tensor t, uint64_t seed);
  void build_graph();

  BackboneConfig cfg_;
  bool has_head_a_ = false;
  bool has_head_b_ = false;
  std::map<std::string, Tensor> params_;
  std::unique_ptr<Graph> graph_;
  int feature_node_ = -1;
  int z_node_ = -1;
  int logits_b_node_ = -1;
  int probs_b_node_ = -1;
  int logits_a_node_ = -1;
  int probs_a_node_ = -1;
};

}  // namespace fmtk
