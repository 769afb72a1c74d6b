#include "fmtk/model/model.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/diffcore/checkpoint.hpp"

namespace fmtk {

void BackboneConfig::validate() const {
  if (widths.empty()) throw DataError("backbone: need at least one stage");
  for (int w : widths) {
    if (w < 1 || w > 512) throw DataError(fmt::format("backbone: bad stage width {}", w));
  }
  if (blocks_per_stage < 1) throw DataError("backbone: blocks_per_stage must be >= 1");
  if (num_classes < 2) throw DataError("backbone: need at least 2 classes");
  if (embed_dim < num_classes) {
    throw DataError(fmt::format("backbone: embedding dim {} < number of classes {}", embed_dim, num_classes));
  }
  int side = input_size;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    if (side % 2 != 0) throw DataError(fmt::format("backbone: input size {} not pool-divisible across {} stages", input_size, widths.size()));
    side /= 2;
  }
  if (side < 2) throw DataError("backbone: input size too small for the stage count");
}

nlohmann::ordered_json BackboneConfig::to_json() const {
  return {{"input_size", input_size},
          {"widths", widths},
          {"blocks_per_stage", blocks_per_stage},
          {"embed_dim", embed_dim},
          {"num_classes", num_classes}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<int>>();
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.validate();
  return c;
}

namespace {

uint64_t name_hash(const std::string& name) {
  uint64_t h = 1469598103934665603ull;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

int64_t fan_in_of(const Tensor& t) {
  if (t.rank() == 4) return static_cast<int64_t>(t.dim(0)) * t.dim(1) * t.dim(2);
  if (t.rank() == 2) return t.dim(0);
  return t.numel();
}

}  // namespace

void Model::init_tensor(const std::string& name, Tensor t, uint64_t seed) {
  if (name.ends_with(".w")) {
    // fan-in-scaled uniform; biases stay zero
    Rng rng(Rng::mix(seed, name_hash(name)));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in_of(t)));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  }
  params_.emplace(name, std::move(t));
}

Model Model::single_task(const BackboneConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.has_head_b_ = true;
  const int stages = static_cast<int>(cfg.widths.size());
  m.init_tensor("backbone.stem.w", Tensor({3, 3, 3, cfg.widths[0]}), seed);
  m.init_tensor("backbone.stem.b", Tensor({cfg.widths[0]}), seed);
  for (int s = 0; s < stages; ++s) {
    const int w = cfg.widths[static_cast<std::size_t>(s)];
    if (s > 0) {
      const int prev = cfg.widths[static_cast<std::size_t>(s - 1)];
      m.init_tensor(fmt::format("backbone.s{}.in.w", s), Tensor({3, 3, prev, w}), seed);
      m.init_tensor(fmt::format("backbone.s{}.in.b", s), Tensor({w}), seed);
    }
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      m.init_tensor(fmt::format("backbone.s{}.b{}.w", s, b), Tensor({3, 3, w, w}), seed);
      m.init_tensor(fmt::format("backbone.s{}.b{}.b", s, b), Tensor({w}), seed);
    }
  }
  m.init_tensor("backbone.embed.w", Tensor({cfg.widths.back(), cfg.embed_dim}), seed);
  m.init_tensor("backbone.embed.b", Tensor({cfg.embed_dim}), seed);
  m.init_tensor("head_b.w", Tensor({cfg.embed_dim, cfg.num_classes}), seed);
  m.init_tensor("head_b.b", Tensor({cfg.num_classes}), seed);
  m.build_graph();
  return m;
}

Model Model::teacher(const BackboneConfig& cfg, uint64_t seed) {
  Model m = single_task(cfg, seed);
  m.params_.erase("head_b.w");
  m.params_.erase("head_b.b");
  m.has_head_b_ = false;
  m.init_tensor("head_a.w", Tensor({cfg.embed_dim, 3}), seed);
  m.init_tensor("head_a.b", Tensor({3}), seed);
  m.has_head_a_ = true;
  m.build_graph();
  return m;
}

Model Model::clone() const {
  Model m;
  m.cfg_ = cfg_;
  m.has_head_a_ = has_head_a_;
  m.has_head_b_ = has_head_b_;
  m.params_ = params_;
  m.build_graph();
  return m;
}

void Model::attach_head_a(uint64_t seed) {
  if (has_head_a_) throw DataError("attach_head_a: detail head already present");
  init_tensor("head_a.w", Tensor({cfg_.embed_dim, 3}), seed);
  init_tensor("head_a.b", Tensor({3}), seed);
  has_head_a_ = true;
  build_graph();
}

void Model::build_graph() {
  graph_ = std::make_unique<Graph>(std::vector<int>{cfg_.input_size, cfg_.input_size, 3});
  Graph& g = *graph_;
  auto p = [&](const std::string& name) -> Tensor* { return &params_.at(name); };

  int x = g.relu(g.conv2d(g.input(), p("backbone.stem.w"), p("backbone.stem.b"), "backbone.stem"), "backbone.stem.relu");
  const int stages = static_cast<int>(cfg_.widths.size());
  for (int s = 0; s < stages; ++s) {
    if (s > 0) {
      const int pooled = g.maxpool2x2(x, fmt::format("backbone.s{}.pool", s));
      x = g.relu(g.conv2d(pooled, p(fmt::format("backbone.s{}.in.w", s)), p(fmt::format("backbone.s{}.in.b", s)),
                          fmt::format("backbone.s{}.in", s)),
                 fmt::format("backbone.s{}.in.relu", s));
    }
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
      const std::string base = fmt::format("backbone.s{}.b{}", s, b);
      const int conv = g.conv2d(x, p(base + ".w"), p(base + ".b"), base);
      x = g.residual_add(x, g.relu(conv, base + ".relu"), base + ".add");
    }
  }
  feature_node_ = x;
  const int gap = g.global_avg_pool(x, "backbone.gap");
  z_node_ = g.dense(gap, p("backbone.embed.w"), p("backbone.embed.b"), "backbone.embed");

  logits_b_node_ = probs_b_node_ = -1;
  logits_a_node_ = probs_a_node_ = -1;
  if (has_head_b_) {
    logits_b_node_ = g.dense(z_node_, p("head_b.w"), p("head_b.b"), "head_b");
    probs_b_node_ = g.softmax(logits_b_node_, "head_b.softmax");
  }
  if (has_head_a_) {
    logits_a_node_ = g.dense(z_node_, p("head_a.w"), p("head_a.b"), "head_a");
    probs_a_node_ = g.sigmoid(logits_a_node_, "head_a.sigmoid");
  }
  g.set_output(has_head_b_ ? probs_b_node_ : probs_a_node_);
}

Model::Outputs Model::forward(const Tensor& batch) {
  graph_->forward(batch);
  Outputs out;
  out.z = graph_->node_output(z_node_);
  if (has_head_b_) out.probs_b = graph_->node_output(probs_b_node_);
  if (has_head_a_) out.probs_a = graph_->node_output(probs_a_node_);
  return out;
}

void Model::backward_heads(const Tensor* d_probs_b, const Tensor* d_probs_a) {
  std::vector<std::pair<int, const Tensor*>> seeds;
  if (d_probs_b != nullptr) {
    if (!has_head_b_) throw DataError("backward_heads: gradient for absent head B");
    seeds.emplace_back(probs_b_node_, d_probs_b);
  }
  if (d_probs_a != nullptr) {
    if (!has_head_a_) throw DataError("backward_heads: gradient for absent head A");
    seeds.emplace_back(probs_a_node_, d_probs_a);
  }
  graph_->backward_multi(seeds);
}

void Model::zero_grads() {
  for (auto& [name, t] : params_) {
    t.ensure_grad();
    t.zero_grad();
  }
}

NamedParams Model::trainable() {
  NamedParams out;
  for (auto& [name, t] : params_) out.emplace_back(name, &t);
  return out;
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void Model::save(const std::string& prefix) const {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, t] : params_) tensors.emplace_back(name, &t);
  save_checkpoint(prefix + ".fmtk", tensors);
  nlohmann::ordered_json j;
  j["backbone"] = cfg_.to_json();
  j["head_a"] = has_head_a_;
  j["head_b"] = has_head_b_;
  write_file_atomic(prefix + ".json", j.dump(2) + "\n");
}

Model Model::load(const std::string& prefix) {
  const auto j = nlohmann::json::parse(read_file(prefix + ".json"));
  const BackboneConfig cfg = BackboneConfig::from_json(j.at("backbone"));
  const bool head_a = j.at("head_a").get<bool>();
  const bool head_b = j.at("head_b").get<bool>();
  if (!head_a && !head_b) throw DataError(fmt::format("model '{}': no heads", prefix));

  // build the right skeleton, then overwrite every tensor from the file
  Model m = head_b ? single_task(cfg, 0) : teacher(cfg, 0);
  if (head_a && head_b) m.attach_head_a(0);
  auto loaded = load_checkpoint(prefix + ".fmtk");
  for (auto& [name, t] : m.params_) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw DataError(fmt::format("model '{}': tensor '{}' missing from checkpoint", prefix, name));
    if (it->second.shape() != t.shape()) {
      throw DataError(fmt::format("model '{}': tensor '{}' shape {} vs expected {}", prefix, name,
                                  shape_str(it->second.shape()), shape_str(t.shape())));
    }
    t = std::move(it->second);
    loaded.erase(it);
  }
  if (!loaded.empty()) {
    throw DataError(fmt::format("model '{}': checkpoint holds unexpected tensor '{}'", prefix, loaded.begin()->first));
  }
  m.build_graph();
  return m;
}

}  // namespace fmtk
