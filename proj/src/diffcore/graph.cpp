#include "fmtk/diffcore/graph.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>

#include <Eigen/Core>
#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

constexpr uint64_t kFnvPrime = 1099511628211ull;

inline void fnv_mix(uint64_t& sig, uint64_t v) { sig = (sig ^ v) * kFnvPrime; }

#ifndef NDEBUG
void debug_check_finite(const Node& n) {
  for (double v : n.out.values()) {
    assert(std::isfinite(v) && "non-finite activation");
    (void)v;
  }
}
#endif

}  // namespace

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPool2x2: return "maxpool2x2";
    case OpKind::GlobalAvgPool: return "global-avg-pool";
    case OpKind::Dense: return "dense";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::ResidualAdd: return "residual-add";
    case OpKind::Flatten: return "flatten";
  }
  return "?";
}

Graph::Graph(std::vector<int> input_shape) : input_shape_(std::move(input_shape)) {
  shape_numel(input_shape_);  // validates positivity
  Node n;
  n.kind = OpKind::Input;
  n.name = "input";
  nodes_.push_back(std::move(n));
}

int Graph::add_node(Node n) {
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_input_id(int id, const char* op) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw DataError(fmt::format("{}: input node id {} out of range", op, id));
  }
}

int Graph::conv2d(int in, Tensor* kernel, Tensor* bias, std::string name) {
  check_input_id(in, "conv2d");
  if (kernel == nullptr || bias == nullptr) throw DataError("conv2d: null parameter");
  if (kernel->rank() != 4) throw DataError(fmt::format("conv2d '{}': kernel must be (KH,KW,Cin,Cout), got {}", name, shape_str(kernel->shape())));
  if (kernel->dim(0) % 2 == 0 || kernel->dim(1) % 2 == 0) {
    throw DataError(fmt::format("conv2d '{}': even kernel size unsupported", name));
  }
  if (bias->rank() != 1 || bias->dim(0) != kernel->dim(3)) {
    throw DataError(fmt::format("conv2d '{}': bias shape {} vs Cout {}", name, shape_str(bias->shape()), kernel->dim(3)));
  }
  Node n;
  n.kind = OpKind::Conv2d;
  n.name = std::move(name);
  n.inputs = {in};
  n.weight = kernel;
  n.bias = bias;
  return add_node(std::move(n));
}

int Graph::relu(int in, std::string name) {
  check_input_id(in, "relu");
  Node n;
  n.kind = OpKind::Relu;
  n.name = std::move(name);
  n.inputs = {in};
  return add_node(std::move(n));
}

int Graph::maxpool2x2(int in, std::string name) {
  check_input_id(in, "maxpool2x2");
  Node n;
  n.kind = OpKind::MaxPool2x2;
  n.name = std::move(name);
  n.inputs = {in};
  return add_node(std::move(n));
}

int Graph::global_avg_pool(int in, std::string name) {
  check_input_id(in, "global_avg_pool");
  Node n;
  n.kind = OpKind::GlobalAvgPool;
  n.name = std::move(name);
  n.inputs = {in};
  return add_node(std::move(n));
}

int Graph::dense(int in, Tensor* weight, Tensor* bias, std::string name) {
  check_input_id(in, "dense");
  if (weight == nullptr || bias == nullptr) throw DataError("dense: null parameter");
  if (weight->rank() != 2) throw DataError(fmt::format("dense '{}': weight must be (Din,Dout), got {}", name, shape_str(weight->shape())));
  if (bias->rank() != 1 || bias->dim(0) != weight->dim(1)) {
    throw DataError(fmt::format("dense '{}': bias shape {} vs Dout {}", name, shape_str(bias->shape()), weight->dim(1)));
  }
  Node n;
  n.kind = OpKind::Dense;
  n.name = std::move(name);
  n.inputs = {in};
  n.weight = weight;
  n.bias = bias;
  return add_node(std::move(n));
}

int Graph::sigmoid(int in, std::string name) {
  check_input_id(in, "sigmoid");
  Node n;
  n.kind = OpKind::Sigmoid;
  n.name = std::move(name);
  n.inputs = {in};
  return add_node(std::move(n));
}

int Graph::softmax(int in, std::string name) {
  check_input_id(in, "softmax");
  Node n;
  n.kind = OpKind::Softmax;
  n.name = std::move(name);
  n.inputs = {in};
  return add_node(std::move(n));
}

int Graph::residual_add(int a, int b, std::string name) {
  check_input_id(a, "residual_add");
  check_input_id(b, "residual_add");
  Node n;
  n.kind = OpKind::ResidualAdd;
  n.name = std::move(name);
  n.inputs = {a, b};
  return add_node(std::move(n));
}

int Graph::flatten(int in, std::string name) {
  check_input_id(in, "flatten");
  Node n;
  n.kind = OpKind::Flatten;
  n.name = std::move(name);
  n.inputs = {in};
  return add_node(std::move(n));
}

void Graph::set_output(int node) {
  check_input_id(node, "set_output");
  output_ = node;
}

int Graph::output() const {
  if (output_ < 0) throw DataError("graph has no designated output node");
  return output_;
}

const Tensor& Graph::node_output(int id) const {
  check_input_id(id, "node_output");
  if (!forward_done_) throw DataError("node_output before forward");
  return nodes_[static_cast<std::size_t>(id)].out;
}

const std::vector<double>& Graph::node_grad(int id) const {
  check_input_id(id, "node_grad");
  return nodes_[static_cast<std::size_t>(id)].out_grad;
}

std::vector<Tensor*> Graph::parameters() const {
  std::vector<Tensor*> ps;
  for (const Node& n : nodes_) {
    for (Tensor* t : {n.weight, n.bias}) {
      if (t != nullptr && std::find(ps.begin(), ps.end(), t) == ps.end()) ps.push_back(t);
    }
  }
  return ps;
}

void Graph::zero_param_grads() {
  for (Tensor* t : parameters()) {
    t->ensure_grad();
    t->zero_grad();
  }
}

const Tensor& Graph::forward(const Tensor& batch) {
  if (batch.rank() != static_cast<int>(input_shape_.size()) + 1) {
    throw DataError(fmt::format("input rank {} does not match declared {} + batch", batch.rank(), shape_str(input_shape_)));
  }
  for (std::size_t i = 0; i < input_shape_.size(); ++i) {
    if (batch.dim(static_cast<int>(i) + 1) != input_shape_[i]) {
      throw DataError(fmt::format("input shape {} does not match declared {}", shape_str(batch.shape()), shape_str(input_shape_)));
    }
  }
  const int64_t n = batch.dim(0);
  gate_sig_ = 1469598103934665603ull;  // FNV offset basis
  nodes_[0].out = batch;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    forward_node(nodes_[i], n);
#ifndef NDEBUG
    debug_check_finite(nodes_[i]);
#endif
  }
  forward_done_ = true;
  return nodes_[static_cast<std::size_t>(output())].out;
}

void Graph::forward_node(Node& n, int64_t batch) {
  const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].out;
  switch (n.kind) {
    case OpKind::Input:
      break;

    case OpKind::Conv2d: {
      if (x.rank() != 4) throw DataError(fmt::format("conv2d '{}': expected (N,H,W,C) input, got {}", n.name, shape_str(x.shape())));
      const int H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
      const int KH = n.weight->dim(0), KW = n.weight->dim(1), Cout = n.weight->dim(3);
      if (n.weight->dim(2) != Cin) {
        throw DataError(fmt::format("conv2d '{}': input channels {} vs kernel Cin {} (input {})", n.name, Cin, n.weight->dim(2), shape_str(x.shape())));
      }
      const int ph = KH / 2, pw = KW / 2;
      const int64_t rows = batch * H * W;
      const int64_t cols = static_cast<int64_t>(KH) * KW * Cin;
      n.patches.resize(static_cast<std::size_t>(rows * cols));
      const double* src = x.data();
      double* dst = n.patches.data();
      for (int64_t b = 0; b < batch; ++b) {
        const double* img = src + b * H * W * Cin;
        for (int y = 0; y < H; ++y) {
          for (int xx = 0; xx < W; ++xx) {
            double* prow = dst + ((b * H + y) * W + xx) * cols;
            for (int kh = 0; kh < KH; ++kh) {
              double* seg = prow + static_cast<int64_t>(kh) * KW * Cin;
              const int iy = y + kh - ph;
              if (iy < 0 || iy >= H) {
                std::memset(seg, 0, sizeof(double) * static_cast<std::size_t>(KW) * Cin);
                continue;
              }
              const int ix0 = xx - pw;
              const int lo = std::max(0, -ix0);            // first valid kw
              const int hi = std::min(KW, W - ix0);        // one past last valid kw
              if (lo > 0) std::memset(seg, 0, sizeof(double) * static_cast<std::size_t>(lo) * Cin);
              if (hi < KW) std::memset(seg + static_cast<int64_t>(hi) * Cin, 0, sizeof(double) * static_cast<std::size_t>(KW - hi) * Cin);
              if (hi > lo) {
                std::memcpy(seg + static_cast<int64_t>(lo) * Cin,
                            img + (static_cast<int64_t>(iy) * W + (ix0 + lo)) * Cin,
                            sizeof(double) * static_cast<std::size_t>(hi - lo) * Cin);
              }
            }
          }
        }
      }
      n.out = Tensor({static_cast<int>(batch), H, W, Cout});
      CMapMat P(n.patches.data(), rows, cols);
      CMapMat K(n.weight->data(), cols, Cout);
      MapMat O(n.out.data(), rows, Cout);
      O.noalias() = P * K;
      Eigen::Map<const Eigen::RowVectorXd> bias(n.bias->data(), Cout);
      O.rowwise() += bias;
      break;
    }

    case OpKind::Relu: {
      n.out = Tensor(x.shape());
      const double* in = x.data();
      double* out = n.out.data();
      const int64_t m = x.numel();
      if (record_gates_) {
        for (int64_t i = 0; i < m; ++i) {
          const bool on = in[i] > 0.0;
          out[i] = on ? in[i] : 0.0;
          fnv_mix(gate_sig_, on);
        }
      } else {
        for (int64_t i = 0; i < m; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      }
      break;
    }

    case OpKind::MaxPool2x2: {
      if (x.rank() != 4) throw DataError(fmt::format("maxpool '{}': expected (N,H,W,C) input, got {}", n.name, shape_str(x.shape())));
      const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
      if (H % 2 != 0 || W % 2 != 0) {
        throw DataError(fmt::format("maxpool '{}': odd spatial size {}x{}", n.name, H, W));
      }
      const int OH = H / 2, OW = W / 2;
      n.out = Tensor({static_cast<int>(batch), OH, OW, C});
      n.argmax.resize(static_cast<std::size_t>(n.out.numel()));
      const double* in = x.data();
      double* out = n.out.data();
      int64_t o = 0;
      for (int64_t b = 0; b < batch; ++b) {
        const int64_t ib = b * H * W * C;
        for (int y = 0; y < OH; ++y) {
          for (int xx = 0; xx < OW; ++xx) {
            const int64_t p00 = ib + ((2 * y) * static_cast<int64_t>(W) + 2 * xx) * C;
            const int64_t p01 = p00 + C;
            const int64_t p10 = p00 + static_cast<int64_t>(W) * C;
            const int64_t p11 = p10 + C;
            for (int c = 0; c < C; ++c, ++o) {
              int64_t best = p00 + c;
              if (in[p01 + c] > in[best]) best = p01 + c;
              if (in[p10 + c] > in[best]) best = p10 + c;
              if (in[p11 + c] > in[best]) best = p11 + c;
              out[o] = in[best];
              n.argmax[static_cast<std::size_t>(o)] = static_cast<int32_t>(best - ib);
              if (record_gates_) fnv_mix(gate_sig_, static_cast<uint64_t>(best - ib));
            }
          }
        }
      }
      break;
    }

    case OpKind::GlobalAvgPool: {
      if (x.rank() != 4) throw DataError(fmt::format("gap '{}': expected (N,H,W,C) input, got {}", n.name, shape_str(x.shape())));
      const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
      n.out = Tensor({static_cast<int>(batch), C});
      const double inv = 1.0 / (static_cast<double>(H) * W);
      const double* in = x.data();
      double* out = n.out.data();
      for (int64_t b = 0; b < batch; ++b) {
        double* row = out + b * C;
        const double* img = in + b * H * W * C;
        for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p) {
          const double* px = img + p * C;
          for (int c = 0; c < C; ++c) row[c] += px[c];
        }
        for (int c = 0; c < C; ++c) row[c] *= inv;
      }
      break;
    }

    case OpKind::Dense: {
      if (x.rank() != 2) throw DataError(fmt::format("dense '{}': expected (N,D) input, got {}", n.name, shape_str(x.shape())));
      const int Din = x.dim(1), Dout = n.weight->dim(1);
      if (n.weight->dim(0) != Din) {
        throw DataError(fmt::format("dense '{}': input width {} vs weight Din {}", n.name, Din, n.weight->dim(0)));
      }
      n.out = Tensor({static_cast<int>(batch), Dout});
      CMapMat X(x.data(), batch, Din);
      CMapMat W(n.weight->data(), Din, Dout);
      MapMat O(n.out.data(), batch, Dout);
      O.noalias() = X * W;
      Eigen::Map<const Eigen::RowVectorXd> bias(n.bias->data(), Dout);
      O.rowwise() += bias;
      break;
    }

    case OpKind::Sigmoid: {
      n.out = Tensor(x.shape());
      const double* in = x.data();
      double* out = n.out.data();
      for (int64_t i = 0; i < x.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
      break;
    }

    case OpKind::Softmax: {
      if (x.rank() != 2) throw DataError(fmt::format("softmax '{}': expected (N,C) input, got {}", n.name, shape_str(x.shape())));
      const int C = x.dim(1);
      n.out = Tensor(x.shape());
      const double* in = x.data();
      double* out = n.out.data();
      for (int64_t b = 0; b < batch; ++b) {
        const double* row = in + b * C;
        double* orow = out + b * C;
        double mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
          orow[c] = std::exp(row[c] - mx);
          sum += orow[c];
        }
        const double inv = 1.0 / sum;
        for (int c = 0; c < C; ++c) orow[c] *= inv;
      }
      break;
    }

    case OpKind::ResidualAdd: {
      const Tensor& y = nodes_[static_cast<std::size_t>(n.inputs[1])].out;
      if (!x.same_shape(y)) {
        throw DataError(fmt::format("residual-add '{}': branch shapes {} vs {}", n.name, shape_str(x.shape()), shape_str(y.shape())));
      }
      n.out = Tensor(x.shape());
      const double* a = x.data();
      const double* b = y.data();
      double* out = n.out.data();
      for (int64_t i = 0; i < x.numel(); ++i) out[i] = a[i] + b[i];
      break;
    }

    case OpKind::Flatten: {
      const int64_t per = x.numel() / batch;
      n.out = Tensor({static_cast<int>(batch), static_cast<int>(per)}, x.values());
      break;
    }
  }
}

void Graph::backward(const Tensor& output_grad) {
  backward_multi({{output(), &output_grad}});
}

void Graph::backward_multi(const std::vector<std::pair<int, const Tensor*>>& seeds) {
  if (!forward_done_) throw DataError("backward before forward");
  if (seeds.empty()) throw DataError("backward: no gradient seeds");
  for (Node& n : nodes_) n.out_grad.assign(n.out.values().size(), 0.0);
  for (const auto& [id, g] : seeds) {
    check_input_id(id, "backward");
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!g->same_shape(n.out)) {
      throw DataError(fmt::format("backward seed at '{}': grad shape {} vs output {}", n.name, shape_str(g->shape()), shape_str(n.out.shape())));
    }
    for (int64_t i = 0; i < g->numel(); ++i) n.out_grad[static_cast<std::size_t>(i)] += (*g)[i];
  }
  for (std::size_t i = nodes_.size(); i-- > 1;) {
    backward_node(nodes_[i]);
  }
#ifndef NDEBUG
  for (const Node& n : nodes_) {
    for (double v : n.out_grad) {
      assert(std::isfinite(v) && "non-finite gradient");
      (void)v;
    }
  }
#endif
}

void Graph::backward_node(Node& n) {
  Node& src = nodes_[static_cast<std::size_t>(n.inputs.empty() ? 0 : n.inputs[0])];
  const Tensor& x = src.out;
  const std::vector<double>& gy = n.out_grad;
  const int64_t batch = n.out.rank() > 0 ? n.out.dim(0) : 0;

  switch (n.kind) {
    case OpKind::Input:
      break;

    case OpKind::Conv2d: {
      const int H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
      const int KH = n.weight->dim(0), KW = n.weight->dim(1), Cout = n.weight->dim(3);
      const int ph = KH / 2, pw = KW / 2;
      const int64_t rows = batch * H * W;
      const int64_t cols = static_cast<int64_t>(KH) * KW * Cin;
      n.weight->ensure_grad();
      n.bias->ensure_grad();
      CMapMat GY(gy.data(), rows, Cout);
      CMapMat P(n.patches.data(), rows, cols);
      MapMat dK(n.weight->grad().data(), cols, Cout);
      dK.noalias() += P.transpose() * GY;
      {
        // fixed-order accumulation: Eigen's column reduction picks its
        // summation split from the buffer address, which breaks bitwise
        // run-to-run determinism
        double* db = n.bias->grad().data();
        for (int64_t r = 0; r < rows; ++r) {
          const double* grow = gy.data() + r * Cout;
          for (int c = 0; c < Cout; ++c) db[c] += grow[c];
        }
      }
      // reuse the patch buffer as dPatches scratch
      static thread_local std::vector<double> dpatches;
      dpatches.resize(static_cast<std::size_t>(rows * cols));
      MapMat dP(dpatches.data(), rows, cols);
      CMapMat K(n.weight->data(), cols, Cout);
      dP.noalias() = GY * K.transpose();
      std::vector<double>& gx = src.out_grad;
      for (int64_t b = 0; b < batch; ++b) {
        double* gimg = gx.data() + b * H * W * Cin;
        for (int y = 0; y < H; ++y) {
          for (int xx = 0; xx < W; ++xx) {
            const double* prow = dpatches.data() + ((b * H + y) * W + xx) * cols;
            for (int kh = 0; kh < KH; ++kh) {
              const int iy = y + kh - ph;
              if (iy < 0 || iy >= H) continue;
              const int ix0 = xx - pw;
              const int lo = std::max(0, -ix0);
              const int hi = std::min(KW, W - ix0);
              const double* seg = prow + static_cast<int64_t>(kh) * KW * Cin;
              double* drow = gimg + (static_cast<int64_t>(iy) * W + ix0) * Cin;
              for (int kw = lo; kw < hi; ++kw) {
                const double* s = seg + static_cast<int64_t>(kw) * Cin;
                double* d = drow + static_cast<int64_t>(kw) * Cin;
                for (int c = 0; c < Cin; ++c) d[c] += s[c];
              }
            }
          }
        }
      }
      break;
    }

    case OpKind::Relu: {
      const double* in = x.data();
      std::vector<double>& gx = src.out_grad;
      for (int64_t i = 0; i < x.numel(); ++i) {
        if (in[i] > 0.0) gx[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)];
      }
      break;
    }

    case OpKind::MaxPool2x2: {
      const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
      std::vector<double>& gx = src.out_grad;
      const int64_t per_in = static_cast<int64_t>(H) * W * C;
      const int64_t per_out = n.out.numel() / batch;
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t o = 0; o < per_out; ++o) {
          const int64_t oi = b * per_out + o;
          gx[static_cast<std::size_t>(b * per_in + n.argmax[static_cast<std::size_t>(oi)])] += gy[static_cast<std::size_t>(oi)];
        }
      }
      break;
    }

    case OpKind::GlobalAvgPool: {
      const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
      std::vector<double>& gx = src.out_grad;
      const double inv = 1.0 / (static_cast<double>(H) * W);
      for (int64_t b = 0; b < batch; ++b) {
        const double* grow = gy.data() + b * C;
        double* gimg = gx.data() + b * H * W * C;
        for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p) {
          double* px = gimg + p * C;
          for (int c = 0; c < C; ++c) px[c] += grow[c] * inv;
        }
      }
      break;
    }

    case OpKind::Dense: {
      const int Din = x.dim(1), Dout = n.weight->dim(1);
      n.weight->ensure_grad();
      n.bias->ensure_grad();
      CMapMat X(x.data(), batch, Din);
      CMapMat GY(gy.data(), batch, Dout);
      MapMat dW(n.weight->grad().data(), Din, Dout);
      dW.noalias() += X.transpose() * GY;
      {
        // fixed-order accumulation, as in the conv bias gradient
        double* db = n.bias->grad().data();
        for (int64_t r = 0; r < batch; ++r) {
          const double* grow = gy.data() + r * Dout;
          for (int c = 0; c < Dout; ++c) db[c] += grow[c];
        }
      }
      CMapMat W(n.weight->data(), Din, Dout);
      MapMat GX(src.out_grad.data(), batch, Din);
      GX.noalias() += GY * W.transpose();
      break;
    }

    case OpKind::Sigmoid: {
      const double* p = n.out.data();
      std::vector<double>& gx = src.out_grad;
      for (int64_t i = 0; i < n.out.numel(); ++i) {
        gx[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)] * p[i] * (1.0 - p[i]);
      }
      break;
    }

    case OpKind::Softmax: {
      const int C = n.out.dim(1);
      const double* p = n.out.data();
      std::vector<double>& gx = src.out_grad;
      for (int64_t b = 0; b < batch; ++b) {
        const double* prow = p + b * C;
        const double* grow = gy.data() + b * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += grow[c] * prow[c];
        double* gxr = gx.data() + b * C;
        for (int c = 0; c < C; ++c) gxr[c] += prow[c] * (grow[c] - dot);
      }
      break;
    }

    case OpKind::ResidualAdd: {
      Node& srcB = nodes_[static_cast<std::size_t>(n.inputs[1])];
      std::vector<double>& ga = src.out_grad;
      std::vector<double>& gb = srcB.out_grad;
      for (std::size_t i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i];
        gb[i] += gy[i];
      }
      break;
    }

    case OpKind::Flatten: {
      std::vector<double>& gx = src.out_grad;
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      break;
    }
  }
}

}  // namespace fmtk
