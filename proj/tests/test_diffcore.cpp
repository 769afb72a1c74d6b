#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "fmtk/common/error.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/diffcore/checkpoint.hpp"
#include "fmtk/diffcore/finite_diff.hpp"
#include "fmtk/diffcore/graph.hpp"
#include "fmtk/diffcore/sgd.hpp"
#include "fmtk/diffcore/tensor.hpp"

using namespace fmtk;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("tensor shape and grad invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(!t.has_grad());
  t.ensure_grad();
  CHECK(t.has_grad());
  CHECK(t.grad().size() == 6);
  CHECK_THROWS_AS(Tensor({0, 2}), DataError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), DataError);
}

TEST_CASE("forward: flatten identity") {
  Graph g({2, 2});
  g.set_output(g.flatten(g.input()));
  Tensor in({1, 2, 2}, {1, 2, 3, 4});
  const Tensor& out = g.forward(in);
  CHECK(out.shape() == std::vector<int>{1, 4});
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
  CHECK(out[2] == 3.0);
  CHECK(out[3] == 4.0);
}

TEST_CASE("forward: relu clips negatives") {
  Graph g({3});
  g.set_output(g.relu(g.input()));
  Tensor in({1, 3}, {-1.0, 0.0, 2.0});
  const Tensor& out = g.forward(in);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
}

TEST_CASE("forward: 1x1 conv is pixelwise scaling") {
  Graph g({2, 2, 1});
  Tensor k({1, 1, 1, 1}, {2.0});
  Tensor b({1}, {0.0});
  g.set_output(g.conv2d(g.input(), &k, &b, "conv1x1"));
  Tensor in = Tensor::full({1, 2, 2, 1}, 1.0);
  const Tensor& out = g.forward(in);
  CHECK(out.shape() == std::vector<int>{1, 2, 2, 1});
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(2.0));
}

TEST_CASE("forward: shape mismatch names the node") {
  Graph g({4, 4, 3});
  Tensor k({3, 3, 5, 2});  // wrong Cin
  Tensor b({2});
  g.set_output(g.conv2d(g.input(), &k, &b, "stem"));
  Tensor in({1, 4, 4, 3});
  CHECK_THROWS_WITH_AS(g.forward(in), doctest::Contains("stem"), DataError);
}

TEST_CASE("backward: dense layer Jacobian") {
  // y = W x, x = [1, 0], dL/dy = [1]  =>  dL/dW = [[1], [0]]
  Graph g({2});
  Tensor w({2, 1}, {0.5, -0.25});
  Tensor b({1}, {0.0});
  g.set_output(g.dense(g.input(), &w, &b, "fc"));
  Tensor in({1, 2}, {1.0, 0.0});
  g.forward(in);
  g.backward(Tensor({1, 1}, {1.0}));
  CHECK(w.grad()[0] == doctest::Approx(1.0));
  CHECK(w.grad()[1] == doctest::Approx(0.0));
  CHECK(b.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("backward: relu gate closed at negative input") {
  Graph g({1});
  g.set_output(g.relu(g.input()));
  Tensor in({1, 1}, {-1.0});
  g.forward(in);
  g.backward(Tensor({1, 1}, {1.0}));
  CHECK(g.node_grad(g.input())[0] == 0.0);
}

TEST_CASE("backward before forward is an error") {
  Graph g({1});
  g.set_output(g.relu(g.input()));
  CHECK_THROWS_AS(g.backward(Tensor({1, 1}, {1.0})), DataError);
}

TEST_CASE("backward: grads accumulate until zeroed") {
  Graph g({2});
  Tensor w({2, 1}, {1.0, 1.0});
  Tensor b({1}, {0.0});
  g.set_output(g.dense(g.input(), &w, &b, "fc"));
  Tensor in({1, 2}, {1.0, 2.0});
  g.forward(in);
  g.backward(Tensor({1, 1}, {1.0}));
  g.forward(in);
  g.backward(Tensor({1, 1}, {1.0}));
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));
  g.zero_param_grads();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(42);
  Graph g({6, 6, 2});
  Tensor k = random_tensor({3, 3, 2, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  g.set_output(g.conv2d(g.input(), &k, &b, "conv"));
  Tensor in = random_tensor({2, 6, 6, 2}, rng);
  FiniteDiffReport r = finite_diff_check(g, in, 1e-6);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("softmax rows sum to one and sigmoid stays in (0,1)") {
  Rng rng(7);
  Graph g({5});
  const int sm = g.softmax(g.input());
  g.set_output(sm);
  Tensor in = random_tensor({8, 5}, rng, -30.0, 30.0);
  const Tensor& out = g.forward(in);
  for (int r = 0; r < 8; ++r) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) {
      s += out.at({r, c});
      CHECK(out.at({r, c}) > 0.0);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }

  Graph g2({5});
  g2.set_output(g2.sigmoid(g2.input()));
  const Tensor& out2 = g2.forward(in);
  for (int64_t i = 0; i < out2.numel(); ++i) {
    CHECK(out2[i] > 0.0);
    CHECK(out2[i] < 1.0);
  }
}

TEST_CASE("residual-add forward sums and backward fans out identically") {
  Graph g({4});
  Tensor w({4, 4});
  for (int i = 0; i < 4; ++i) w.at({i, i}) = 1.0;  // identity branch
  Tensor b({4});
  const int branch = g.dense(g.input(), &w, &b, "branch");
  const int add = g.residual_add(g.input(), branch);
  g.set_output(add);
  Tensor in({1, 4}, {1.0, -2.0, 3.0, 0.5});
  const Tensor& out = g.forward(in);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(2.0 * in[i]));
  Tensor seed({1, 4}, {1.0, 2.0, 3.0, 4.0});
  g.backward(seed);
  const auto& g_branch = g.node_grad(branch);
  for (int i = 0; i < 4; ++i) CHECK(g_branch[static_cast<std::size_t>(i)] == doctest::Approx(seed[i]));
}

TEST_CASE("repeated passes are bitwise identical") {
  Rng rng(3);
  Graph g({8, 8, 1});
  Tensor k = random_tensor({3, 3, 1, 2}, rng);
  Tensor kb = random_tensor({2}, rng);
  Tensor w = random_tensor({2, 3}, rng);
  Tensor wb = random_tensor({3}, rng);
  const int conv = g.conv2d(g.input(), &k, &kb, "conv");
  const int act = g.relu(conv);
  const int pool = g.maxpool2x2(act);
  const int gap = g.global_avg_pool(pool);
  g.set_output(g.dense(gap, &w, &wb, "fc"));
  Tensor in = random_tensor({3, 8, 8, 1}, rng);

  const Tensor out1 = g.forward(in);
  g.zero_param_grads();
  g.backward(Tensor::full(out1.shape(), 1.0));
  const std::vector<double> grad1 = k.grad();

  const Tensor out2 = g.forward(in);
  g.zero_param_grads();
  g.backward(Tensor::full(out2.shape(), 1.0));

  CHECK(out1.values() == out2.values());  // bitwise
  CHECK(grad1 == k.grad());
}

TEST_CASE("per-layer gradient checks over random instances") {
  // Each layer kind, 100 seeded instances, rel err <= 1e-4 in 64-bit.
  using Params = std::vector<std::unique_ptr<Tensor>>;
  auto run = [](int seed_base, auto build, std::vector<int> in_shape, double eps) {
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      Rng rng(static_cast<uint64_t>(seed_base + s));
      Params params;
      Graph g(in_shape);
      build(g, rng, params);
      std::vector<int> bshape = in_shape;
      bshape.insert(bshape.begin(), 2);
      Tensor in = random_tensor(bshape, rng);
      FiniteDiffReport r = finite_diff_check(g, in, eps);
      worst = std::max(worst, r.max_rel_err);
    }
    return worst;
  };
  auto fresh = [](Params& ps, std::vector<int> shape, Rng& rng) {
    ps.push_back(std::make_unique<Tensor>(random_tensor(std::move(shape), rng)));
    return ps.back().get();
  };

  SUBCASE("dense") {
    // linear map: central differences exact up to rounding, so a larger
    // step costs nothing in truncation and kills the cancellation noise
    const double worst = run(100, [&](Graph& g, Rng& rng, Params& ps) {
      g.set_output(g.dense(g.input(), fresh(ps, {4, 3}, rng), fresh(ps, {3}, rng), "fc"));
    }, {4}, 1e-4);
    CHECK(worst <= 1e-4);
    CHECK(worst < 1e-9);
  }
  SUBCASE("conv+relu+pool+gap") {
    const double worst = run(200, [&](Graph& g, Rng& rng, Params& ps) {
      const int c = g.conv2d(g.input(), fresh(ps, {3, 3, 2, 2}, rng), fresh(ps, {2}, rng), "conv");
      const int r = g.relu(c);
      const int p = g.maxpool2x2(r);
      g.set_output(g.global_avg_pool(p));
    }, {4, 4, 2}, 1e-6);
    CHECK(worst <= 1e-4);
  }
  SUBCASE("sigmoid/softmax/residual/flatten") {
    // the trailing dense keeps sum(outputs) from collapsing to the
    // constant that a bare softmax row sum would give
    const double worst = run(300, [&](Graph& g, Rng& rng, Params& ps) {
      const int fl = g.flatten(g.input());
      const int d = g.dense(fl, fresh(ps, {4, 4}, rng), fresh(ps, {4}, rng), "fc");
      const int sg = g.sigmoid(d);
      const int add = g.residual_add(sg, fl);
      const int sm = g.softmax(add);
      g.set_output(g.dense(sm, fresh(ps, {4, 3}, rng), fresh(ps, {3}, rng), "head"));
    }, {2, 2}, 1e-6);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("finite_diff_check handles relu pinned at zero") {
  // The relu input is exactly 0 along one coordinate; the checker must
  // exclude the crossing coordinate rather than report a bogus error.
  Graph g({1});
  Tensor w({1, 1}, {1.0});
  Tensor b({1}, {0.0});
  const int d = g.dense(g.input(), &w, &b, "fc");
  g.set_output(g.relu(d));
  Tensor in({1, 1}, {0.0});  // w*0 + 0 == 0 exactly
  FiniteDiffReport r = finite_diff_check(g, in, 1e-6);
  // perturbing b crosses the kink; perturbing w does not move the preact
  CHECK(r.skipped >= 1);
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("sgd_step recurrences") {
  SgdState st;
  Tensor p({1}, {1.0});
  p.ensure_grad();
  p.grad()[0] = 2.0;

  SUBCASE("vanilla (momentum 0)") {
    st.momentum = 0.0;
    sgd_step({{"p", &p}}, st, 0.1);
    CHECK(p[0] == doctest::Approx(0.8));
  }
  SUBCASE("classic momentum, two steps") {
    st.momentum = 0.9;
    p[0] = 0.0;
    p.grad()[0] = 1.0;
    sgd_step({{"p", &p}}, st, 0.1);
    CHECK(st.velocity["p"][0] == doctest::Approx(1.0));
    CHECK(p[0] == doctest::Approx(-0.1));
    p.grad()[0] = 1.0;
    sgd_step({{"p", &p}}, st, 0.1);
    // v = 0.9*1 + 1 = 1.9 ; p = -0.1 - 0.19 = -0.29
    CHECK(st.velocity["p"][0] == doctest::Approx(1.9));
    CHECK(p[0] == doctest::Approx(-0.29));
  }
  SUBCASE("missing grad is an error") {
    Tensor q({1}, {1.0});
    CHECK_THROWS_AS(sgd_step({{"q", &q}}, st, 0.1), DataError);
  }
}

TEST_CASE("checkpoint round-trip is bit exact") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({2, 2, 2, 5}, rng);
  const std::string path = (std::filesystem::temp_directory_path() / "fmtk_ckpt_test.fmtk").string();
  save_checkpoint(path, {{"layer.w", &a}, {"layer.b", &b}});
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.at("layer.w").shape() == a.shape());
  CHECK(loaded.at("layer.w").values() == a.values());  // bitwise
  CHECK(loaded.at("layer.b").values() == b.values());
  std::filesystem::remove(path);

  SUBCASE("truncated file rejected") {
    const std::string junk = (std::filesystem::temp_directory_path() / "fmtk_ckpt_bad.fmtk").string();
    {
      FILE* f = std::fopen(junk.c_str(), "wb");
      std::fputs("FMTK\x01\x00\x00\x00\x10", f);
      std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(junk), DataError);
    std::filesystem::remove(junk);
  }
}

TEST_CASE("rng determinism and streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(Rng::mix(1, 2) != Rng::mix(1, 3));
  CHECK(Rng::mix(1, 2) == Rng::mix(1, 2));
  Rng c(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int64_t k = c.uniform_int(3, 9);
    CHECK(k >= 3);
    CHECK(k <= 9);
  }
}
