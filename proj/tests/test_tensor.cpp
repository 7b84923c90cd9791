#include <catch2/catch_amalgamated.hpp>

#include "ufrec/gradcheck.hpp"
#include "ufrec/optim.hpp"
#include "ufrec/tensor.hpp"

#include <filesystem>
#include <random>

using namespace ufrec;

namespace {

Tensor make(int r, int c, std::vector<double> v) {
  Tensor t(r, c);
  t.val = std::move(v);
  return t;
}

}  // namespace

TEST_CASE("matmul forward values") {
  Tape tp;
  const NodeId a = tp.constant(2, 2, {1, 2, 3, 4});
  const NodeId eye = tp.constant(2, 2, {1, 0, 0, 1});
  const NodeId r1 = tp.matmul(a, eye);
  CHECK(tp.val(r1) == std::vector<double>{1, 2, 3, 4});

  // oracle: hand arithmetic, [[1,2],[3,4]] * [[5],[6]] = [[17],[39]]
  const NodeId b = tp.constant(2, 1, {5, 6});
  const NodeId r2 = tp.matmul(a, b);
  CHECK(tp.val(r2) == std::vector<double>{17, 39});
}

TEST_CASE("shape mismatch names both shapes") {
  Tape tp;
  const NodeId a = tp.constant(2, 3, std::vector<double>(6, 0.0));
  const NodeId b = tp.constant(2, 2, std::vector<double>(4, 0.0));
  CHECK_THROWS_WITH(tp.matmul(a, b), Catch::Matchers::ContainsSubstring("[2x3]") &&
                                         Catch::Matchers::ContainsSubstring("[2x2]"));
  CHECK_THROWS_WITH(tp.add(a, b), Catch::Matchers::ContainsSubstring("[2x3]"));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape tp;
  const NodeId x = tp.constant(1, 3, {0, 0, 0});
  const NodeId y = tp.softmax_rows(x);
  for (double v : tp.val(y)) CHECK(v == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("masked softmax: exact zeros, rows sum to one") {
  Tape tp;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> vals(5 * 7);
  for (auto& v : vals) v = u(rng);
  std::vector<uint8_t> allow(5 * 7, 0);
  for (size_t i = 0; i < allow.size(); ++i) allow[i] = (i % 3 != 0) ? 1 : 0;
  // one fully masked row
  for (int c = 0; c < 7; ++c) allow[2 * 7 + c] = 0;

  const NodeId x = tp.constant(5, 7, vals);
  const NodeId y = tp.softmax_rows(x, &allow);
  const auto& out = tp.val(y);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    bool any = false;
    for (int c = 0; c < 7; ++c) {
      const double v = out[r * 7 + c];
      if (!allow[r * 7 + c]) {
        CHECK(v == 0.0);  // exactly
      } else {
        any = true;
        CHECK(v > 0.0);
      }
      s += v;
    }
    if (any)
      CHECK(std::abs(s - 1.0) < 1e-12);
    else
      CHECK(s == 0.0);
  }
}

TEST_CASE("backward of sum is ones; mse at minimum is zero gradient") {
  Tensor x = make(1, 3, {1.0, -2.0, 0.5});
  ParameterStore store;
  store.add("x", x);

  Tape tp;
  const NodeId loss = tp.sum(tp.leaf(x));
  tp.backward(loss);
  CHECK(x.grad == std::vector<double>{1, 1, 1});

  x.zero_grad();
  Tape tp2;
  const NodeId lx = tp2.leaf(x);
  tp2.backward(tp2.mse(lx, lx));
  CHECK(x.grad == std::vector<double>{0, 0, 0});
}

TEST_CASE("backward rejects non-scalar loss and accumulates across tapes") {
  Tensor x = make(1, 2, {1.0, 2.0});
  {
    Tape tp;
    CHECK_THROWS(tp.backward(tp.leaf(x)));
  }
  for (int rep = 0; rep < 2; ++rep) {
    Tape tp;
    tp.backward(tp.sum(tp.leaf(x)));
  }
  CHECK(x.grad == std::vector<double>{2, 2});  // two passes accumulated
}

TEST_CASE("embedding: padding id contributes nothing and gets no gradient") {
  Tensor table(4, 2);
  table.val = {9, 9, 1, 2, 3, 4, 5, 6};  // row 0 deliberately non-zero
  Tape tp;
  const NodeId e = tp.embedding(table, {0, 2, 0, 3}, 0);
  CHECK(tp.val(e) == std::vector<double>{0, 0, 3, 4, 0, 0, 5, 6});
  tp.backward(tp.sum(e));
  CHECK(table.grad[0] == 0.0);
  CHECK(table.grad[1] == 0.0);
  CHECK(table.grad[4] == 1.0);  // row 2
  CHECK(table.grad[6] == 1.0);  // row 3
}

TEST_CASE("adam: zero gradient is a fixed point; first step is ~lr") {
  Tensor w = make(1, 1, {0.5});
  ParameterStore store;
  store.add("w", w);
  w.ensure_grad();
  store.adam_step(0.01);
  CHECK(w.val[0] == 0.5);

  // oracle: hand-evaluated update. g=1 at step 1: mhat=1, vhat=1,
  // delta = lr * 1/(1 + eps) ~ lr.
  Tensor w2 = make(1, 1, {0.5});
  ParameterStore store2;
  store2.add("w2", w2);
  w2.ensure_grad();
  w2.grad[0] = 1.0;
  store2.adam_step(0.01);
  CHECK(w2.val[0] == Catch::Approx(0.5 - 0.01).epsilon(1e-6));
  CHECK(w2.grad[0] == 0.0);  // gradients zeroed after the step
}

TEST_CASE("adam updates are deterministic") {
  auto run = [] {
    Tensor w(2, 2);
    ParameterStore store;
    store.add("w", w);
    store.init_params(99);
    for (int i = 0; i < 5; ++i) {
      Tape tp;
      tp.backward(tp.sqnorm(tp.leaf(w)));
      store.adam_step(0.05);
    }
    return w.val;
  };
  CHECK(run() == run());
}

TEST_CASE("finite differences agree on a composite graph") {
  Tensor a(3, 4), b(4, 2), bias(1, 2);
  ParameterStore store;
  store.add("a", a);
  store.add("b", b);
  store.add("bias", bias);
  store.init_params(5);
  for (double& x : bias.val) x = 0.1;  // keep relu away from its kink

  std::vector<uint8_t> allow(3 * 2, 1);
  allow[1] = 0;

  auto loss_of = [&](Tape& tp) {
    const NodeId h = tp.relu(tp.add_rowvec(tp.matmul(tp.leaf(a), tp.leaf(b)), tp.leaf(bias)));
    const NodeId sm = tp.softmax_rows(h, &allow);
    const NodeId tgt = tp.constant(3, 2, {1, 0, 0, 1, 0.5, 0.5});
    return tp.scale(tp.add(tp.mse(sm, tgt), tp.sqnorm(h)), 0.5);
  };
  auto fwd = [&] {
    Tape tp;
    return tp.scalar(loss_of(tp));
  };
  auto fwd_bwd = [&] {
    Tape tp;
    const NodeId l = loss_of(tp);
    tp.backward(l);
    return tp.scalar(l);
  };
  CHECK(finite_diff_check(store, fwd, fwd_bwd, 1e-5) < 1e-7);
}

TEST_CASE("quadratic gradients are near-exact under finite differences") {
  Tensor w(2, 3);
  ParameterStore store;
  store.add("w", w);
  store.init_params(17);
  auto fwd = [&] {
    Tape tp;
    return tp.scalar(tp.sqnorm(tp.leaf(w)));
  };
  auto fwd_bwd = [&] {
    Tape tp;
    const NodeId l = tp.sqnorm(tp.leaf(w));
    tp.backward(l);
    return tp.scalar(l);
  };
  CHECK(finite_diff_check(store, fwd, fwd_bwd, 1e-5) < 1e-8);

  // constant function: both gradients identically zero
  Tensor c(1, 2);
  ParameterStore s2;
  s2.add("c", c);
  auto cf = [&] {
    Tape tp;
    (void)tp.leaf(c);
    return tp.scalar(tp.constant(1, 1, {3.0}));
  };
  CHECK(finite_diff_check(s2, cf, cf, 1e-5) == 0.0);
}

TEST_CASE("cross entropy: uniform logits give ln(C); one-hot limit gives ~0") {
  Tape tp;
  const NodeId logits = tp.constant(1, 101, std::vector<double>(101, 0.0));
  CHECK(tp.scalar(tp.cross_entropy_logits(logits, 0)) == Catch::Approx(std::log(101.0)).margin(1e-12));

  std::vector<double> peaked(101, 0.0);
  peaked[0] = 50.0;
  const NodeId l2 = tp.constant(1, 101, peaked);
  CHECK(tp.scalar(tp.cross_entropy_logits(l2, 0)) < 1e-12);
}

TEST_CASE("layer_norm matches finite differences") {
  Tensor x(3, 5), g(1, 5), b(1, 5);
  ParameterStore store;
  store.add("x", x);
  store.add("g", g);
  store.add("b", b);
  store.init_params(23);
  for (double& v : g.val) v = 1.0 + 0.1 * v;
  auto loss_of = [&](Tape& tp) {
    return tp.sqnorm(tp.layer_norm(tp.leaf(x), tp.leaf(g), tp.leaf(b)));
  };
  auto fwd = [&] {
    Tape tp;
    return tp.scalar(loss_of(tp));
  };
  auto fwd_bwd = [&] {
    Tape tp;
    const NodeId l = loss_of(tp);
    tp.backward(l);
    return tp.scalar(l);
  };
  CHECK(finite_diff_check(store, fwd, fwd_bwd, 1e-5) < 1e-6);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ufrec_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "ck.bin").string();

  Tensor a(3, 4), b(2, 2);
  ParameterStore store;
  store.add("a", a);
  store.add("b", b, /*trainable=*/false);
  store.init_params(31);
  a.ensure_grad();
  for (double& g : a.grad) g = 0.25;
  store.adam_step(0.01);
  store.save(path, {{"note", 1}});

  Tensor a2(3, 4), b2(2, 2);
  ParameterStore store2;
  store2.add("a", a2);
  store2.add("b", b2, false);
  const auto meta = store2.load(path);
  CHECK(meta.at("note").get<int>() == 1);
  CHECK(a2.val == a.val);
  CHECK(b2.val == b.val);
  CHECK(store2.step() == store.step());

  const std::string path2 = (dir / "ck2.bin").string();
  store2.save(path2, {{"note", 1}});
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  fs::remove_all(dir);
}
