#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "oracles.hpp"
#include "pease/tape.hpp"

using namespace pease;
using namespace pease::ad;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1, 1);
  return m;
}

// Checks every entry of every leaf's analytic gradient against central
// finite differences of a scalar functional of the graph output.
void check_gradients(
    std::vector<Eigen::MatrixXd>& leaves,
    const std::function<NodePtr(Tape&, std::vector<NodePtr>&)>& build,
    double tol = 1e-6, double step = 1e-6) {
  auto eval = [&](std::vector<Eigen::MatrixXd>* grads) {
    Tape t;
    std::vector<NodePtr> nodes;
    for (auto& m : leaves) nodes.push_back(t.leaf(m, true));
    NodePtr out = build(t, nodes);
    // scalar functional: weighted sum, fixed weights
    Eigen::MatrixXd w(out->value.rows(), out->value.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w(i) = 0.3 + 0.1 * static_cast<double>(i % 7);
    double s = (out->value.array() * w.array()).sum();
    if (grads) {
      Tape::seed_grad(out, w);
      t.backward();
      grads->clear();
      for (auto& n : nodes) {
        n->ensure_grad();
        grads->push_back(n->grad);
      }
    }
    return s;
  };

  std::vector<Eigen::MatrixXd> analytic;
  eval(&analytic);

  for (size_t li = 0; li < leaves.size(); ++li) {
    for (Eigen::Index i = 0; i < leaves[li].size(); ++i) {
      double fd = oracles::central_difference([&] { return eval(nullptr); },
                                              leaves[li](i), step);
      double a = analytic[li](i);
      double denom = std::max({std::abs(fd), std::abs(a), 1e-3});
      CHECK(std::abs(fd - a) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise and linear op gradients match finite differences") {
  Rng rng(31);
  std::vector<Eigen::MatrixXd> leaves = {random_matrix(rng, 3, 4),
                                         random_matrix(rng, 3, 4),
                                         random_matrix(rng, 4, 5)};
  check_gradients(leaves, [](Tape& t, std::vector<NodePtr>& n) {
    auto s = add(t, n[0], scale(t, n[1], 1.7));
    auto h = hadamard(t, s, sub(t, n[0], n[1]));
    return matmul(t, h, n[2]);
  });
}

TEST_CASE("relu, add_row, softmax gradients") {
  Rng rng(32);
  std::vector<Eigen::MatrixXd> leaves = {random_matrix(rng, 4, 6),
                                         random_matrix(rng, 1, 6)};
  check_gradients(leaves, [](Tape& t, std::vector<NodePtr>& n) {
    return softmax_rows(t, relu(t, add_row(t, n[0], n[1])));
  });
}

TEST_CASE("slice and concat gradients") {
  Rng rng(33);
  std::vector<Eigen::MatrixXd> leaves = {random_matrix(rng, 3, 8)};
  check_gradients(leaves, [](Tape& t, std::vector<NodePtr>& n) {
    auto a = slice_cols(t, n[0], 0, 3);
    auto b = slice_cols(t, n[0], 3, 5);
    return concat_cols(t, {b, a, a});
  });
}

TEST_CASE("channel_norm forward normalizes per channel") {
  Rng rng(34);
  Tape t;
  const int channels = 3, fper = 5;
  auto x = t.leaf(random_matrix(rng, 6, channels * fper), true);
  auto gamma = t.leaf(Eigen::MatrixXd::Ones(1, channels), true);
  auto beta = t.leaf(Eigen::MatrixXd::Zero(1, channels), true);
  auto y = channel_norm(t, x, gamma, beta, channels);
  for (int c = 0; c < channels; ++c) {
    auto block = y->value.middleCols(c * fper, fper);
    double mean = block.mean();
    double var = (block.array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps-adjusted
  }
}

TEST_CASE("channel_norm gradients") {
  Rng rng(35);
  std::vector<Eigen::MatrixXd> leaves = {random_matrix(rng, 4, 6),
                                         random_matrix(rng, 1, 2),
                                         random_matrix(rng, 1, 2)};
  check_gradients(
      leaves,
      [](Tape& t, std::vector<NodePtr>& n) {
        return channel_norm(t, n[0], n[1], n[2], 2);
      },
      1e-5, 1e-6);
}

TEST_CASE("conv_freq geometry and gradients") {
  Rng rng(36);
  const int c_in = 2, f_in = 9, k = 3, stride = 2, pad = 1, c_out = 3;
  {
    Tape t;
    auto x = t.leaf(random_matrix(rng, 4, c_in * f_in), false);
    auto w = t.leaf(random_matrix(rng, c_out, c_in * k), false);
    auto b = t.leaf(Eigen::MatrixXd::Zero(1, c_out), false);
    auto y = conv_freq(t, x, w, b, c_in, f_in, k, stride, pad);
    CHECK(y->value.cols() == c_out * ((f_in + 2 * pad - k) / stride + 1));
    CHECK(y->value.rows() == 4);
  }
  std::vector<Eigen::MatrixXd> leaves = {random_matrix(rng, 3, c_in * f_in),
                                         random_matrix(rng, c_out, c_in * k),
                                         random_matrix(rng, 1, c_out)};
  check_gradients(leaves, [&](Tape& t, std::vector<NodePtr>& n) {
    return conv_freq(t, n[0], n[1], n[2], c_in, f_in, k, stride, pad);
  });
}

TEST_CASE("conv_freq matches a direct convolution") {
  Rng rng(37);
  const int c_in = 1, f_in = 7, k = 3, stride = 1, pad = 1, c_out = 1;
  Tape t;
  auto X = random_matrix(rng, 1, f_in);
  auto W = random_matrix(rng, 1, k);
  auto x = t.leaf(X, false);
  auto w = t.leaf(W, false);
  auto b = t.leaf(Eigen::MatrixXd::Zero(1, 1), false);
  auto y = conv_freq(t, x, w, b, c_in, f_in, k, stride, pad);
  REQUIRE(y->value.cols() == f_in);
  for (int f = 0; f < f_in; ++f) {
    double acc = 0;
    for (int j = 0; j < k; ++j) {
      int src = f - pad + j;
      if (src >= 0 && src < f_in) acc += X(0, src) * W(0, j);
    }
    CHECK(y->value(0, f) == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("deconv_freq inverts conv_freq geometry and has exact gradients") {
  Rng rng(38);
  const int c_in = 3, f_in = 5, k = 3, stride = 2, pad = 1, out_pad = 1;
  const int c_out = 2;
  const int f_out = (f_in - 1) * stride + k - 2 * pad + out_pad;
  CHECK(f_out == 10);
  std::vector<Eigen::MatrixXd> leaves = {random_matrix(rng, 3, c_in * f_in),
                                         random_matrix(rng, c_out, c_in * k),
                                         random_matrix(rng, 1, c_out)};
  check_gradients(leaves, [&](Tape& t, std::vector<NodePtr>& n) {
    return deconv_freq(t, n[0], n[1], n[2], c_in, f_in, k, stride, pad,
                       out_pad);
  });
}

TEST_CASE("temporal_conv gradients") {
  Rng rng(39);
  const int width = 3, d_in = 4, d_out = 3;
  std::vector<Eigen::MatrixXd> leaves = {
      random_matrix(rng, 5, d_in), random_matrix(rng, width * d_in, d_out),
      random_matrix(rng, 1, d_out)};
  check_gradients(leaves, [&](Tape& t, std::vector<NodePtr>& n) {
    return temporal_conv(t, n[0], n[1], n[2], width);
  });
}

TEST_CASE("dropout: identity when disabled, inverted scaling when enabled") {
  Rng rng(40);
  Tape t;
  auto x = t.leaf(random_matrix(rng, 8, 10), false);
  Rng drop(99);
  auto y_off = dropout(t, x, 0.5, drop, false);
  CHECK((y_off->value - x->value).cwiseAbs().maxCoeff() == 0.0);
  auto y_on = dropout(t, x, 0.5, drop, true);
  int kept = 0;
  for (Eigen::Index i = 0; i < y_on->value.size(); ++i) {
    if (y_on->value(i) == 0.0) continue;
    kept += 1;
    CHECK(y_on->value(i) == doctest::Approx(x->value(i) * 2.0));
  }
  CHECK(kept > 10);
  CHECK(kept < 70);
}

TEST_CASE("backward accumulates through shared nodes") {
  // y = x*x (shared operand) -> dy/dx = 2x
  Tape t;
  Eigen::MatrixXd xv(1, 1);
  xv << 3.0;
  auto x = t.leaf(xv, true);
  auto y = hadamard(t, x, x);
  Tape::seed_grad(y, Eigen::MatrixXd::Ones(1, 1));
  t.backward();
  CHECK(x->grad(0, 0) == doctest::Approx(6.0));
}
