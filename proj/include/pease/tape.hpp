#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "pease/rng.hpp"

namespace pease::ad {

// Reverse-mode tape over Eigen matrices. Values are computed eagerly; each
// node records a closure that scatters its output gradient to its parents.
struct Node {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  bool needs_grad = false;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  }
};

using NodePtr = std::shared_ptr<Node>;

class Tape {
 public:
  NodePtr leaf(Eigen::MatrixXd value, bool needs_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    nodes_.push_back(n);
    return n;
  }

  NodePtr record(Eigen::MatrixXd value, bool needs_grad,
                 std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    n->backward = std::move(backward);
    nodes_.push_back(n);
    return n;
  }

  // Runs the reverse sweep. Output gradients must already be seeded via
  // seed_grad (or by setting node->grad directly).
  void backward();

  static void seed_grad(const NodePtr& n, const Eigen::MatrixXd& g) {
    n->ensure_grad();
    n->grad += g;
  }

 private:
  std::vector<NodePtr> nodes_;
};

// -- elementwise / linear algebra ------------------------------------------

NodePtr add(Tape& t, NodePtr a, NodePtr b);
NodePtr sub(Tape& t, NodePtr a, NodePtr b);
NodePtr scale(Tape& t, NodePtr a, double s);
NodePtr hadamard(Tape& t, NodePtr a, NodePtr b);
NodePtr matmul(Tape& t, NodePtr a, NodePtr b);
// X (T x D) + broadcast row vector b (1 x D)
NodePtr add_row(Tape& t, NodePtr x, NodePtr b);
NodePtr relu(Tape& t, NodePtr x);
NodePtr softmax_rows(Tape& t, NodePtr x);
NodePtr slice_cols(Tape& t, NodePtr x, Eigen::Index start, Eigen::Index n);
NodePtr concat_cols(Tape& t, const std::vector<NodePtr>& xs);

// -- structured layers ------------------------------------------------------

// Per-channel normalization over frames and bins. Columns of x are laid out
// channel-major (c * f_per + f); gamma/beta are 1 x channels. Statistics are
// batch statistics of x, fully differentiated.
NodePtr channel_norm(Tape& t, NodePtr x, NodePtr gamma, NodePtr beta,
                     int channels);

// 1-D convolution along the frequency axis, applied independently per frame
// (row). x: T x (c_in*f_in), w: c_out x (c_in*k), b: 1 x c_out.
// Output: T x (c_out*f_out), f_out = (f_in + 2*pad - k)/stride + 1.
NodePtr conv_freq(Tape& t, NodePtr x, NodePtr w, NodePtr b, int c_in, int f_in,
                  int k, int stride, int pad);

// Transposed counterpart. f_out = (f_in-1)*stride + k - 2*pad + out_pad.
NodePtr deconv_freq(Tape& t, NodePtr x, NodePtr w, NodePtr b, int c_in,
                    int f_in, int k, int stride, int pad, int out_pad);

// Convolution over the frame axis with zero padding; width must be odd.
// x: T x d_in, w: (width*d_in) x d_out, b: 1 x d_out.
NodePtr temporal_conv(Tape& t, NodePtr x, NodePtr w, NodePtr b, int width);

// Inverted dropout; identity when disabled.
NodePtr dropout(Tape& t, NodePtr x, double p, Rng& rng, bool enabled);

}  // namespace pease::ad
