#include "pease/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace pease::ad {

void Tape::backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.backward || !n.needs_grad) continue;
    if (n.grad.size() == 0) continue;  // not on any path to the seeded outputs
    n.backward(n);
  }
}

namespace {

void accumulate(const NodePtr& p, const Eigen::MatrixXd& g) {
  if (!p->needs_grad) return;
  p->ensure_grad();
  p->grad += g;
}

void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

NodePtr add(Tape& t, NodePtr a, NodePtr b) {
  check_same_shape(a, b, "add");
  return t.record(a->value + b->value, a->needs_grad || b->needs_grad,
                  [a, b](Node& n) {
                    accumulate(a, n.grad);
                    accumulate(b, n.grad);
                  });
}

NodePtr sub(Tape& t, NodePtr a, NodePtr b) {
  check_same_shape(a, b, "sub");
  return t.record(a->value - b->value, a->needs_grad || b->needs_grad,
                  [a, b](Node& n) {
                    accumulate(a, n.grad);
                    accumulate(b, -n.grad);
                  });
}

NodePtr scale(Tape& t, NodePtr a, double s) {
  return t.record(a->value * s, a->needs_grad,
                  [a, s](Node& n) { accumulate(a, n.grad * s); });
}

NodePtr hadamard(Tape& t, NodePtr a, NodePtr b) {
  check_same_shape(a, b, "hadamard");
  return t.record(a->value.cwiseProduct(b->value),
                  a->needs_grad || b->needs_grad, [a, b](Node& n) {
                    accumulate(a, n.grad.cwiseProduct(b->value));
                    accumulate(b, n.grad.cwiseProduct(a->value));
                  });
}

NodePtr matmul(Tape& t, NodePtr a, NodePtr b) {
  if (a->value.cols() != b->value.rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  return t.record(a->value * b->value, a->needs_grad || b->needs_grad,
                  [a, b](Node& n) {
                    accumulate(a, n.grad * b->value.transpose());
                    accumulate(b, a->value.transpose() * n.grad);
                  });
}

NodePtr add_row(Tape& t, NodePtr x, NodePtr b) {
  if (b->value.rows() != 1 || b->value.cols() != x->value.cols())
    throw std::invalid_argument("add_row: bias shape mismatch");
  Eigen::MatrixXd y = x->value.rowwise() + b->value.row(0);
  return t.record(std::move(y), x->needs_grad || b->needs_grad,
                  [x, b](Node& n) {
                    accumulate(x, n.grad);
                    accumulate(b, n.grad.colwise().sum());
                  });
}

NodePtr relu(Tape& t, NodePtr x) {
  Eigen::MatrixXd y = x->value.cwiseMax(0.0);
  return t.record(std::move(y), x->needs_grad, [x](Node& n) {
    accumulate(x, (x->value.array() > 0.0).cast<double>().matrix().cwiseProduct(
                      n.grad));
  });
}

NodePtr softmax_rows(Tape& t, NodePtr x) {
  Eigen::MatrixXd y = x->value;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  auto yv = std::make_shared<Eigen::MatrixXd>(y);
  return t.record(std::move(y), x->needs_grad, [x, yv](Node& n) {
    Eigen::MatrixXd g = n.grad.cwiseProduct(*yv);
    Eigen::VectorXd rowsum = g.rowwise().sum();
    g -= yv->cwiseProduct(rowsum.replicate(1, yv->cols()));
    accumulate(x, g);
  });
}

NodePtr slice_cols(Tape& t, NodePtr x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x->value.cols())
    throw std::out_of_range("slice_cols: out of range");
  return t.record(x->value.middleCols(start, n), x->needs_grad,
                  [x, start, n](Node& nd) {
                    if (!x->needs_grad) return;
                    x->ensure_grad();
                    x->grad.middleCols(start, n) += nd.grad;
                  });
}

NodePtr concat_cols(Tape& t, const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index rows = xs[0]->value.rows(), cols = 0;
  bool needs = false;
  for (const auto& x : xs) {
    if (x->value.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    cols += x->value.cols();
    needs = needs || x->needs_grad;
  }
  Eigen::MatrixXd y(rows, cols);
  Eigen::Index at = 0;
  for (const auto& x : xs) {
    y.middleCols(at, x->value.cols()) = x->value;
    at += x->value.cols();
  }
  return t.record(std::move(y), needs, [xs](Node& n) {
    Eigen::Index at = 0;
    for (const auto& x : xs) {
      if (x->needs_grad) {
        x->ensure_grad();
        x->grad += n.grad.middleCols(at, x->value.cols());
      }
      at += x->value.cols();
    }
  });
}

NodePtr channel_norm(Tape& t, NodePtr x, NodePtr gamma, NodePtr beta,
                     int channels) {
  const Eigen::Index T = x->value.rows();
  const Eigen::Index cols = x->value.cols();
  if (cols % channels != 0)
    throw std::invalid_argument("channel_norm: columns not divisible");
  const Eigen::Index fper = cols / channels;
  const double eps = 1e-5;
  const double count = static_cast<double>(T * fper);

  Eigen::VectorXd mean(channels), var(channels);
  Eigen::MatrixXd xhat(T, cols);
  for (int c = 0; c < channels; ++c) {
    auto blk = x->value.middleCols(c * fper, fper);
    mean[c] = blk.mean();
    var[c] = (blk.array() - mean[c]).square().sum() / count;
    xhat.middleCols(c * fper, fper) =
        (blk.array() - mean[c]) / std::sqrt(var[c] + eps);
  }
  Eigen::MatrixXd y(T, cols);
  for (int c = 0; c < channels; ++c)
    y.middleCols(c * fper, fper) =
        xhat.middleCols(c * fper, fper) * gamma->value(0, c) +
        Eigen::MatrixXd::Constant(T, fper, beta->value(0, c));

  auto xh = std::make_shared<Eigen::MatrixXd>(std::move(xhat));
  auto vv = std::make_shared<Eigen::VectorXd>(std::move(var));
  bool needs = x->needs_grad || gamma->needs_grad || beta->needs_grad;
  return t.record(
      std::move(y), needs,
      [x, gamma, beta, xh, vv, channels, fper, count, eps](Node& n) {
        for (int c = 0; c < channels; ++c) {
          auto g = n.grad.middleCols(c * fper, fper);
          auto xhc = xh->middleCols(c * fper, fper);
          if (gamma->needs_grad) {
            gamma->ensure_grad();
            gamma->grad(0, c) += g.cwiseProduct(xhc).sum();
          }
          if (beta->needs_grad) {
            beta->ensure_grad();
            beta->grad(0, c) += g.sum();
          }
          if (x->needs_grad) {
            x->ensure_grad();
            const double inv_std = 1.0 / std::sqrt((*vv)[c] + eps);
            const double gsum = g.sum();
            const double gxsum = g.cwiseProduct(xhc).sum();
            x->grad.middleCols(c * fper, fper).array() +=
                gamma->value(0, c) * inv_std *
                (g.array() - gsum / count - xhc.array() * gxsum / count);
          }
        }
      });
}

namespace {

struct ConvGeom {
  int c_in, f_in, k, stride, pad, c_out, f_out;
};

// Gathers per-frame frequency patches: (T*f_out) x (c_in*k).
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, const ConvGeom& g) {
  const Eigen::Index T = x.rows();
  Eigen::MatrixXd col = Eigen::MatrixXd::Zero(T * g.f_out, g.c_in * g.k);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int fo = 0; fo < g.f_out; ++fo)
      for (int ci = 0; ci < g.c_in; ++ci)
        for (int d = 0; d < g.k; ++d) {
          int fi = fo * g.stride + d - g.pad;
          if (fi >= 0 && fi < g.f_in)
            col(t * g.f_out + fo, ci * g.k + d) = x(t, ci * g.f_in + fi);
        }
  return col;
}

void col2im(const Eigen::MatrixXd& col, const ConvGeom& g,
            Eigen::MatrixXd& x_grad) {
  const Eigen::Index T = x_grad.rows();
  for (Eigen::Index t = 0; t < T; ++t)
    for (int fo = 0; fo < g.f_out; ++fo)
      for (int ci = 0; ci < g.c_in; ++ci)
        for (int d = 0; d < g.k; ++d) {
          int fi = fo * g.stride + d - g.pad;
          if (fi >= 0 && fi < g.f_in)
            x_grad(t, ci * g.f_in + fi) += col(t * g.f_out + fo, ci * g.k + d);
        }
}

}  // namespace

NodePtr conv_freq(Tape& t, NodePtr x, NodePtr w, NodePtr b, int c_in, int f_in,
                  int k, int stride, int pad) {
  ConvGeom g{c_in, f_in, k, stride, pad, 0, 0};
  g.c_out = static_cast<int>(w->value.rows());
  g.f_out = (f_in + 2 * pad - k) / stride + 1;
  if (x->value.cols() != static_cast<Eigen::Index>(c_in) * f_in)
    throw std::invalid_argument("conv_freq: input width mismatch");
  if (w->value.cols() != static_cast<Eigen::Index>(c_in) * k)
    throw std::invalid_argument("conv_freq: weight shape mismatch");
  if (b->value.cols() != g.c_out)
    throw std::invalid_argument("conv_freq: bias shape mismatch");

  const Eigen::Index T = x->value.rows();
  auto col = std::make_shared<Eigen::MatrixXd>(im2col(x->value, g));
  Eigen::MatrixXd m = *col * w->value.transpose();  // (T*f_out) x c_out
  Eigen::MatrixXd y(T, static_cast<Eigen::Index>(g.c_out) * g.f_out);
  for (Eigen::Index tt = 0; tt < T; ++tt)
    for (int co = 0; co < g.c_out; ++co)
      for (int fo = 0; fo < g.f_out; ++fo)
        y(tt, co * g.f_out + fo) = m(tt * g.f_out + fo, co) + b->value(0, co);

  bool needs = x->needs_grad || w->needs_grad || b->needs_grad;
  return t.record(std::move(y), needs, [x, w, b, col, g](Node& n) {
    const Eigen::Index T = x->value.rows();
    Eigen::MatrixXd dm(T * g.f_out, g.c_out);
    for (Eigen::Index tt = 0; tt < T; ++tt)
      for (int co = 0; co < g.c_out; ++co)
        for (int fo = 0; fo < g.f_out; ++fo)
          dm(tt * g.f_out + fo, co) = n.grad(tt, co * g.f_out + fo);
    if (b->needs_grad) {
      b->ensure_grad();
      b->grad += dm.colwise().sum();
    }
    if (w->needs_grad) {
      w->ensure_grad();
      w->grad += dm.transpose() * *col;
    }
    if (x->needs_grad) {
      x->ensure_grad();
      Eigen::MatrixXd dcol = dm * w->value;
      col2im(dcol, g, x->grad);
    }
  });
}

NodePtr deconv_freq(Tape& t, NodePtr x, NodePtr w, NodePtr b, int c_in,
                    int f_in, int k, int stride, int pad, int out_pad) {
  const int c_out = static_cast<int>(w->value.rows());
  const int f_out = (f_in - 1) * stride + k - 2 * pad + out_pad;
  if (f_out <= 0) throw std::invalid_argument("deconv_freq: empty output");
  if (x->value.cols() != static_cast<Eigen::Index>(c_in) * f_in)
    throw std::invalid_argument("deconv_freq: input width mismatch");
  if (w->value.cols() != static_cast<Eigen::Index>(c_in) * k)
    throw std::invalid_argument("deconv_freq: weight shape mismatch");

  const Eigen::Index T = x->value.rows();
  // Xr (T*f_in) x c_in, Wr c_in x (c_out*k)
  auto xr = std::make_shared<Eigen::MatrixXd>(T * f_in, c_in);
  for (Eigen::Index tt = 0; tt < T; ++tt)
    for (int ci = 0; ci < c_in; ++ci)
      for (int fi = 0; fi < f_in; ++fi)
        (*xr)(tt * f_in + fi, ci) = x->value(tt, ci * f_in + fi);
  Eigen::MatrixXd wr(c_in, static_cast<Eigen::Index>(c_out) * k);
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < c_in; ++ci)
      for (int d = 0; d < k; ++d) wr(ci, co * k + d) = w->value(co, ci * k + d);

  Eigen::MatrixXd p = *xr * wr;  // (T*f_in) x (c_out*k)
  Eigen::MatrixXd y(T, static_cast<Eigen::Index>(c_out) * f_out);
  for (Eigen::Index tt = 0; tt < T; ++tt)
    for (int co = 0; co < c_out; ++co)
      for (int fo = 0; fo < f_out; ++fo) y(tt, co * f_out + fo) = b->value(0, co);
  for (Eigen::Index tt = 0; tt < T; ++tt)
    for (int fi = 0; fi < f_in; ++fi)
      for (int co = 0; co < c_out; ++co)
        for (int d = 0; d < k; ++d) {
          int fo = fi * stride + d - pad;
          if (fo >= 0 && fo < f_out)
            y(tt, co * f_out + fo) += p(tt * f_in + fi, co * k + d);
        }

  bool needs = x->needs_grad || w->needs_grad || b->needs_grad;
  return t.record(
      std::move(y), needs,
      [x, w, b, xr, c_in, f_in, k, stride, pad, f_out, c_out](Node& n) {
        const Eigen::Index T = x->value.rows();
        Eigen::MatrixXd dp =
            Eigen::MatrixXd::Zero(T * f_in, static_cast<Eigen::Index>(c_out) * k);
        for (Eigen::Index tt = 0; tt < T; ++tt)
          for (int fi = 0; fi < f_in; ++fi)
            for (int co = 0; co < c_out; ++co)
              for (int d = 0; d < k; ++d) {
                int fo = fi * stride + d - pad;
                if (fo >= 0 && fo < f_out)
                  dp(tt * f_in + fi, co * k + d) = n.grad(tt, co * f_out + fo);
              }
        if (b->needs_grad) {
          b->ensure_grad();
          for (int co = 0; co < c_out; ++co)
            b->grad(0, co) += n.grad.middleCols(
                static_cast<Eigen::Index>(co) * f_out, f_out).sum();
        }
        if (w->needs_grad) {
          w->ensure_grad();
          Eigen::MatrixXd dwr = xr->transpose() * dp;  // c_in x (c_out*k)
          for (int co = 0; co < c_out; ++co)
            for (int ci = 0; ci < c_in; ++ci)
              for (int d = 0; d < k; ++d)
                w->grad(co, ci * k + d) += dwr(ci, co * k + d);
        }
        if (x->needs_grad) {
          x->ensure_grad();
          Eigen::MatrixXd wr(c_in, static_cast<Eigen::Index>(c_out) * k);
          for (int co = 0; co < c_out; ++co)
            for (int ci = 0; ci < c_in; ++ci)
              for (int d = 0; d < k; ++d)
                wr(ci, co * k + d) = w->value(co, ci * k + d);
          Eigen::MatrixXd dxr = dp * wr.transpose();  // (T*f_in) x c_in
          for (Eigen::Index tt = 0; tt < T; ++tt)
            for (int ci = 0; ci < c_in; ++ci)
              for (int fi = 0; fi < f_in; ++fi)
                x->grad(tt, ci * f_in + fi) += dxr(tt * f_in + fi, ci);
        }
      });
}

NodePtr temporal_conv(Tape& t, NodePtr x, NodePtr w, NodePtr b, int width) {
  if (width % 2 == 0 || width < 1)
    throw std::invalid_argument("temporal_conv: width must be odd");
  const Eigen::Index T = x->value.rows();
  const Eigen::Index d_in = x->value.cols();
  if (w->value.rows() != width * d_in)
    throw std::invalid_argument("temporal_conv: weight shape mismatch");
  const int tau = width / 2;

  auto xc = std::make_shared<Eigen::MatrixXd>(
      Eigen::MatrixXd::Zero(T, width * d_in));
  for (int d = 0; d < width; ++d)
    for (Eigen::Index tt = 0; tt < T; ++tt) {
      Eigen::Index src = tt + d - tau;
      if (src >= 0 && src < T)
        xc->middleCols(static_cast<Eigen::Index>(d) * d_in, d_in).row(tt) =
            x->value.row(src);
    }
  Eigen::MatrixXd y = (*xc * w->value).rowwise() + b->value.row(0);

  bool needs = x->needs_grad || w->needs_grad || b->needs_grad;
  return t.record(std::move(y), needs, [x, w, b, xc, width, tau](Node& n) {
    const Eigen::Index T = x->value.rows();
    const Eigen::Index d_in = x->value.cols();
    if (b->needs_grad) {
      b->ensure_grad();
      b->grad += n.grad.colwise().sum();
    }
    if (w->needs_grad) {
      w->ensure_grad();
      w->grad += xc->transpose() * n.grad;
    }
    if (x->needs_grad) {
      x->ensure_grad();
      Eigen::MatrixXd dxc = n.grad * w->value.transpose();
      for (int d = 0; d < width; ++d)
        for (Eigen::Index tt = 0; tt < T; ++tt) {
          Eigen::Index src = tt + d - tau;
          if (src >= 0 && src < T)
            x->grad.row(src) +=
                dxc.middleCols(static_cast<Eigen::Index>(d) * d_in, d_in).row(tt);
        }
    }
  });
}

NodePtr dropout(Tape& t, NodePtr x, double p, Rng& rng, bool enabled) {
  if (!enabled || p <= 0.0)
    return t.record(x->value, x->needs_grad,
                    [x](Node& n) { accumulate(x, n.grad); });
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  auto mask = std::make_shared<Eigen::MatrixXd>(x->value.rows(), x->value.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index r = 0; r < mask->rows(); ++r)
    for (Eigen::Index c = 0; c < mask->cols(); ++c)
      (*mask)(r, c) = rng.uniform() < p ? 0.0 : 1.0 / keep;
  return t.record(x->value.cwiseProduct(*mask), x->needs_grad,
                  [x, mask](Node& n) {
                    accumulate(x, n.grad.cwiseProduct(*mask));
                  });
}

}  // namespace pease::ad
