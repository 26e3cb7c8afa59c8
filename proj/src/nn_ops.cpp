#include <Eigen/Core>
#include <cmath>

#include "cusemo/autograd.hpp"
#include "cusemo/common.hpp"

namespace cusemo::ad {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;

// Patch matrix [C_in*K, L_out]: row c*K+k holds input[c, k .. k+L_out).
MatRM im2col(const Tensor& input, std::size_t kernel) {
  const std::size_t c_in = input.dim(0), len = input.dim(1);
  const std::size_t l_out = len - kernel + 1;
  MatRM cols(c_in * kernel, l_out);
  for (std::size_t c = 0; c < c_in; ++c) {
    const double* src = input.data.data() + c * len;
    for (std::size_t k = 0; k < kernel; ++k) {
      std::copy(src + k, src + k + l_out, cols.row(c * kernel + k).data());
    }
  }
  return cols;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var conv1d(const Var& input, const Var& weight, const Var& bias) {
  const Tensor& x = input->value;
  const Tensor& w = weight->value;
  if (x.ndim() != 2 || w.ndim() != 3 || bias->value.ndim() != 1) {
    throw ValidationError("conv1d: expected input [C_in,L], weight [C_out,C_in,K], bias [C_out]");
  }
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = w.dim(0), kernel = w.dim(2);
  if (w.dim(1) != c_in) throw ValidationError("conv1d: channel mismatch");
  if (bias->value.dim(0) != c_out) throw ValidationError("conv1d: bias size mismatch");
  if (len < kernel) throw ValidationError("conv1d: input shorter than kernel");
  const std::size_t l_out = len - kernel + 1;

  const MatRM cols = im2col(x, kernel);
  CMapM wmat(w.data.data(), c_out, c_in * kernel);

  Tensor out = Tensor::zeros({c_out, l_out});
  MapM y(out.data.data(), c_out, l_out);
  y.noalias() = wmat * cols;
  y.colwise() += CMapV(bias->value.data.data(), c_out);

  return make_node(std::move(out), {input, weight, bias},
                   [input, weight, bias, kernel](Node& n) {
                     const std::size_t c_out = n.grad.dim(0), l_out = n.grad.dim(1);
                     const std::size_t c_in = input->value.dim(0);
                     const std::size_t len = input->value.dim(1);
                     CMapM dy(n.grad.data.data(), c_out, l_out);
                     // Patches are rebuilt rather than cached: the input value
                     // is still alive here and the copy is cheaper than
                     // holding every layer's patch matrix through forward.
                     const MatRM cols = im2col(input->value, kernel);
                     if (weight->requires_grad) {
                       Tensor& gw = weight->ensure_grad();
                       MapM(gw.data.data(), c_out, c_in * kernel).noalias() +=
                           dy * cols.transpose();
                     }
                     if (bias->requires_grad) {
                       Tensor& gb = bias->ensure_grad();
                       MapV(gb.data.data(), c_out) += dy.rowwise().sum();
                     }
                     if (input->requires_grad) {
                       CMapM wmat(weight->value.data.data(), c_out, c_in * kernel);
                       const MatRM dcols = wmat.transpose() * dy;
                       Tensor& gx = input->ensure_grad();
                       for (std::size_t c = 0; c < c_in; ++c) {
                         double* dst = gx.data.data() + c * len;
                         for (std::size_t k = 0; k < kernel; ++k) {
                           const double* src = dcols.row(c * kernel + k).data();
                           for (std::size_t t = 0; t < l_out; ++t) dst[k + t] += src[t];
                         }
                       }
                     }
                   });
}

Var maxpool1d(const Var& input, std::size_t kernel) {
  const Tensor& x = input->value;
  if (x.ndim() != 2) throw ValidationError("maxpool1d expects a 2-d tensor");
  if (kernel == 0) throw ValidationError("maxpool1d: zero kernel");
  const std::size_t channels = x.dim(0), len = x.dim(1);
  if (len < kernel) throw ValidationError("maxpool1d: input shorter than kernel");
  const std::size_t l_out = (len - kernel) / kernel + 1;

  Tensor out = Tensor::zeros({channels, l_out});
  std::vector<std::size_t> argmax(channels * l_out);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = x.data.data() + c * len;
    for (std::size_t t = 0; t < l_out; ++t) {
      std::size_t best = t * kernel;
      for (std::size_t k = 1; k < kernel; ++k) {
        if (src[t * kernel + k] > src[best]) best = t * kernel + k;
      }
      out.at2(c, t) = src[best];
      argmax[c * l_out + t] = c * len + best;
    }
  }
  return make_node(std::move(out), {input},
                   [input, argmax = std::move(argmax)](Node& n) {
                     Tensor& g = input->ensure_grad();
                     for (std::size_t i = 0; i < argmax.size(); ++i) {
                       g.data[argmax[i]] += n.grad.data[i];
                     }
                   });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
  const Tensor& x = input->value;
  const Tensor& w = weight->value;
  if (w.ndim() != 2 || bias->value.ndim() != 1) {
    throw ValidationError("linear: expected weight [D_out,D_in], bias [D_out]");
  }
  const std::size_t d_out = w.dim(0), d_in = w.dim(1);
  if (bias->value.dim(0) != d_out) throw ValidationError("linear: bias size mismatch");

  const bool vector_in = x.ndim() == 1;
  if (!vector_in && x.ndim() != 2) throw ValidationError("linear: input must be 1-d or 2-d");
  const std::size_t rows = vector_in ? 1 : x.dim(0);
  if ((vector_in ? x.dim(0) : x.dim(1)) != d_in) {
    throw ValidationError("linear: input feature size mismatch");
  }

  Tensor out = vector_in ? Tensor::zeros({d_out}) : Tensor::zeros({rows, d_out});
  CMapM xm(x.data.data(), rows, d_in);
  CMapM wm(w.data.data(), d_out, d_in);
  MapM ym(out.data.data(), rows, d_out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += CMapV(bias->value.data.data(), d_out).transpose();

  return make_node(std::move(out), {input, weight, bias},
                   [input, weight, bias, rows, d_in, d_out](Node& n) {
                     CMapM dy(n.grad.data.data(), rows, d_out);
                     if (weight->requires_grad) {
                       CMapM xm(input->value.data.data(), rows, d_in);
                       Tensor& gw = weight->ensure_grad();
                       MapM(gw.data.data(), d_out, d_in).noalias() += dy.transpose() * xm;
                     }
                     if (bias->requires_grad) {
                       Tensor& gb = bias->ensure_grad();
                       MapV(gb.data.data(), d_out) += dy.colwise().sum().transpose();
                     }
                     if (input->requires_grad) {
                       CMapM wm(weight->value.data.data(), d_out, d_in);
                       Tensor& gx = input->ensure_grad();
                       MapM(gx.data.data(), rows, d_in).noalias() += dy * wm;
                     }
                   });
}

Var lstm_layer(const Var& input, const Var& w_ih, const Var& w_hh, const Var& bias,
               const Tensor& h0, const Tensor& c0) {
  const Tensor& x = input->value;
  if (x.ndim() != 2) throw ValidationError("lstm: input must be [T, D]");
  const std::size_t t_len = x.dim(0), d_in = x.dim(1);
  if (t_len < 1) throw ValidationError("lstm: empty sequence");
  if (w_ih->value.ndim() != 2 || w_hh->value.ndim() != 2 || bias->value.ndim() != 1) {
    throw ValidationError("lstm: bad parameter ranks");
  }
  const std::size_t gates_dim = w_ih->value.dim(0);
  if (gates_dim % 4 != 0) throw ValidationError("lstm: gate dimension not divisible by 4");
  const std::size_t hidden = gates_dim / 4;
  if (w_ih->value.dim(1) != d_in || w_hh->value.dim(0) != gates_dim ||
      w_hh->value.dim(1) != hidden || bias->value.dim(0) != gates_dim ||
      h0.shape != std::vector<std::size_t>{hidden} ||
      c0.shape != std::vector<std::size_t>{hidden}) {
    throw ValidationError("lstm: parameter/state shape mismatch");
  }

  // Input contribution for every step in one multiply; the recurrent term is
  // added per step. Gate row order: input, forget, cell, output.
  MatRM pre(t_len, gates_dim);
  {
    CMapM xm(x.data.data(), t_len, d_in);
    CMapM wi(w_ih->value.data.data(), gates_dim, d_in);
    pre.noalias() = xm * wi.transpose();
    pre.rowwise() += CMapV(bias->value.data.data(), gates_dim).transpose();
  }
  CMapM wh(w_hh->value.data.data(), gates_dim, hidden);

  Tensor out = Tensor::zeros({t_len, hidden});
  MatRM gates(t_len, gates_dim);   // post-activation, cached for backward
  MatRM cells(t_len, hidden);      // c_t
  MatRM tanh_c(t_len, hidden);
  Eigen::VectorXd h = CMapV(h0.data.data(), hidden);
  Eigen::VectorXd c = CMapV(c0.data.data(), hidden);
  Eigen::VectorXd pre_t(gates_dim);
  for (std::size_t t = 0; t < t_len; ++t) {
    pre_t = pre.row(t).transpose();
    pre_t.noalias() += wh * h;
    for (std::size_t j = 0; j < hidden; ++j) {
      const double ig = sigmoid(pre_t[j]);
      const double fg = sigmoid(pre_t[hidden + j]);
      const double gg = std::tanh(pre_t[2 * hidden + j]);
      const double og = sigmoid(pre_t[3 * hidden + j]);
      gates(t, j) = ig;
      gates(t, hidden + j) = fg;
      gates(t, 2 * hidden + j) = gg;
      gates(t, 3 * hidden + j) = og;
      c[j] = fg * c[j] + ig * gg;
      cells(t, j) = c[j];
      const double tc = std::tanh(c[j]);
      tanh_c(t, j) = tc;
      h[j] = og * tc;
      out.at2(t, j) = h[j];
    }
  }

  return make_node(
      std::move(out), {input, w_ih, w_hh, bias},
      [input, w_ih, w_hh, bias, t_len, d_in, hidden, gates_dim, h0, c0,
       gates = std::move(gates), cells = std::move(cells),
       tanh_c = std::move(tanh_c)](Node& n) {
        CMapM wh(w_hh->value.data.data(), gates_dim, hidden);
        MatRM dpre(t_len, gates_dim);
        Eigen::VectorXd dh(hidden);
        Eigen::VectorXd dc = Eigen::VectorXd::Zero(hidden);
        Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(hidden);
        for (std::size_t t = t_len; t-- > 0;) {
          for (std::size_t j = 0; j < hidden; ++j) {
            dh[j] = n.grad.at2(t, j) + dh_rec[j];
            const double ig = gates(t, j);
            const double fg = gates(t, hidden + j);
            const double gg = gates(t, 2 * hidden + j);
            const double og = gates(t, 3 * hidden + j);
            const double tc = tanh_c(t, j);
            const double dcell = dh[j] * og * (1.0 - tc * tc) + dc[j];
            const double c_prev = t == 0 ? c0.data[j] : cells(t - 1, j);
            dpre(t, j) = dcell * gg * ig * (1.0 - ig);
            dpre(t, hidden + j) = dcell * c_prev * fg * (1.0 - fg);
            dpre(t, 2 * hidden + j) = dcell * ig * (1.0 - gg * gg);
            dpre(t, 3 * hidden + j) = dh[j] * tc * og * (1.0 - og);
            dc[j] = dcell * fg;
          }
          dh_rec.noalias() = wh.transpose() * dpre.row(t).transpose();
        }

        // Hidden states that fed each step: h0 then the first T-1 outputs.
        MatRM h_prev(t_len, hidden);
        h_prev.row(0) = CMapV(h0.data.data(), hidden).transpose();
        if (t_len > 1) {
          h_prev.bottomRows(t_len - 1) =
              CMapM(n.value.data.data(), t_len, hidden).topRows(t_len - 1);
        }
        if (w_ih->requires_grad) {
          CMapM xm(input->value.data.data(), t_len, d_in);
          Tensor& g = w_ih->ensure_grad();
          MapM(g.data.data(), gates_dim, d_in).noalias() += dpre.transpose() * xm;
        }
        if (w_hh->requires_grad) {
          Tensor& g = w_hh->ensure_grad();
          MapM(g.data.data(), gates_dim, hidden).noalias() += dpre.transpose() * h_prev;
        }
        if (bias->requires_grad) {
          Tensor& g = bias->ensure_grad();
          MapV(g.data.data(), gates_dim) += dpre.colwise().sum().transpose();
        }
        if (input->requires_grad) {
          CMapM wi(w_ih->value.data.data(), gates_dim, d_in);
          Tensor& g = input->ensure_grad();
          MapM(g.data.data(), t_len, d_in).noalias() += dpre * wi;
        }
      });
}

}  // namespace cusemo::ad
