#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cusemo/rng.hpp"
#include "cusemo/tensor.hpp"

namespace cusemo::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// One tape entry. Non-leaf values and gradients are released as backward
/// sweeps past them, so peak memory stays near the live frontier.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward
  bool requires_grad = false;
  bool is_leaf = true;
  std::string name;  // parameters carry stable names for checkpoints/diagnostics
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // scatters node.grad into parent grads

  Tensor& ensure_grad();
};

Var make_leaf(Tensor value, bool requires_grad, std::string name = {});

/// Internal node; requires_grad is inherited from the parents. Ops with no
/// differentiable parents collapse to constants (no closure retained).
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

/// Reverse sweep from a scalar root. Accumulates into leaf grads (which the
/// caller zeroes between steps); frees interior values/grads as it goes.
void backward(const Var& root);

void zero_grad(const std::vector<Var>& params);

// Elementwise / reduction ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_const(const Var& a, double k);
Var relu(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var mean_all(const Var& a);
Var variance_all(const Var& a);  // population: divide by N

// Shape ops.
Var transpose2d(const Var& a);
Var column(const Var& a, std::size_t c);  // [R,C] -> [R]
Var gather(const Var& a, std::vector<std::size_t> indices);
Var concat1d(const std::vector<Var>& parts);

/// Average each contiguous [start,end) bin of a 1-d sequence.
Var bin_average(const Var& a, std::vector<std::pair<std::size_t, std::size_t>> bins);

// Neural-net kernels (GEMM-backed).
Var conv1d(const Var& input, const Var& weight, const Var& bias);
Var maxpool1d(const Var& input, std::size_t kernel);
Var linear(const Var& input, const Var& weight, const Var& bias);
Var lstm_layer(const Var& input, const Var& w_ih, const Var& w_hh, const Var& bias,
               const Tensor& h0, const Tensor& c0);
Var dropout(const Var& input, double p, bool training, SplitMix64& rng);

/// Concordance correlation of a differentiable prediction sequence against a
/// constant target sequence: 2*cov / (var_x + var_y + (mean_x - mean_y)^2),
/// population moments. A vanishing denominator yields value 0 with zero grad.
Var ccc_scalar(const Var& pred, const std::vector<double>& target);

/// Numerically stable binary cross-entropy on a single logit:
/// max(z,0) - z*y + log(1 + exp(-|z|)).
Var bce_with_logits(const Var& logit, double target);

}  // namespace cusemo::ad
