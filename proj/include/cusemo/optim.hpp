#pragma once

#include <vector>

#include "cusemo/autograd.hpp"

namespace cusemo::ad {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m, v;  // aligned with the parameter list

  static AdamState init(const std::vector<Var>& params, double lr);
};

/// Bias-corrected Adam with a constant learning rate. A non-finite gradient
/// aborts with the offending parameter named; an unallocated gradient counts
/// as zero.
void adam_step(const std::vector<Var>& params, AdamState& state);

double global_grad_norm(const std::vector<Var>& params);

/// Scale all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(const std::vector<Var>& params, double max_norm);

}  // namespace cusemo::ad
