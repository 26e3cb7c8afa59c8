#pragma once

#include <optional>
#include <vector>

#include "cusemo/autograd.hpp"
#include "cusemo/labels.hpp"
#include "cusemo/model.hpp"

namespace cusemo {

struct LossWeights {
  double alpha = 0.0;  // empathy weight
  double beta = 0.0;   // gender weight

  void validate() const;
};

struct LossBreakdown {
  double l_ccc_v = 0.0;
  double l_ccc_a = 0.0;
  std::optional<double> l_ccc_e;
  std::optional<double> l_bce_g;
  double combined = 0.0;
};

/// Concordance correlation with population moments:
/// 2*cov / (var_x + var_y + (mean_x - mean_y)^2). A denominator below 1e-8
/// (both sides constant and equal) yields 0, the maximal loss contribution.
double ccc(const std::vector<double>& x, const std::vector<double>& y);

/// 1 - ccc over unmasked frames; differentiable w.r.t. pred.
ad::Var ccc_loss_masked(const ad::Var& pred, const std::vector<double>& target,
                        const std::vector<bool>& mask);

/// Mean binary cross-entropy over masked-in samples, from logits (stable
/// form) or probabilities (clamped to [1e-7, 1-1e-7]).
double bce_loss_logits(const std::vector<double>& logits,
                       const std::vector<double>& targets,
                       const std::vector<bool>& mask);
double bce_loss_probs(const std::vector<double>& probs,
                      const std::vector<double>& targets,
                      const std::vector<bool>& mask);

struct CombinedLoss {
  ad::Var loss;  // differentiable scalar
  LossBreakdown parts;
};

/// Multitask loss (L_v + L_a + alpha*L_e + beta*L_g) / (2 + alpha + beta).
/// Valence/arousal: per-segment masked CCC loss averaged over the batch.
/// Empathy: CCC across the batch of per-segment scalar predictions (the
/// within-segment target is constant, so a per-segment CCC would always be
/// degenerate). Gender: mean BCE over segments with a known label.
CombinedLoss combined_loss(const std::vector<ModelOutputVars>& outputs,
                           const std::vector<NormalizedTargets>& targets,
                           const LossWeights& weights);

}  // namespace cusemo
