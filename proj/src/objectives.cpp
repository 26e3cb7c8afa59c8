#include "cusemo/objectives.hpp"

#include <cmath>

#include "cusemo/common.hpp"

namespace cusemo {
namespace {

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

void check_bce_inputs(std::size_t n_values, const std::vector<double>& targets,
                      const std::vector<bool>& mask) {
  if (targets.size() != n_values || mask.size() != n_values) {
    throw ValidationError("bce inputs have mismatched lengths");
  }
  for (std::size_t i = 0; i < n_values; ++i) {
    if (mask[i] && targets[i] != 0.0 && targets[i] != 1.0) {
      throw ValidationError("bce targets must be 0 or 1 where masked in");
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0) {
    throw ValidationError("loss weights must be non-negative");
  }
}

double ccc(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("concordance inputs differ in length");
  if (x.size() < 2) throw ValidationError("concordance needs at least 2 points");
  const double mx = mean_of(x), my = mean_of(y);
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cov += (x[i] - mx) * (y[i] - my);
  }
  const double n = static_cast<double>(x.size());
  vx /= n;
  vy /= n;
  cov /= n;
  const double den = vx + vy + (mx - my) * (mx - my);
  if (den < 1e-8) return 0.0;
  return 2.0 * cov / den;
}

ad::Var ccc_loss_masked(const ad::Var& pred, const std::vector<double>& target,
                        const std::vector<bool>& mask) {
  const std::size_t n = pred->value.numel();
  if (target.size() != n || mask.size() != n) {
    throw ValidationError("prediction/target/mask lengths differ");
  }
  std::vector<std::size_t> valid;
  std::vector<double> t;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      valid.push_back(i);
      t.push_back(target[i]);
    }
  }
  if (valid.size() < 2) {
    throw ValidationError("concordance loss needs at least 2 unmasked frames");
  }
  ad::Var picked = valid.size() == n ? pred : ad::gather(pred, std::move(valid));
  return ad::add_const(ad::scale(ad::ccc_scalar(picked, t), -1.0), 1.0);
}

double bce_loss_logits(const std::vector<double>& logits,
                       const std::vector<double>& targets,
                       const std::vector<bool>& mask) {
  check_bce_inputs(logits.size(), targets, mask);
  double acc = 0.0;
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    const double z = logits[i];
    acc += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
    ++n_valid;
  }
  if (n_valid == 0) throw ValidationError("bce has no masked-in samples");
  return acc / static_cast<double>(n_valid);
}

double bce_loss_probs(const std::vector<double>& probs,
                      const std::vector<double>& targets,
                      const std::vector<bool>& mask) {
  check_bce_inputs(probs.size(), targets, mask);
  double acc = 0.0;
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    const double p = std::clamp(probs[i], 1e-7, 1.0 - 1e-7);
    acc -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log1p(-p);
    ++n_valid;
  }
  if (n_valid == 0) throw ValidationError("bce has no masked-in samples");
  return acc / static_cast<double>(n_valid);
}

CombinedLoss combined_loss(const std::vector<ModelOutputVars>& outputs,
                           const std::vector<NormalizedTargets>& targets,
                           const LossWeights& weights) {
  weights.validate();
  if (outputs.empty()) throw ValidationError("loss over an empty batch");
  if (outputs.size() != targets.size()) {
    throw ValidationError("batch outputs and targets differ in length");
  }
  const std::size_t batch = outputs.size();
  if (weights.alpha > 0.0 && batch < 2) {
    throw ValidationError("empathy loss needs a batch of at least 2 segments");
  }

  const double inv_b = 1.0 / static_cast<double>(batch);
  ad::Var l_v, l_a;
  for (std::size_t i = 0; i < batch; ++i) {
    ad::Var sv = ad::scale(
        ccc_loss_masked(outputs[i].valence, targets[i].valence, targets[i].frame_mask),
        inv_b);
    ad::Var sa = ad::scale(
        ccc_loss_masked(outputs[i].arousal, targets[i].arousal, targets[i].frame_mask),
        inv_b);
    l_v = l_v ? ad::add(l_v, sv) : sv;
    l_a = l_a ? ad::add(l_a, sa) : sa;
  }

  CombinedLoss out;
  out.parts.l_ccc_v = l_v->value.data[0];
  out.parts.l_ccc_a = l_a->value.data[0];

  ad::Var total = ad::add(l_v, l_a);
  double denom = 2.0;

  if (weights.alpha > 0.0) {
    std::vector<ad::Var> preds;
    std::vector<double> emp_targets;
    for (std::size_t i = 0; i < batch; ++i) {
      if (!outputs[i].empathy) {
        throw ValidationError("empathy loss requested but the model has no empathy head");
      }
      preds.push_back(outputs[i].empathy);
      emp_targets.push_back(targets[i].empathy);
    }
    ad::Var l_e = ad::add_const(
        ad::scale(ad::ccc_scalar(ad::concat1d(preds), emp_targets), -1.0), 1.0);
    out.parts.l_ccc_e = l_e->value.data[0];
    total = ad::add(total, ad::scale(l_e, weights.alpha));
    denom += weights.alpha;
  }

  if (weights.beta > 0.0) {
    ad::Var sum;
    std::size_t n_known = 0;
    for (std::size_t i = 0; i < batch; ++i) {
      if (!outputs[i].gender_logit) {
        throw ValidationError("gender loss requested but the model has no gender head");
      }
      if (!targets[i].gender_label) continue;
      ad::Var term = ad::bce_with_logits(outputs[i].gender_logit, *targets[i].gender_label);
      sum = sum ? ad::add(sum, term) : term;
      ++n_known;
    }
    if (n_known == 0) {
      throw ValidationError("gender loss requested but no segment has a known gender");
    }
    ad::Var l_g = ad::scale(sum, 1.0 / static_cast<double>(n_known));
    out.parts.l_bce_g = l_g->value.data[0];
    total = ad::add(total, ad::scale(l_g, weights.beta));
    denom += weights.beta;
  }

  out.loss = ad::scale(total, 1.0 / denom);
  out.parts.combined = out.loss->value.data[0];
  return out;
}

}  // namespace cusemo
