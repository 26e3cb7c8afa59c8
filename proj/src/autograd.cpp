#include "cusemo/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cusemo/common.hpp"

namespace cusemo::ad {
namespace {

bool any_requires_grad(const std::vector<Var>& vars) {
  for (const auto& v : vars) {
    if (v->requires_grad) return true;
  }
  return false;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw ValidationError(std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.data.empty()) grad = Tensor::zeros(value.shape);
  return grad;
}

Var make_leaf(Tensor value, bool requires_grad, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  node->name = std::move(name);
  return node;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  if (any_requires_grad(parents)) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}

void backward(const Var& root) {
  if (root->value.numel() != 1) {
    throw ValidationError("backward requires a scalar root");
  }
  if (!root->requires_grad) return;

  // Iterative post-order topological sort (graphs reach ~1e4 nodes).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.data.empty()) node->backprop(*node);
    if (!node->is_leaf) {
      // Consumers already ran; drop the heavy buffers (value, grad, closure
      // caches) to cap peak memory. Parent links stay so the raw pointers in
      // `order` remain valid for the rest of the sweep.
      node->value.data.clear();
      node->value.data.shrink_to_fit();
      node->grad.data.clear();
      node->grad.data.shrink_to_fit();
      node->backprop = nullptr;
    }
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params) {
    p->grad = Tensor();
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    for (const Var& p : {a, b}) {
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b->value.data[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] -= n.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
  Tensor av = a->value, bv = b->value;  // operands survive until backward
  return make_node(std::move(out), {a, b},
                   [a, b, av = std::move(av), bv = std::move(bv)](Node& n) {
                     if (a->requires_grad) {
                       Tensor& g = a->ensure_grad();
                       for (std::size_t i = 0; i < g.numel(); ++i) {
                         g.data[i] += n.grad.data[i] * bv.data[i];
                       }
                     }
                     if (b->requires_grad) {
                       Tensor& g = b->ensure_grad();
                       for (std::size_t i = 0; i < g.numel(); ++i) {
                         g.data[i] += n.grad.data[i] * av.data[i];
                       }
                     }
                   });
}

Var scale(const Var& a, double k) {
  Tensor out = a->value;
  for (double& v : out.data) v *= k;
  return make_node(std::move(out), {a}, [a, k](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += k * n.grad.data[i];
  });
}

Var add_const(const Var& a, double k) {
  Tensor out = a->value;
  for (double& v : out.data) v += k;
  return make_node(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  std::vector<bool> on(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    on[i] = out.data[i] > 0.0;
    if (!on[i]) out.data[i] = 0.0;
  }
  return make_node(std::move(out), {a}, [a, on = std::move(on)](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (on[i]) g.data[i] += n.grad.data[i];
    }
  });
}

Var tanh_op(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::tanh(v);
  Tensor y = out;
  return make_node(std::move(out), {a}, [a, y = std::move(y)](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g.data[i] += n.grad.data[i] * (1.0 - y.data[i] * y.data[i]);
    }
  });
}

Var sigmoid_op(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Tensor y = out;
  return make_node(std::move(out), {a}, [a, y = std::move(y)](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g.data[i] += n.grad.data[i] * y.data[i] * (1.0 - y.data[i]);
    }
  });
}

Var mean_all(const Var& a) {
  const std::size_t n = a->value.numel();
  if (n == 0) throw ValidationError("mean of an empty tensor");
  double acc = 0.0;
  for (double v : a->value.data) acc += v;
  return make_node(Tensor::scalar(acc / static_cast<double>(n)), {a}, [a, n](Node& node) {
    Tensor& g = a->ensure_grad();
    const double d = node.grad.data[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) g.data[i] += d;
  });
}

Var variance_all(const Var& a) {
  const std::size_t n = a->value.numel();
  if (n == 0) throw ValidationError("variance of an empty tensor");
  double mean = 0.0;
  for (double v : a->value.data) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : a->value.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  Tensor av = a->value;
  return make_node(Tensor::scalar(var), {a},
                   [a, n, mean, av = std::move(av)](Node& node) {
                     Tensor& g = a->ensure_grad();
                     const double d = 2.0 * node.grad.data[0] / static_cast<double>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       g.data[i] += d * (av.data[i] - mean);
                     }
                   });
}

Var transpose2d(const Var& a) {
  if (a->value.ndim() != 2) throw ValidationError("transpose2d expects a 2-d tensor");
  const std::size_t r = a->value.dim(0), c = a->value.dim(1);
  Tensor out = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.at2(j, i) = a->value.at2(i, j);
  }
  return make_node(std::move(out), {a}, [a, r, c](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g.at2(i, j) += n.grad.at2(j, i);
    }
  });
}

Var column(const Var& a, std::size_t c) {
  if (a->value.ndim() != 2) throw ValidationError("column expects a 2-d tensor");
  const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
  if (c >= cols) throw ValidationError("column index out of range");
  Tensor out = Tensor::zeros({rows});
  for (std::size_t i = 0; i < rows; ++i) out.data[i] = a->value.at2(i, c);
  return make_node(std::move(out), {a}, [a, c, rows](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i) g.at2(i, c) += n.grad.data[i];
  });
}

Var gather(const Var& a, std::vector<std::size_t> indices) {
  const std::size_t n = a->value.numel();
  Tensor out = Tensor::zeros({indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw ValidationError("gather index out of range");
    out.data[i] = a->value.data[indices[i]];
  }
  return make_node(std::move(out), {a}, [a, idx = std::move(indices)](Node& node) {
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) g.data[idx[i]] += node.grad.data[i];
  });
}

Var concat1d(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  std::size_t total = 0;
  for (const auto& p : parts) total += p->value.numel();
  Tensor out = Tensor::zeros({total});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
    off += p->value.numel();
  }
  return make_node(std::move(out), parts,
                   [parts, offsets = std::move(offsets)](Node& n) {
                     for (std::size_t k = 0; k < parts.size(); ++k) {
                       if (!parts[k]->requires_grad) continue;
                       Tensor& g = parts[k]->ensure_grad();
                       const std::size_t off = offsets[k];
                       for (std::size_t i = 0; i < g.numel(); ++i) {
                         g.data[i] += n.grad.data[off + i];
                       }
                     }
                   });
}

Var bin_average(const Var& a, std::vector<std::pair<std::size_t, std::size_t>> bins) {
  const std::size_t n = a->value.numel();
  Tensor out = Tensor::zeros({bins.size()});
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const auto [lo, hi] = bins[b];
    if (lo >= hi || hi > n) throw ValidationError("bin bounds out of range");
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += a->value.data[i];
    out.data[b] = acc / static_cast<double>(hi - lo);
  }
  return make_node(std::move(out), {a}, [a, bins = std::move(bins)](Node& n) {
    Tensor& g = a->ensure_grad();
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const auto [lo, hi] = bins[b];
      const double d = n.grad.data[b] / static_cast<double>(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) g.data[i] += d;
    }
  });
}

Var dropout(const Var& input, double p, bool training, SplitMix64& rng) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout rate must be in [0, 1)");
  if (!training || p == 0.0) return input;
  const double keep = 1.0 - p;
  const double inv = 1.0 / keep;
  Tensor out = input->value;
  std::vector<bool> mask(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    mask[i] = rng.uniform01() >= p;
    out.data[i] = mask[i] ? out.data[i] * inv : 0.0;
  }
  return make_node(std::move(out), {input},
                   [input, mask = std::move(mask), inv](Node& n) {
                     Tensor& g = input->ensure_grad();
                     for (std::size_t i = 0; i < g.numel(); ++i) {
                       if (mask[i]) g.data[i] += n.grad.data[i] * inv;
                     }
                   });
}

Var ccc_scalar(const Var& pred, const std::vector<double>& target) {
  const std::size_t n = pred->value.numel();
  if (n == 0) throw ValidationError("concordance of an empty sequence");
  if (n != target.size()) {
    throw ValidationError("prediction and target lengths differ");
  }

  const auto& x = pred->value.data;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += target[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (target[i] - my) * (target[i] - my);
    cov += (x[i] - mx) * (target[i] - my);
  }
  vx /= static_cast<double>(n);
  vy /= static_cast<double>(n);
  cov /= static_cast<double>(n);

  const double num = 2.0 * cov;
  const double den = vx + vy + (mx - my) * (mx - my);
  if (den < 1e-8) {
    // Both sides constant and equal: correlation structure is undefined.
    // Treated as 0 with zero gradient so degenerate batches don't explode.
    return make_node(Tensor::scalar(0.0), {pred}, [](Node&) {});
  }

  Tensor xv = pred->value;
  return make_node(
      Tensor::scalar(num / den), {pred},
      [pred, t = target, xv = std::move(xv), mx, my, num, den](Node& node) {
        Tensor& g = pred->ensure_grad();
        const std::size_t n = xv.numel();
        const double inv_n = 1.0 / static_cast<double>(n);
        const double seed = node.grad.data[0];
        for (std::size_t i = 0; i < n; ++i) {
          const double dnum = 2.0 * (t[i] - my) * inv_n;
          const double dden = 2.0 * (xv.data[i] - mx) * inv_n + 2.0 * (mx - my) * inv_n;
          g.data[i] += seed * (dnum * den - num * dden) / (den * den);
        }
      });
}

Var bce_with_logits(const Var& logit, double target) {
  if (logit->value.numel() != 1) throw ValidationError("bce expects a scalar logit");
  if (target < 0.0 || target > 1.0) throw ValidationError("bce target outside [0, 1]");
  const double z = logit->value.data[0];
  const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  return make_node(Tensor::scalar(loss), {logit}, [logit, z, target](Node& n) {
    Tensor& g = logit->ensure_grad();
    const double sig = 1.0 / (1.0 + std::exp(-z));
    g.data[0] += n.grad.data[0] * (sig - target);
  });
}

}  // namespace cusemo::ad
