#include "gap/nn/optimizer.hpp"

#include <cmath>

namespace gap::nn {

void Optimizer::step(ParamGroup& group, double scale) {
  for (const ParamPtr& p : group.params) {
    Tensor& w = p->value;
    const Tensor& g = p->grad;
    if (kind_ == OptKind::sgd) {
      for (std::size_t i = 0; i < w.v.size(); ++i)
        w.v[i] -= scale * (lr_ * g.v[i]);
      continue;
    }
    Slot& s = slots_[p.get()];
    if (s.m.v.empty()) {
      s.m = Tensor::zeros_like(w);
      s.v = Tensor::zeros_like(w);
    }
    s.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      const double gi = scale * g.v[i];
      s.m.v[i] = beta1_ * s.m.v[i] + (1.0 - beta1_) * gi;
      s.v.v[i] = beta2_ * s.v.v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = s.m.v[i] / bc1;
      const double vhat = s.v.v[i] / bc2;
      w.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace gap::nn
