#include "gap/nn/loss.hpp"

#include <cmath>

#include "gap/nn/layers.hpp"

namespace gap::nn {

double MseLoss::forward(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw ArgumentError("mse: shape mismatch");
  diff_ = pred;
  double acc = 0.0;
  for (std::size_t i = 0; i < diff_.v.size(); ++i) {
    diff_.v[i] -= target.v[i];
    acc += diff_.v[i] * diff_.v[i];
  }
  return acc / static_cast<double>(diff_.v.size());
}

Tensor MseLoss::backward() const {
  Tensor d = diff_;
  const double s = 2.0 / static_cast<double>(diff_.v.size());
  for (double& x : d.v) x *= s;
  return d;
}

double WeightedBceLoss::forward(const std::vector<double>& logits,
                                const std::vector<double>& y,
                                const std::vector<double>& w, double scale) {
  if (logits.size() != y.size() || logits.size() != w.size())
    throw ArgumentError("weighted bce: length mismatch");
  z_ = logits;
  y_ = y;
  w_ = w;
  scale_ = scale;
  double acc = 0.0;
  for (std::size_t i = 0; i < z_.size(); ++i) {
    const double z = z_[i];
    acc += w_[i] * (std::max(z, 0.0) - z * y_[i] + std::log1p(std::exp(-std::fabs(z))));
  }
  return acc * scale_;
}

std::vector<double> WeightedBceLoss::backward() const {
  std::vector<double> dz(z_.size());
  for (std::size_t i = 0; i < z_.size(); ++i)
    dz[i] = scale_ * w_[i] * (sigmoid_scalar(z_[i]) - y_[i]);
  return dz;
}

}  // namespace gap::nn
