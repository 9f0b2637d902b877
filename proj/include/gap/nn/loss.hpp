#pragma once

#include <vector>

#include "gap/nn/tensor.hpp"

namespace gap::nn {

// Mean squared error over every element.
class MseLoss {
public:
  double forward(const Tensor& pred, const Tensor& target);
  Tensor backward() const;

private:
  Tensor diff_;
};

// Weighted binary cross-entropy on logits, numerically stable form.
// loss = scale * sum_i w_i * (max(z,0) - z*y + log(1+exp(-|z|))).
class WeightedBceLoss {
public:
  double forward(const std::vector<double>& logits, const std::vector<double>& y,
                 const std::vector<double>& w, double scale);
  std::vector<double> backward() const;  // d loss / d logits

private:
  std::vector<double> z_, y_, w_;
  double scale_ = 1.0;
};

}  // namespace gap::nn
