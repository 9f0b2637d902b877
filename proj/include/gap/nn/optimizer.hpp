#pragma once

#include <cstdint>
#include <unordered_map>

#include "gap/nn/layers.hpp"

namespace gap::nn {

enum class OptKind { sgd, adam };

// Parameter updates with a per-step group scale.
//
// SGD applies the scale to the update: w -= scale * (lr * g), evaluated with
// exactly that association so the step under scale s is bitwise s times the
// step under scale 1.
//
// Adam applies the scale to the raw gradient before the moment updates
// (g' = scale * g) and is therefore deliberately not linear in the scale.
class Optimizer {
public:
  Optimizer(OptKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamGroup& group, double scale = 1.0);

  OptKind kind() const { return kind_; }
  double lr() const { return lr_; }

private:
  struct Slot {
    Tensor m, v;
    std::int64_t t = 0;
  };

  OptKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<Param*, Slot> slots_;
};

}  // namespace gap::nn
