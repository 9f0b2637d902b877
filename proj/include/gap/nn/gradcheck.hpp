#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gap/nn/layers.hpp"

namespace gap::nn {

// Central finite differences against analytic gradients.  The numeric side
// only ever re-evaluates the supplied loss closure, so it is independent of
// every backward pass it is used to verify.
struct FdReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;

  void absorb(const FdReport& o) {
    if (o.max_rel_err > max_rel_err) {
      max_rel_err = o.max_rel_err;
      worst = o.worst;
    }
    checked += o.checked;
  }
};

// Perturbs coordinates of `x` in place and restores them.  `analytic` must
// point at the matching gradient buffer.  When `max_coords` < n a seeded
// subset of coordinates is checked.
FdReport fd_check_buffer(const std::function<double()>& loss, double* x,
                         const double* analytic, std::size_t n, double h,
                         std::size_t max_coords, Rng& rng,
                         const std::string& label);

// Checks every parameter of the listed groups; gradients must already be in
// Param::grad.
FdReport fd_check_params(const std::function<double()>& loss,
                         const std::vector<ParamGroup*>& groups, double h,
                         std::size_t max_coords_per_tensor, Rng& rng);

}  // namespace gap::nn
