#include "gap/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gap::nn {

FdReport fd_check_buffer(const std::function<double()>& loss, double* x,
                         const double* analytic, std::size_t n, double h,
                         std::size_t max_coords, Rng& rng,
                         const std::string& label) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (max_coords < n) {
    rng.shuffle(idx);
    idx.resize(max_coords);
  }

  FdReport rep;
  for (const std::size_t i : idx) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = loss();
    x[i] = saved - h;
    const double fm = loss();
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel =
        std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst = label + "[" + std::to_string(i) + "]";
    }
    ++rep.checked;
  }
  return rep;
}

FdReport fd_check_params(const std::function<double()>& loss,
                         const std::vector<ParamGroup*>& groups, double h,
                         std::size_t max_coords_per_tensor, Rng& rng) {
  FdReport rep;
  for (ParamGroup* g : groups)
    for (const ParamPtr& p : g->params)
      rep.absorb(fd_check_buffer(loss, p->value.v.data(), p->grad.v.data(),
                                 p->value.v.size(), h, max_coords_per_tensor,
                                 rng, p->name));
  return rep;
}

}  // namespace gap::nn
