#include "gap/nn/layers.hpp"

#include <cmath>

namespace gap::nn {

const char* tag_name(Tag t) {
  switch (t) {
    case Tag::vision: return "vision";
    case Tag::proprio: return "proprio";
    case Tag::head: return "head";
    case Tag::indicator: return "indicator";
  }
  return "head";
}

Tag tag_from_name(const std::string& s) {
  if (s == "vision") return Tag::vision;
  if (s == "proprio") return Tag::proprio;
  if (s == "head") return Tag::head;
  if (s == "indicator") return Tag::indicator;
  throw ArgumentError("unknown parameter-group tag: " + s);
}

ParamPtr ParamGroup::find(const std::string& pname) const {
  for (const auto& p : params)
    if (p->name == pname) return p;
  return nullptr;
}

Affine::Affine(const std::string& prefix, std::size_t in, std::size_t out) {
  W = std::make_shared<Param>(prefix + ".w", Tensor{in, out});
  b = std::make_shared<Param>(prefix + ".b", Tensor{out});
}

void Affine::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  for (double& w : W->value.v) w = rng.uniform(-bound, bound);
  for (double& x : b->value.v) x = rng.uniform(-bound, bound);
}

Tensor Affine::forward(const Tensor& x) {
  if (x.cols() != in_dim()) throw ArgumentError("affine: input dim mismatch");
  x_ = x;
  const std::size_t B = x.rows(), in = in_dim(), out = out_dim();
  Tensor y{B, out};
  const double* wv = W->value.v.data();
  for (std::size_t r = 0; r < B; ++r) {
    double* yr = &y.v[r * out];
    for (std::size_t o = 0; o < out; ++o) yr[o] = b->value.v[o];
    const double* xr = &x.v[r * in];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;  // grid observations are mostly zero
      const double* wrow = wv + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wrow[o];
    }
  }
  return y;
}

Tensor Affine::backward(const Tensor& dy) {
  const std::size_t B = x_.rows(), in = in_dim(), out = out_dim();
  if (dy.rows() != B || dy.cols() != out)
    throw ArgumentError("affine backward: gradient shape mismatch");
  double* dwv = W->grad.v.data();
  const double* wv = W->value.v.data();
  if (!compute_dx) {
    for (std::size_t r = 0; r < B; ++r) {
      const double* dyr = &dy.v[r * out];
      const double* xr = &x_.v[r * in];
      for (std::size_t o = 0; o < out; ++o) b->grad.v[o] += dyr[o];
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = xr[i];
        if (xi == 0.0) continue;
        double* dwrow = dwv + i * out;
        for (std::size_t o = 0; o < out; ++o) dwrow[o] += xi * dyr[o];
      }
    }
    return Tensor{};
  }
  Tensor dx{B, in};
  for (std::size_t r = 0; r < B; ++r) {
    const double* dyr = &dy.v[r * out];
    const double* xr = &x_.v[r * in];
    double* dxr = &dx.v[r * in];
    for (std::size_t o = 0; o < out; ++o) b->grad.v[o] += dyr[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wrow = wv + i * out;
      double* dwrow = dwv + i * out;
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        acc += dyr[o] * wrow[o];
        dwrow[o] += xi * dyr[o];
      }
      dxr[i] = acc;
    }
  }
  return dx;
}

Tensor Relu::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (double& v : y.v)
    if (v < 0.0) v = 0.0;
  return y;
}

Tensor Relu::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    if (x_.v[i] <= 0.0) dx.v[i] = 0.0;
  return dx;
}

Tensor Tanh::forward(const Tensor& x) {
  y_ = x;
  for (double& v : y_.v) v = std::tanh(v);
  return y_;
}

Tensor Tanh::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    dx.v[i] *= 1.0 - y_.v[i] * y_.v[i];
  return dx;
}

double sigmoid_scalar(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor Sigmoid::forward(const Tensor& x) {
  y_ = x;
  for (double& v : y_.v) v = sigmoid_scalar(v);
  return y_;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    dx.v[i] *= y_.v[i] * (1.0 - y_.v[i]);
  return dx;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ArgumentError("concat: row count mismatch");
  const std::size_t B = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor y{B, ca + cb};
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t c = 0; c < ca; ++c) y.v[r * (ca + cb) + c] = a.v[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c)
      y.v[r * (ca + cb) + ca + c] = b.v[r * cb + c];
  }
  return y;
}

void split_cols(const Tensor& d, std::size_t ca, Tensor& da, Tensor& db) {
  const std::size_t B = d.rows(), c = d.cols(), cb = c - ca;
  da = Tensor{B, ca};
  db = Tensor{B, cb};
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t i = 0; i < ca; ++i) da.v[r * ca + i] = d.v[r * c + i];
    for (std::size_t i = 0; i < cb; ++i) db.v[r * cb + i] = d.v[r * c + ca + i];
  }
}

Lstm::Lstm(const std::string& prefix, std::size_t in, std::size_t hidden) {
  Wx = std::make_shared<Param>(prefix + ".wx", Tensor{in, 4 * hidden});
  Wh = std::make_shared<Param>(prefix + ".wh", Tensor{hidden, 4 * hidden});
  b = std::make_shared<Param>(prefix + ".b", Tensor{4 * hidden});
}

void Lstm::init_uniform(Rng& rng) {
  const double bx = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  const double bh = 1.0 / std::sqrt(static_cast<double>(hidden_dim()));
  for (double& w : Wx->value.v) w = rng.uniform(-bx, bx);
  for (double& w : Wh->value.v) w = rng.uniform(-bh, bh);
  b->value.zero();
  const std::size_t H = hidden_dim();
  for (std::size_t k = H; k < 2 * H; ++k) b->value.v[k] = 1.0;
}

Tensor Lstm::forward(const Tensor& x) {
  if (x.cols() != in_dim()) throw ArgumentError("lstm: input dim mismatch");
  const std::size_t T = x.rows(), in = in_dim(), H = hidden_dim();
  x_ = x;
  gi_ = Tensor{T, H};
  gf_ = Tensor{T, H};
  gc_ = Tensor{T, H};
  go_ = Tensor{T, H};
  c_ = Tensor{T, H};
  tanhc_ = Tensor{T, H};
  h_ = Tensor{T, H};

  std::vector<double> z(4 * H);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < 4 * H; ++k) z[k] = b->value.v[k];
    const double* xt = &x.v[t * in];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xt[i];
      const double* wrow = &Wx->value.v[i * 4 * H];
      for (std::size_t k = 0; k < 4 * H; ++k) z[k] += xi * wrow[k];
    }
    if (t > 0) {
      const double* hp = &h_.v[(t - 1) * H];
      for (std::size_t j = 0; j < H; ++j) {
        const double hj = hp[j];
        const double* wrow = &Wh->value.v[j * 4 * H];
        for (std::size_t k = 0; k < 4 * H; ++k) z[k] += hj * wrow[k];
      }
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double i_g = sigmoid_scalar(z[j]);
      const double f_g = sigmoid_scalar(z[H + j]);
      const double c_g = std::tanh(z[2 * H + j]);
      const double o_g = sigmoid_scalar(z[3 * H + j]);
      const double c_prev = t > 0 ? c_.v[(t - 1) * H + j] : 0.0;
      const double c_now = f_g * c_prev + i_g * c_g;
      gi_.v[t * H + j] = i_g;
      gf_.v[t * H + j] = f_g;
      gc_.v[t * H + j] = c_g;
      go_.v[t * H + j] = o_g;
      c_.v[t * H + j] = c_now;
      tanhc_.v[t * H + j] = std::tanh(c_now);
      h_.v[t * H + j] = o_g * tanhc_.v[t * H + j];
    }
  }
  return h_;
}

Tensor Lstm::backward(const Tensor& dh_out) {
  const std::size_t T = x_.rows(), in = in_dim(), H = hidden_dim();
  if (dh_out.rows() != T || dh_out.cols() != H)
    throw ArgumentError("lstm backward: gradient shape mismatch");
  Tensor dx{T, in};
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(4 * H);

  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t j = 0; j < H; ++j) {
      const double i_g = gi_.v[t * H + j];
      const double f_g = gf_.v[t * H + j];
      const double c_g = gc_.v[t * H + j];
      const double o_g = go_.v[t * H + j];
      const double th = tanhc_.v[t * H + j];
      const double c_prev = t > 0 ? c_.v[(t - 1) * H + j] : 0.0;

      const double dh = dh_out.v[t * H + j] + dh_next[j];
      const double dc = dc_next[j] + dh * o_g * (1.0 - th * th);

      dz[j] = dc * c_g * i_g * (1.0 - i_g);
      dz[H + j] = dc * c_prev * f_g * (1.0 - f_g);
      dz[2 * H + j] = dc * i_g * (1.0 - c_g * c_g);
      dz[3 * H + j] = dh * th * o_g * (1.0 - o_g);

      dc_next[j] = dc * f_g;
    }

    for (std::size_t k = 0; k < 4 * H; ++k) b->grad.v[k] += dz[k];
    const double* xt = &x_.v[t * in];
    for (std::size_t i = 0; i < in; ++i) {
      const double* wrow = &Wx->value.v[i * 4 * H];
      double* dwrow = &Wx->grad.v[i * 4 * H];
      double acc = 0.0;
      for (std::size_t k = 0; k < 4 * H; ++k) {
        acc += dz[k] * wrow[k];
        dwrow[k] += xt[i] * dz[k];
      }
      dx.v[t * in + i] = acc;
    }
    if (t > 0) {
      const double* hp = &h_.v[(t - 1) * H];
      for (std::size_t j = 0; j < H; ++j) {
        const double* wrow = &Wh->value.v[j * 4 * H];
        double* dwrow = &Wh->grad.v[j * 4 * H];
        double acc = 0.0;
        for (std::size_t k = 0; k < 4 * H; ++k) {
          acc += dz[k] * wrow[k];
          dwrow[k] += hp[j] * dz[k];
        }
        dh_next[j] = acc;
      }
    }
  }
  return dx;
}

}  // namespace gap::nn
