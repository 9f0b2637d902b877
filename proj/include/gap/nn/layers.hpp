#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gap/nn/rng.hpp"
#include "gap/nn/tensor.hpp"

namespace gap::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.zero(); }
};

using ParamPtr = std::shared_ptr<Param>;

enum class Tag { vision, proprio, head, indicator };

const char* tag_name(Tag t);
Tag tag_from_name(const std::string& s);

struct ParamGroup {
  std::string name;
  Tag tag = Tag::head;
  std::vector<ParamPtr> params;

  void zero_grad() {
    for (auto& p : params) p->zero_grad();
  }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p->value.numel();
    return n;
  }
  ParamPtr find(const std::string& pname) const;
};

// y = x . W + b with W stored {in, out}.
class Affine {
public:
  Affine() = default;
  Affine(const std::string& prefix, std::size_t in, std::size_t out);

  void init_uniform(Rng& rng);  // uniform in +-1/sqrt(fan_in)

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);  // accumulates dW, db; returns dx

  std::size_t in_dim() const { return W->value.shape[0]; }
  std::size_t out_dim() const { return W->value.shape[1]; }

  // First layers whose input gradient nobody consumes can skip it; with
  // sparse grid inputs this also skips the matching dW rows.
  bool compute_dx = true;

  ParamPtr W, b;

private:
  Tensor x_;
};

struct Relu {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

private:
  Tensor x_;
};

struct Tanh {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

private:
  Tensor y_;
};

struct Sigmoid {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

private:
  Tensor y_;
};

// Row-wise concatenation [a | b] and its adjoint.
Tensor concat_cols(const Tensor& a, const Tensor& b);
void split_cols(const Tensor& d, std::size_t ca, Tensor& da, Tensor& db);

double sigmoid_scalar(double z);

// Single-layer LSTM run over one sequence (T x in) from a zero initial
// state.  Gate order in the packed weights is [input, forget, candidate,
// output].  backward() is full BPTT and accumulates parameter gradients.
class Lstm {
public:
  Lstm() = default;
  Lstm(const std::string& prefix, std::size_t in, std::size_t hidden);

  void init_uniform(Rng& rng);  // forget-gate bias starts at 1

  Tensor forward(const Tensor& x);      // returns T x H hidden states
  Tensor backward(const Tensor& dh);    // dh: T x H; returns T x in

  std::size_t in_dim() const { return Wx->value.shape[0]; }
  std::size_t hidden_dim() const { return Wh->value.shape[0]; }

  ParamPtr Wx, Wh, b;

private:
  Tensor x_, gi_, gf_, gc_, go_, c_, tanhc_, h_;
};

}  // namespace gap::nn
