#include "gap/indicator.hpp"

#include <algorithm>
#include <cmath>

#include "gap/nn/checkpoint.hpp"
#include "gap/nn/loss.hpp"
#include "gap/nn/optimizer.hpp"
#include "gap/nn/rng.hpp"

namespace gap::ind {

IndicatorLabels build_labels(const std::vector<int>& indices, int n, int window,
                             double w_low) {
  if (window < 0) throw ArgumentError("build_labels: window must be >= 0");
  if (!(w_low > 0.0 && w_low <= 1.0))
    throw ArgumentError("build_labels: w_low must be in (0,1]");
  for (const int i : indices)
    if (i < 1 || i > n - 1)
      throw ArgumentError("build_labels: index " + std::to_string(i) +
                          " outside {1..N-1}");
  IndicatorLabels lab;
  lab.window = window;
  lab.w_low = w_low;
  lab.targets.assign(static_cast<std::size_t>(n), 0.0);
  lab.weights.assign(static_cast<std::size_t>(n), 1.0);
  for (int t = 0; t < n; ++t) {
    int dist = n;  // distance to the nearest change index
    for (const int i : indices) dist = std::min(dist, std::abs(t - i));
    if (indices.empty()) dist = n;
    if (dist == 0)
      lab.targets[static_cast<std::size_t>(t)] = 1.0;
    else if (dist <= window)
      lab.weights[static_cast<std::size_t>(t)] = w_low;
  }
  return lab;
}

nn::Tensor delta_tensor(const traj::Trajectory& t) {
  const std::vector<traj::Motion> deltas = traj::delta_sequence(t);
  const std::size_t dim = deltas[0].dp.size() + deltas[0].dtheta.size() + 1;
  nn::Tensor x{deltas.size(), dim};
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    std::size_t c = 0;
    for (const double v : deltas[i].dp) x.at(i, c++) = v;
    for (const double v : deltas[i].dtheta) x.at(i, c++) = v;
    x.at(i, c) = deltas[i].dg;
  }
  return x;
}

namespace {

nn::Tensor normalize(const nn::Tensor& x, const std::vector<double>& mean,
                     const std::vector<double>& sd) {
  nn::Tensor y = x;
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      y.at(r, c) = (x.at(r, c) - mean[c]) / sd[c];
  return y;
}

constexpr double kRhoFloor = 1e-15;

double clamp_rho(double r) {
  return std::clamp(r, kRhoFloor, 1.0 - kRhoFloor);
}

}  // namespace

nn::ParamGroup IndicatorModel::group() const {
  nn::ParamGroup g;
  g.name = "indicator";
  g.tag = nn::Tag::indicator;
  g.params = {lstm.Wx, lstm.Wh, lstm.b, readout.W, readout.b};
  auto add_vec = [&](const std::string& name, const std::vector<double>& v) {
    nn::Tensor t{v.size()};
    t.v = v;
    g.params.push_back(std::make_shared<nn::Param>(name, std::move(t)));
  };
  add_vec("norm.mean", norm_mean);
  add_vec("norm.std", norm_std);
  return g;
}

IndicatorModel train_indicator(const std::vector<LabeledDeltas>& data,
                               const IndicatorHyper& hyper) {
  if (data.empty()) throw ArgumentError("train_indicator: empty data");
  const std::size_t dim = data[0].first.cols();
  for (const auto& [deltas, labels] : data) {
    if (deltas.cols() != dim)
      throw ArgumentError("train_indicator: inconsistent delta dimensions");
    if (labels.targets.size() != deltas.rows() + 1)
      throw ArgumentError("train_indicator: labels must cover N = T+1 states");
  }

  IndicatorModel m;
  m.input_dim = static_cast<int>(dim);
  m.hidden_dim = hyper.hidden_dim;
  m.norm_mean.assign(dim, 0.0);
  m.norm_std.assign(dim, 0.0);
  std::size_t count = 0;
  for (const auto& [deltas, labels] : data) {
    for (std::size_t r = 0; r < deltas.rows(); ++r)
      for (std::size_t c = 0; c < dim; ++c) m.norm_mean[c] += deltas.at(r, c);
    count += deltas.rows();
  }
  for (double& v : m.norm_mean) v /= static_cast<double>(count);
  for (const auto& [deltas, labels] : data)
    for (std::size_t r = 0; r < deltas.rows(); ++r)
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = deltas.at(r, c) - m.norm_mean[c];
        m.norm_std[c] += d * d;
      }
  for (double& v : m.norm_std) {
    v = std::sqrt(v / static_cast<double>(count));
    if (v == 0.0) v = 1.0;
  }

  nn::Rng rng(hyper.seed);
  const std::size_t H = static_cast<std::size_t>(hyper.hidden_dim);
  m.lstm = nn::Lstm("lstm", dim, H);
  m.lstm.init_uniform(rng);
  m.readout = nn::Affine("readout", H, 1);
  m.readout.init_uniform(rng);

  nn::ParamGroup train_group;
  train_group.name = "indicator";
  train_group.tag = nn::Tag::indicator;
  train_group.params = {m.lstm.Wx, m.lstm.Wh, m.lstm.b, m.readout.W,
                        m.readout.b};
  nn::Optimizer opt(nn::OptKind::adam, hyper.lr);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t bs = std::max(1, hyper.batch_size);
  nn::WeightedBceLoss loss_fn;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_raw = 0.0;
    std::size_t epoch_terms = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      std::size_t terms = 0;
      for (std::size_t k = start; k < stop; ++k)
        terms += data[order[k]].first.rows();
      const double scale = 1.0 / static_cast<double>(terms);

      train_group.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& [deltas, labels] = data[order[k]];
        const std::size_t T = deltas.rows();
        const nn::Tensor h = m.lstm.forward(normalize(deltas, m.norm_mean, m.norm_std));
        const nn::Tensor z = m.readout.forward(h);
        std::vector<double> logits(T), y(T), w(T);
        for (std::size_t i = 0; i < T; ++i) {
          logits[i] = z.v[i];
          y[i] = labels.targets[i + 1];  // output i predicts state i+1
          w[i] = labels.weights[i + 1];
        }
        batch_loss += loss_fn.forward(logits, y, w, scale);
        const std::vector<double> dz = loss_fn.backward();
        nn::Tensor dzt{T, 1};
        dzt.v = dz;
        m.lstm.backward(m.readout.backward(dzt));
      }
      if (!std::isfinite(batch_loss))
        throw TrainingError("train_indicator: non-finite loss at epoch " +
                            std::to_string(epoch));
      opt.step(train_group, 1.0);
      epoch_raw += batch_loss * static_cast<double>(terms);
      epoch_terms += terms;
    }
    m.loss_curve.push_back(epoch_raw / static_cast<double>(epoch_terms));
  }
  m.epochs_trained = hyper.epochs;
  m.final_loss = m.loss_curve.empty() ? 0.0 : m.loss_curve.back();
  return m;
}

IndicatorSeries predict_rho(IndicatorModel& m, const traj::Trajectory& t) {
  const nn::Tensor deltas = delta_tensor(t);
  if (static_cast<int>(deltas.cols()) != m.input_dim)
    throw ArgumentError("predict_rho: delta dimension mismatches model input");
  const nn::Tensor h = m.lstm.forward(normalize(deltas, m.norm_mean, m.norm_std));
  const nn::Tensor z = m.readout.forward(h);
  IndicatorSeries s;
  s.source = RhoSource::learned;
  const std::size_t T = deltas.rows();
  s.values.assign(T + 1, 0.0);
  for (std::size_t i = 0; i < T; ++i)
    s.values[i + 1] = clamp_rho(nn::sigmoid_scalar(z.v[i]));
  s.values[0] = s.values[1];
  return s;
}

IndicatorSeries smooth_rho(const std::vector<int>& indices, int n, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("smooth_rho: sigma must be > 0");
  for (const int i : indices)
    if (i < 0 || i > n - 1)
      throw ArgumentError("smooth_rho: index outside trajectory");
  IndicatorSeries s;
  s.source = RhoSource::smooth;
  s.values.assign(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < n; ++t) {
    double best = 0.0;
    for (const int i : indices) {
      const double d = static_cast<double>(t - i);
      best = std::max(best, std::exp(-d * d / (2.0 * sigma * sigma)));
    }
    s.values[static_cast<std::size_t>(t)] = best;
  }
  return s;
}

IndicatorSeries fixed_rho(double value, int n) {
  if (!(value >= 0.0 && value <= 1.0))
    throw ArgumentError("fixed_rho: value must be in [0,1]");
  IndicatorSeries s;
  s.source = RhoSource::fixed;
  s.values.assign(static_cast<std::size_t>(n), value);
  return s;
}

void save_indicator(const IndicatorModel& m, const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "indicator";
  meta["input_dim"] = m.input_dim;
  meta["hidden_dim"] = m.hidden_dim;
  meta["epochs_trained"] = m.epochs_trained;
  meta["final_loss"] = m.final_loss;
  nn::save_checkpoint({m.group()}, meta, path);
}

IndicatorModel load_indicator(const std::string& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.groups.size() != 1 || ck.meta.value("kind", "") != "indicator")
    throw FormatError(path + ": not an indicator checkpoint");
  const nn::ParamGroup& g = ck.groups[0];
  IndicatorModel m;
  m.input_dim = ck.meta.at("input_dim").get<int>();
  m.hidden_dim = ck.meta.at("hidden_dim").get<int>();
  m.epochs_trained = ck.meta.value("epochs_trained", 0);
  m.final_loss = ck.meta.value("final_loss", 0.0);
  m.lstm = nn::Lstm("lstm", static_cast<std::size_t>(m.input_dim),
                    static_cast<std::size_t>(m.hidden_dim));
  m.readout = nn::Affine("readout", static_cast<std::size_t>(m.hidden_dim), 1);
  auto take = [&](const nn::ParamPtr& dst) {
    const nn::ParamPtr src = g.find(dst->name);
    if (!src || !src->value.same_shape(dst->value))
      throw FormatError(path + ": missing or misshaped tensor " + dst->name);
    dst->value = src->value;
  };
  take(m.lstm.Wx);
  take(m.lstm.Wh);
  take(m.lstm.b);
  take(m.readout.W);
  take(m.readout.b);
  const nn::ParamPtr mean = g.find("norm.mean");
  const nn::ParamPtr sd = g.find("norm.std");
  if (!mean || !sd) throw FormatError(path + ": missing normalizer tensors");
  m.norm_mean = mean->value.v;
  m.norm_std = sd->value.v;
  return m;
}

}  // namespace gap::ind
