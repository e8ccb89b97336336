#include "perflab/neural.hpp"

#include "perflab/rng.hpp"

#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace perflab {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Adam moment buffers for one parameter block.
struct AdamSlot {
  Matrix m, v;
  explicit AdamSlot(Index rows = 0, Index cols = 0)
      : m(Matrix::Zero(rows, cols)), v(Matrix::Zero(rows, cols)) {}
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

template <typename Param, typename Grad>
void adam_update(Param& param, const Grad& grad, AdamSlot& slot, double lr, double c1, double c2) {
  slot.m = kBeta1 * slot.m + (1.0 - kBeta1) * grad;
  slot.v = kBeta2 * slot.v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  param.array() -= lr * (slot.m.array() / c1) / ((slot.v.array() / c2).sqrt() + kEps);
}

void column_moments(const Matrix& x, Vector& mean, Vector& scale) {
  const Index n = x.rows();
  mean = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - mean[j]).square().sum() / static_cast<double>(std::max<Index>(n, 1));
    scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

// Residuals out(z) - t of the standardized network as a function of the packed
// parameters (w1 column-major, b1, w2, b2, skip).
struct NetResiduals : Eigen::DenseFunctor<double> {
  const RowMajorMatrix& z;
  const Vector& t;
  Index hidden_inputs, units;
  bool bypass;

  NetResiduals(const RowMajorMatrix& z_, const Vector& t_, Index hidden, Index u, bool b)
      : DenseFunctor(static_cast<int>(hidden * u + 2 * u + 1 + (b ? 1 : 0)), static_cast<int>(z_.rows())),
        z(z_), t(t_), hidden_inputs(hidden), units(u), bypass(b) {}

  Matrix hidden(const InputType& p) const {
    const Eigen::Map<const Matrix> w1(p.data(), hidden_inputs, units);
    Matrix h = z.leftCols(hidden_inputs) * w1;
    h.rowwise() += p.segment(hidden_inputs * units, units).transpose();
    return h.array().tanh();
  }

  int operator()(const InputType& p, ValueType& r) const {
    const Index off = hidden_inputs * units + units;
    r = hidden(p) * p.segment(off, units);
    r.array() += p[off + units];
    if (bypass) r += p[off + units + 1] * z.col(hidden_inputs);
    r -= t;
    return 0;
  }

  int df(const InputType& p, JacobianType& jac) const {
    const Index off = hidden_inputs * units + units;
    const Matrix h = hidden(p);
    jac.resize(z.rows(), inputs());
    for (Index k = 0; k < units; ++k) {
      const Vector dk = p[off + k] * (1.0 - h.col(k).array().square());
      for (Index j = 0; j < hidden_inputs; ++j)
        jac.col(k * hidden_inputs + j) = dk.cwiseProduct(z.col(j));
      jac.col(hidden_inputs * units + k) = dk;
      jac.col(off + k) = h.col(k);
    }
    jac.col(off + units).setOnes();
    if (bypass) jac.col(off + units + 1) = z.col(hidden_inputs);
    return 0;
  }
};

void fit_levenberg_marquardt(NeuralNet& net, const RowMajorMatrix& z, const Vector& t, const TrainConfig& config,
                             TrainReport& report) {
  const Index hidden_inputs = net.w1.rows(), units = net.w1.cols();
  NetResiduals f(z, t, hidden_inputs, units, net.linear_last_input);
  Vector p(f.inputs());
  const Index off = hidden_inputs * units + units;
  p.head(hidden_inputs * units) = Eigen::Map<const Vector>(net.w1.data(), hidden_inputs * units);
  p.segment(hidden_inputs * units, units) = net.b1;
  p.segment(off, units) = net.w2;
  p[off + units] = net.b2;
  if (net.linear_last_input) p[off + units + 1] = net.skip;

  Eigen::LevenbergMarquardt<NetResiduals> lm(f);
  lm.setMaxfev(config.epochs);
  lm.setFtol(config.tolerance);
  lm.setXtol(config.tolerance);
  lm.minimize(p);

  net.w1 = Eigen::Map<const Matrix>(p.data(), hidden_inputs, units);
  net.b1 = p.segment(hidden_inputs * units, units);
  net.w2 = p.segment(off, units);
  net.b2 = p[off + units];
  if (net.linear_last_input) net.skip = p[off + units + 1];

  Vector r(z.rows());
  f(p, r);
  const double loss = r.squaredNorm() / static_cast<double>(z.rows());
  if (!std::isfinite(loss)) throw Error("network training diverged");
  report.epochs_run = static_cast<int>(lm.iterations());
  report.final_loss = loss;
  report.epoch_losses.push_back(loss);
}

}  // namespace

Vector NeuralNet::predict(const Matrix& inputs) const {
  if (inputs.cols() != input_dim())
    throw DimensionError("network expects " + std::to_string(input_dim()) + " inputs, got " +
                         std::to_string(inputs.cols()));
  const Matrix z = (inputs.rowwise() - in_mean.transpose()).array().rowwise() / in_scale.transpose().array();
  const Index hidden_inputs = linear_last_input ? z.cols() - 1 : z.cols();
  Matrix pre = z.leftCols(hidden_inputs) * w1;
  pre.rowwise() += b1.transpose();
  Vector out = pre.array().tanh().matrix() * w2;
  out.array() += b2;
  if (linear_last_input) out += skip * z.col(z.cols() - 1);
  return (out.array() * out_scale + out_mean).matrix();
}

double NeuralNet::raw_skip_coefficient() const {
  if (!linear_last_input) return 0.0;
  return skip * out_scale / in_scale[in_scale.size() - 1];
}

NeuralNet fit_network(const Matrix& inputs, const Vector& targets, Index units,
                      const TrainConfig& config, bool linear_last_input, TrainReport* report) {
  const Index n = inputs.rows();
  if (n != targets.size()) throw DimensionError("inputs and targets differ in length");
  if (n < 1) throw DomainError("cannot train on an empty dataset");
  if (units < 1) throw DomainError("network needs at least one hidden unit");
  if (linear_last_input && inputs.cols() < 2)
    throw DimensionError("a bypass column needs at least one other input");
  if (config.epochs < 1 || config.batch < 1 || !(config.step > 0.0))
    throw DomainError("train config needs epochs >= 1, batch >= 1, step > 0");

  NeuralNet net;
  net.linear_last_input = linear_last_input;
  column_moments(inputs, net.in_mean, net.in_scale);
  net.out_mean = targets.mean();
  {
    const double var = (targets.array() - net.out_mean).square().mean();
    net.out_scale = std::sqrt(var);
  }

  RowMajorMatrix z = (inputs.rowwise() - net.in_mean.transpose()).array().rowwise() /
                     net.in_scale.transpose().array();
  const Vector t = net.out_scale > 0.0 ? Vector((targets.array() - net.out_mean) / net.out_scale)
                                       : Vector(Vector::Zero(targets.size()));
  const Index hidden_inputs = linear_last_input ? inputs.cols() - 1 : inputs.cols();

  Rng rng(config.init_seed);
  net.w1.resize(hidden_inputs, units);
  for (Index k = 0; k < units; ++k)
    for (Index j = 0; j < hidden_inputs; ++j)
      net.w1(j, k) = rng.normal() / std::sqrt(static_cast<double>(hidden_inputs));
  net.b1 = Vector::Zero(units);
  net.w2.resize(units);
  for (Index k = 0; k < units; ++k) net.w2[k] = rng.normal() / std::sqrt(static_cast<double>(units));
  net.b2 = 0.0;
  net.skip = 0.0;

  // Constant targets: out_scale is zero and the network returns out_mean.
  if (net.out_scale == 0.0) {
    if (report) *report = TrainReport{};
    return net;
  }

  if (config.optimizer == Optimizer::levenberg_marquardt) {
    TrainReport local;
    fit_levenberg_marquardt(net, z, t, config, local);
    if (report) *report = std::move(local);
    return net;
  }

  AdamSlot s_w1(hidden_inputs, units), s_b1(units, 1), s_w2(units, 1), s_b2(1, 1), s_skip(1, 1);
  Matrix b2m(1, 1), skipm(1, 1);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  const Index batch = std::min<Index>(config.batch, n);
  Matrix xb(batch, hidden_inputs);
  Vector lastb(batch), tb(batch);
  long long step_count = 0;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  TrainReport local;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the library RNG so the order is platform independent.
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double loss_sum = 0.0;
    for (Index start = 0; start < n; start += batch) {
      const Index bsz = std::min(batch, n - start);
      if (xb.rows() != bsz) {
        xb.resize(bsz, hidden_inputs);
        lastb.resize(bsz);
        tb.resize(bsz);
      }
      for (Index r = 0; r < bsz; ++r) {
        const Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = z.row(src).head(hidden_inputs);
        if (linear_last_input) lastb[r] = z(src, hidden_inputs);
        tb[r] = t[src];
      }
      Matrix h = xb * net.w1;
      h.rowwise() += net.b1.transpose();
      h = h.array().tanh();
      Vector out = h * net.w2;
      out.array() += net.b2;
      if (linear_last_input) out += net.skip * lastb;
      const Vector err = out - tb;
      loss_sum += err.squaredNorm();

      const Vector e = err / static_cast<double>(bsz);
      const Vector g_w2 = h.transpose() * e;
      b2m(0, 0) = e.sum();
      const Matrix dh = (e * net.w2.transpose()).array() * (1.0 - h.array().square());
      const Matrix g_w1 = xb.transpose() * dh;
      const Vector g_b1 = dh.colwise().sum().transpose();

      ++step_count;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count));
      adam_update(net.w1, g_w1, s_w1, config.step, c1, c2);
      adam_update(net.b1, g_b1, s_b1, config.step, c1, c2);
      adam_update(net.w2, g_w2, s_w2, config.step, c1, c2);
      Matrix b2p(1, 1);
      b2p(0, 0) = net.b2;
      adam_update(b2p, b2m, s_b2, config.step, c1, c2);
      net.b2 = b2p(0, 0);
      if (linear_last_input) {
        skipm(0, 0) = e.dot(lastb);
        Matrix sp(1, 1);
        sp(0, 0) = net.skip;
        adam_update(sp, skipm, s_skip, config.step, c1, c2);
        net.skip = sp(0, 0);
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw Error("network training diverged at epoch " + std::to_string(epoch + 1));
    local.epoch_losses.push_back(epoch_loss);
    local.epochs_run = epoch + 1;
    local.final_loss = epoch_loss;
    if (epoch_loss < best - config.tolerance) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= config.patience) {
      local.early_stopped = true;
      break;
    }
  }
  if (report) *report = std::move(local);
  return net;
}

NLOHMANN_JSON_SERIALIZE_ENUM(Optimizer, {{Optimizer::adam, "adam"}, {Optimizer::levenberg_marquardt, "levenberg-marquardt"}})

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"optimizer", c.optimizer}, {"epochs", c.epochs}, {"step", c.step},           {"batch", c.batch},
       {"init_seed", c.init_seed}, {"tolerance", c.tolerance}, {"patience", c.patience}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.optimizer = j.value("optimizer", d.optimizer);
  c.epochs = j.value("epochs", d.epochs);
  c.step = j.value("step", d.step);
  c.batch = j.value("batch", d.batch);
  c.init_seed = j.value("init_seed", d.init_seed);
  c.tolerance = j.value("tolerance", d.tolerance);
  c.patience = j.value("patience", d.patience);
}

namespace {
std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}
}  // namespace

void to_json(nlohmann::json& j, const NeuralNet& n) {
  std::vector<std::vector<double>> w1;
  for (Index r = 0; r < n.w1.rows(); ++r) w1.push_back(to_std(n.w1.row(r).transpose()));
  j = {{"w1", w1},
       {"b1", to_std(n.b1)},
       {"w2", to_std(n.w2)},
       {"b2", n.b2},
       {"linear_last_input", n.linear_last_input},
       {"skip", n.skip},
       {"in_mean", to_std(n.in_mean)},
       {"in_scale", to_std(n.in_scale)},
       {"out_mean", n.out_mean},
       {"out_scale", n.out_scale}};
}

void from_json(const nlohmann::json& j, NeuralNet& n) {
  const auto w1 = j.at("w1").get<std::vector<std::vector<double>>>();
  n.b1 = from_std(j.at("b1").get<std::vector<double>>());
  n.w2 = from_std(j.at("w2").get<std::vector<double>>());
  n.w1.resize(static_cast<Index>(w1.size()), n.b1.size());
  for (std::size_t r = 0; r < w1.size(); ++r) {
    if (static_cast<Index>(w1[r].size()) != n.b1.size()) throw DimensionError("ragged w1 in network json");
    for (std::size_t k = 0; k < w1[r].size(); ++k) n.w1(static_cast<Index>(r), static_cast<Index>(k)) = w1[r][k];
  }
  n.b2 = j.at("b2").get<double>();
  n.linear_last_input = j.value("linear_last_input", false);
  n.skip = j.value("skip", 0.0);
  n.in_mean = from_std(j.at("in_mean").get<std::vector<double>>());
  n.in_scale = from_std(j.at("in_scale").get<std::vector<double>>());
  n.out_mean = j.at("out_mean").get<double>();
  n.out_scale = j.at("out_scale").get<double>();
}

}  // namespace perflab
