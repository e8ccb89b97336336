#include "perflab/interference.hpp"

#include "perflab/csv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace perflab {

void Network::validate() const {
  const Index n = size();
  for (Index i = 0; i < n; ++i) {
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) throw DomainError("node " + std::to_string(i) + " has no neighbours");
    for (Index j : nb) {
      if (j == i) throw DomainError("node " + std::to_string(i) + " has a self-loop");
      if (j < 0 || j >= n) throw DomainError("edge to missing node " + std::to_string(j));
      const auto& back = neighbors[static_cast<std::size_t>(j)];
      if (!std::binary_search(back.begin(), back.end(), i))
        throw DomainError("edge " + std::to_string(i) + "-" + std::to_string(j) + " is not symmetric");
    }
  }
}

NetworkSample build_homophilous_network(const Matrix& covariates, const NetworkSpec& spec, std::uint64_t seed) {
  const Index n = covariates.rows();
  if (n < 1) throw DomainError("network needs covariates");
  NetworkSample out;
  if (spec.method == NetworkMethod::clone_groups) {
    if (spec.group_size < 2) throw DomainError("clone groups need group_size >= 2 so every node has a neighbour");
    const Index g = spec.group_size;
    out.x.resize(n * g, covariates.cols());
    out.network.neighbors.resize(static_cast<std::size_t>(n * g));
    for (Index r = 0; r < n; ++r) {
      for (Index a = 0; a < g; ++a) {
        const Index node = r * g + a;
        out.x.row(node) = covariates.row(r);
        out.source_rows.push_back(r);
        auto& nb = out.network.neighbors[static_cast<std::size_t>(node)];
        for (Index b = 0; b < g; ++b)
          if (b != a) nb.push_back(r * g + b);
      }
    }
    out.network.construction = {{"method", "clone-groups"}, {"group_size", g}, {"seed", seed}};
    return out;
  }
  if (n < 2) throw DomainError("knn network needs at least two nodes");
  if (spec.k < 1 || spec.k >= n) throw DomainError("knn needs 1 <= k < n (k = " + std::to_string(spec.k) + ")");
  out.x = covariates;
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  // Exact search: sweep outward along the first coordinate and stop once its
  // gap alone exceeds the current k-th distance.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return covariates(a, 0) < covariates(b, 0); });
  std::vector<Index> rank(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;
  std::vector<std::pair<double, Index>> best;
  for (Index i = 0; i < n; ++i) {
    best.clear();
    const Index ri = rank[static_cast<std::size_t>(i)];
    const double xi = covariates(i, 0);
    auto offer = [&](Index j) {
      const std::pair<double, Index> cand{(covariates.row(i) - covariates.row(j)).squaredNorm(), j};
      if (static_cast<Index>(best.size()) < spec.k) {
        best.push_back(cand);
        std::push_heap(best.begin(), best.end());
      } else if (cand < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = cand;
        std::push_heap(best.begin(), best.end());
      }
    };
    auto open = [&](Index r) {
      if (r < 0 || r >= n) return false;
      if (static_cast<Index>(best.size()) < spec.k) return true;
      const double gap = covariates(order[static_cast<std::size_t>(r)], 0) - xi;
      return gap * gap <= best.front().first;
    };
    Index lo = ri - 1, hi = ri + 1;
    bool left = open(lo), right = open(hi);
    while (left || right) {
      if (left) offer(order[static_cast<std::size_t>(lo--)]);
      if (right) offer(order[static_cast<std::size_t>(hi++)]);
      left = left && open(lo);
      right = right && open(hi);
    }
    for (const auto& [d2, j] : best) {
      adj[static_cast<std::size_t>(i)].push_back(j);
      adj[static_cast<std::size_t>(j)].push_back(i);
    }
  }
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  out.network.neighbors = std::move(adj);
  out.network.construction = {{"method", "knn"}, {"k", spec.k}, {"symmetrized", "union"}, {"seed", seed}};
  return out;
}

Network star_network(Index leaves) {
  if (leaves < 1) throw DomainError("star needs at least one leaf");
  Network net;
  net.neighbors.resize(static_cast<std::size_t>(leaves + 1));
  for (Index l = 1; l <= leaves; ++l) {
    net.neighbors[0].push_back(l);
    net.neighbors[static_cast<std::size_t>(l)].push_back(0);
  }
  net.construction = {{"method", "star"}, {"leaves", leaves}};
  return net;
}

Vector neighbor_mean(const Network& network, const Vector& values) {
  if (values.size() != network.size()) throw DimensionError("values and network size differ");
  Vector out(values.size());
  for (Index i = 0; i < network.size(); ++i) {
    const auto& nb = network.neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) throw DomainError("node " + std::to_string(i) + " has an empty neighbourhood");
    double s = 0.0;
    for (Index j : nb) s += values[j];
    out[i] = s / static_cast<double>(nb.size());
  }
  return out;
}

double measure_homophily_delta(const Network& network, const Vector& predictions) {
  return (neighbor_mean(network, predictions) - predictions).cwiseAbs().maxCoeff();
}

OutcomeMechanism LinearInMeansConfig::mechanism() const {
  OutcomeMechanism m;
  m.id = "linear-in-means";
  m.base = g1;
  m.performativity = LinearPerformativity{alpha};
  m.noise = noise;
  m.validate();
  return m;
}

std::vector<std::string> LinearInMeansConfig::warnings() const {
  std::vector<std::string> w;
  if (!(alpha > beta_spill && beta_spill > 0.0))
    w.push_back("alpha > beta > 0 does not hold (alpha = " + format_double(alpha) + ", beta = " +
                format_double(beta_spill) + ")");
  return w;
}

Vector expected_linear_in_means(const Network& network, const Matrix& x, const Vector& yhat,
                                const LinearInMeansConfig& config) {
  if (x.rows() != network.size() || yhat.size() != network.size())
    throw DimensionError("network size, covariates and predictions differ");
  return config.mechanism().expected(x, yhat) + config.beta_spill * neighbor_mean(network, yhat);
}

Dataset simulate_linear_in_means(const Network& network, const Matrix& x, const Predictor& predictor,
                                 const LinearInMeansConfig& config, const SeedPlan& seeds, const std::string& label,
                                 const std::vector<Index>& source_rows) {
  if (x.rows() != network.size())
    throw DimensionError("network has " + std::to_string(network.size()) + " nodes but there are " +
                         std::to_string(x.rows()) + " covariate rows");
  if (predictor.input_dim() != x.cols()) throw DimensionError("predictor and covariate dimensions differ");
  const OutcomeMechanism mech = config.mechanism();
  Dataset data;
  data.x = x;
  data.source_rows = source_rows;
  Rng rp(seeds.stream(label + "/yhat"));
  data.yhat = predictor.predict(x, rp);
  const Vector g = neighbor_mean(network, data.yhat);
  data.y = draw_outcomes(mech, x, data.yhat, source_rows, seeds, label);
  if (config.beta_spill != 0.0) data.y += config.beta_spill * g;
  data.exposure = g;
  data.validate();
  data.provenance.predictor_id = predictor.id();
  data.provenance.mechanism = mech;
  data.provenance.mechanism["beta_spill"] = config.beta_spill;
  data.provenance.mechanism["network"] = network.construction;
  data.provenance.master_seed = seeds.master();
  data.provenance.n = x.rows();
  data.provenance.stream_label = label;
  return data;
}

InterferenceComparison fit_and_compare_interference(const Dataset& data) {
  if (!data.exposure) throw DimensionError("dataset has no exposure column G");
  InterferenceComparison out;
  const FittedModel without = fit_meta_model(data, HypothesisClass::linear(true));
  out.coef_yhat_without_g = without.yhat_coefficient();
  out.se_yhat_without_g = without.yhat_std_error();
  out.without_g_rank_deficient = without.diagnostics.rank_deficient;
  HypothesisClass with_cls = HypothesisClass::linear(true);
  with_cls.include_exposure = true;
  const FittedModel with = fit_meta_model(data, with_cls);
  if (with.diagnostics.rank_deficient) {
    out.with_g_skipped = true;
  } else {
    out.coef_yhat_with_g = with.yhat_coefficient();
    out.coef_g = with.exposure_coefficient();
  }
  return out;
}

SpilloverContrast unilateral_vs_population(const Network& network, const Matrix& x, const Vector& old_yhat,
                                           const Vector& new_yhat, const LinearInMeansConfig& config, Index node) {
  if (node < 0 || node >= network.size()) throw DomainError("node index out of range");
  if (old_yhat.size() != network.size() || new_yhat.size() != network.size())
    throw DimensionError("prediction vectors and network size differ");
  Vector unilateral = old_yhat;
  unilateral[node] = new_yhat[node];
  const double base = expected_linear_in_means(network, x, old_yhat, config)[node];
  SpilloverContrast c;
  c.node = node;
  c.unilateral_effect = expected_linear_in_means(network, x, unilateral, config)[node] - base;
  c.population_effect = expected_linear_in_means(network, x, new_yhat, config)[node] - base;
  return c;
}

void write_network_csv(const Network& network, const std::string& path) {
  std::string text = "source,target\n";
  for (Index i = 0; i < network.size(); ++i)
    for (Index j : network.neighbors[static_cast<std::size_t>(i)])
      if (i < j) text += std::to_string(i) + "," + std::to_string(j) + "\n";
  write_text_file(path, text);
}

Network read_network_csv(const std::string& path, Index nodes) {
  const NumericCsv csv = read_numeric_csv(path);
  if (csv.columns.size() != 2) throw DomainError("'" + path + "' must have columns source,target");
  Network net;
  net.neighbors.resize(static_cast<std::size_t>(nodes));
  for (Index r = 0; r < csv.values.rows(); ++r) {
    const auto a = static_cast<Index>(csv.values(r, 0));
    const auto b = static_cast<Index>(csv.values(r, 1));
    if (a < 0 || b < 0 || a >= nodes || b >= nodes) throw DomainError("edge row " + std::to_string(r + 1) + " is out of range");
    net.neighbors[static_cast<std::size_t>(a)].push_back(b);
    net.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& nb : net.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  net.construction = {{"method", "edge-list"}, {"path", path}};
  net.validate();
  return net;
}

void to_json(nlohmann::json& j, const InterferenceComparison& c) {
  j = {{"coef_yhat_without_G", c.coef_yhat_without_g},
       {"se_yhat_without_G", c.se_yhat_without_g},
       {"coef_yhat_with_G", c.coef_yhat_with_g ? nlohmann::json(*c.coef_yhat_with_g) : nlohmann::json()},
       {"coef_G", c.coef_g ? nlohmann::json(*c.coef_g) : nlohmann::json()},
       {"without_G_rank_deficient", c.without_g_rank_deficient},
       {"with_G_skipped", c.with_g_skipped}};
}

}  // namespace perflab
