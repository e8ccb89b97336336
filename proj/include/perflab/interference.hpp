#pragma once

#include "perflab/common.hpp"
#include "perflab/estimators.hpp"
#include "perflab/predictors.hpp"
#include "perflab/scm.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace perflab {

/// Undirected graph without self-loops given as sorted adjacency lists.
struct Network {
  std::vector<std::vector<Index>> neighbors;
  nlohmann::json construction;

  Index size() const { return static_cast<Index>(neighbors.size()); }

  /// Throws DomainError unless adjacency is symmetric, loop-free and every
  /// node has a neighbour.
  void validate() const;
};

enum class NetworkMethod { knn, clone_groups };

struct NetworkSpec {
  NetworkMethod method = NetworkMethod::knn;
  Index k = 10;
  Index group_size = 3;
};

/// Covariates laid out on a network. For clone groups the rows are the input
/// rows repeated `group_size` times and `source_rows` maps back to the input.
struct NetworkSample {
  Network network;
  Matrix x;
  std::vector<Index> source_rows;
};

/// knn: Euclidean k nearest neighbours (ties to the lower index), symmetrized
/// by union. clone-groups: every input row becomes a clique of identical copies.
NetworkSample build_homophilous_network(const Matrix& covariates, const NetworkSpec& spec, std::uint64_t seed = 0);

/// Centre node 0 joined to `leaves` leaf nodes.
Network star_network(Index leaves);

/// Neighbour mean of `values` for every node.
Vector neighbor_mean(const Network& network, const Vector& values);

/// max_i |mean_{j in N(i)} yhat_j - yhat_i|.
double measure_homophily_delta(const Network& network, const Vector& predictions);

struct LinearInMeansConfig {
  BaseFunction g1 = LinearBase{};
  double alpha = 1.0;
  double beta_spill = 0.0;
  NoiseSpec noise;

  OutcomeMechanism mechanism() const;
  /// Non-fatal notes, e.g. when alpha > beta > 0 does not hold.
  std::vector<std::string> warnings() const;
};

/// y_i = g1(x_i) + alpha yhat_i + beta G_i + noise with G the neighbour mean of
/// the predictions. Draws use the same streams as generate_dataset, so beta = 0
/// reproduces its outcomes exactly for the same covariates.
Dataset simulate_linear_in_means(const Network& network, const Matrix& x, const Predictor& predictor,
                                 const LinearInMeansConfig& config, const SeedPlan& seeds,
                                 const std::string& label = "data", const std::vector<Index>& source_rows = {});

/// Expected outcomes for fixed predictions (no noise).
Vector expected_linear_in_means(const Network& network, const Matrix& x, const Vector& yhat,
                                const LinearInMeansConfig& config);

struct InterferenceComparison {
  double coef_yhat_without_g = 0.0;
  double se_yhat_without_g = 0.0;
  std::optional<double> coef_yhat_with_g;
  std::optional<double> coef_g;
  bool without_g_rank_deficient = false;
  bool with_g_skipped = false;  // yhat and G collinear
};

InterferenceComparison fit_and_compare_interference(const Dataset& data);

/// Paired counterfactual re-simulation at `node`: the effect on its expected
/// outcome of switching only its own prediction (unilateral) versus switching
/// every node's prediction (population) from `old_yhat` to `new_yhat`.
struct SpilloverContrast {
  Index node = 0;
  double unilateral_effect = 0.0;
  double population_effect = 0.0;
};

SpilloverContrast unilateral_vs_population(const Network& network, const Matrix& x, const Vector& old_yhat,
                                           const Vector& new_yhat, const LinearInMeansConfig& config, Index node);

/// Edge list with header `source,target`, one row per undirected edge (i < j).
void write_network_csv(const Network& network, const std::string& path);
Network read_network_csv(const std::string& path, Index nodes);

void to_json(nlohmann::json& j, const InterferenceComparison& c);

}  // namespace perflab
