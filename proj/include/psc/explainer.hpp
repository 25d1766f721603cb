#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "psc/gnn.hpp"

namespace psc {

/// Why one node was classified the way it was: per-feature importance in
/// [0,1], the retained subgraph, and how far the masked prediction moved.
struct Explanation {
	int node = 0;
	std::vector<double> feature_importance; // one score per model input column
	std::vector<int> subgraph_nodes;	// always contains `node`; sorted
	std::vector<std::pair<int, int>> kept_edges;
	double fidelity = 0.0; // |p_original − p_masked|
	std::string contract;  // feature columns the scores refer to
};

struct ExplainConfig {
	int iterations = 200;
	double lambda_feature = 0.1; // L1 weight on the feature mask
	double lambda_edge = 0.05;   // L1 weight on the edge mask
	double learning_rate = 0.1;
	uint64_t seed = 0;
};

/// Learns sigmoid feature and edge masks over the node's 2-hop neighborhood
/// by gradient descent on BCE(p_masked, original label) plus L1 mask
/// penalties. Masks start at 0.5 plus small seeded noise; normalization
/// coefficients stay frozen from the full graph. Edges keep their place in
/// the hard subgraph when the final mask is ≥ 0.5 (inclusive).
/// Deterministic per seed.
Explanation explain_node(const GcnModel &model, const Cdfg &g, const Matrix &x, int node,
			 const ExplainConfig &cfg = {});

/// Cross-node aggregation: per-feature average importance and average
/// within-explanation rank (1 = most important).
struct GlobalRanking {
	std::vector<std::string> feature; // column names, index order
	std::vector<double> avg_score;
	std::vector<double> avg_rank;

	/// Feature indices sorted by avg_rank ascending, ties by avg_score
	/// descending, final ties by index.
	std::vector<int> order;
};

GlobalRanking aggregate_importance(const std::vector<Explanation> &explanations);

/// The top-k features of a ranking, as column indices plus the reduced
/// comma-joined contract; reduction = (F−k)/F.
struct FeatureReduction {
	std::vector<int> kept; // column indices into the original contract
	std::string contract;
	double reduction = 0.0;
};

FeatureReduction reduce_features(const GlobalRanking &ranking, int k = 3);

/// Column indices of each name in `contract` within the full 7-column
/// contract; rejects unknown names.
std::vector<int> contract_indices(const std::string &contract);

/// Copies the named columns out of a full-width matrix.
Matrix select_columns(const Matrix &x, const std::vector<int> &cols);

/// {feature_scores, fidelity, kept_edges: [[src,dst]…], node_id, subgraph_nodes}.
std::string explanation_to_json(const Explanation &e);

/// CSV rows `feature,avg_score,avg_rank` in ranking order.
std::string ranking_to_csv(const GlobalRanking &r);

} // namespace psc
