#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psc/cdfg.hpp"
#include "psc/features.hpp"
#include "psc/matrix.hpp"
#include "psc/rng.hpp"

namespace psc {

/// Graph skeleton the network propagates over: node count plus weighted
/// edges. Edge order is part of the contract — aggregation adds the self
/// term first, then walks this list in order, so renumbering nodes while
/// keeping edge order permutes outputs bit-exactly.
struct GnnGraph {
	struct Edge {
		int src = 0;
		int dst = 0;
		double weight = 1.0;
	};

	size_t n = 0;
	std::vector<Edge> edges;
};

GnnGraph graph_from_cdfg(const Cdfg &g);

/// One application of the normalized adjacency with self-loops:
/// Â = D̃^(-1/2) (A + I) D̃^(-1/2), treated as symmetric (every stored edge
/// aggregates in both directions). The explainer builds custom instances
/// with frozen coefficients scaled by its edge mask.
struct Propagator {
	size_t n = 0;
	std::vector<double> self_coeff; // per node

	struct Arc {
		int src = 0;
		int dst = 0;
		double coeff = 0.0;
	};
	std::vector<Arc> arcs;

	/// Â·M. Adds each node's self term first, then arc contributions in
	/// stored order (both directions per arc).
	Matrix apply(const Matrix &m) const;
};

Propagator make_propagator(const GnnGraph &g);

/// Two graph-convolution layers and a sigmoid read-out neuron.
struct GcnModel {
	int input_dim = 7;
	int hidden = 16;
	Matrix w1; // input_dim × hidden
	std::vector<double> b1;
	Matrix w2; // hidden × hidden
	std::vector<double> b2;
	std::vector<double> w_out; // hidden
	double b_out = 0.0;

	/// Feature columns the model expects, comma-joined; matrices with a
	/// different column set are refused.
	std::string contract;

	/// Training-time normalization, replayed on raw features at inference.
	NormalizationRecord norm;

	uint64_t seed = 0;
	bool trained = false;
};

/// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases;
/// bitwise-deterministic per seed.
GcnModel init_model(int input_dim, int hidden, uint64_t seed);

struct TrainConfig {
	double learning_rate = 0.01;
	int batch_size = 20;
	double dropout = 0.3;
	int epochs = 32;
	double threshold = 0.5;
	uint64_t seed = 0;

	/// Plain SGD by default; Adam opt-in.
	bool adam = false;

	/// Weight the positive class by (#negative / #positive).
	bool class_weighting = false;

	void validate() const; // throws ConfigError
};

/// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
	Matrix x;	      // input features
	Matrix s;	      // Â·x
	Matrix z1, h1, d1;    // pre-activation, ReLU, dropout of layer 1
	Matrix s2;	      // Â·d1
	Matrix z2, h2, d2;    // layer 2
	std::vector<double> logits;
	std::vector<double> prob;
	Matrix drop1, drop2; // scaled dropout masks; empty at inference
};

/// Full forward pass. When train_mode, inverted dropout at dropout_rate is
/// drawn from *rng on h1 and h2.
ForwardCache gcn_forward(const GcnModel &m, const Propagator &prop, const Matrix &x, bool train_mode,
			 double dropout_rate, Rng *rng);

/// Per-node leak probabilities for a design graph. Inference path
/// (train_mode=false) consumes no randomness.
std::vector<double> forward(const GcnModel &m, const Cdfg &g, const Matrix &x, bool train_mode = false,
			    uint64_t dropout_seed = 0, double dropout_rate = 0.3);

struct GcnGradients {
	Matrix w1;
	std::vector<double> b1;
	Matrix w2;
	std::vector<double> b2;
	std::vector<double> w_out;
	double b_out = 0.0;

	/// Filled when requested: loss gradient w.r.t. the input features and
	/// w.r.t. each propagator arc coefficient (for mask learning).
	Matrix x;
	std::vector<double> arc_coeff;
};

/// Backpropagation from dL/dlogits through the cached forward pass.
GcnGradients gcn_backward(const GcnModel &m, const Propagator &prop, const ForwardCache &f,
			  const std::vector<double> &dlogits, bool want_input_grads = false);

struct TrainResult {
	GcnModel model;
	std::vector<double> loss_history; // one entry per optimizer step
};

/// Mini-batch training: every step runs a full-graph forward pass, but only
/// the nodes of the current batch contribute to the loss and gradients.
/// History has epochs × ceil(N / batch_size) entries. Throws
/// SingleClassLabels when labels lack a class and NonFiniteLoss (carrying
/// the partial history) on divergence.
TrainResult train(const GcnModel &m, const Cdfg &g, const Matrix &x, const std::vector<int> &labels,
		  const TrainConfig &cfg);

struct Prediction {
	std::vector<double> probability;
	std::vector<int> label; // 1 = leaky; probability ≥ threshold
	double threshold = 0.5;
};

/// Dropout-free inference; label = leaky iff probability ≥ threshold.
Prediction predict(const GcnModel &m, const Cdfg &g, const Matrix &x, double threshold = 0.5);

/// Max relative error between analytic gradients and central finite
/// differences of the full-batch BCE loss, over every parameter:
/// |a−n| / max(1e-8, |a|+|n|). Dropout is off.
double gradient_check(const GcnModel &m, const Cdfg &g, const Matrix &x, const std::vector<int> &labels,
		      double epsilon = 1e-5);

/// FeatureMatrix rows as a dense N×7 matrix.
Matrix to_matrix(const FeatureMatrix &m);

/// Versioned binary container: magic, version, JSON header (dims, feature
/// contract, normalization record, seed), then little-endian f64 weight
/// arrays. Round-trips bit-exactly.
void save_model(const GcnModel &m, const std::string &path);
GcnModel load_model(const std::string &path);

} // namespace psc
