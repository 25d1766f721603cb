#include "psc/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "psc/errors.hpp"

namespace psc {

namespace {

double sigmoid(double z)
{
	if (z >= 0) {
		return 1.0 / (1.0 + std::exp(-z));
	}
	double e = std::exp(z);
	return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

/// Nodes within `hops` undirected steps of `start`.
std::set<int> neighborhood(const Cdfg &g, int start, int hops)
{
	std::set<int> ball = {start};
	std::set<int> frontier = {start};
	for (int step = 0; step < hops; ++step) {
		std::set<int> next;
		for (const auto &e : g.edges) {
			if (frontier.count(e.src) && !ball.count(e.dst)) {
				next.insert(e.dst);
			}
			if (frontier.count(e.dst) && !ball.count(e.src)) {
				next.insert(e.src);
			}
		}
		ball.insert(next.begin(), next.end());
		frontier = std::move(next);
	}
	return ball;
}

} // namespace

Explanation explain_node(const GcnModel &model, const Cdfg &g, const Matrix &x, int node, const ExplainConfig &cfg)
{
	if (!model.trained) {
		throw UntrainedModel();
	}
	if (node < 0 || size_t(node) >= g.nodes.size()) {
		throw UnknownNode(node);
	}
	if (cfg.iterations < 1 || !(cfg.learning_rate > 0)) {
		throw ConfigError("explainer needs at least one iteration and a positive learning rate");
	}

	GnnGraph full = graph_from_cdfg(g);
	Propagator full_prop = make_propagator(full);
	double p_original = gcn_forward(model, full_prop, x, false, 0.0, nullptr).prob[size_t(node)];
	double label = p_original >= 0.5 ? 1.0 : 0.0;

	// Two graph-convolution layers see exactly the 2-hop neighborhood.
	std::set<int> ball = neighborhood(g, node, 2);
	std::vector<int> sub_nodes(ball.begin(), ball.end());
	std::map<int, size_t> sub_index;
	for (size_t i = 0; i < sub_nodes.size(); ++i) {
		sub_index[sub_nodes[i]] = i;
	}

	struct SubArc {
		int src, dst;	    // original node ids
		size_t k;	    // index into full_prop.arcs
		double frozen;	    // full-graph coefficient
	};
	std::vector<SubArc> sub_arcs;
	for (size_t k = 0; k < full_prop.arcs.size(); ++k) {
		const auto &a = full_prop.arcs[k];
		if (ball.count(a.src) && ball.count(a.dst)) {
			sub_arcs.push_back({a.src, a.dst, k, a.coeff});
		}
	}

	Matrix x_sub(sub_nodes.size(), x.cols);
	for (size_t i = 0; i < sub_nodes.size(); ++i) {
		for (size_t c = 0; c < x.cols; ++c) {
			x_sub.at(i, c) = x.at(size_t(sub_nodes[i]), c);
		}
	}

	// Latent mask parameters; the masks themselves are their sigmoids,
	// initialized at 0.5 plus small noise.
	Rng rng(derive_seed(cfg.seed, "mask-init", uint64_t(node)));
	auto noisy_init = [&rng]() { return logit(0.5 + (rng.next_double() - 0.5) * 0.1); };
	std::vector<double> theta_f(x.cols);
	for (double &t : theta_f) {
		t = noisy_init();
	}
	std::vector<double> theta_e(sub_arcs.size());
	for (double &t : theta_e) {
		t = noisy_init();
	}

	Propagator prop;
	prop.n = sub_nodes.size();
	prop.self_coeff.resize(sub_nodes.size());
	for (size_t i = 0; i < sub_nodes.size(); ++i) {
		prop.self_coeff[i] = full_prop.self_coeff[size_t(sub_nodes[i])];
	}
	prop.arcs.resize(sub_arcs.size());

	size_t target = sub_index.at(node);
	auto masked_forward = [&]() {
		Matrix x_masked = x_sub;
		for (size_t i = 0; i < x_masked.rows; ++i) {
			for (size_t c = 0; c < x_masked.cols; ++c) {
				x_masked.at(i, c) *= sigmoid(theta_f[c]);
			}
		}
		for (size_t k = 0; k < sub_arcs.size(); ++k) {
			prop.arcs[k] = {int(sub_index.at(sub_arcs[k].src)), int(sub_index.at(sub_arcs[k].dst)),
					sub_arcs[k].frozen * sigmoid(theta_e[k])};
		}
		return gcn_forward(model, prop, x_masked, false, 0.0, nullptr);
	};

	for (int iter = 0; iter < cfg.iterations; ++iter) {
		ForwardCache f = masked_forward();
		double p_masked = f.prob[target];

		std::vector<double> dlogits(prop.n, 0.0);
		dlogits[target] = p_masked - label;
		GcnGradients grads = gcn_backward(model, prop, f, dlogits, true);

		for (size_t c = 0; c < theta_f.size(); ++c) {
			double m = sigmoid(theta_f[c]);
			double dm = 0;
			for (size_t i = 0; i < x_sub.rows; ++i) {
				dm += grads.x.at(i, c) * x_sub.at(i, c);
			}
			dm += cfg.lambda_feature;
			theta_f[c] -= cfg.learning_rate * dm * m * (1.0 - m);
		}
		for (size_t k = 0; k < theta_e.size(); ++k) {
			double m = sigmoid(theta_e[k]);
			double dm = grads.arc_coeff[k] * sub_arcs[k].frozen + cfg.lambda_edge;
			theta_e[k] -= cfg.learning_rate * dm * m * (1.0 - m);
		}
	}

	double p_final = masked_forward().prob[target];

	Explanation e;
	e.node = node;
	e.contract = model.contract;
	for (double t : theta_f) {
		e.feature_importance.push_back(sigmoid(t));
	}
	e.subgraph_nodes = sub_nodes;
	for (size_t k = 0; k < sub_arcs.size(); ++k) {
		if (sigmoid(theta_e[k]) >= 0.5) {
			e.kept_edges.emplace_back(sub_arcs[k].src, sub_arcs[k].dst);
		}
	}
	e.fidelity = std::abs(p_original - p_final);
	return e;
}

GlobalRanking aggregate_importance(const std::vector<Explanation> &explanations)
{
	if (explanations.empty()) {
		throw EmptyInput("no explanations to aggregate");
	}
	const std::string &contract = explanations.front().contract;
	size_t nf = explanations.front().feature_importance.size();
	for (const auto &e : explanations) {
		if (e.contract != contract || e.feature_importance.size() != nf) {
			throw MixedContracts("explanations use different feature contracts");
		}
	}

	GlobalRanking r;
	{
		std::string rest = contract;
		while (!rest.empty()) {
			size_t comma = rest.find(',');
			r.feature.push_back(rest.substr(0, comma));
			rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
		}
	}
	if (r.feature.size() != nf) {
		r.feature.clear();
		for (size_t i = 0; i < nf; ++i) {
			r.feature.push_back("f" + std::to_string(i));
		}
	}

	r.avg_score.assign(nf, 0.0);
	r.avg_rank.assign(nf, 0.0);
	for (const auto &e : explanations) {
		std::vector<size_t> by_score(nf);
		for (size_t i = 0; i < nf; ++i) {
			by_score[i] = i;
		}
		std::stable_sort(by_score.begin(), by_score.end(), [&](size_t a, size_t b) {
			return e.feature_importance[a] > e.feature_importance[b];
		});
		for (size_t pos = 0; pos < nf; ++pos) {
			r.avg_rank[by_score[pos]] += double(pos + 1);
		}
		for (size_t i = 0; i < nf; ++i) {
			r.avg_score[i] += e.feature_importance[i];
		}
	}
	for (size_t i = 0; i < nf; ++i) {
		r.avg_score[i] /= double(explanations.size());
		r.avg_rank[i] /= double(explanations.size());
	}

	r.order.resize(nf);
	for (size_t i = 0; i < nf; ++i) {
		r.order[i] = int(i);
	}
	std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
		if (r.avg_rank[size_t(a)] != r.avg_rank[size_t(b)]) {
			return r.avg_rank[size_t(a)] < r.avg_rank[size_t(b)];
		}
		if (r.avg_score[size_t(a)] != r.avg_score[size_t(b)]) {
			return r.avg_score[size_t(a)] > r.avg_score[size_t(b)];
		}
		return a < b;
	});
	return r;
}

FeatureReduction reduce_features(const GlobalRanking &ranking, int k)
{
	int nf = int(ranking.order.size());
	if (k < 1 || k > nf) {
		throw ConfigError("feature reduction k must be in [1, " + std::to_string(nf) + "]");
	}
	FeatureReduction red;
	for (int i = 0; i < k; ++i) {
		red.kept.push_back(ranking.order[size_t(i)]);
	}
	for (int idx : red.kept) {
		if (!red.contract.empty()) {
			red.contract += ',';
		}
		red.contract += ranking.feature[size_t(idx)];
	}
	red.reduction = double(nf - k) / double(nf);
	return red;
}

std::vector<int> contract_indices(const std::string &contract)
{
	std::vector<int> out;
	std::string rest = contract;
	while (!rest.empty()) {
		size_t comma = rest.find(',');
		std::string name = rest.substr(0, comma);
		rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
		int found = -1;
		for (size_t i = 0; i < kFeatureColumns.size(); ++i) {
			if (name == kFeatureColumns[i]) {
				found = int(i);
				break;
			}
		}
		if (found < 0) {
			throw ConfigError("unknown feature column '" + name + "'");
		}
		out.push_back(found);
	}
	if (out.empty()) {
		throw ConfigError("empty feature contract");
	}
	return out;
}

Matrix select_columns(const Matrix &x, const std::vector<int> &cols)
{
	Matrix out(x.rows, cols.size());
	for (size_t i = 0; i < x.rows; ++i) {
		for (size_t j = 0; j < cols.size(); ++j) {
			out.at(i, j) = x.at(i, size_t(cols[j]));
		}
	}
	return out;
}

std::string explanation_to_json(const Explanation &e)
{
	nlohmann::json j;
	j["node_id"] = e.node;
	j["feature_scores"] = e.feature_importance;
	j["subgraph_nodes"] = e.subgraph_nodes;
	nlohmann::json edges = nlohmann::json::array();
	for (const auto &[s, d] : e.kept_edges) {
		edges.push_back({s, d});
	}
	j["kept_edges"] = edges;
	j["fidelity"] = e.fidelity;
	return j.dump(2);
}

std::string ranking_to_csv(const GlobalRanking &r)
{
	std::string out = "feature,avg_score,avg_rank\n";
	for (int idx : r.order) {
		char buf[64];
		std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g", r.feature[size_t(idx)].c_str(),
			      r.avg_score[size_t(idx)], r.avg_rank[size_t(idx)]);
		out += buf;
		out += '\n';
	}
	return out;
}

} // namespace psc
