#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "psc/errors.hpp"
#include "psc/gnn.hpp"

using namespace psc;

namespace {

Cdfg make_graph(size_t n, const std::vector<std::pair<int, int>> &edges)
{
	Cdfg g;
	for (size_t i = 0; i < n; ++i) {
		CdfgNode node;
		node.id = int(i);
		node.kind = CdfgKind::AS;
		node.label = "m." + std::to_string(i) + ":AS";
		g.nodes.push_back(node);
	}
	for (const auto &[s, d] : edges) {
		g.edges.push_back({s, d, 1.0});
	}
	return g;
}

Matrix random_features(size_t n, size_t cols, uint64_t seed)
{
	Rng rng(seed);
	Matrix x(n, cols);
	for (double &v : x.data) {
		v = rng.next_double() * 2.0 - 1.0;
	}
	return x;
}

/// Two 100-node chains; the second chain carries the positive class with
/// strongly separated paths/hamming columns.
struct ClusterFixture {
	Cdfg graph;
	Matrix x;
	std::vector<int> labels;
};

ClusterFixture cluster_fixture()
{
	ClusterFixture fx;
	std::vector<std::pair<int, int>> edges;
	for (int i = 0; i + 1 < 100; ++i) {
		edges.push_back({i, i + 1});
		edges.push_back({100 + i, 100 + i + 1});
	}
	fx.graph = make_graph(200, edges);
	fx.x = Matrix(200, 7);
	Rng rng(derive_seed(99, "cluster-jitter"));
	for (size_t i = 0; i < 200; ++i) {
		bool leaky = i >= 100;
		double jitter = (rng.next_double() - 0.5) * 0.2;
		fx.x.at(i, 0) = (leaky ? 2.0 : -2.0) + jitter; // paths
		fx.x.at(i, 1) = 0.1;			       // degree
		fx.x.at(i, 2) = (leaky ? 2.0 : -2.0) - jitter; // hamming
		fx.x.at(i, 3) = leaky ? 1.0 : 0.0;	       // xor bit
		fx.labels.push_back(leaky ? 1 : 0);
	}
	return fx;
}

/// Weights that classify the cluster fixture perfectly: pass the paths
/// column through both layers and read it out with a confident margin.
GcnModel separating_model()
{
	GcnModel m = init_model(7, 16, 1);
	for (double &v : m.w1.data) {
		v = 0;
	}
	for (double &v : m.w2.data) {
		v = 0;
	}
	for (double &v : m.w_out) {
		v = 0;
	}
	m.w1.at(0, 0) = 1.0; // paths → hidden unit 0
	m.w2.at(0, 0) = 1.0;
	m.b1.assign(16, 0.0);
	m.b2.assign(16, 0.0);
	m.w_out[0] = 10.0;
	m.b_out = -5.0;
	m.trained = true;
	return m;
}

double accuracy(const std::vector<int> &pred, const std::vector<int> &truth)
{
	size_t hits = 0;
	for (size_t i = 0; i < pred.size(); ++i) {
		hits += size_t(pred[i] == truth[i]);
	}
	return double(hits) / double(pred.size());
}

std::string temp_path(const char *name)
{
	return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("model init is deterministic per seed and shaped correctly")
{
	GcnModel a = init_model(7, 16, 42);
	GcnModel b = init_model(7, 16, 42);
	CHECK(a.w1.data == b.w1.data);
	CHECK(a.w2.data == b.w2.data);
	CHECK(a.w_out == b.w_out);
	CHECK(a.w1.rows == 7);
	CHECK(a.w1.cols == 16);
	CHECK(a.w2.rows == 16);
	CHECK(a.w_out.size() == 16);
	CHECK(a.b1 == std::vector<double>(16, 0.0));
	CHECK(a.b_out == 0.0);

	GcnModel c = init_model(7, 16, 43);
	CHECK(a.w1.data != c.w1.data);

	double limit = std::sqrt(6.0 / (7 + 16));
	for (double v : a.w1.data) {
		CHECK(std::abs(v) <= limit);
	}
	CHECK_THROWS_AS(init_model(0, 16, 1), ConfigError);
}

TEST_CASE("zero weights give probability one half everywhere")
{
	Cdfg g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
	GcnModel m = init_model(7, 8, 5);
	for (double &v : m.w1.data) {
		v = 0;
	}
	for (double &v : m.w2.data) {
		v = 0;
	}
	for (double &v : m.w_out) {
		v = 0;
	}
	std::vector<double> p = forward(m, g, random_features(4, 7, 11));
	for (double v : p) {
		CHECK(v == 0.5);
	}
}

TEST_CASE("forward rejects mismatched shapes")
{
	Cdfg g = make_graph(3, {{0, 1}});
	GcnModel m = init_model(7, 8, 5);
	CHECK_THROWS_AS(forward(m, g, random_features(2, 7, 1)), ShapeMismatch);
	CHECK_THROWS_AS(forward(m, g, random_features(3, 6, 1)), ShapeMismatch);
}

TEST_CASE("node permutation permutes outputs bit-exactly")
{
	Cdfg g = make_graph(6, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}, {4, 5}, {1, 5}});
	Matrix x = random_features(6, 7, 17);
	GcnModel m = init_model(7, 16, 3);
	std::vector<double> base = forward(m, g, x);

	std::vector<int> perm = {3, 0, 5, 1, 4, 2}; // node i → perm[i]
	Cdfg pg;
	pg.nodes.resize(6);
	for (size_t i = 0; i < 6; ++i) {
		CdfgNode node;
		node.id = perm[i];
		pg.nodes[size_t(perm[i])] = node;
	}
	for (const auto &e : g.edges) { // same order, renamed endpoints
		pg.edges.push_back({perm[size_t(e.src)], perm[size_t(e.dst)], e.weight});
	}
	Matrix px(6, 7);
	for (size_t i = 0; i < 6; ++i) {
		for (size_t c = 0; c < 7; ++c) {
			px.at(size_t(perm[i]), c) = x.at(i, c);
		}
	}
	std::vector<double> permuted = forward(m, pg, px);
	for (size_t i = 0; i < 6; ++i) {
		CHECK(permuted[size_t(perm[i])] == base[i]); // bitwise
	}
}

TEST_CASE("isolated node depends only on its own feature row")
{
	Cdfg g = make_graph(3, {{0, 1}}); // node 2 isolated
	Matrix x = random_features(3, 7, 23);
	GcnModel m = init_model(7, 16, 7);
	std::vector<double> p = forward(m, g, x);

	// Same row pushed through a single-node graph gives the same answer.
	Cdfg solo = make_graph(1, {});
	Matrix row(1, 7);
	for (size_t c = 0; c < 7; ++c) {
		row.at(0, c) = x.at(2, c);
	}
	CHECK(forward(m, solo, row)[0] == doctest::Approx(p[2]).epsilon(1e-12));

	// Perturbing other rows leaves the isolated node untouched.
	Matrix x2 = x;
	x2.at(0, 0) += 100;
	x2.at(1, 3) -= 50;
	CHECK(forward(m, g, x2)[2] == p[2]);
}

TEST_CASE("hand-set weights separate the cluster fixture perfectly")
{
	ClusterFixture fx = cluster_fixture();
	Prediction p = predict(separating_model(), fx.graph, fx.x);
	CHECK(accuracy(p.label, fx.labels) == 1.0);
}

TEST_CASE("training reaches high accuracy on the separable fixture")
{
	ClusterFixture fx = cluster_fixture();
	TrainConfig cfg;
	cfg.seed = 2024;
	TrainResult r = train(init_model(7, 16, cfg.seed), fx.graph, fx.x, fx.labels, cfg);
	CHECK(r.loss_history.size() == size_t(32 * 10)); // epochs × ceil(200/20)

	Prediction p = predict(r.model, fx.graph, fx.x);
	CHECK(accuracy(p.label, fx.labels) >= 0.95);
	CHECK(r.model.trained);

	// Mean loss falls from the first epoch to the last.
	auto epoch_mean = [&](size_t epoch) {
		double sum = 0;
		for (size_t i = 0; i < 10; ++i) {
			sum += r.loss_history[epoch * 10 + i];
		}
		return sum / 10;
	};
	CHECK(epoch_mean(31) < epoch_mean(0));
}

TEST_CASE("training is deterministic per seed")
{
	ClusterFixture fx = cluster_fixture();
	TrainConfig cfg;
	cfg.epochs = 3;
	cfg.seed = 7;
	TrainResult a = train(init_model(7, 16, 7), fx.graph, fx.x, fx.labels, cfg);
	TrainResult b = train(init_model(7, 16, 7), fx.graph, fx.x, fx.labels, cfg);
	CHECK(a.model.w1.data == b.model.w1.data);
	CHECK(a.model.w2.data == b.model.w2.data);
	CHECK(a.model.w_out == b.model.w_out);
	CHECK(a.model.b_out == b.model.b_out);
	CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("training config invariants are enforced")
{
	ClusterFixture fx = cluster_fixture();
	GcnModel m = init_model(7, 16, 1);
	TrainConfig cfg;
	cfg.epochs = 0;
	CHECK_THROWS_AS(train(m, fx.graph, fx.x, fx.labels, cfg), ConfigError);
	cfg.epochs = 1;
	cfg.learning_rate = 0;
	CHECK_THROWS_AS(train(m, fx.graph, fx.x, fx.labels, cfg), ConfigError);
	cfg.learning_rate = 0.01;
	cfg.dropout = 1.0;
	CHECK_THROWS_AS(train(m, fx.graph, fx.x, fx.labels, cfg), ConfigError);
}

TEST_CASE("single-class labels are rejected")
{
	Cdfg g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
	Matrix x = random_features(4, 7, 2);
	TrainConfig cfg;
	cfg.epochs = 1;
	CHECK_THROWS_AS(train(init_model(7, 8, 1), g, x, {1, 1, 1, 1}, cfg), SingleClassLabels);
	CHECK_THROWS_AS(train(init_model(7, 8, 1), g, x, {0, 0, 0, 0}, cfg), SingleClassLabels);
}

TEST_CASE("divergence aborts with the collected history")
{
	Cdfg g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
	Matrix x = random_features(4, 7, 2);
	GcnModel m = init_model(7, 8, 1);
	m.b_out = std::numeric_limits<double>::infinity();
	TrainConfig cfg;
	cfg.epochs = 1;
	try {
		train(m, g, x, {0, 1, 0, 1}, cfg);
		FAIL("expected NonFiniteLoss");
	} catch (const NonFiniteLoss &e) {
		CHECK(e.history.empty()); // diverged on the very first step
	}
}

TEST_CASE("prediction thresholds at the boundary inclusively")
{
	Cdfg g = make_graph(2, {{0, 1}});
	GcnModel m = init_model(7, 8, 5);
	for (double &v : m.w1.data) {
		v = 0;
	}
	for (double &v : m.w2.data) {
		v = 0;
	}
	for (double &v : m.w_out) {
		v = 0;
	}
	Prediction p = predict(m, g, random_features(2, 7, 1), 0.5);
	CHECK(p.probability[0] == 0.5);
	CHECK(p.label == std::vector<int>{1, 1}); // p ≥ threshold counts as leaky

	CHECK_THROWS_AS(predict(m, g, random_features(2, 7, 1), 1.1), ConfigError);
	CHECK_THROWS_AS(predict(m, g, random_features(2, 7, 1), -0.1), ConfigError);
}

TEST_CASE("analytic gradients match finite differences")
{
	Cdfg g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
	Matrix x = random_features(5, 7, 31);
	std::vector<int> y = {0, 1, 1, 0, 1};
	GcnModel m = init_model(7, 6, 9);
	CHECK(gradient_check(m, g, x, y) <= 1e-4);

	// Zero features: the input-dependent path contributes nothing, the
	// check must still agree. Biases are nudged off zero so the ReLU
	// kink-point (where finite differences are undefined) is avoided.
	Matrix zeros(5, 7);
	for (size_t j = 0; j < m.b1.size(); ++j) {
		m.b1[j] = 0.05 * double(j + 1);
		m.b2[j] = -0.03 * double(j + 1);
	}
	CHECK(gradient_check(m, g, zeros, y) <= 1e-4);

	CHECK_THROWS_AS(gradient_check(m, g, x, y, 0.0), ConfigError);
}

TEST_CASE("gradient check holds across twenty random seeds")
{
	Cdfg g = make_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 4}});
	std::vector<int> y = {0, 1, 0, 1, 1, 0};
	for (uint64_t seed = 1; seed <= 20; ++seed) {
		Matrix x = random_features(6, 7, derive_seed(seed, "gc-x"));
		GcnModel m = init_model(7, 5, seed);
		CHECK(gradient_check(m, g, x, y) <= 1e-4);
	}
}

TEST_CASE("model files round-trip bit-exactly")
{
	ClusterFixture fx = cluster_fixture();
	TrainConfig cfg;
	cfg.epochs = 2;
	cfg.seed = 11;
	GcnModel m = train(init_model(7, 16, 11), fx.graph, fx.x, fx.labels, cfg).model;
	m.norm.applied = true;
	m.norm.mean[0] = 1.25;
	m.norm.stdev[2] = 3.5;

	std::string path = temp_path("psc_model_roundtrip.bin");
	save_model(m, path);
	GcnModel back = load_model(path);
	CHECK(back.w1.data == m.w1.data);
	CHECK(back.b1 == m.b1);
	CHECK(back.w2.data == m.w2.data);
	CHECK(back.b2 == m.b2);
	CHECK(back.w_out == m.w_out);
	CHECK(back.b_out == m.b_out);
	CHECK(back.contract == m.contract);
	CHECK(back.norm == m.norm);
	CHECK(back.seed == m.seed);
	CHECK(back.trained == m.trained);

	std::vector<double> a = forward(m, fx.graph, fx.x);
	std::vector<double> b = forward(back, fx.graph, fx.x);
	CHECK(a == b);
	std::filesystem::remove(path);
}

TEST_CASE("damaged model files are refused")
{
	GcnModel m = init_model(7, 4, 1);
	std::string path = temp_path("psc_model_damage.bin");
	save_model(m, path);
	std::ifstream in(path, std::ios::binary);
	std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
	in.close();

	auto write_bytes = [&](const std::string &content) {
		std::ofstream out(path, std::ios::binary);
		out.write(content.data(), std::streamsize(content.size()));
	};

	write_bytes(bytes.substr(0, bytes.size() - 9));
	CHECK_THROWS_AS(load_model(path), CorruptModel);

	std::string bad_magic = bytes;
	bad_magic[0] = 'X';
	write_bytes(bad_magic);
	CHECK_THROWS_AS(load_model(path), CorruptModel);

	std::string bad_version = bytes;
	bad_version[4] = 9;
	write_bytes(bad_version);
	CHECK_THROWS_AS(load_model(path), VersionMismatch);

	write_bytes(bytes + "extra");
	CHECK_THROWS_AS(load_model(path), CorruptModel);
	std::filesystem::remove(path);
}

TEST_CASE("a reduced-input model refuses seven-column matrices")
{
	Cdfg g = make_graph(3, {{0, 1}, {1, 2}});
	GcnModel m = init_model(3, 8, 1); // three-feature contract
	CHECK_THROWS_AS(predict(m, g, random_features(3, 7, 1)), ShapeMismatch);
	CHECK_NOTHROW(predict(m, g, random_features(3, 3, 1)));
}
