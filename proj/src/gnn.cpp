#include "psc/gnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

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

/// Numerically stable per-sample binary cross-entropy from the logit.
double bce_from_logit(double z, double y)
{
	return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

Matrix relu(const Matrix &m)
{
	Matrix out = m;
	for (double &v : out.data) {
		v = v > 0 ? v : 0;
	}
	return out;
}

Matrix add_row_bias(Matrix m, const std::vector<double> &bias)
{
	for (size_t i = 0; i < m.rows; ++i) {
		for (size_t j = 0; j < m.cols; ++j) {
			m.at(i, j) += bias[j];
		}
	}
	return m;
}

std::vector<double> column_sums(const Matrix &m)
{
	std::vector<double> out(m.cols, 0.0);
	for (size_t i = 0; i < m.rows; ++i) {
		for (size_t j = 0; j < m.cols; ++j) {
			out[j] += m.at(i, j);
		}
	}
	return out;
}

void check_labels(const std::vector<int> &labels, size_t n)
{
	if (labels.size() != n) {
		throw ShapeMismatch("labels cover " + std::to_string(labels.size()) + " nodes; graph has " +
				    std::to_string(n));
	}
	for (int y : labels) {
		if (y != 0 && y != 1) {
			throw ConfigError("labels must be 0 or 1");
		}
	}
}

/// Mutable views over every parameter tensor, paired with its gradient.
struct ParamView {
	double *value = nullptr;
	const double *grad = nullptr;
	size_t len = 0;
};

std::vector<ParamView> param_views(GcnModel &m, const GcnGradients &g)
{
	return {
	    {m.w1.data.data(), g.w1.data.data(), m.w1.data.size()},
	    {m.b1.data(), g.b1.data(), m.b1.size()},
	    {m.w2.data.data(), g.w2.data.data(), m.w2.data.size()},
	    {m.b2.data(), g.b2.data(), m.b2.size()},
	    {m.w_out.data(), g.w_out.data(), m.w_out.size()},
	    {&m.b_out, &g.b_out, 1},
	};
}

} // namespace

GnnGraph graph_from_cdfg(const Cdfg &g)
{
	GnnGraph out;
	out.n = g.nodes.size();
	for (const auto &e : g.edges) {
		out.edges.push_back({e.src, e.dst, e.weight});
	}
	return out;
}

Matrix Propagator::apply(const Matrix &m) const
{
	Matrix out(n, m.cols);
	for (size_t i = 0; i < n; ++i) {
		for (size_t c = 0; c < m.cols; ++c) {
			out.at(i, c) = self_coeff[i] * m.at(i, c);
		}
	}
	for (const Arc &a : arcs) {
		auto dst = size_t(a.dst);
		auto src = size_t(a.src);
		for (size_t c = 0; c < m.cols; ++c) {
			out.at(dst, c) += a.coeff * m.at(src, c);
		}
		if (a.src != a.dst) {
			for (size_t c = 0; c < m.cols; ++c) {
				out.at(src, c) += a.coeff * m.at(dst, c);
			}
		}
	}
	return out;
}

Propagator make_propagator(const GnnGraph &g)
{
	std::vector<double> degree(g.n, 1.0); // self-loop
	for (const auto &e : g.edges) {
		degree[size_t(e.src)] += e.weight;
		if (e.src != e.dst) {
			degree[size_t(e.dst)] += e.weight;
		}
	}
	std::vector<double> inv(g.n);
	for (size_t i = 0; i < g.n; ++i) {
		inv[i] = 1.0 / std::sqrt(degree[i]);
	}
	Propagator p;
	p.n = g.n;
	p.self_coeff.resize(g.n);
	for (size_t i = 0; i < g.n; ++i) {
		p.self_coeff[i] = inv[i] * inv[i];
	}
	for (const auto &e : g.edges) {
		p.arcs.push_back({e.src, e.dst, e.weight * inv[size_t(e.src)] * inv[size_t(e.dst)]});
	}
	return p;
}

GcnModel init_model(int input_dim, int hidden, uint64_t seed)
{
	if (input_dim < 1 || hidden < 1) {
		throw ConfigError("model dimensions must be at least 1");
	}
	GcnModel m;
	m.input_dim = input_dim;
	m.hidden = hidden;
	m.seed = seed;
	if (input_dim == 7) {
		m.contract = feature_contract();
	}

	Rng rng(derive_seed(seed, "model-init"));
	auto glorot = [&rng](Matrix &w, int fan_in, int fan_out) {
		double limit = std::sqrt(6.0 / double(fan_in + fan_out));
		for (double &v : w.data) {
			v = (rng.next_double() * 2.0 - 1.0) * limit;
		}
	};
	m.w1 = Matrix(size_t(input_dim), size_t(hidden));
	glorot(m.w1, input_dim, hidden);
	m.b1.assign(size_t(hidden), 0.0);
	m.w2 = Matrix(size_t(hidden), size_t(hidden));
	glorot(m.w2, hidden, hidden);
	m.b2.assign(size_t(hidden), 0.0);

	Matrix out_col(size_t(hidden), 1);
	glorot(out_col, hidden, 1);
	m.w_out = out_col.data;
	m.b_out = 0.0;
	return m;
}

void TrainConfig::validate() const
{
	if (!(learning_rate > 0)) {
		throw ConfigError("learning_rate must be positive");
	}
	if (dropout < 0 || dropout >= 1) {
		throw ConfigError("dropout must be in [0, 1)");
	}
	if (epochs < 1) {
		throw ConfigError("epochs must be at least 1");
	}
	if (batch_size < 1) {
		throw ConfigError("batch_size must be at least 1");
	}
	if (threshold < 0 || threshold > 1) {
		throw ConfigError("threshold must be in [0, 1]");
	}
}

ForwardCache gcn_forward(const GcnModel &m, const Propagator &prop, const Matrix &x, bool train_mode,
			 double dropout_rate, Rng *rng)
{
	if (x.rows != prop.n) {
		throw ShapeMismatch("feature rows " + std::to_string(x.rows) + " versus " + std::to_string(prop.n) +
				    " graph nodes");
	}
	if (x.cols != size_t(m.input_dim)) {
		throw ShapeMismatch("feature columns " + std::to_string(x.cols) + " versus model input dimension " +
				    std::to_string(m.input_dim));
	}

	ForwardCache f;
	f.x = x;
	f.s = prop.apply(x);
	f.z1 = add_row_bias(matmul(f.s, m.w1), m.b1);
	f.h1 = relu(f.z1);

	auto dropout = [&](const Matrix &h, Matrix &mask) {
		if (!train_mode || dropout_rate <= 0) {
			return h;
		}
		mask = Matrix(h.rows, h.cols);
		double keep_scale = 1.0 / (1.0 - dropout_rate);
		Matrix out = h;
		for (size_t i = 0; i < h.data.size(); ++i) {
			mask.data[i] = rng->next_double() < dropout_rate ? 0.0 : keep_scale;
			out.data[i] *= mask.data[i];
		}
		return out;
	};

	f.d1 = dropout(f.h1, f.drop1);
	f.s2 = prop.apply(f.d1);
	f.z2 = add_row_bias(matmul(f.s2, m.w2), m.b2);
	f.h2 = relu(f.z2);
	f.d2 = dropout(f.h2, f.drop2);

	f.logits.resize(prop.n);
	f.prob.resize(prop.n);
	for (size_t i = 0; i < prop.n; ++i) {
		double z = m.b_out;
		for (size_t h = 0; h < size_t(m.hidden); ++h) {
			z += f.d2.at(i, h) * m.w_out[h];
		}
		f.logits[i] = z;
		f.prob[i] = sigmoid(z);
	}
	return f;
}

std::vector<double> forward(const GcnModel &m, const Cdfg &g, const Matrix &x, bool train_mode, uint64_t dropout_seed,
			    double dropout_rate)
{
	Propagator prop = make_propagator(graph_from_cdfg(g));
	Rng rng(derive_seed(dropout_seed, "forward-dropout"));
	return gcn_forward(m, prop, x, train_mode, dropout_rate, &rng).prob;
}

GcnGradients gcn_backward(const GcnModel &m, const Propagator &prop, const ForwardCache &f,
			  const std::vector<double> &dlogits, bool want_input_grads)
{
	size_t n = prop.n;
	auto hidden = size_t(m.hidden);
	if (dlogits.size() != n) {
		throw ShapeMismatch("logit gradients cover " + std::to_string(dlogits.size()) + " of " +
				    std::to_string(n) + " nodes");
	}

	GcnGradients g;
	g.w_out.assign(hidden, 0.0);
	g.b_out = 0.0;
	Matrix dd2(n, hidden);
	for (size_t i = 0; i < n; ++i) {
		double dz = dlogits[i];
		g.b_out += dz;
		for (size_t h = 0; h < hidden; ++h) {
			g.w_out[h] += f.d2.at(i, h) * dz;
			dd2.at(i, h) = dz * m.w_out[h];
		}
	}

	auto through_dropout = [](const Matrix &grad, const Matrix &mask) {
		if (mask.data.empty()) {
			return grad;
		}
		Matrix out = grad;
		for (size_t i = 0; i < out.data.size(); ++i) {
			out.data[i] *= mask.data[i];
		}
		return out;
	};
	auto through_relu = [](const Matrix &grad, const Matrix &pre) {
		Matrix out = grad;
		for (size_t i = 0; i < out.data.size(); ++i) {
			out.data[i] = pre.data[i] > 0 ? out.data[i] : 0.0;
		}
		return out;
	};

	Matrix dh2 = through_dropout(dd2, f.drop2);
	Matrix dz2 = through_relu(dh2, f.z2);
	g.w2 = matmul_at_b(f.s2, dz2);
	g.b2 = column_sums(dz2);

	Matrix ds2 = matmul_a_bt(dz2, m.w2);
	Matrix dd1 = prop.apply(ds2); // Â is symmetric
	Matrix dh1 = through_dropout(dd1, f.drop1);
	Matrix dz1 = through_relu(dh1, f.z1);
	g.w1 = matmul_at_b(f.s, dz1);
	g.b1 = column_sums(dz1);

	if (want_input_grads) {
		Matrix ds = matmul_a_bt(dz1, m.w1);
		g.x = prop.apply(ds);
		g.arc_coeff.assign(prop.arcs.size(), 0.0);
		for (size_t k = 0; k < prop.arcs.size(); ++k) {
			const auto &a = prop.arcs[k];
			auto src = size_t(a.src);
			auto dst = size_t(a.dst);
			double sum = 0;
			for (size_t c = 0; c < f.x.cols; ++c) {
				sum += ds.at(dst, c) * f.x.at(src, c);
			}
			for (size_t c = 0; c < f.d1.cols; ++c) {
				sum += ds2.at(dst, c) * f.d1.at(src, c);
			}
			if (a.src != a.dst) {
				for (size_t c = 0; c < f.x.cols; ++c) {
					sum += ds.at(src, c) * f.x.at(dst, c);
				}
				for (size_t c = 0; c < f.d1.cols; ++c) {
					sum += ds2.at(src, c) * f.d1.at(dst, c);
				}
			}
			g.arc_coeff[k] = sum;
		}
	}
	return g;
}

TrainResult train(const GcnModel &m, const Cdfg &g, const Matrix &x, const std::vector<int> &labels,
		  const TrainConfig &cfg)
{
	cfg.validate();
	GnnGraph graph = graph_from_cdfg(g);
	check_labels(labels, graph.n);
	size_t pos = 0;
	for (int y : labels) {
		pos += size_t(y);
	}
	if (pos == 0 || pos == labels.size()) {
		throw SingleClassLabels();
	}
	double w_pos = cfg.class_weighting ? double(labels.size() - pos) / double(pos) : 1.0;

	Propagator prop = make_propagator(graph);
	GcnModel model = m;
	Rng shuffle_rng(derive_seed(cfg.seed, "train-shuffle"));
	Rng dropout_rng(derive_seed(cfg.seed, "train-dropout"));

	// Adam moment buffers, used only when cfg.adam.
	std::vector<std::vector<double>> adam_m, adam_v;
	int adam_t = 0;

	std::vector<double> history;
	std::vector<size_t> order(graph.n);
	for (size_t i = 0; i < graph.n; ++i) {
		order[i] = i;
	}

	for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
		for (size_t i = order.size(); i > 1; --i) {
			std::swap(order[i - 1], order[size_t(shuffle_rng.next_below(i))]);
		}
		for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
			size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
			double batch = double(end - start);

			ForwardCache f = gcn_forward(model, prop, x, true, cfg.dropout, &dropout_rng);
			double loss = 0;
			std::vector<double> dlogits(graph.n, 0.0);
			for (size_t k = start; k < end; ++k) {
				size_t i = order[k];
				double y = labels[i];
				double w = y > 0 ? w_pos : 1.0;
				loss += w * bce_from_logit(f.logits[i], y);
				dlogits[i] = w * (f.prob[i] - y) / batch;
			}
			loss /= batch;
			if (!std::isfinite(loss)) {
				throw NonFiniteLoss(std::move(history));
			}
			history.push_back(loss);

			GcnGradients grads = gcn_backward(model, prop, f, dlogits);
			std::vector<ParamView> views = param_views(model, grads);
			if (cfg.adam) {
				if (adam_m.empty()) {
					for (const auto &v : views) {
						adam_m.emplace_back(v.len, 0.0);
						adam_v.emplace_back(v.len, 0.0);
					}
				}
				++adam_t;
				const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
				double bc1 = 1.0 - std::pow(beta1, adam_t);
				double bc2 = 1.0 - std::pow(beta2, adam_t);
				for (size_t vi = 0; vi < views.size(); ++vi) {
					for (size_t j = 0; j < views[vi].len; ++j) {
						double grad = views[vi].grad[j];
						double &mm = adam_m[vi][j];
						double &vv = adam_v[vi][j];
						mm = beta1 * mm + (1 - beta1) * grad;
						vv = beta2 * vv + (1 - beta2) * grad * grad;
						views[vi].value[j] -=
						    cfg.learning_rate * (mm / bc1) / (std::sqrt(vv / bc2) + eps);
					}
				}
			} else {
				for (const auto &v : views) {
					for (size_t j = 0; j < v.len; ++j) {
						v.value[j] -= cfg.learning_rate * v.grad[j];
					}
				}
			}
		}
	}

	model.trained = true;
	model.seed = cfg.seed;
	return {std::move(model), std::move(history)};
}

Prediction predict(const GcnModel &m, const Cdfg &g, const Matrix &x, double threshold)
{
	if (threshold < 0 || threshold > 1) {
		throw ConfigError("threshold must be in [0, 1]");
	}
	Prediction p;
	p.threshold = threshold;
	p.probability = forward(m, g, x, false);
	for (double prob : p.probability) {
		p.label.push_back(prob >= threshold ? 1 : 0);
	}
	return p;
}

double gradient_check(const GcnModel &m, const Cdfg &g, const Matrix &x, const std::vector<int> &labels,
		      double epsilon)
{
	if (!(epsilon > 0)) {
		throw ConfigError("epsilon must be positive");
	}
	GnnGraph graph = graph_from_cdfg(g);
	check_labels(labels, graph.n);
	Propagator prop = make_propagator(graph);

	GcnModel probe = m;
	auto loss_of = [&]() {
		ForwardCache f = gcn_forward(probe, prop, x, false, 0.0, nullptr);
		double loss = 0;
		for (size_t i = 0; i < graph.n; ++i) {
			loss += bce_from_logit(f.logits[i], labels[i]);
		}
		return loss / double(graph.n);
	};

	ForwardCache f = gcn_forward(probe, prop, x, false, 0.0, nullptr);
	std::vector<double> dlogits(graph.n);
	for (size_t i = 0; i < graph.n; ++i) {
		dlogits[i] = (f.prob[i] - labels[i]) / double(graph.n);
	}
	GcnGradients grads = gcn_backward(probe, prop, f, dlogits);

	double worst = 0;
	std::vector<ParamView> views = param_views(probe, grads);
	for (const auto &v : views) {
		for (size_t j = 0; j < v.len; ++j) {
			double saved = v.value[j];
			v.value[j] = saved + epsilon;
			double up = loss_of();
			v.value[j] = saved - epsilon;
			double down = loss_of();
			v.value[j] = saved;
			double numeric = (up - down) / (2 * epsilon);
			double analytic = v.grad[j];
			double rel = std::abs(analytic - numeric) /
				     std::max(1e-8, std::abs(analytic) + std::abs(numeric));
			worst = std::max(worst, rel);
		}
	}
	return worst;
}

Matrix to_matrix(const FeatureMatrix &m)
{
	Matrix out(m.rows.size(), 7);
	for (size_t i = 0; i < m.rows.size(); ++i) {
		for (size_t j = 0; j < 7; ++j) {
			out.at(i, j) = m.rows[i][j];
		}
	}
	return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'M'};
constexpr uint32_t kModelVersion = 1;

void put_u32(std::string &out, uint32_t v)
{
	for (int i = 0; i < 4; ++i) {
		out.push_back(char((v >> (8 * i)) & 0xff));
	}
}

void put_u64(std::string &out, uint64_t v)
{
	for (int i = 0; i < 8; ++i) {
		out.push_back(char((v >> (8 * i)) & 0xff));
	}
}

void put_f64(std::string &out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct ByteReader {
	const std::string &buf;
	size_t at = 0;

	void need(size_t n) const
	{
		if (at + n > buf.size()) {
			throw CorruptModel("model file truncated");
		}
	}
	uint32_t u32()
	{
		need(4);
		uint32_t v = 0;
		for (int i = 0; i < 4; ++i) {
			v |= uint32_t(uint8_t(buf[at + size_t(i)])) << (8 * i);
		}
		at += 4;
		return v;
	}
	uint64_t u64()
	{
		need(8);
		uint64_t v = 0;
		for (int i = 0; i < 8; ++i) {
			v |= uint64_t(uint8_t(buf[at + size_t(i)])) << (8 * i);
		}
		at += 8;
		return v;
	}
	double f64() { return std::bit_cast<double>(u64()); }
	std::string bytes(size_t n)
	{
		need(n);
		std::string s = buf.substr(at, n);
		at += n;
		return s;
	}
};

} // namespace

void save_model(const GcnModel &m, const std::string &path)
{
	nlohmann::json header;
	header["input_dim"] = m.input_dim;
	header["hidden"] = m.hidden;
	header["feature_contract"] = m.contract;
	header["normalization"] = {
	    {"applied", m.norm.applied},
	    {"mean", m.norm.mean},
	    {"stdev", m.norm.stdev},
	};
	header["seed"] = m.seed;
	header["trained"] = m.trained;
	std::string json_text = header.dump();

	std::string out;
	out.append(kMagic, 4);
	put_u32(out, kModelVersion);
	put_u64(out, json_text.size());
	out += json_text;
	for (double v : m.w1.data) {
		put_f64(out, v);
	}
	for (double v : m.b1) {
		put_f64(out, v);
	}
	for (double v : m.w2.data) {
		put_f64(out, v);
	}
	for (double v : m.b2) {
		put_f64(out, v);
	}
	for (double v : m.w_out) {
		put_f64(out, v);
	}
	put_f64(out, m.b_out);

	std::ofstream file(path, std::ios::binary);
	if (!file) {
		throw ConfigError("cannot write model file: " + path);
	}
	file.write(out.data(), std::streamsize(out.size()));
	if (!file) {
		throw ConfigError("failed writing model file: " + path);
	}
}

GcnModel load_model(const std::string &path)
{
	std::ifstream file(path, std::ios::binary);
	if (!file) {
		throw ConfigError("cannot read model file: " + path);
	}
	std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

	ByteReader r{buf};
	if (r.bytes(4) != std::string(kMagic, 4)) {
		throw CorruptModel("bad magic");
	}
	uint32_t version = r.u32();
	if (version != kModelVersion) {
		throw VersionMismatch("model file version " + std::to_string(version) + ", expected " +
				      std::to_string(kModelVersion));
	}
	uint64_t json_len = r.u64();
	std::string json_text = r.bytes(size_t(json_len));

	GcnModel m;
	try {
		nlohmann::json header = nlohmann::json::parse(json_text);
		m.input_dim = header.at("input_dim").get<int>();
		m.hidden = header.at("hidden").get<int>();
		m.contract = header.at("feature_contract").get<std::string>();
		const auto &norm = header.at("normalization");
		m.norm.applied = norm.at("applied").get<bool>();
		auto mean = norm.at("mean").get<std::vector<double>>();
		auto stdev = norm.at("stdev").get<std::vector<double>>();
		if (mean.size() != m.norm.mean.size() || stdev.size() != m.norm.stdev.size()) {
			throw CorruptModel("normalization record has wrong arity");
		}
		std::copy(mean.begin(), mean.end(), m.norm.mean.begin());
		std::copy(stdev.begin(), stdev.end(), m.norm.stdev.begin());
		m.seed = header.at("seed").get<uint64_t>();
		m.trained = header.value("trained", false);
	} catch (const CorruptModel &) {
		throw;
	} catch (const std::exception &e) {
		throw CorruptModel(std::string("bad model header: ") + e.what());
	}
	if (m.input_dim < 1 || m.hidden < 1) {
		throw CorruptModel("non-positive model dimensions");
	}

	auto read_into = [&r](auto &dst, size_t count) {
		dst.resize(count);
		for (size_t i = 0; i < count; ++i) {
			dst[i] = r.f64();
		}
	};
	auto d = size_t(m.input_dim);
	auto h = size_t(m.hidden);
	m.w1 = Matrix(d, h);
	read_into(m.w1.data, d * h);
	read_into(m.b1, h);
	m.w2 = Matrix(h, h);
	read_into(m.w2.data, h * h);
	read_into(m.b2, h);
	read_into(m.w_out, h);
	m.b_out = r.f64();
	if (r.at != buf.size()) {
		throw CorruptModel("trailing bytes after weight arrays");
	}
	auto all_finite = [](const std::vector<double> &values) {
		return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
	};
	if (!all_finite(m.w1.data) || !all_finite(m.b1) || !all_finite(m.w2.data) || !all_finite(m.b2) ||
	    !all_finite(m.w_out) || !std::isfinite(m.b_out)) {
		throw CorruptModel("non-finite weight");
	}
	return m;
}

} // namespace psc
