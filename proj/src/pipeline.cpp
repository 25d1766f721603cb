#include "psc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "psc/cdfg.hpp"
#include "psc/errors.hpp"
#include "psc/parser.hpp"
#include "psc/rng.hpp"
#include "psc/vardep.hpp"
#include "psc/vcd.hpp"

namespace psc {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

void reject_unknown(const json &obj, const std::string &section, std::initializer_list<const char *> known)
{
	for (auto it = obj.begin(); it != obj.end(); ++it) {
		bool ok = false;
		for (const char *k : known) {
			if (it.key() == k) {
				ok = true;
				break;
			}
		}
		if (!ok) {
			std::string where = section.empty() ? it.key() : section + "." + it.key();
			throw ConfigError("unknown config key '" + where + "'");
		}
	}
}

template <typename T> void fetch(const json &obj, const char *key, T &out)
{
	if (!obj.contains(key)) {
		return;
	}
	try {
		out = obj.at(key).get<T>();
	} catch (const json::exception &) {
		throw ConfigError(std::string("config key '") + key + "' has the wrong type");
	}
}

std::string fetch_choice(const json &obj, const char *key, const std::string &fallback,
			 std::initializer_list<const char *> allowed)
{
	std::string v = fallback;
	fetch(obj, key, v);
	for (const char *a : allowed) {
		if (v == a) {
			return v;
		}
	}
	std::string list;
	for (const char *a : allowed) {
		list += list.empty() ? "'" : " or '";
		list += a;
		list += "'";
	}
	throw ConfigError(std::string("config key '") + key + "' must be " + list + ", got '" + v + "'");
}

std::string resolve_against(const std::string &path, const std::string &base_dir)
{
	if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) {
		return path;
	}
	return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

} // namespace

PipelineConfig parse_config(const std::string &json_text, const std::string &origin)
{
	json j;
	try {
		j = json::parse(json_text);
	} catch (const json::exception &e) {
		std::string prefix = origin.empty() ? std::string() : origin + ": ";
		throw ConfigError(prefix + "config is not valid JSON: " + e.what());
	}
	if (!j.is_object()) {
		throw ConfigError((origin.empty() ? std::string("config") : origin) + " must be a JSON object");
	}
	reject_unknown(j, "",
		       {"schema_version", "sources", "top", "out_dir", "seed", "sensitive_signals", "vcd",
			"stimulus", "labels", "train", "explain", "localize", "fortify", "equivalence", "features",
			"model_path"});

	int version = 1;
	fetch(j, "schema_version", version);
	if (version != 1) {
		throw ConfigError("unsupported config schema_version " + std::to_string(version));
	}

	PipelineConfig cfg;
	fetch(j, "sources", cfg.sources);
	fetch(j, "top", cfg.top);
	fetch(j, "out_dir", cfg.out_dir);
	fetch(j, "seed", cfg.seed);
	fetch(j, "sensitive_signals", cfg.sensitive_signals);
	fetch(j, "vcd", cfg.vcd);
	fetch(j, "labels", cfg.labels);
	fetch(j, "model_path", cfg.model_path);

	if (j.contains("stimulus")) {
		const json &s = j.at("stimulus");
		reject_unknown(s, "stimulus", {"clock", "cycles", "random_inputs", "drive"});
		fetch(s, "clock", cfg.stimulus.clock);
		fetch(s, "cycles", cfg.stimulus.cycles);
		fetch(s, "random_inputs", cfg.stimulus.random_inputs);
		if (s.contains("drive")) {
			for (const json &d : s.at("drive")) {
				reject_unknown(d, "stimulus.drive", {"time", "signal", "value"});
				Stimulus st;
				fetch(d, "time", st.time);
				fetch(d, "signal", st.signal);
				fetch(d, "value", st.value);
				if (st.signal.empty()) {
					throw ConfigError("stimulus.drive entries need a signal name");
				}
				cfg.stimulus.drive.push_back(st);
			}
		}
	}

	if (j.contains("train")) {
		const json &t = j.at("train");
		reject_unknown(t, "train",
			       {"learning_rate", "batch_size", "dropout", "epochs", "threshold", "adam",
				"class_weighting", "hidden"});
		fetch(t, "learning_rate", cfg.train.learning_rate);
		fetch(t, "batch_size", cfg.train.batch_size);
		fetch(t, "dropout", cfg.train.dropout);
		fetch(t, "epochs", cfg.train.epochs);
		fetch(t, "threshold", cfg.train.threshold);
		fetch(t, "adam", cfg.train.adam);
		fetch(t, "class_weighting", cfg.train.class_weighting);
		fetch(t, "hidden", cfg.hidden);
	}

	if (j.contains("explain")) {
		const json &e = j.at("explain");
		reject_unknown(e, "explain", {"iterations", "lambda_feature", "lambda_edge", "learning_rate"});
		fetch(e, "iterations", cfg.explain.iterations);
		fetch(e, "lambda_feature", cfg.explain.lambda_feature);
		fetch(e, "lambda_edge", cfg.explain.lambda_edge);
		fetch(e, "learning_rate", cfg.explain.learning_rate);
	}

	if (j.contains("localize")) {
		const json &l = j.at("localize");
		reject_unknown(l, "localize", {"conditional_requires_taint", "rank_fraction", "score_quantile"});
		fetch(l, "conditional_requires_taint", cfg.localize.conditional_requires_taint);
		fetch(l, "rank_fraction", cfg.localize.rank_fraction);
		fetch(l, "score_quantile", cfg.localize.score_quantile);
	}

	if (j.contains("fortify")) {
		const json &f = j.at("fortify");
		reject_unknown(f, "fortify",
			       {"mask_name", "mask_width", "clock", "suffix", "paper_fidelity", "mask_source"});
		fetch(f, "mask_name", cfg.fortify.mask_name);
		fetch(f, "mask_width", cfg.fortify.mask_width);
		fetch(f, "clock", cfg.fortify.clock);
		fetch(f, "suffix", cfg.fortify.suffix);
		fetch(f, "paper_fidelity", cfg.fortify.paper_fidelity);
		std::string src = fetch_choice(f, "mask_source", "lfsr", {"lfsr", "random"});
		cfg.fortify.mask_source = src == "lfsr" ? MaskSource::Lfsr : MaskSource::DollarRandom;
	}

	if (j.contains("equivalence")) {
		const json &e = j.at("equivalence");
		reject_unknown(e, "equivalence", {"random_vectors"});
		fetch(e, "random_vectors", cfg.equivalence_vectors);
	}

	if (j.contains("features")) {
		const json &f = j.at("features");
		reject_unknown(f, "features", {"set", "mux_includes_case", "hamming"});
		cfg.feature_set = fetch_choice(f, "set", "7", {"7", "top3"});
		fetch(f, "mux_includes_case", cfg.mux_includes_case);
		std::string agg = fetch_choice(f, "hamming", "sum", {"sum", "max_step"});
		cfg.hamming_aggregation =
		    agg == "sum" ? HammingAggregation::Sum : HammingAggregation::MaxStep;
	}

	std::string base = origin.empty() ? "" : std::filesystem::path(origin).parent_path().string();
	for (std::string &s : cfg.sources) {
		s = resolve_against(s, base);
	}
	cfg.vcd = resolve_against(cfg.vcd, base);
	cfg.model_path = resolve_against(cfg.model_path, base);
	return cfg;
}

PipelineConfig load_config(const std::string &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw ConfigError("cannot read config file: " + path);
	}
	std::stringstream ss;
	ss << in.rdbuf();
	return parse_config(ss.str(), path);
}

namespace {

// ---------------------------------------------------------------------------
// Shared per-run state, computed lazily so each stage touches only what it
// needs
// ---------------------------------------------------------------------------

struct Context {
	const PipelineConfig &cfg;
	StageResult result;

	std::optional<DesignAst> ast;
	std::optional<Cdfg> graph;
	std::optional<VarDepGraph> dep;
	std::optional<TraceSet> traces;
	std::optional<FeatureMatrix> raw;
	std::optional<GcnModel> model;
	std::optional<VulnerabilityReport> report;

	explicit Context(const PipelineConfig &c) : cfg(c) {}
};

void warn(Context &c, const std::string &message)
{
	c.result.warnings.push_back(message);
}

std::string out_path(const Context &c, const std::string &name)
{
	return (std::filesystem::path(c.cfg.out_dir) / name).string();
}

void write_artifact(Context &c, const std::string &name, const std::string &text)
{
	std::string path = out_path(c, name);
	std::ofstream out(path, std::ios::binary);
	if (!out) {
		throw ConfigError("cannot write artifact: " + path);
	}
	out << text;
	out.close();
	if (!out) {
		throw ConfigError("cannot write artifact: " + path);
	}
	c.result.artifacts.push_back(path);
}

std::string dump_json(const json &j)
{
	return j.dump(2) + "\n";
}

std::string read_file(const std::string &path, const char *what)
{
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw ConfigError(std::string("cannot read ") + what + ": " + path);
	}
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

std::string model_file(const Context &c)
{
	return c.cfg.model_path.empty() ? out_path(c, "model.bin") : c.cfg.model_path;
}

const DesignAst &ensure_ast(Context &c)
{
	if (!c.ast) {
		if (c.cfg.sources.empty()) {
			throw ConfigError("config lists no sources");
		}
		if (c.cfg.top.empty()) {
			throw ConfigError("config names no top module");
		}
		std::vector<std::pair<std::string, std::string>> files;
		for (const std::string &path : c.cfg.sources) {
			std::string name = std::filesystem::path(path).filename().string();
			for (const auto &[seen, text] : files) {
				(void)text;
				if (seen == name) {
					throw ConfigError("duplicate source file name '" + name + "'");
				}
			}
			files.emplace_back(name, read_file(path, "source file"));
		}
		c.ast = parse_design(files, c.cfg.top);
	}
	return *c.ast;
}

const Cdfg &ensure_graph(Context &c)
{
	if (!c.graph) {
		c.graph = build_cdfg(ensure_ast(c));
	}
	return *c.graph;
}

const VarDepGraph &ensure_dep(Context &c)
{
	if (!c.dep) {
		c.dep = build_vardep(ensure_ast(c));
	}
	return *c.dep;
}

std::vector<Stimulus> fixture_stimulus(const Context &c, const DesignAst &ast)
{
	const StimulusConfig &sc = c.cfg.stimulus;
	const RtlModule &top = ast.module_or_throw(ast.top);

	bool clocked = false;
	if (!sc.clock.empty()) {
		const Port *p = top.find_port(sc.clock);
		clocked = p != nullptr && p->dir == PortDir::Input;
	}

	std::vector<Stimulus> stim;
	if (clocked) {
		stim = clock_stimulus(sc.clock, sc.cycles);
	}
	if (sc.random_inputs) {
		Rng rng(derive_seed(c.cfg.seed, "stimulus"));
		for (uint64_t t = 0; t < sc.cycles; ++t) {
			for (const Port &p : top.ports) {
				if (p.dir != PortDir::Input || (clocked && p.name == sc.clock)) {
					continue;
				}
				int w = p.width();
				uint64_t mask = w >= 64 ? ~0ull : ((1ull << w) - 1);
				stim.push_back({t, p.name, rng.next_u64() & mask});
			}
		}
	}
	for (const Stimulus &s : sc.drive) {
		stim.push_back(s);
	}
	return stim;
}

const TraceSet &ensure_traces(Context &c)
{
	if (!c.traces) {
		if (!c.cfg.vcd.empty()) {
			c.traces = parse_vcd(read_file(c.cfg.vcd, "VCD file"));
		} else {
			const DesignAst &ast = ensure_ast(c);
			c.traces = simulate_fixture(ast, fixture_stimulus(c, ast), c.cfg.stimulus.cycles);
		}
	}
	return *c.traces;
}

FeatureConfig feature_config(const PipelineConfig &cfg)
{
	FeatureConfig fc;
	fc.sensitive_signals = cfg.sensitive_signals;
	fc.mux_includes_case = cfg.mux_includes_case;
	fc.hamming_aggregation = cfg.hamming_aggregation;
	return fc;
}

const FeatureMatrix &ensure_features(Context &c)
{
	if (!c.raw) {
		const Cdfg &g = ensure_graph(c);
		FeatureConfig fc = feature_config(c.cfg);
		std::map<int, PathCount> paths = node_path_counts(g, ensure_dep(c), fc);
		std::vector<std::string> warnings;
		c.raw = assemble_features(g, paths, ensure_traces(c), fc, &warnings);
		for (const std::string &w : warnings) {
			warn(c, w);
		}
	}
	return *c.raw;
}

const GcnModel &ensure_model(Context &c)
{
	if (!c.model) {
		std::string path = model_file(c);
		if (!std::filesystem::exists(path)) {
			throw ConfigError("model not found: " + path + " (run the train stage first)");
		}
		c.model = load_model(path);
	}
	return *c.model;
}

/// Columns of a full-width matrix in the order the model was trained on.
Matrix model_inputs(const GcnModel &m, const Matrix &full)
{
	if (m.contract == feature_contract()) {
		return full;
	}
	if (m.contract.empty()) {
		throw ConfigError("model carries no feature contract");
	}
	return select_columns(full, contract_indices(m.contract));
}

/// Raw features normalized with the model's training record, reduced to the
/// model's columns.
Matrix inference_inputs(Context &c, const GcnModel &m)
{
	FeatureMatrix normed = normalize(ensure_features(c), m.norm);
	return model_inputs(m, to_matrix(normed));
}

std::vector<int> module_labels(Context &c)
{
	if (c.cfg.labels.empty()) {
		throw ConfigError("training requires module labels");
	}
	const DesignAst &ast = ensure_ast(c);
	for (const auto &[mod, leaky] : c.cfg.labels) {
		(void)leaky;
		if (ast.find_module(mod) == nullptr) {
			throw ConfigError("label names unknown module '" + mod + "'");
		}
	}
	const Cdfg &g = ensure_graph(c);
	std::vector<int> labels;
	labels.reserve(g.nodes.size());
	for (const CdfgNode &n : g.nodes) {
		auto it = c.cfg.labels.find(n.module);
		labels.push_back(it != c.cfg.labels.end() && it->second ? 1 : 0);
	}
	return labels;
}

/// Node ids to explain: everything predicted leaky, or every node (with a
/// warning) when nothing is.
std::vector<int> explained_nodes(Context &c, const Prediction &p)
{
	std::vector<int> ids;
	for (size_t i = 0; i < p.label.size(); ++i) {
		if (p.label[i] == 1) {
			ids.push_back(int(i));
		}
	}
	if (ids.empty()) {
		warn(c, "no nodes predicted leaky; explaining every node");
		for (size_t i = 0; i < p.label.size(); ++i) {
			ids.push_back(int(i));
		}
	}
	return ids;
}

std::vector<Explanation> explain_nodes(Context &c, const GcnModel &m, const Matrix &x, const std::vector<int> &ids)
{
	const Cdfg &g = ensure_graph(c);
	std::vector<Explanation> out;
	out.reserve(ids.size());
	for (int id : ids) {
		ExplainConfig ec = c.cfg.explain;
		ec.seed = derive_seed(c.cfg.seed, "explain", uint64_t(id));
		out.push_back(explain_node(m, g, x, id, ec));
	}
	return out;
}

const VulnerabilityReport &ensure_report(Context &c)
{
	if (!c.report) {
		const GcnModel &m = ensure_model(c);
		const Cdfg &g = ensure_graph(c);
		Prediction p = predict(m, g, inference_inputs(c, m), c.cfg.train.threshold);
		LineFrequency freq = collect_leaky_lines(p, g);
		std::set<std::string> sensitive(c.cfg.sensitive_signals.begin(), c.cfg.sensitive_signals.end());
		std::vector<StatementScore> scores =
		    score_design(ensure_ast(c), ensure_dep(c), sensitive, c.cfg.localize);
		c.report = build_report(freq, scores, c.cfg.localize);
		for (const std::string &w : c.report->warnings) {
			warn(c, w);
		}
	}
	return *c.report;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

const char *dir_name(PortDir d)
{
	switch (d) {
	case PortDir::Input:
		return "input";
	case PortDir::Output:
		return "output";
	case PortDir::Inout:
		return "inout";
	}
	return "?";
}

void stage_parse(Context &c)
{
	const DesignAst &ast = ensure_ast(c);
	json j;
	j["schema_version"] = 1;
	j["top"] = ast.top;
	j["modules"] = json::array();
	for (const RtlModule &m : ast.modules) {
		json jm;
		jm["name"] = m.name;
		jm["file"] = m.file;
		jm["header_line"] = m.header_line;
		jm["ports"] = json::array();
		for (const Port &p : m.ports) {
			jm["ports"].push_back(
			    {{"name", p.name}, {"dir", dir_name(p.dir)}, {"msb", p.msb}, {"lsb", p.lsb}});
		}
		jm["signals"] = json::array();
		for (const Signal &s : m.signals) {
			jm["signals"].push_back({{"name", s.name},
						 {"kind", s.kind == SignalKind::Reg ? "reg" : "wire"},
						 {"msb", s.msb},
						 {"lsb", s.lsb}});
		}
		jm["statements"] = json::array();
		for (const FunctionalStatement &fs : m.statements) {
			json js = {{"index", fs.index},
				   {"kind", to_string(fs.kind)},
				   {"first_line", fs.span.first_line},
				   {"last_line", fs.span.last_line},
				   {"clocked", fs.clocked}};
			if (fs.clocked) {
				js["clock"] = fs.clock;
			}
			jm["statements"].push_back(js);
		}
		jm["instances"] = json::array();
		for (const Instance &inst : m.instances) {
			jm["instances"].push_back(
			    {{"module", inst.module_name}, {"name", inst.instance_name}, {"line", inst.line}});
		}
		j["modules"].push_back(jm);
	}
	write_artifact(c, "ast.json", dump_json(j));
}

void stage_cdfg(Context &c)
{
	write_artifact(c, "cdfg.txt", export_cdfg(ensure_graph(c)));
}

void stage_features(Context &c)
{
	write_artifact(c, "features.csv", to_csv(ensure_features(c)));
}

double accuracy(const std::vector<int> &predicted, const std::vector<int> &truth)
{
	if (predicted.size() != truth.size() || truth.empty()) {
		throw ShapeMismatch("prediction and label sizes differ");
	}
	size_t hits = 0;
	for (size_t i = 0; i < truth.size(); ++i) {
		hits += size_t(predicted[i] == truth[i]);
	}
	return double(hits) / double(truth.size());
}

void stage_train(Context &c)
{
	const Cdfg &g = ensure_graph(c);
	std::vector<int> labels = module_labels(c);

	FeatureMatrix normed = normalize(ensure_features(c));
	Matrix x = to_matrix(normed);

	TrainConfig tc = c.cfg.train;
	tc.seed = derive_seed(c.cfg.seed, "train");

	GcnModel seed_model = init_model(7, c.cfg.hidden, derive_seed(c.cfg.seed, "init"));
	seed_model.norm = normed.norm;
	TrainResult tr = train(seed_model, g, x, labels, tc);
	GcnModel model = std::move(tr.model);
	std::vector<double> loss = std::move(tr.loss_history);

	if (c.cfg.feature_set == "top3") {
		Prediction p = predict(model, g, x, tc.threshold);
		std::vector<int> ids = explained_nodes(c, p);
		GlobalRanking ranking = aggregate_importance(explain_nodes(c, model, x, ids));
		FeatureReduction red = reduce_features(ranking, 3);

		GcnModel seed3 = init_model(3, c.cfg.hidden, derive_seed(c.cfg.seed, "init", 1));
		seed3.contract = red.contract;
		seed3.norm = normed.norm;
		TrainResult tr3 = train(seed3, g, select_columns(x, red.kept), labels, tc);
		model = std::move(tr3.model);
		loss = std::move(tr3.loss_history);
	}

	Prediction fit = predict(model, g, model_inputs(model, x), tc.threshold);

	save_model(model, model_file(c));
	c.result.artifacts.push_back(model_file(c));
	c.model = std::move(model);

	json j;
	j["schema_version"] = 1;
	j["contract"] = c.model->contract;
	j["hidden"] = c.cfg.hidden;
	j["epochs"] = tc.epochs;
	j["batch_size"] = tc.batch_size;
	j["steps"] = loss.size();
	j["loss"] = loss;
	j["train_accuracy"] = accuracy(fit.label, labels);
	write_artifact(c, "loss_history.json", dump_json(j));
}

void stage_predict(Context &c)
{
	const GcnModel &m = ensure_model(c);
	const Cdfg &g = ensure_graph(c);
	Prediction p = predict(m, g, inference_inputs(c, m), c.cfg.train.threshold);

	json j;
	j["schema_version"] = 1;
	j["contract"] = m.contract;
	j["threshold"] = p.threshold;
	j["nodes"] = json::array();
	for (size_t i = 0; i < g.nodes.size(); ++i) {
		const CdfgNode &n = g.nodes[i];
		j["nodes"].push_back({{"id", n.id},
				      {"label", n.label},
				      {"module", n.module},
				      {"line", n.line},
				      {"kind", to_string(n.kind)},
				      {"probability", p.probability[i]},
				      {"leaky", p.label[i] == 1}});
	}
	write_artifact(c, "predictions.json", dump_json(j));
}

void stage_explain(Context &c)
{
	const GcnModel &m = ensure_model(c);
	const Cdfg &g = ensure_graph(c);
	Matrix x = inference_inputs(c, m);
	Prediction p = predict(m, g, x, c.cfg.train.threshold);

	std::vector<Explanation> exps = explain_nodes(c, m, x, explained_nodes(c, p));

	json j;
	j["schema_version"] = 1;
	j["contract"] = m.contract;
	j["explanations"] = json::array();
	for (const Explanation &e : exps) {
		j["explanations"].push_back(json::parse(explanation_to_json(e)));
	}
	write_artifact(c, "explanations.json", dump_json(j));
	write_artifact(c, "feature_ranking.csv", ranking_to_csv(aggregate_importance(exps)));
}

void write_report(Context &c, const VulnerabilityReport &report)
{
	write_artifact(c, "report.json", report_to_json(report) + "\n");
	write_artifact(c, "report.md",
		       report_to_markdown(report, c.cfg.top, &ensure_ast(c).source_map));
}

void stage_localize(Context &c)
{
	write_report(c, ensure_report(c));
}

void stage_fortify(Context &c)
{
	const DesignAst &ast = ensure_ast(c);
	VulnerabilityReport report = ensure_report(c);

	FortifyConfig fc = c.cfg.fortify;
	fc.seed = derive_seed(c.cfg.seed, "fortify");
	FortifiedDesign fd = fortify_design(ast, report, fc);
	for (const std::string &w : fd.warnings) {
		warn(c, w);
	}

	for (const auto &[name, text] : fd.files) {
		write_artifact(c, name, text);
	}
	write_artifact(c, "fortified.patch", fd.unified_diff);

	for (ReportEntry &e : report.entries) {
		for (const LineRewrite &r : fd.rewrites) {
			if (r.file == e.span.file && r.line == e.span.first_line) {
				e.masked_text = r.masked;
				break;
			}
		}
	}
	write_report(c, report);

	json ej;
	ej["schema_version"] = 1;
	if (!fd.reparses) {
		ej["checked"] = false;
		ej["reason"] = "fortified sources are outside the simulated grammar";
	} else {
		std::vector<std::pair<std::string, std::string>> files(fd.files.begin(), fd.files.end());
		DesignAst fortified = parse_design(files, ast.top);

		EquivalenceConfig ec;
		ec.random_vectors = c.cfg.equivalence_vectors;
		ec.seed = derive_seed(c.cfg.seed, "equivalence");
		ec.mask_name = fc.mask_name;
		ec.mask_width = fc.mask_width;
		ec.clock = c.cfg.stimulus.clock;

		const RtlModule &top = ast.module_or_throw(ast.top);
		std::vector<Stimulus> stim;
		if (!c.cfg.stimulus.clock.empty()) {
			const Port *p = top.find_port(c.cfg.stimulus.clock);
			if (p != nullptr && p->dir == PortDir::Input) {
				stim = clock_stimulus(c.cfg.stimulus.clock, c.cfg.stimulus.cycles);
			}
		}
		EquivalenceResult er = check_equivalence(ast, fortified, stim, c.cfg.stimulus.cycles, ec);

		ej["checked"] = true;
		ej["equivalent"] = er.equivalent;
		ej["vectors"] = er.vectors;
		ej["outputs"] = er.outputs;
		if (er.divergence) {
			ej["divergence"] = {{"time", er.divergence->time},
					    {"signal", er.divergence->signal},
					    {"original", er.divergence->original},
					    {"fortified", er.divergence->fortified}};
			warn(c, "fortified design diverges from the original on output '" +
				    er.divergence->signal + "' at time " +
				    std::to_string(er.divergence->time));
		} else {
			ej["divergence"] = nullptr;
		}
	}
	write_artifact(c, "equivalence.json", dump_json(ej));
}

std::string utc_timestamp()
{
	std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
	std::tm tm{};
	gmtime_r(&now, &tm);
	char buf[32];
	std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
	return buf;
}

void run_one(Context &c, const std::string &stage);

void stage_pipeline(Context &c)
{
	for (const std::string &s : stage_names()) {
		run_one(c, s);
	}
	json meta;
	meta["schema_version"] = 1;
	meta["tool"] = "psctool";
	meta["generated_at"] = utc_timestamp();
	meta["top"] = c.cfg.top;
	meta["seed"] = c.cfg.seed;
	meta["feature_set"] = c.cfg.feature_set;
	meta["artifacts"] = c.result.artifacts;
	meta["warnings"] = c.result.warnings;
	write_artifact(c, "metadata.json", dump_json(meta));
}

void run_one(Context &c, const std::string &stage)
{
	if (stage == "parse") {
		stage_parse(c);
	} else if (stage == "cdfg") {
		stage_cdfg(c);
	} else if (stage == "features") {
		stage_features(c);
	} else if (stage == "train") {
		stage_train(c);
	} else if (stage == "predict") {
		stage_predict(c);
	} else if (stage == "explain") {
		stage_explain(c);
	} else if (stage == "localize") {
		stage_localize(c);
	} else if (stage == "fortify") {
		stage_fortify(c);
	} else if (stage == "pipeline") {
		stage_pipeline(c);
	} else {
		throw ConfigError("unknown stage '" + stage + "'");
	}
}

} // namespace

const std::vector<std::string> &stage_names()
{
	static const std::vector<std::string> names = {"parse",   "cdfg",    "features", "train",
						       "predict", "explain", "localize", "fortify"};
	return names;
}

StageResult run_stage(const PipelineConfig &cfg, const std::string &stage)
{
	if (cfg.feature_set != "7" && cfg.feature_set != "top3") {
		throw ConfigError("feature set must be '7' or 'top3', got '" + cfg.feature_set + "'");
	}
	if (cfg.out_dir.empty()) {
		throw ConfigError("config names no output directory");
	}
	std::error_code ec;
	std::filesystem::create_directories(cfg.out_dir, ec);
	if (ec) {
		throw ConfigError("cannot create output directory: " + cfg.out_dir);
	}

	Context c(cfg);
	run_one(c, stage);
	c.result.exit_code = c.result.warnings.empty() ? 0 : 2;
	return c.result;
}

} // namespace psc
