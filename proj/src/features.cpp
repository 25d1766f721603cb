#include "psc/features.hpp"

#include <cmath>
#include <cstdio>

#include "psc/errors.hpp"

namespace psc {

namespace {

void scan_ops(const Expr &e, std::array<int, 4> &bits)
{
	for_each_expr(e, [&bits](const Expr &x) {
		if (x.kind == ExprKind::Binary) {
			if (x.bin == BinOp::Xor) {
				bits[0] = 1;
			} else if (x.bin == BinOp::Or) {
				bits[1] = 1;
			} else if (x.bin == BinOp::And) {
				bits[2] = 1;
			}
		} else if (x.kind == ExprKind::Ternary) {
			bits[3] = 1;
		}
	});
}

std::string format_value(double v)
{
	char buf[32];
	std::snprintf(buf, sizeof(buf), "%.10g", v);
	return buf;
}

} // namespace

std::string feature_contract()
{
	std::string out;
	for (const char *col : kFeatureColumns) {
		if (!out.empty()) {
			out += ',';
		}
		out += col;
	}
	return out;
}

std::array<int, 4> op_type_vector(const CdfgNode &node, bool mux_includes_case)
{
	std::array<int, 4> bits = {0, 0, 0, 0};
	switch (node.kind) {
	case CdfgKind::AS:
	case CdfgKind::CALL:
		for (const Stmt *st : node.stmts) {
			if (st->kind != StmtKind::Assign) {
				continue;
			}
			scan_ops(*st->rhs, bits);
			scan_ops(*st->lhs, bits); // select indices may hold operators
		}
		if (node.instance) {
			for (const auto &b : node.instance->bindings) {
				if (b.expr) {
					scan_ops(*b.expr, bits);
				}
			}
		}
		break;
	case CdfgKind::IF:
		for (const Stmt *st : node.stmts) {
			if (st->kind == StmtKind::If) {
				scan_ops(*st->cond, bits);
			}
		}
		break;
	case CdfgKind::CASE:
		for (const Stmt *st : node.stmts) {
			if (st->kind != StmtKind::Case) {
				continue;
			}
			scan_ops(*st->selector, bits);
			for (const auto &arm : st->arms) {
				for (const auto &label : arm.labels) {
					scan_ops(*label, bits);
				}
			}
		}
		if (mux_includes_case) {
			bits[3] = 1;
		}
		break;
	case CdfgKind::ALWAYS:
	case CdfgKind::ENTRY:
	case CdfgKind::EXIT:
		break;
	}
	return bits;
}

int node_degree(const Cdfg &g, int id)
{
	int degree = 0;
	for (const auto &e : g.edges) {
		degree += int(e.src == id) + int(e.dst == id);
	}
	return degree;
}

std::map<int, PathCount> node_path_counts(const Cdfg &g, const VarDepGraph &dep, const FeatureConfig &cfg)
{
	std::vector<std::string> keys;
	for (const auto &name : cfg.sensitive_signals) {
		keys.push_back(dep.vertices.at(size_t(dep.resolve(name))));
	}

	std::map<int, PathCount> out;
	for (const auto &node : g.nodes) {
		PathCount best;
		for (const auto &signal : node.signals) {
			std::string vertex = node.module + "." + signal;
			if (!dep.has_vertex(vertex)) {
				continue;
			}
			for (const auto &key : keys) {
				PathCount c = count_vulnerable_paths(dep, key, vertex, cfg.max_paths, cfg.max_depth);
				best.count = std::max(best.count, c.count);
				best.saturated = best.saturated || c.saturated;
				best.depth_clipped = best.depth_clipped || c.depth_clipped;
			}
		}
		out[node.id] = best;
	}
	return out;
}

FeatureMatrix assemble_features(const Cdfg &g, const std::map<int, PathCount> &paths, const TraceSet &traces,
				const FeatureConfig &cfg, std::vector<std::string> *warnings)
{
	if (paths.size() != g.nodes.size()) {
		throw DimensionMismatch("path counts cover " + std::to_string(paths.size()) + " nodes; graph has " +
					std::to_string(g.nodes.size()));
	}
	for (const auto &node : g.nodes) {
		if (!paths.count(node.id)) {
			throw DimensionMismatch("no path count for node " + std::to_string(node.id));
		}
	}

	FeatureMatrix m;
	for (const auto &node : g.nodes) {
		m.node_ids.push_back(node.id);
		std::array<double, 7> row = {0, 0, 0, 0, 0, 0, 0};
		row[1] = double(node_degree(g, node.id));
		if (node.kind != CdfgKind::ENTRY && node.kind != CdfgKind::EXIT) {
			row[0] = double(paths.at(node.id).count);
			row[2] = double(node_hamming(node, traces, warnings, cfg.hamming_aggregation));
			std::array<int, 4> ops = op_type_vector(node, cfg.mux_includes_case);
			for (int i = 0; i < 4; ++i) {
				row[size_t(3 + i)] = double(ops[size_t(i)]);
			}
		}
		m.rows.push_back(row);
	}
	return m;
}

FeatureMatrix normalize(const FeatureMatrix &m)
{
	if (m.norm.applied) {
		return m;
	}
	if (m.rows.size() < 2) {
		throw DimensionMismatch("normalization needs at least 2 rows, got " + std::to_string(m.rows.size()));
	}
	NormalizationRecord rec;
	double n = double(m.rows.size());
	for (size_t col = 0; col < 3; ++col) {
		double sum = 0;
		for (const auto &row : m.rows) {
			sum += row[col];
		}
		double mean = sum / n;
		double var = 0;
		for (const auto &row : m.rows) {
			var += (row[col] - mean) * (row[col] - mean);
		}
		var /= n;
		rec.mean[col] = mean;
		rec.stdev[col] = var > 0 ? std::sqrt(var) : 1.0;
	}
	return normalize(m, rec);
}

FeatureMatrix normalize(const FeatureMatrix &m, const NormalizationRecord &record)
{
	if (m.norm.applied) {
		NormalizationRecord want = record;
		want.applied = true;
		if (m.norm == want) {
			return m;
		}
		throw ConfigError("matrix is already normalized with different statistics");
	}
	FeatureMatrix out = m;
	for (auto &row : out.rows) {
		for (size_t col = 0; col < 7; ++col) {
			row[col] = (row[col] - record.mean[col]) / record.stdev[col];
		}
	}
	out.norm = record;
	out.norm.applied = true;
	return out;
}

std::string to_csv(const FeatureMatrix &m)
{
	std::string out = "node_id," + feature_contract() + "\n";
	for (size_t i = 0; i < m.rows.size(); ++i) {
		out += std::to_string(m.node_ids[i]);
		for (double v : m.rows[i]) {
			out += ',';
			out += format_value(v);
		}
		out += '\n';
	}
	return out;
}

} // namespace psc
