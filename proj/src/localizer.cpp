#include "psc/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <json.hpp>

#include "psc/errors.hpp"

namespace psc {

namespace {

struct OpCounts {
	int conditions = 0;
	int bitops = 0;
	int calls = 0;
};

bool is_bit_manipulation(BinOp op)
{
	switch (op) {
	case BinOp::And:
	case BinOp::Or:
	case BinOp::Xor:
	case BinOp::Shl:
	case BinOp::Shr:
		return true;
	default:
		return false;
	}
}

using CondFilter = std::function<bool(const Expr &)>;

void scan_expr(const Expr &e, OpCounts &c, const CondFilter &counts)
{
	for_each_expr(e, [&](const Expr &n) {
		switch (n.kind) {
		case ExprKind::Binary:
			if (is_bit_manipulation(n.bin)) {
				++c.bitops;
			}
			break;
		case ExprKind::Unary:
			if (n.un == UnOp::BitNot) {
				++c.bitops;
			}
			break;
		case ExprKind::FunctionCall:
			++c.calls;
			break;
		case ExprKind::Ternary:
			if (counts(*n.args[0])) {
				++c.conditions;
			}
			break;
		default:
			break;
		}
	});
}

void scan_stmt(const Stmt &s, OpCounts &c, const CondFilter &counts)
{
	switch (s.kind) {
	case StmtKind::Assign:
		scan_expr(*s.lhs, c, counts);
		scan_expr(*s.rhs, c, counts);
		break;
	case StmtKind::If:
		if (counts(*s.cond)) {
			++c.conditions;
		}
		scan_expr(*s.cond, c, counts);
		if (s.then_branch) {
			scan_stmt(*s.then_branch, c, counts);
		}
		if (s.else_branch) {
			scan_stmt(*s.else_branch, c, counts);
		}
		break;
	case StmtKind::Case:
		if (counts(*s.selector)) {
			++c.conditions;
		}
		scan_expr(*s.selector, c, counts);
		for (const CaseArm &arm : s.arms) {
			for (const ExprPtr &label : arm.labels) {
				scan_expr(*label, c, counts);
			}
			if (arm.body) {
				scan_stmt(*arm.body, c, counts);
			}
		}
		break;
	case StmtKind::Block:
		for (const StmtPtr &child : s.stmts) {
			scan_stmt(*child, c, counts);
		}
		break;
	}
}

void collect_leaves(const Stmt &s, std::vector<const Stmt *> &out)
{
	switch (s.kind) {
	case StmtKind::Assign:
		out.push_back(&s);
		break;
	case StmtKind::If:
		if (s.then_branch) {
			collect_leaves(*s.then_branch, out);
		}
		if (s.else_branch) {
			collect_leaves(*s.else_branch, out);
		}
		break;
	case StmtKind::Case:
		for (const CaseArm &arm : s.arms) {
			if (arm.body) {
				collect_leaves(*arm.body, out);
			}
		}
		break;
	case StmtKind::Block:
		for (const StmtPtr &child : s.stmts) {
			collect_leaves(*child, out);
		}
		break;
	}
}

using WriterMap = std::map<std::string, std::vector<const Stmt *>>;

/// Module-level assignments grouped by target signal; function bodies are
/// excluded because their names are function-local.
WriterMap module_writers(const RtlModule &mod)
{
	WriterMap writers;
	for (const FunctionalStatement &fs : mod.statements) {
		if (fs.kind == FsKind::FunctionDecl || !fs.body) {
			continue;
		}
		std::vector<const Stmt *> leaves;
		collect_leaves(*fs.body, leaves);
		for (const Stmt *leaf : leaves) {
			writers[lvalue_target(*leaf->lhs)].push_back(leaf);
		}
	}
	return writers;
}

/// Longest chain of distinct prior assignments feeding this one. Register
/// feedback cycles are cut at the revisited assignment.
int leaf_depth(const Stmt *leaf, const WriterMap &writers, std::set<const Stmt *> &stack, int budget)
{
	if (budget <= 0) {
		return 0;
	}
	stack.insert(leaf);
	std::set<std::string> reads = expr_signals(*leaf->rhs);
	for (const std::string &s : lvalue_index_signals(*leaf->lhs)) {
		reads.insert(s);
	}
	int best = 0;
	for (const std::string &r : reads) {
		auto it = writers.find(r);
		if (it == writers.end()) {
			continue;
		}
		int via = 0;
		bool has_other_writer = false;
		for (const Stmt *w : it->second) {
			if (w == leaf) {
				continue;
			}
			has_other_writer = true;
			if (stack.count(w)) {
				continue;
			}
			via = std::max(via, leaf_depth(w, writers, stack, budget - 1));
		}
		if (has_other_writer) {
			best = std::max(best, 1 + via);
		}
	}
	stack.erase(leaf);
	return best;
}

/// Vertex indices reachable from any sensitive signal, taint flowing in the
/// read→write direction.
std::set<int> tainted_vertices(const VarDepGraph &dep, const std::set<std::string> &sensitive)
{
	std::set<int> tainted;
	std::vector<int> frontier;
	for (const std::string &name : sensitive) {
		int v = dep.resolve(name);
		if (tainted.insert(v).second) {
			frontier.push_back(v);
		}
	}
	while (!frontier.empty()) {
		int v = frontier.back();
		frontier.pop_back();
		for (int succ : dep.out[size_t(v)]) {
			if (tainted.insert(succ).second) {
				frontier.push_back(succ);
			}
		}
	}
	return tainted;
}

} // namespace

LineFrequency collect_leaky_lines(const Prediction &pred, const Cdfg &g)
{
	if (pred.label.size() != g.nodes.size()) {
		throw ShapeMismatch("prediction covers " + std::to_string(pred.label.size()) +
				    " nodes but the graph has " + std::to_string(g.nodes.size()));
	}
	LineFrequency freq;
	for (size_t i = 0; i < g.nodes.size(); ++i) {
		const CdfgNode &n = g.nodes[i];
		if (pred.label[i] != 1 || n.kind == CdfgKind::ENTRY || n.kind == CdfgKind::EXIT) {
			continue;
		}
		++freq.counts[{n.module, n.line}];
	}
	if (freq.counts.empty()) {
		freq.warnings.push_back("no leakage predicted");
	}
	return freq;
}

std::vector<LineKey> rank_lines(const LineFrequency &freq, const std::map<LineKey, LeakageScore> &scores)
{
	std::vector<LineKey> keys;
	for (const auto &[key, count] : freq.counts) {
		(void)count;
		keys.push_back(key);
	}
	auto total = [&](const LineKey &k) {
		auto it = scores.find(k);
		return it == scores.end() ? 0 : it->second.total;
	};
	std::sort(keys.begin(), keys.end(), [&](const LineKey &a, const LineKey &b) {
		int ca = freq.counts.at(a);
		int cb = freq.counts.at(b);
		if (ca != cb) {
			return ca > cb;
		}
		int ta = total(a);
		int tb = total(b);
		if (ta != tb) {
			return ta > tb;
		}
		return a < b;
	});
	return keys;
}

LeakageScore leakage_score(const RtlModule &mod, const FunctionalStatement &fs, const VarDepGraph &dep,
			   const std::set<std::string> &sensitive, const LocalizeConfig &cfg)
{
	CondFilter counts = [](const Expr &) { return true; };
	std::set<int> tainted;
	if (cfg.conditional_requires_taint) {
		if (!sensitive.empty()) {
			tainted = tainted_vertices(dep, sensitive);
		}
		counts = [&](const Expr &cond) {
			for (const std::string &sig : expr_signals(cond)) {
				std::string qualified = mod.name + "." + sig;
				if (sensitive.count(sig) || sensitive.count(qualified)) {
					return true;
				}
				if (dep.has_vertex(qualified) && tainted.count(dep.vertex_or_throw(qualified))) {
					return true;
				}
			}
			return false;
		};
	}

	OpCounts c;
	if (fs.kind == FsKind::FunctionDecl) {
		if (fs.function && fs.function->body) {
			scan_stmt(*fs.function->body, c, counts);
		}
	} else if (fs.body) {
		scan_stmt(*fs.body, c, counts);
	}

	LeakageScore score;
	score.conditional_dependency = c.conditions;
	score.bit_manipulation = c.bitops;
	score.function_calls = c.calls;
	if (fs.kind != FsKind::FunctionDecl && fs.body) {
		WriterMap writers = module_writers(mod);
		std::vector<const Stmt *> leaves;
		collect_leaves(*fs.body, leaves);
		for (const Stmt *leaf : leaves) {
			std::set<const Stmt *> stack;
			score.dependency_depth =
				std::max(score.dependency_depth, leaf_depth(leaf, writers, stack, kDefaultMaxDepth));
		}
	}
	score.total = score.conditional_dependency + score.bit_manipulation + score.function_calls +
		      score.dependency_depth;
	return score;
}

std::vector<StatementScore> score_design(const DesignAst &ast, const VarDepGraph &dep,
					 const std::set<std::string> &sensitive, const LocalizeConfig &cfg)
{
	std::vector<StatementScore> out;
	for (const RtlModule &mod : ast.modules) {
		for (const FunctionalStatement &fs : mod.statements) {
			StatementScore s;
			s.module = mod.name;
			s.fs_index = fs.index;
			s.span = fs.span;
			s.score = leakage_score(mod, fs, dep, sensitive, cfg);
			out.push_back(std::move(s));
		}
	}
	return out;
}

VulnerabilityReport build_report(const LineFrequency &freq, const std::vector<StatementScore> &scores,
				 const LocalizeConfig &cfg)
{
	VulnerabilityReport rep;
	rep.config = cfg;
	rep.warnings = freq.warnings;

	// Innermost scored statement containing the line, if any.
	auto enclosing = [&](const LineKey &k) -> const StatementScore * {
		const StatementScore *best = nullptr;
		for (const StatementScore &s : scores) {
			if (s.module != k.module || k.line < s.span.first_line || k.line > s.span.last_line) {
				continue;
			}
			if (!best || s.span.last_line - s.span.first_line <
					     best->span.last_line - best->span.first_line) {
				best = &s;
			}
		}
		return best;
	};

	std::map<LineKey, LeakageScore> line_scores;
	for (const auto &[key, count] : freq.counts) {
		(void)count;
		if (const StatementScore *s = enclosing(key)) {
			line_scores[key] = s->score;
		}
	}
	std::vector<LineKey> ranked = rank_lines(freq, line_scores);

	// Nearest-rank quantile of every scored statement's total.
	int threshold = 0;
	if (!scores.empty()) {
		std::vector<int> totals;
		for (const StatementScore &s : scores) {
			totals.push_back(s.score.total);
		}
		std::sort(totals.begin(), totals.end());
		double q = std::clamp(cfg.score_quantile, 0.0, 1.0);
		size_t idx = size_t(std::max(1.0, std::ceil(q * double(totals.size())))) - 1;
		threshold = totals[std::min(idx, totals.size() - 1)];
	}

	size_t cut = size_t(std::ceil(std::clamp(cfg.rank_fraction, 0.0, 1.0) * double(ranked.size())));
	std::set<std::pair<std::string, int>> covered;
	for (size_t i = 0; i < ranked.size(); ++i) {
		const LineKey &key = ranked[i];
		ReportEntry e;
		e.module = key.module;
		e.line = key.line;
		e.frequency = freq.counts.at(key);
		e.rank = int(i + 1);
		if (const StatementScore *s = enclosing(key)) {
			e.fs_index = s->fs_index;
			e.span = s->span;
			e.score = s->score;
			covered.insert({s->module, s->fs_index});
		} else {
			rep.warnings.push_back("no statement found at " + key.module + ":" +
					       std::to_string(key.line));
		}
		e.corroborated = i + 1 <= cut && e.score.total >= threshold;
		rep.entries.push_back(std::move(e));
	}
	if (rep.entries.empty()) {
		rep.warnings.push_back("empty report: no leaky lines");
	}

	for (const StatementScore &s : scores) {
		if (s.score.total < std::max(threshold, 1) || covered.count({s.module, s.fs_index})) {
			continue;
		}
		ReportEntry e;
		e.module = s.module;
		e.fs_index = s.fs_index;
		e.line = s.span.first_line;
		e.span = s.span;
		e.score = s.score;
		rep.score_only.push_back(std::move(e));
	}
	std::sort(rep.score_only.begin(), rep.score_only.end(), [](const ReportEntry &a, const ReportEntry &b) {
		if (a.score.total != b.score.total) {
			return a.score.total > b.score.total;
		}
		if (a.module != b.module) {
			return a.module < b.module;
		}
		return a.line < b.line;
	});
	return rep;
}

namespace {

nlohmann::json entry_to_json(const ReportEntry &e)
{
	nlohmann::json j;
	j["module"] = e.module;
	j["fs_index"] = e.fs_index;
	j["line"] = e.line;
	j["file"] = e.span.file;
	j["span"] = {e.span.first_line, e.span.last_line};
	j["frequency"] = e.frequency;
	j["rank"] = e.rank;
	j["score"] = {{"conditional_dependency", e.score.conditional_dependency},
		      {"bit_manipulation", e.score.bit_manipulation},
		      {"function_calls", e.score.function_calls},
		      {"dependency_depth", e.score.dependency_depth},
		      {"total", e.score.total}};
	j["corroborated"] = e.corroborated;
	j["masked_text"] = e.masked_text;
	return j;
}

std::string md_escape(std::string text)
{
	for (size_t pos = 0; (pos = text.find('|', pos)) != std::string::npos; pos += 2) {
		text.replace(pos, 1, "\\|");
	}
	return text;
}

} // namespace

std::string report_to_json(const VulnerabilityReport &r)
{
	nlohmann::json j;
	j["schema_version"] = 1;
	j["config"] = {{"conditional_requires_taint", r.config.conditional_requires_taint},
		       {"rank_fraction", r.config.rank_fraction},
		       {"score_quantile", r.config.score_quantile}};
	j["entries"] = nlohmann::json::array();
	for (const ReportEntry &e : r.entries) {
		j["entries"].push_back(entry_to_json(e));
	}
	j["score_only"] = nlohmann::json::array();
	for (const ReportEntry &e : r.score_only) {
		j["score_only"].push_back(entry_to_json(e));
	}
	j["warnings"] = r.warnings;
	return j.dump(2);
}

std::string report_to_markdown(const VulnerabilityReport &r, const std::string &benchmark,
			       const SourceMap *source)
{
	std::string md = "# Vulnerability report — " + benchmark + "\n\n";

	auto line_cell = [&](const ReportEntry &e) {
		std::string cell = std::to_string(e.line);
		if (source && source->has_file(e.span.file)) {
			std::string text = source->line(e.span.file, e.line);
			size_t start = text.find_first_not_of(" \t");
			if (start != std::string::npos) {
				cell += ": `" + md_escape(text.substr(start)) + "`";
			}
		}
		return cell;
	};

	md += "| Benchmark | Vulnerable Module | Functional Statement No. | Vulnerable Line | Masked "
	      "Implementation |\n";
	md += "| --- | --- | --- | --- | --- |\n";
	bool any = false;
	for (const ReportEntry &e : r.entries) {
		if (!e.corroborated) {
			continue;
		}
		any = true;
		std::string masked = e.masked_text.empty() ? "—" : "`" + md_escape(e.masked_text) + "`";
		md += "| " + benchmark + " | " + md_escape(e.module) + " | " + std::to_string(e.fs_index) +
		      " | " + line_cell(e) + " | " + masked + " |\n";
	}
	if (!any) {
		md += "| " + benchmark + " | — | — | — | — |\n";
	}

	std::string other;
	for (const ReportEntry &e : r.entries) {
		if (e.corroborated) {
			continue;
		}
		other += "- rank " + std::to_string(e.rank) + ": " + e.module + ":" + std::to_string(e.line) +
			 " (frequency " + std::to_string(e.frequency) + ", score " +
			 std::to_string(e.score.total) + ")\n";
	}
	if (!other.empty()) {
		md += "\n## Other ranked lines\n\n" + other;
	}

	if (!r.score_only.empty()) {
		md += "\n## Score-only findings (never predicted leaky)\n\n";
		for (const ReportEntry &e : r.score_only) {
			md += "- " + e.module + ":" + std::to_string(e.line) + " (score " +
			      std::to_string(e.score.total) + ")\n";
		}
	}

	if (!r.warnings.empty()) {
		md += "\n## Warnings\n\n";
		for (const std::string &w : r.warnings) {
			md += "- " + w + "\n";
		}
	}
	return md;
}

} // namespace psc
