#include "psc/fortifier.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "psc/errors.hpp"
#include "psc/parser.hpp"
#include "psc/rng.hpp"

namespace psc {

namespace {

// ---------------------------------------------------------------------------
// Expression printing. Binding strength mirrors the parser's ladder; a child
// is wrapped only when it binds looser than its position requires.

constexpr int kPrecTernary = 0;
constexpr int kPrecXor = 2;

int prec_of(const Expr &e)
{
	switch (e.kind) {
	case ExprKind::Ternary:
		return kPrecTernary;
	case ExprKind::Binary:
		switch (e.bin) {
		case BinOp::Or:
			return 1;
		case BinOp::Xor:
			return 2;
		case BinOp::And:
			return 3;
		case BinOp::Eq:
		case BinOp::Neq:
			return 4;
		case BinOp::Lt:
		case BinOp::Gt:
		case BinOp::Le:
		case BinOp::Ge:
			return 5;
		case BinOp::Shl:
		case BinOp::Shr:
			return 6;
		case BinOp::Add:
		case BinOp::Sub:
			return 7;
		case BinOp::Mul:
			return 8;
		}
		return 8;
	case ExprKind::Unary:
		return 9;
	default:
		return 10;
	}
}

const char *op_text(BinOp op)
{
	switch (op) {
	case BinOp::And:
		return "&";
	case BinOp::Or:
		return "|";
	case BinOp::Xor:
		return "^";
	case BinOp::Add:
		return "+";
	case BinOp::Sub:
		return "-";
	case BinOp::Mul:
		return "*";
	case BinOp::Shl:
		return "<<";
	case BinOp::Shr:
		return ">>";
	case BinOp::Eq:
		return "==";
	case BinOp::Neq:
		return "!=";
	case BinOp::Lt:
		return "<";
	case BinOp::Gt:
		return ">";
	case BinOp::Le:
		return "<=";
	case BinOp::Ge:
		return ">=";
	}
	return "?";
}

std::string constant_text(const Expr &e)
{
	if (e.literal_width < 0) {
		return std::to_string(e.value);
	}
	if (e.literal_width == 1) {
		return (e.value & 1) ? "1'b1" : "1'b0";
	}
	char buf[32];
	std::snprintf(buf, sizeof buf, "%d'h%llX", e.literal_width, static_cast<unsigned long long>(e.value));
	return buf;
}

std::string emit_expr_at(const Expr &e, int required)
{
	std::string text;
	switch (e.kind) {
	case ExprKind::SignalRef:
		text = e.name;
		break;
	case ExprKind::Constant:
		text = constant_text(e);
		break;
	case ExprKind::Unary:
		text = (e.un == UnOp::BitNot ? "~" : "-") + emit_expr_at(*e.args[0], 9);
		break;
	case ExprKind::Binary: {
		int p = prec_of(e);
		text = emit_expr_at(*e.args[0], p);
		text += " ";
		text += op_text(e.bin);
		text += " " + emit_expr_at(*e.args[1], p + 1);
		break;
	}
	case ExprKind::Ternary:
		text = emit_expr_at(*e.args[0], 1) + " ? " + emit_expr_at(*e.args[1], 0) + " : " +
		       emit_expr_at(*e.args[2], 0);
		break;
	case ExprKind::BitSelect:
		text = emit_expr_at(*e.args[0], 10) + "[" + emit_expr_at(*e.args[1], 0) + "]";
		break;
	case ExprKind::PartSelect:
		text = emit_expr_at(*e.args[0], 10) + "[" + emit_expr_at(*e.args[1], 0) + ":" +
		       emit_expr_at(*e.args[2], 0) + "]";
		break;
	case ExprKind::Concat: {
		text = "{";
		for (size_t i = 0; i < e.args.size(); ++i) {
			text += (i ? ", " : "") + emit_expr_at(*e.args[i], 0);
		}
		text += "}";
		break;
	}
	case ExprKind::Replicate: {
		text = "{" + emit_expr_at(*e.args[0], 0) + "{";
		for (size_t i = 1; i < e.args.size(); ++i) {
			text += (i > 1 ? ", " : "") + emit_expr_at(*e.args[i], 0);
		}
		text += "}}";
		break;
	}
	case ExprKind::FunctionCall: {
		text = e.name + "(";
		for (size_t i = 0; i < e.args.size(); ++i) {
			text += (i ? ", " : "") + emit_expr_at(*e.args[i], 0);
		}
		text += ")";
		break;
	}
	}
	if (prec_of(e) < required) {
		return "(" + text + ")";
	}
	return text;
}

std::string tabs(int n)
{
	return std::string(size_t(std::max(0, n)), '\t');
}

std::string assign_text(const Stmt &st)
{
	return std::string(st.continuous ? "assign " : "") + emit_expr_at(*st.lhs, 0) +
	       (st.nonblocking ? " <= " : " = ") + emit_expr_at(*st.rhs, 0) + ";";
}

void emit_stmt_lines(const Stmt &st, int indent, std::vector<std::string> &out)
{
	switch (st.kind) {
	case StmtKind::Assign:
		out.push_back(tabs(indent) + assign_text(st));
		break;
	case StmtKind::If:
		out.push_back(tabs(indent) + "if (" + emit_expr_at(*st.cond, 0) + ")");
		emit_stmt_lines(*st.then_branch, indent + 1, out);
		if (st.else_branch) {
			out.push_back(tabs(indent) + "else");
			emit_stmt_lines(*st.else_branch, indent + 1, out);
		}
		break;
	case StmtKind::Case:
		out.push_back(tabs(indent) + "case (" + emit_expr_at(*st.selector, 0) + ")");
		for (const auto &arm : st.arms) {
			std::string head;
			if (arm.is_default) {
				head = "default";
			} else {
				for (size_t i = 0; i < arm.labels.size(); ++i) {
					head += (i ? ", " : "") + emit_expr_at(*arm.labels[i], 0);
				}
			}
			if (arm.body->kind == StmtKind::Assign) {
				out.push_back(tabs(indent + 1) + head + ": " + assign_text(*arm.body));
			} else {
				out.push_back(tabs(indent + 1) + head + ":");
				emit_stmt_lines(*arm.body, indent + 2, out);
			}
		}
		out.push_back(tabs(indent) + "endcase");
		break;
	case StmtKind::Block:
		out.push_back(tabs(indent) + "begin");
		for (const auto &s : st.stmts) {
			emit_stmt_lines(*s, indent + 1, out);
		}
		out.push_back(tabs(indent) + "end");
		break;
	}
}

std::string always_header(const FunctionalStatement &fs)
{
	if (fs.clocked) {
		return "always @(posedge " + fs.clock + ")";
	}
	if (fs.sens_star) {
		return "always @*";
	}
	std::string list;
	for (size_t i = 0; i < fs.sens.size(); ++i) {
		list += (i ? ", " : "") + fs.sens[i];
	}
	return "always @(" + list + ")";
}

std::string range_text(int msb, int lsb)
{
	if (msb == 0 && lsb == 0) {
		return "";
	}
	return "[" + std::to_string(msb) + ":" + std::to_string(lsb) + "] ";
}

void emit_functional_lines(const FunctionalStatement &fs, int indent, std::vector<std::string> &out)
{
	switch (fs.kind) {
	case FsKind::ContinuousAssign:
	case FsKind::FunctionCallAssign:
	case FsKind::IfElse:
	case FsKind::CaseStatement:
		emit_stmt_lines(*fs.body, indent, out);
		break;
	case FsKind::AlwaysBlock:
		out.push_back(tabs(indent) + always_header(fs));
		emit_stmt_lines(*fs.body, indent + 1, out);
		break;
	case FsKind::FunctionDecl: {
		const RtlFunction &fn = *fs.function;
		out.push_back(tabs(indent) + "function " + range_text(fn.msb, fn.lsb) + fn.name + ";");
		for (const auto &in : fn.inputs) {
			out.push_back(tabs(indent + 1) + "input " + range_text(in.msb, in.lsb) + in.name + ";");
		}
		emit_stmt_lines(*fn.body, indent + 1, out);
		out.push_back(tabs(indent) + "endfunction");
		break;
	}
	}
}

std::string join_lines(const std::vector<std::string> &lines)
{
	std::string text;
	for (size_t i = 0; i < lines.size(); ++i) {
		text += (i ? "\n" : "") + lines[i];
	}
	return text;
}

const char *dir_text(PortDir dir)
{
	switch (dir) {
	case PortDir::Input:
		return "input";
	case PortDir::Output:
		return "output";
	case PortDir::Inout:
		return "inout";
	}
	return "input";
}

// ---------------------------------------------------------------------------
// Structural analysis shared by planning and rendering.

/// Peels singleton begin/end wrappers.
const Stmt *core_stmt(const Stmt &st)
{
	const Stmt *s = &st;
	while (s->kind == StmtKind::Block && s->stmts.size() == 1) {
		s = s->stmts.front().get();
	}
	return s;
}

/// Assignments of a pure assignment tree (blocks of assigns); nullopt when
/// anything else (if/case) appears.
bool collect_assigns(const Stmt &st, std::vector<const Stmt *> &out)
{
	if (st.kind == StmtKind::Assign) {
		out.push_back(&st);
		return true;
	}
	if (st.kind == StmtKind::Block) {
		for (const auto &s : st.stmts) {
			if (!collect_assigns(*s, out)) {
				return false;
			}
		}
		return true;
	}
	return false;
}

void stmt_exprs(const Stmt &st, std::vector<const Expr *> &out)
{
	if (st.lhs) {
		out.push_back(st.lhs.get());
	}
	if (st.rhs) {
		out.push_back(st.rhs.get());
	}
	if (st.cond) {
		out.push_back(st.cond.get());
	}
	if (st.selector) {
		out.push_back(st.selector.get());
	}
	for (const auto &arm : st.arms) {
		for (const auto &l : arm.labels) {
			out.push_back(l.get());
		}
		stmt_exprs(*arm.body, out);
	}
	if (st.then_branch) {
		stmt_exprs(*st.then_branch, out);
	}
	if (st.else_branch) {
		stmt_exprs(*st.else_branch, out);
	}
	for (const auto &s : st.stmts) {
		stmt_exprs(*s, out);
	}
}

bool expr_mentions(const Expr &e, const std::string &name)
{
	bool found = false;
	for_each_expr(e, [&](const Expr &x) {
		if ((x.kind == ExprKind::SignalRef || x.kind == ExprKind::FunctionCall) && x.name == name) {
			found = true;
		}
	});
	return found;
}

bool statement_mentions(const FunctionalStatement &fs, const std::string &name)
{
	std::vector<const Expr *> exprs;
	if (fs.body) {
		stmt_exprs(*fs.body, exprs);
	}
	if (fs.function && fs.function->body) {
		stmt_exprs(*fs.function->body, exprs);
	}
	for (const Expr *e : exprs) {
		if (expr_mentions(*e, name)) {
			return true;
		}
	}
	return false;
}

void xor_terms(const Expr &e, std::vector<const Expr *> &out)
{
	if (e.kind == ExprKind::Binary && e.bin == BinOp::Xor) {
		xor_terms(*e.args[0], out);
		xor_terms(*e.args[1], out);
		return;
	}
	out.push_back(&e);
}

bool is_primary_term(const Expr &e)
{
	switch (e.kind) {
	case ExprKind::SignalRef:
	case ExprKind::Constant:
	case ExprKind::BitSelect:
	case ExprKind::PartSelect:
	case ExprKind::Concat:
	case ExprKind::Replicate:
	case ExprKind::FunctionCall:
	case ExprKind::Unary:
		return true;
	default:
		return false;
	}
}

std::string selector_base(const Expr &sel)
{
	if (sel.kind == ExprKind::SignalRef) {
		return sel.name;
	}
	auto sigs = expr_signals(sel);
	return sigs.empty() ? "sel" : *sigs.begin();
}

/// First clock the module's own blocks run on, the configured fallback
/// input, or "" when the module has no clock at all.
std::string module_clock(const RtlModule &mod, const FortifyConfig &cfg)
{
	for (const auto &fs : mod.statements) {
		if (fs.kind == FsKind::AlwaysBlock && fs.clocked) {
			return fs.clock;
		}
	}
	if (const Port *p = mod.find_port(cfg.clock); p && p->dir == PortDir::Input && p->width() == 1) {
		return cfg.clock;
	}
	return "";
}

std::set<std::string> declared_names(const RtlModule &mod)
{
	std::set<std::string> names;
	for (const auto &p : mod.ports) {
		names.insert(p.name);
	}
	for (const auto &s : mod.signals) {
		names.insert(s.name);
	}
	for (const auto &fs : mod.statements) {
		if (fs.kind == FsKind::FunctionDecl) {
			names.insert(fs.function->name);
		}
	}
	for (const auto &inst : mod.instances) {
		names.insert(inst.instance_name);
	}
	return names;
}

std::string fresh_name(std::set<std::string> &taken, const std::string &base)
{
	std::string candidate = base;
	for (int n = 1; taken.count(candidate); ++n) {
		candidate = base + "_" + std::to_string(n);
	}
	taken.insert(candidate);
	return candidate;
}

std::pair<int, int> target_range(const RtlModule &mod, const std::string &name)
{
	if (const Signal *s = mod.find_signal(name)) {
		return {s->msb, s->lsb};
	}
	if (const Port *p = mod.find_port(name)) {
		return {p->msb, p->lsb};
	}
	return {0, 0};
}

std::string spot(const std::string &module, int line)
{
	return module + ":" + std::to_string(line);
}

// ---------------------------------------------------------------------------
// Mask generator.

const std::vector<int> &lfsr_taps(int width)
{
	static const std::map<int, std::vector<int>> taps = {
	    {2, {1, 0}}, {3, {2, 1}}, {4, {3, 2}}, {8, {7, 5, 4, 3}}, {16, {15, 13, 12, 10}},
	};
	auto it = taps.find(width);
	if (it == taps.end()) {
		throw ConfigError("mask width must be 1, 2, 3, 4, 8, or 16");
	}
	return it->second;
}

uint64_t mask_seed_value(const FortifyConfig &cfg, size_t module_ordinal, int width)
{
	uint64_t period = (uint64_t(1) << width) - 1;
	return derive_seed(cfg.seed, "fortify-mask", module_ordinal) % period + 1;
}

std::string lfsr_update_text(const std::string &mask, int width, const std::string &clock)
{
	std::string fb;
	const auto &taps = lfsr_taps(width);
	for (size_t i = 0; i < taps.size(); ++i) {
		fb += (i ? " ^ " : "") + mask + "[" + std::to_string(taps[i]) + "]";
	}
	std::string kept = width == 2 ? mask + "[0]" : mask + "[" + std::to_string(width - 2) + ":0]";
	return "always @(posedge " + clock + ") " + mask + " <= {" + kept + ", " + fb + "};";
}

// ---------------------------------------------------------------------------
// Style selection.

struct StyleDecision {
	MaskStyle style = MaskStyle::OperandWrap;
	std::vector<std::string> targets; // renamed targets, in first-write order
	bool delayed = false;
	std::string warning; // nonempty for rewrites that are knowingly unsound
};

/// Either a decision or the reason the statement must stay untouched.
struct Classified {
	bool supported = false;
	StyleDecision decision;
	std::string reason;
};

Classified unsupported(std::string reason)
{
	Classified c;
	c.reason = std::move(reason);
	return c;
}

Classified supported(StyleDecision d)
{
	Classified c;
	c.supported = true;
	c.decision = std::move(d);
	return c;
}

Classified classify_case(const FunctionalStatement &fs, const Stmt &core)
{
	if (fs.clocked) {
		return unsupported("a clocked case block updates its target conditionally and cannot be "
				   "unmasked against a moving mask");
	}
	if (!core.selector || core.selector->width <= 0) {
		return unsupported("the case selector width is unknown");
	}
	std::string target;
	bool has_default = false;
	std::set<uint64_t> label_values;
	bool labels_constant = true;
	for (const auto &arm : core.arms) {
		if (arm.is_default) {
			has_default = true;
		}
		for (const auto &label : arm.labels) {
			if (label->kind == ExprKind::Constant) {
				label_values.insert(label->value);
			} else {
				labels_constant = false;
			}
		}
		std::vector<const Stmt *> assigns;
		if (!collect_assigns(*arm.body, assigns) || assigns.empty()) {
			return unsupported("a case arm is not a plain assignment");
		}
		for (const Stmt *a : assigns) {
			if (a->lhs->kind != ExprKind::SignalRef) {
				return unsupported("a case arm writes a bit range of its target");
			}
			if (target.empty()) {
				target = a->lhs->name;
			} else if (target != a->lhs->name) {
				return unsupported("the case arms write more than one target");
			}
		}
	}
	for (const auto &arm : core.arms) {
		std::vector<const Stmt *> assigns;
		collect_assigns(*arm.body, assigns);
		for (const Stmt *a : assigns) {
			if (expr_mentions(*a->rhs, target)) {
				return unsupported("a case arm reads its own target, which would see the "
						   "masked value");
			}
		}
	}
	int w = core.selector->width;
	bool covered = has_default || (labels_constant && w <= 20 && label_values.size() == (uint64_t(1) << w));
	if (!covered) {
		return unsupported("the case does not cover every selector value, so the target would "
				   "keep a stale mask");
	}
	StyleDecision d;
	d.style = MaskStyle::CaseSelectorAndArm;
	d.targets = {target};
	return supported(d);
}

Classified classify_assigns(const RtlModule &mod, const FunctionalStatement &fs,
			    const std::vector<const Stmt *> &assigns, const FortifyConfig &cfg,
			    const std::string &mod_clock)
{
	// Declaration-embedded assignments ("wire y = ...;") span their own
	// declaration line, which a rewrite would replace and lose.
	for (const Stmt *a : assigns) {
		const std::string &base = lvalue_target(*a->lhs);
		if (const Signal *s = mod.find_signal(base);
		    s && s->line >= fs.span.first_line && s->line <= fs.span.last_line) {
			return unsupported("the assignment is embedded in the declaration of '" + base +
					   "'");
		}
	}

	bool all_two_term = true;
	for (const Stmt *a : assigns) {
		std::vector<const Expr *> terms;
		xor_terms(*a->rhs, terms);
		if (terms.size() == 2) {
			continue;
		}
		all_two_term = false;
		if (terms.size() == 1 && !is_primary_term(*terms[0])) {
			const Expr &t = *terms[0];
			bool mul = t.kind == ExprKind::Binary && t.bin == BinOp::Mul;
			if (mul && cfg.paper_fidelity && assigns.size() == 1) {
				StyleDecision d;
				d.style = MaskStyle::OperandWrap;
				d.warning = "masking both multiplication operands does not preserve the "
					    "product; rewritten for fidelity with the published form only";
				return supported(d);
			}
			if (mul) {
				return unsupported("masking multiplication operands does not preserve the "
						   "product (rerun with paper fidelity to force the "
						   "published form)");
			}
			return unsupported("the right-hand side is not an XOR chain, so a mask cannot "
					   "cancel out of it");
		}
	}
	if (all_two_term) {
		StyleDecision d;
		d.style = MaskStyle::OperandWrap;
		return supported(d);
	}

	// Append "^ mask" and rename: targets must be whole signals, written
	// unconditionally, and never read back inside the statement.
	std::vector<std::string> targets;
	for (const Stmt *a : assigns) {
		if (a->lhs->kind != ExprKind::SignalRef) {
			return unsupported("a bit-range target cannot carry a whole-width mask");
		}
		const std::string &t = a->lhs->name;
		if (std::find(targets.begin(), targets.end(), t) == targets.end()) {
			targets.push_back(t);
		}
	}
	for (const Stmt *a : assigns) {
		for (const auto &t : targets) {
			if (expr_mentions(*a->rhs, t)) {
				return unsupported("the target '" + t +
						   "' is read back inside the statement and would see "
						   "the masked value");
			}
		}
	}
	StyleDecision d;
	d.style = MaskStyle::XorTermAppend;
	d.targets = std::move(targets);
	if (fs.kind == FsKind::AlwaysBlock && fs.clocked) {
		if (fs.clock != mod_clock) {
			return unsupported("the statement runs on a different clock than the module's mask "
					   "generator");
		}
		d.delayed = true;
	}
	return supported(d);
}

Classified classify(const RtlModule &mod, const FunctionalStatement &fs, const FortifyConfig &cfg,
		    const std::string &mod_clock)
{
	if (fs.kind == FsKind::FunctionDecl) {
		return unsupported("function declarations cannot be masked");
	}
	if (statement_mentions(fs, cfg.mask_name)) {
		return unsupported("the statement already reads mask signal '" + cfg.mask_name + "'");
	}
	const Stmt *core = core_stmt(*fs.body);
	if (core->kind == StmtKind::Case) {
		return classify_case(fs, *core);
	}
	if (core->kind == StmtKind::If) {
		StyleDecision d;
		d.style = MaskStyle::OperandWrap;
		return supported(d);
	}
	std::vector<const Stmt *> assigns;
	if (!collect_assigns(*fs.body, assigns) || assigns.empty()) {
		return unsupported("mixed statement blocks cannot be masked as one unit");
	}
	return classify_assigns(mod, fs, assigns, cfg, mod_clock);
}

// ---------------------------------------------------------------------------
// Rendering of one rewritten statement.

std::string wrap_pair(const Expr &l, const Expr &r, const char *op, const std::string &mask)
{
	return "(" + emit_expr_at(l, kPrecXor + 1) + " ^ " + mask + ") " + op + " (" +
	       emit_expr_at(r, kPrecXor + 1) + " ^ " + mask + ")";
}

std::string wrapped_condition(const Expr &cond, const std::string &mask)
{
	if (cond.kind == ExprKind::Binary && (cond.bin == BinOp::Eq || cond.bin == BinOp::Neq)) {
		return wrap_pair(*cond.args[0], *cond.args[1], op_text(cond.bin), mask);
	}
	return "(" + emit_expr_at(cond, kPrecXor + 1) + " ^ " + mask + ") != " + mask;
}

std::string mask_slice(const MaskPlanEntry &entry, int width)
{
	if (width >= entry.mask_width) {
		return entry.mask_name;
	}
	if (width == 1) {
		return entry.mask_name + "[0]";
	}
	return entry.mask_name + "[" + std::to_string(width - 1) + ":0]";
}

const std::string &carrier_for(const MaskPlanEntry &entry, const std::string &target)
{
	for (const auto &[orig, fresh] : entry.renames) {
		if (orig == target) {
			return fresh;
		}
	}
	throw UnsupportedPattern("no masked carrier planned for target '" + target + "'");
}

std::string append_assign_text(const Stmt &st, const MaskPlanEntry &entry)
{
	return std::string(st.continuous ? "assign " : "") + carrier_for(entry, st.lhs->name) +
	       (st.nonblocking ? " <= " : " = ") + emit_expr_at(*st.rhs, kPrecXor) + " ^ " + entry.mask_name +
	       ";";
}

std::string wrap_assign_text(const Stmt &st, const MaskPlanEntry &entry)
{
	std::vector<const Expr *> terms;
	xor_terms(*st.rhs, terms);
	std::string rhs;
	if (terms.size() == 2) {
		rhs = wrap_pair(*terms[0], *terms[1], "^", entry.mask_name);
	} else if (terms.size() == 1 && terms[0]->kind == ExprKind::Binary && terms[0]->bin == BinOp::Mul) {
		rhs = wrap_pair(*terms[0]->args[0], *terms[0]->args[1], "*", entry.mask_name);
	} else {
		throw UnsupportedPattern("operand wrapping needs a two-term XOR or a product");
	}
	return std::string(st.continuous ? "assign " : "") + emit_expr_at(*st.lhs, 0) +
	       (st.nonblocking ? " <= " : " = ") + rhs + ";";
}

/// Renders the body with every assignment rewritten through `rewrite`,
/// keeping the block structure.
void render_assign_tree(const Stmt &st, int indent, const MaskPlanEntry &entry,
			std::string (*rewrite)(const Stmt &, const MaskPlanEntry &),
			std::vector<std::string> &out)
{
	if (st.kind == StmtKind::Assign) {
		out.push_back(tabs(indent) + rewrite(st, entry));
		return;
	}
	if (st.kind != StmtKind::Block) {
		throw UnsupportedPattern("statement shape changed since planning");
	}
	out.push_back(tabs(indent) + "begin");
	for (const auto &s : st.stmts) {
		render_assign_tree(*s, indent + 1, entry, rewrite, out);
	}
	out.push_back(tabs(indent) + "end");
}

std::string masked_sens_header(const FunctionalStatement &fs, const std::string &base,
			       const std::string &stage)
{
	if (fs.sens_star) {
		return "always @*";
	}
	std::string list;
	for (size_t i = 0; i < fs.sens.size(); ++i) {
		list += (i ? ", " : "") + (fs.sens[i] == base ? stage : fs.sens[i]);
	}
	return "always @(" + list + ")";
}

std::vector<std::string> render_case(const FunctionalStatement &fs, const MaskPlanEntry &entry)
{
	const Stmt &core = *core_stmt(*fs.body);
	if (core.kind != StmtKind::Case || (fs.kind == FsKind::AlwaysBlock && fs.clocked)) {
		throw UnsupportedPattern("statement shape changed since planning");
	}
	std::vector<std::string> out;
	int indent = 0;
	if (fs.kind == FsKind::AlwaysBlock) {
		out.push_back(masked_sens_header(fs, selector_base(*core.selector), entry.stage_signal));
		indent = 1;
	}
	out.push_back(tabs(indent) + "case (" + entry.stage_signal + " ^ " +
		      mask_slice(entry, core.selector->width) + ")");
	for (const auto &arm : core.arms) {
		std::string head;
		if (arm.is_default) {
			head = "default";
		} else {
			for (size_t i = 0; i < arm.labels.size(); ++i) {
				head += (i ? ", " : "") + emit_expr_at(*arm.labels[i], 0);
			}
		}
		std::vector<const Stmt *> assigns;
		collect_assigns(*arm.body, assigns);
		if (assigns.size() == 1) {
			out.push_back(tabs(indent + 1) + head + ": " + append_assign_text(*assigns[0], entry));
		} else {
			out.push_back(tabs(indent + 1) + head + ": begin");
			for (const Stmt *a : assigns) {
				out.push_back(tabs(indent + 2) + append_assign_text(*a, entry));
			}
			out.push_back(tabs(indent + 1) + "end");
		}
	}
	out.push_back(tabs(indent) + "endcase");
	return out;
}

std::vector<std::string> render_if_wrap(const FunctionalStatement &fs, const MaskPlanEntry &entry)
{
	const Stmt &core = *core_stmt(*fs.body);
	std::vector<std::string> out;
	int indent = 0;
	if (fs.kind == FsKind::AlwaysBlock) {
		out.push_back(always_header(fs));
		indent = 1;
	}
	out.push_back(tabs(indent) + "if (" + wrapped_condition(*core.cond, entry.mask_name) + ")");
	emit_stmt_lines(*core.then_branch, indent + 1, out);
	if (core.else_branch) {
		out.push_back(tabs(indent) + "else");
		emit_stmt_lines(*core.else_branch, indent + 1, out);
	}
	return out;
}

std::vector<std::string> render_assign_statement(const FunctionalStatement &fs, const MaskPlanEntry &entry,
						 std::string (*rewrite)(const Stmt &, const MaskPlanEntry &))
{
	std::vector<std::string> out;
	if (fs.kind == FsKind::AlwaysBlock) {
		out.push_back(always_header(fs));
		render_assign_tree(*fs.body, 1, entry, rewrite, out);
	} else {
		render_assign_tree(*fs.body, 0, entry, rewrite, out);
	}
	return out;
}

// ---------------------------------------------------------------------------
// Unified diff.

std::vector<std::string> split_lines(const std::string &text)
{
	std::vector<std::string> lines;
	std::string cur;
	for (char c : text) {
		if (c == '\n') {
			lines.push_back(cur);
			cur.clear();
		} else {
			cur += c;
		}
	}
	if (!cur.empty()) {
		lines.push_back(cur);
	}
	return lines;
}

struct DiffOp {
	char tag; // ' ' keep, '-' delete, '+' add
	const std::string *line;
};

std::vector<DiffOp> diff_script(const std::vector<std::string> &a, const std::vector<std::string> &b)
{
	size_t n = a.size();
	size_t m = b.size();
	std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
	for (size_t i = n; i-- > 0;) {
		for (size_t j = m; j-- > 0;) {
			lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1
						 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
		}
	}
	std::vector<DiffOp> ops;
	size_t i = 0;
	size_t j = 0;
	while (i < n && j < m) {
		if (a[i] == b[j]) {
			ops.push_back({' ', &a[i]});
			++i;
			++j;
		} else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
			ops.push_back({'-', &a[i]});
			++i;
		} else {
			ops.push_back({'+', &b[j]});
			++j;
		}
	}
	for (; i < n; ++i) {
		ops.push_back({'-', &a[i]});
	}
	for (; j < m; ++j) {
		ops.push_back({'+', &b[j]});
	}
	return ops;
}

std::string unified_file_diff(const std::string &aname, const std::string &bname,
			      const std::vector<std::string> &a, const std::vector<std::string> &b)
{
	std::vector<DiffOp> ops = diff_script(a, b);
	bool changed = false;
	for (const auto &op : ops) {
		changed |= op.tag != ' ';
	}
	if (!changed) {
		return "";
	}
	constexpr size_t kContext = 3;
	std::string out = "--- " + aname + "\n+++ " + bname + "\n";
	size_t k = 0;
	size_t a_line = 1;
	size_t b_line = 1;
	while (k < ops.size()) {
		if (ops[k].tag == ' ') {
			++k;
			++a_line;
			++b_line;
			continue;
		}
		// Walk back for leading context.
		size_t start = k;
		size_t ctx = 0;
		while (start > 0 && ctx < kContext && ops[start - 1].tag == ' ') {
			--start;
			++ctx;
		}
		size_t a_start = a_line - ctx;
		size_t b_start = b_line - ctx;
		// Extend through changes, absorbing gaps of 2*context keeps.
		size_t end = k;
		size_t trail = 0;
		for (size_t p = k; p < ops.size(); ++p) {
			if (ops[p].tag == ' ') {
				++trail;
				if (trail > 2 * kContext) {
					break;
				}
			} else {
				trail = 0;
				end = p;
			}
		}
		size_t stop = std::min(ops.size(), end + 1 + kContext);
		size_t a_count = 0;
		size_t b_count = 0;
		std::string body;
		for (size_t p = start; p < stop; ++p) {
			body += ops[p].tag + *ops[p].line + "\n";
			if (ops[p].tag != '+') {
				++a_count;
			}
			if (ops[p].tag != '-') {
				++b_count;
			}
		}
		out += "@@ -" + std::to_string(a_count == 0 ? a_start - 1 : a_start) + "," +
		       std::to_string(a_count) + " +" + std::to_string(b_count == 0 ? b_start - 1 : b_start) +
		       "," + std::to_string(b_count) + " @@\n" + body;
		for (size_t p = k; p < stop; ++p) {
			if (ops[p].tag != '+') {
				++a_line;
			}
			if (ops[p].tag != '-') {
				++b_line;
			}
		}
		k = stop;
	}
	return out;
}

std::string output_name(const std::string &file, const std::string &suffix)
{
	if (file.size() > 2 && file.compare(file.size() - 2, 2, ".v") == 0) {
		return file.substr(0, file.size() - 2) + suffix;
	}
	return file + suffix;
}

std::string leading_ws(const std::string &line)
{
	size_t n = 0;
	while (n < line.size() && (line[n] == '\t' || line[n] == ' ')) {
		++n;
	}
	return line.substr(0, n);
}

} // namespace

// ---------------------------------------------------------------------------
// Public emitters.

std::string emit_expr(const Expr &e)
{
	return emit_expr_at(e, 0);
}

std::string emit_stmt(const Stmt &st, int indent)
{
	std::vector<std::string> lines;
	emit_stmt_lines(st, indent, lines);
	return join_lines(lines);
}

std::string emit_functional(const FunctionalStatement &fs, int indent)
{
	std::vector<std::string> lines;
	emit_functional_lines(fs, indent, lines);
	return join_lines(lines);
}

std::string emit_module(const RtlModule &m)
{
	std::vector<std::string> lines;
	std::string header = "module " + m.name;
	if (!m.ports.empty()) {
		header += "(";
		for (size_t i = 0; i < m.ports.size(); ++i) {
			header += (i ? ", " : "") + m.ports[i].name;
		}
		header += ")";
	}
	lines.push_back(header + ";");

	// Interleave port and net declarations so that re-parsing recreates
	// both vectors in their original order ("output reg" lines append to
	// both at once).
	size_t next_port = 0;
	auto flush_ports_up_to = [&](const std::string &stop_name) {
		while (next_port < m.ports.size() && m.ports[next_port].name != stop_name) {
			const Port &p = m.ports[next_port++];
			lines.push_back("\t" + std::string(dir_text(p.dir)) + " " + range_text(p.msb, p.lsb) +
					p.name + ";");
		}
	};
	for (const auto &s : m.signals) {
		if (m.find_port(s.name)) {
			flush_ports_up_to(s.name);
			const Port &p = m.ports[next_port++];
			lines.push_back("\t" + std::string(dir_text(p.dir)) + " reg " +
					range_text(p.msb, p.lsb) + p.name + ";");
			continue;
		}
		std::string decl = "\t" + std::string(s.kind == SignalKind::Reg ? "reg " : "wire ") +
				   range_text(s.msb, s.lsb) + s.name;
		if (s.init) {
			decl += " = " + emit_expr_at(*s.init, 0);
		}
		lines.push_back(decl + ";");
	}
	flush_ports_up_to("");

	for (const auto &fs : m.statements) {
		emit_functional_lines(fs, 1, lines);
	}
	for (const auto &inst : m.instances) {
		std::string line = "\t" + inst.module_name + " " + inst.instance_name + "(";
		for (size_t i = 0; i < inst.bindings.size(); ++i) {
			const auto &b = inst.bindings[i];
			line += (i ? ", " : "") + ("." + b.port) + "(" +
				(b.expr ? emit_expr_at(*b.expr, 0) : "") + ")";
		}
		lines.push_back(line + ");");
	}
	lines.push_back("endmodule");
	return join_lines(lines);
}

std::string emit_design(const DesignAst &ast)
{
	std::string text;
	for (size_t i = 0; i < ast.modules.size(); ++i) {
		text += (i ? "\n\n" : "") + emit_module(ast.modules[i]);
	}
	return text + "\n";
}

const char *to_string(MaskStyle style)
{
	switch (style) {
	case MaskStyle::XorTermAppend:
		return "xor_term_append";
	case MaskStyle::OperandWrap:
		return "operand_wrap";
	case MaskStyle::CaseSelectorAndArm:
		return "case_selector_and_arm";
	}
	return "?";
}

// ---------------------------------------------------------------------------
// Planning.

MaskPlan plan_masks(const DesignAst &ast, const VulnerabilityReport &report, const FortifyConfig &cfg)
{
	if (cfg.mask_name.empty()) {
		throw ConfigError("mask name must not be empty");
	}
	if (cfg.mask_width != 1) {
		lfsr_taps(cfg.mask_width); // validates the width
	}

	MaskPlan plan;
	std::set<std::pair<std::string, int>> planned;
	std::map<std::string, std::set<std::string>> taken_by_module;
	std::map<std::string, std::vector<std::pair<int, int>>> spans_by_module;
	std::map<std::string, std::string> delayed_by_module;

	for (const auto &re : report.entries) {
		if (!re.corroborated) {
			continue;
		}
		if (re.fs_index <= 0) {
			plan.warnings.push_back(spot(re.module, re.line) +
						": the line does not resolve to a statement; skipped");
			continue;
		}
		const RtlModule *mod = ast.find_module(re.module);
		if (!mod) {
			plan.warnings.push_back("unknown module '" + re.module + "' in the report; skipped");
			continue;
		}
		if (re.fs_index > int(mod->statements.size())) {
			plan.warnings.push_back(spot(re.module, re.line) +
						": statement index out of range; skipped");
			continue;
		}
		if (!planned.insert({re.module, re.fs_index}).second) {
			continue; // several flagged lines inside one statement
		}
		const FunctionalStatement &fs = mod->statements[re.fs_index - 1];

		bool overlaps = false;
		for (auto [lo, hi] : spans_by_module[re.module]) {
			if (fs.span.first_line <= hi && fs.span.last_line >= lo) {
				overlaps = true;
			}
		}
		if (overlaps) {
			plan.warnings.push_back(spot(re.module, fs.span.first_line) +
						": overlaps an earlier rewrite; skipped");
			continue;
		}

		std::string clk = module_clock(*mod, cfg);
		Classified c = classify(*mod, fs, cfg, clk);
		if (!c.supported) {
			plan.warnings.push_back(spot(re.module, fs.span.first_line) + ": " + c.reason +
						"; statement left unmodified");
			continue;
		}
		if (!c.decision.warning.empty()) {
			plan.warnings.push_back(spot(re.module, fs.span.first_line) + ": " +
						c.decision.warning);
		}
		if (cfg.mask_width == 1 && !clk.empty() && cfg.mask_source == MaskSource::Lfsr) {
			throw ConfigError("a 1-bit mask cannot drive a clocked mask generator in module '" +
					  re.module + "'");
		}

		auto [taken_it, fresh_module] = taken_by_module.try_emplace(re.module);
		if (fresh_module) {
			taken_it->second = declared_names(*mod);
		}
		std::set<std::string> &taken = taken_it->second;

		MaskPlanEntry entry;
		entry.module = re.module;
		entry.fs_index = re.fs_index;
		entry.span = fs.span;
		entry.style = c.decision.style;
		entry.mask_name = cfg.mask_name;
		entry.mask_width = cfg.mask_width;
		for (const auto &t : c.decision.targets) {
			entry.renames.emplace_back(t, fresh_name(taken, cfg.mask_name + "ed_" + t));
		}
		if (entry.style == MaskStyle::CaseSelectorAndArm) {
			const Stmt &core = *core_stmt(*fs.body);
			entry.stage_signal =
			    fresh_name(taken, cfg.mask_name + "_in_" + selector_base(*core.selector));
		}
		if (c.decision.delayed) {
			entry.delayed_unmask = true;
			auto dit = delayed_by_module.find(re.module);
			if (dit == delayed_by_module.end()) {
				dit = delayed_by_module
					  .emplace(re.module, fresh_name(taken, cfg.mask_name + "_q"))
					  .first;
			}
			entry.delayed_mask = dit->second;
		}
		spans_by_module[re.module].emplace_back(fs.span.first_line, fs.span.last_line);
		plan.entries.push_back(std::move(entry));
	}

	// The configured mask name must be fresh in every module that needs it.
	std::set<std::string> affected;
	for (const auto &e : plan.entries) {
		affected.insert(e.module);
	}
	for (const auto &name : affected) {
		const RtlModule *mod = ast.find_module(name);
		if (declared_names(*mod).count(cfg.mask_name)) {
			throw NameCollision(cfg.mask_name + " already declared in module '" + name + "'");
		}
	}

	// One insertion anchor per module: before its first rewritten statement.
	std::map<std::string, int> anchor;
	for (const auto &e : plan.entries) {
		auto it = anchor.find(e.module);
		if (it == anchor.end() || e.span.first_line < it->second) {
			anchor[e.module] = e.span.first_line;
		}
	}
	for (auto &e : plan.entries) {
		e.mask_decl_line = anchor[e.module];
	}
	return plan;
}

std::string mask_statement(const FunctionalStatement &stmt, const MaskPlanEntry &entry)
{
	std::vector<std::string> lines;
	switch (entry.style) {
	case MaskStyle::CaseSelectorAndArm:
		lines = render_case(stmt, entry);
		break;
	case MaskStyle::OperandWrap: {
		const Stmt *core = core_stmt(*stmt.body);
		if (core->kind == StmtKind::If) {
			lines = render_if_wrap(stmt, entry);
		} else {
			lines = render_assign_statement(stmt, entry, wrap_assign_text);
		}
		break;
	}
	case MaskStyle::XorTermAppend:
		lines = render_assign_statement(stmt, entry, append_assign_text);
		break;
	}
	return join_lines(lines);
}

// ---------------------------------------------------------------------------
// Whole-design rewrite.

FortifiedDesign fortify_design(const DesignAst &ast, const VulnerabilityReport &report,
			       const FortifyConfig &cfg)
{
	FortifiedDesign out;
	out.plan = plan_masks(ast, report, cfg);
	out.warnings = out.plan.warnings;

	// Group the plan per module, keeping plan order inside each group.
	std::map<std::string, std::vector<const MaskPlanEntry *>> by_module;
	for (const auto &e : out.plan.entries) {
		by_module[e.module].push_back(&e);
	}

	struct Op {
		int pos;    // 1-based line the edit starts at
		int del;    // lines removed
		int order;  // applied ascending at equal pos (0 first)
		std::vector<std::string> add;
	};
	std::map<std::string, std::vector<Op>> ops_by_file;

	for (const auto &[mod_name, entries] : by_module) {
		const RtlModule &mod = *ast.find_module(mod_name);
		size_t ordinal = 0;
		for (size_t i = 0; i < ast.modules.size(); ++i) {
			if (ast.modules[i].name == mod_name) {
				ordinal = i;
			}
		}
		std::string clk = module_clock(mod, cfg);
		int decl_line = entries.front()->mask_decl_line;
		std::string indent = leading_ws(ast.source_map.line(mod.file, decl_line));
		std::string range = range_text(cfg.mask_width - 1, 0);
		const std::string &mask = cfg.mask_name;

		std::vector<std::string> infra;
		if (cfg.mask_source == MaskSource::DollarRandom) {
			infra.push_back(indent + "wire " + range + mask + ";");
			infra.push_back(indent + "assign " + mask + " = $random;");
			out.warnings.push_back("module '" + mod_name +
					       "': mask source $random is outside the supported grammar; "
					       "the output was not re-parsed");
			out.reparses = false;
		} else {
			uint64_t seed = mask_seed_value(cfg, ordinal, cfg.mask_width);
			infra.push_back(indent + "reg " + range + mask + " = " + std::to_string(seed) + ";");
			if (clk.empty()) {
				out.warnings.push_back("module '" + mod_name +
						       "' has no clock; its mask register stays constant");
			} else {
				infra.push_back(indent + lfsr_update_text(mask, cfg.mask_width, clk));
			}
		}
		bool delayed_done = false;
		for (const MaskPlanEntry *e : entries) {
			if (e->delayed_unmask && !delayed_done) {
				infra.push_back(indent + "reg " + range + e->delayed_mask + ";");
				infra.push_back(indent + "always @(posedge " + clk + ") " + e->delayed_mask +
						" <= " + mask + ";");
				delayed_done = true;
			}
		}
		ops_by_file[mod.file].push_back({decl_line, 0, 2, infra});

		for (const MaskPlanEntry *e : entries) {
			const FunctionalStatement &fs = mod.statements[e->fs_index - 1];
			std::string base = leading_ws(ast.source_map.line(fs.span.file, fs.span.first_line));

			std::vector<std::string> pre;
			bool continuous = fs.kind == FsKind::ContinuousAssign ||
					  fs.kind == FsKind::FunctionCallAssign;
			for (const auto &[target, carrier] : e->renames) {
				auto [msb, lsb] = target_range(mod, target);
				pre.push_back(base + (continuous ? "wire " : "reg ") + range_text(msb, lsb) +
					      carrier + ";");
			}
			if (!e->stage_signal.empty()) {
				const Stmt &core = *core_stmt(*fs.body);
				int w = core.selector->width;
				pre.push_back(base + "wire " + range_text(w - 1, 0) + e->stage_signal + ";");
				pre.push_back(base + "assign " + e->stage_signal + " = " +
					      emit_expr_at(*core.selector, kPrecXor) + " ^ " + mask + ";");
			}
			if (!pre.empty()) {
				ops_by_file[fs.span.file].push_back({fs.span.first_line, 0, 1, pre});
			}

			std::vector<std::string> body;
			for (const auto &line : split_lines(mask_statement(fs, *e))) {
				body.push_back(base + line);
			}
			int span_lines = fs.span.last_line - fs.span.first_line + 1;
			ops_by_file[fs.span.file].push_back({fs.span.first_line, span_lines, 0, body});

			std::vector<std::string> post;
			for (const auto &[target, carrier] : e->renames) {
				post.push_back(base + "assign " + target + " = " + carrier + " ^ " +
					       (e->delayed_unmask ? e->delayed_mask : mask) + ";");
			}
			if (!post.empty()) {
				// Highest order: when the next rewrite starts on the very
				// next line, this unmask must end up above that rewrite's
				// own insertions.
				ops_by_file[fs.span.file].push_back({fs.span.last_line + 1, 0, 3, post});
			}

			out.rewrites.push_back({fs.span.file, fs.span.first_line,
						ast.source_map.line(fs.span.file, fs.span.first_line),
						mask_statement(fs, *e)});
		}
	}

	// Splice bottom-up so earlier line numbers stay valid.
	for (const auto &[file, orig_lines] : ast.source_map.files()) {
		std::vector<std::string> lines = orig_lines;
		auto it = ops_by_file.find(file);
		if (it != ops_by_file.end()) {
			std::stable_sort(it->second.begin(), it->second.end(), [](const Op &a, const Op &b) {
				return a.pos != b.pos ? a.pos > b.pos : a.order < b.order;
			});
			for (const Op &op : it->second) {
				size_t at = size_t(op.pos - 1);
				lines.erase(lines.begin() + at, lines.begin() + at + op.del);
				lines.insert(lines.begin() + at, op.add.begin(), op.add.end());
			}
		}
		std::string text;
		for (const auto &l : lines) {
			text += l + "\n";
		}
		out.files.emplace_back(output_name(file, cfg.suffix), std::move(text));

		out.unified_diff += unified_file_diff(file, out.files.back().first, orig_lines, lines);
	}

	if (out.reparses) {
		parse_design(out.files, ast.top); // closure check: must stay inside the grammar
	}
	return out;
}

// ---------------------------------------------------------------------------
// Equivalence checking.

namespace {

struct TraceReader {
	const SignalTrace *trace = nullptr;
	size_t i = 0;

	uint64_t at(uint64_t t)
	{
		while (i + 1 < trace->times.size() && trace->times[i + 1] <= t) {
			++i;
		}
		return trace->states[i].to_u64();
	}
};

void mask_paths(const DesignAst &ast, const RtlModule &mod, const std::string &prefix,
		const std::string &mask_name, std::vector<std::string> &out)
{
	if (mod.find_signal(mask_name)) {
		out.push_back(prefix + mask_name);
	}
	for (const auto &inst : mod.instances) {
		const RtlModule *child = ast.find_module(inst.module_name);
		if (child) {
			mask_paths(ast, *child, prefix + inst.instance_name + ".", mask_name, out);
		}
	}
}

std::optional<Divergence> compare_outputs(const TraceSet &a, const TraceSet &b, const std::string &top,
					  const std::vector<std::string> &outputs, uint64_t cycles)
{
	std::vector<TraceReader> ra(outputs.size());
	std::vector<TraceReader> rb(outputs.size());
	for (size_t i = 0; i < outputs.size(); ++i) {
		ra[i].trace = &a.traces.at(top + "." + outputs[i]);
		rb[i].trace = &b.traces.at(top + "." + outputs[i]);
	}
	for (uint64_t t = 0; t < cycles; ++t) {
		for (size_t i = 0; i < outputs.size(); ++i) {
			uint64_t va = ra[i].at(t);
			uint64_t vb = rb[i].at(t);
			if (va != vb) {
				return Divergence{t, outputs[i], va, vb};
			}
		}
	}
	return std::nullopt;
}

} // namespace

EquivalenceResult check_equivalence(const DesignAst &original, const DesignAst &fortified,
				    const std::vector<Stimulus> &stimulus, uint64_t cycles,
				    const EquivalenceConfig &cfg)
{
	const RtlModule &top = original.modules.front();
	if (fortified.modules.front().name != top.name) {
		throw ConfigError("the two designs have different top modules");
	}

	EquivalenceResult result;
	std::set<std::string> driven;
	for (const auto &s : stimulus) {
		driven.insert(s.signal);
	}
	std::vector<const Port *> free_inputs;
	for (const auto &p : top.ports) {
		if (p.dir == PortDir::Output) {
			result.outputs.push_back(p.name);
		} else if (p.dir == PortDir::Input && !driven.count(p.name) && p.name != cfg.clock) {
			free_inputs.push_back(&p);
		}
	}

	auto run_pair = [&](const std::vector<Stimulus> &stim,
			    const std::vector<Deposit> &deposits) -> std::optional<Divergence> {
		TraceSet a = simulate_fixture(original, stim, cycles);
		TraceSet b = simulate_fixture(fortified, stim, cycles, deposits);
		++result.vectors;
		return compare_outputs(a, b, top.name, result.outputs, cycles);
	};

	if (cfg.exhaustive) {
		std::vector<std::string> masks;
		mask_paths(fortified, fortified.modules.front(), "", cfg.mask_name, masks);
		int in_bits = 0;
		for (const Port *p : free_inputs) {
			in_bits += p->width();
		}
		int mask_bits = masks.empty() ? 0 : cfg.mask_width;
		if (in_bits + mask_bits > cfg.input_budget_bits || in_bits + mask_bits > 62) {
			throw ConfigError("exhaustive equivalence covers " +
					  std::to_string(in_bits + mask_bits) + " bits, above the budget of " +
					  std::to_string(cfg.input_budget_bits));
		}
		uint64_t mask_values = masks.empty() ? 1 : (uint64_t(1) << mask_bits);
		uint64_t combos = uint64_t(1) << in_bits;
		for (uint64_t mv = 0; mv < mask_values; ++mv) {
			std::vector<Deposit> deposits;
			for (uint64_t t = 0; t < cycles; ++t) {
				for (const auto &path : masks) {
					deposits.push_back({t, path, mv});
				}
			}
			for (uint64_t combo = 0; combo < combos; ++combo) {
				std::vector<Stimulus> stim = stimulus;
				int shift = 0;
				for (const Port *p : free_inputs) {
					uint64_t v = (combo >> shift) &
						     ((p->width() >= 64) ? ~uint64_t(0)
									 : ((uint64_t(1) << p->width()) - 1));
					stim.push_back({0, p->name, v});
					shift += p->width();
				}
				if (auto d = run_pair(stim, deposits)) {
					result.equivalent = false;
					result.divergence = d;
					return result;
				}
			}
		}
		return result;
	}

	int vectors = std::max(1, cfg.random_vectors);
	if (free_inputs.empty()) {
		vectors = 1; // identical runs add nothing
	}
	for (int v = 0; v < vectors; ++v) {
		Rng rng(derive_seed(cfg.seed, "equiv-vector", uint64_t(v)));
		std::vector<Stimulus> stim = stimulus;
		for (uint64_t t = 0; t < cycles; ++t) {
			for (const Port *p : free_inputs) {
				stim.push_back({t, p->name, rng.next_u64()});
			}
		}
		if (auto d = run_pair(stim, {})) {
			result.equivalent = false;
			result.divergence = d;
			return result;
		}
	}
	return result;
}

} // namespace psc
