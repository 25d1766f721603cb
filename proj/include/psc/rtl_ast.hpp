#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "psc/source.hpp"

namespace psc {

struct Expr;
struct Stmt;
using ExprPtr = std::unique_ptr<Expr>;
using StmtPtr = std::unique_ptr<Stmt>;

enum class ExprKind {
	SignalRef,
	Constant,
	Unary,
	Binary,
	Ternary,
	BitSelect,
	PartSelect,
	Concat,
	Replicate,
	FunctionCall,
};

enum class BinOp { And, Or, Xor, Add, Sub, Mul, Shl, Shr, Eq, Neq, Lt, Gt, Le, Ge };
enum class UnOp { BitNot, Neg };

const char *to_string(BinOp op);
const char *to_string(UnOp op);

struct Expr {
	ExprKind kind;
	SourceSpan span;

	// SignalRef / FunctionCall name.
	std::string name;

	// Constant payload. literal_width < 0 means the literal was unsized.
	uint64_t value = 0;
	int literal_width = -1;

	BinOp bin = BinOp::And;
	UnOp un = UnOp::BitNot;

	// Operands. BitSelect: {base, index}. PartSelect: {base, msb, lsb}.
	// Ternary: {cond, then, else}. Replicate: {count, body...}.
	std::vector<ExprPtr> args;

	// Bit width after elaboration; >= 1 for every node.
	int width = 0;

	ExprPtr clone() const;
};

enum class StmtKind { Assign, If, Case, Block };

struct CaseArm {
	std::vector<ExprPtr> labels; // empty only when is_default
	bool is_default = false;
	StmtPtr body;
};

struct Stmt {
	StmtKind kind;
	SourceSpan span;

	// Assign. `continuous` marks a module-level `assign`; procedural
	// assignments may be blocking (=) or nonblocking (<=).
	ExprPtr lhs;
	ExprPtr rhs;
	bool nonblocking = false;
	bool continuous = false;

	// If.
	ExprPtr cond;
	StmtPtr then_branch;
	StmtPtr else_branch; // may be null

	// Case.
	ExprPtr selector;
	std::vector<CaseArm> arms;

	// Block.
	std::vector<StmtPtr> stmts;

	StmtPtr clone() const;
};

enum class PortDir { Input, Output, Inout };
enum class SignalKind { Wire, Reg };

struct Port {
	std::string name;
	PortDir dir = PortDir::Input;
	int msb = 0;
	int lsb = 0;
	int width() const { return msb - lsb + 1; }
	int line = 0;
};

struct Signal {
	std::string name;
	SignalKind kind = SignalKind::Wire;
	int msb = 0;
	int lsb = 0;
	int width() const { return msb - lsb + 1; }
	int line = 0;
	ExprPtr init; // optional declaration initializer (regs only)
};

struct FunctionParam {
	std::string name;
	int msb = 0;
	int lsb = 0;
	int width() const { return msb - lsb + 1; }
};

struct RtlFunction {
	std::string name;
	int msb = 0;
	int lsb = 0;
	int width() const { return msb - lsb + 1; }
	std::vector<FunctionParam> inputs;
	StmtPtr body;
	SourceSpan span;
};

enum class FsKind { ContinuousAssign, AlwaysBlock, CaseStatement, IfElse, FunctionDecl, FunctionCallAssign };

const char *to_string(FsKind kind);

/// One top-level statement block of a module, indexed 1..K in source order.
/// Nested statements inside an always block belong to that block's single
/// entry.
struct FunctionalStatement {
	int index = 0;
	FsKind kind = FsKind::ContinuousAssign;
	SourceSpan span;

	StmtPtr body; // null for FunctionDecl

	// AlwaysBlock metadata.
	bool clocked = false;
	bool sens_star = false;
	std::string clock;              // nonempty when clocked
	std::vector<std::string> sens;  // plain sensitivity signals

	// FunctionDecl payload.
	std::unique_ptr<RtlFunction> function;
};

struct PortBinding {
	std::string port;   // child port name (resolved for positional bindings)
	ExprPtr expr;       // may be null for unconnected .port()
	int line = 0;
};

struct Instance {
	std::string module_name;   // child module
	std::string instance_name;
	std::vector<PortBinding> bindings;
	int line = 0;
};

struct RtlModule {
	std::string name;
	int header_line = 0;
	std::string file;

	std::vector<Port> ports;
	std::vector<Signal> signals;
	std::vector<FunctionalStatement> statements;
	std::vector<Instance> instances;

	const Port *find_port(const std::string &n) const;
	const Signal *find_signal(const std::string &n) const;
	const RtlFunction *find_function(const std::string &n) const;

	/// Width of a declared name (port or signal); -1 when undeclared.
	int declared_width(const std::string &n) const;
	bool is_declared(const std::string &n) const { return declared_width(n) >= 0; }
};

/// Parsed design: the top module and every transitively instantiated module,
/// in deterministic instantiation (preorder) order, top first.
struct DesignAst {
	std::string top;
	std::vector<RtlModule> modules;
	SourceMap source_map;

	const RtlModule *find_module(const std::string &name) const;
	const RtlModule &module_or_throw(const std::string &name) const;
};

/// Structural equality, ignoring source spans. Used by round-trip tests.
bool structurally_equal(const Expr &a, const Expr &b);
bool structurally_equal(const Stmt &a, const Stmt &b);
bool structurally_equal(const FunctionalStatement &a, const FunctionalStatement &b);
bool structurally_equal(const RtlModule &a, const RtlModule &b);
bool structurally_equal(const DesignAst &a, const DesignAst &b);

/// Calls fn for every node of the expression tree, preorder.
void for_each_expr(const Expr &e, const std::function<void(const Expr &)> &fn);

/// Names of signals an expression reads. Function names are not signals and
/// are excluded; call arguments are included.
std::set<std::string> expr_signals(const Expr &e);

/// The signal an assignment target writes (base name under bit/part selects).
const std::string &lvalue_target(const Expr &lhs);

/// Signals read by an assignment target's select indices (e.g. y[i] reads i).
std::set<std::string> lvalue_index_signals(const Expr &lhs);

} // namespace psc
