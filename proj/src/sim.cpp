#include "psc/sim.hpp"

#include <algorithm>
#include <map>

#include "psc/errors.hpp"

namespace psc {
namespace {

constexpr int kMaxSettleIterations = 1000;
constexpr int kMaxCallDepth = 32;

struct Locals {
	const RtlFunction *fn = nullptr;
	std::map<std::string, uint64_t> values;

	bool holds(const std::string &name) const
	{
		if (!fn) {
			return false;
		}
		if (name == fn->name) {
			return true;
		}
		return std::any_of(fn->inputs.begin(), fn->inputs.end(),
				   [&](const FunctionParam &p) { return p.name == name; });
	}

	int width(const std::string &name) const
	{
		if (name == fn->name) {
			return fn->width();
		}
		for (const auto &p : fn->inputs) {
			if (p.name == name) {
				return p.width();
			}
		}
		return 0;
	}

	int lsb(const std::string &name) const
	{
		if (name == fn->name) {
			return fn->lsb;
		}
		for (const auto &p : fn->inputs) {
			if (p.name == name) {
				return p.lsb;
			}
		}
		return 0;
	}
};

uint64_t mask_to(uint64_t v, int width)
{
	return width >= 64 ? v : (v & ((uint64_t(1) << width) - 1));
}

class Simulator {
      public:
	explicit Simulator(const DesignAst &ast) : ast_(ast)
	{
		flatten(ast_.modules.front(), ast_.modules.front().name);
	}

	TraceSet run(const std::vector<Stimulus> &stimulus, uint64_t cycles, const std::vector<Deposit> &deposits)
	{
		if (cycles < 1) {
			throw ConfigError("simulation needs at least one cycle");
		}
		const std::string &top_path = scopes_.front().path;
		const RtlModule &top = *scopes_.front().mod;
		for (const auto &s : stimulus) {
			const Port *p = top.find_port(s.signal);
			if (!p || p->dir != PortDir::Input) {
				throw UnknownSignal(s.signal + " (not a top-level input)");
			}
		}

		std::map<uint64_t, std::vector<const Stimulus *>> stim_at;
		for (const auto &s : stimulus) {
			stim_at[s.time].push_back(&s);
		}
		std::map<uint64_t, std::vector<const Deposit *>> dep_at;
		for (const auto &d : deposits) {
			dep_at[d.time].push_back(&d);
		}

		TraceSet ts;
		std::map<std::string, BitVec> last_recorded;
		std::map<std::string, uint64_t> prev_clock;
		for (const auto &sp : seq_) {
			prev_clock[sp.clock_key] = state_.at(sp.clock_key).to_u64();
		}

		for (uint64_t t = 0; t < cycles; ++t) {
			if (auto it = stim_at.find(t); it != stim_at.end()) {
				for (const Stimulus *s : it->second) {
					write_key(top_path + "." + s->signal, s->value);
				}
			}
			if (auto it = dep_at.find(t); it != dep_at.end()) {
				for (const Deposit *d : it->second) {
					std::string key = top_path + "." + d->path;
					if (!state_.count(key)) {
						throw UnknownSignal(d->path);
					}
					write_key(key, d->value);
				}
			}
			settle();

			// rising clocks fire their blocks against a frozen
			// pre-edge snapshot; nonblocking writes land together
			std::vector<const SeqProc *> fired;
			for (const auto &sp : seq_) {
				uint64_t now = state_.at(sp.clock_key).to_u64() & 1;
				if (prev_clock.at(sp.clock_key) == 0 && now == 1) {
					fired.push_back(&sp);
				}
			}
			if (!fired.empty()) {
				std::map<std::string, BitVec> frozen = state_;
				std::map<std::string, BitVec> nbq;
				for (const SeqProc *sp : fired) {
					Env env;
					env.base = &frozen;
					std::map<std::string, BitVec> overlay;
					env.overlay = &overlay;
					env.nbq = &nbq;
					exec_stmt_impl(*sp->fs->body, scopes_[sp->scope], env, 0);
					for (auto &[k, v] : overlay) {
						state_[k] = std::move(v); // blocking writes take effect now
					}
				}
				for (auto &[k, v] : nbq) {
					state_[k] = std::move(v);
				}
				settle();
			}
			for (auto &[key, value] : prev_clock) {
				value = state_.at(key).to_u64() & 1;
			}

			for (const auto &[key, value] : state_) {
				auto it = last_recorded.find(key);
				if (it == last_recorded.end()) {
					SignalTrace &tr = ts.traces[key];
					tr.signal = key;
					tr.width = value.width();
					tr.states.push_back(value);
					tr.times.push_back(t);
					last_recorded.emplace(key, value);
				} else if (!(it->second == value)) {
					SignalTrace &tr = ts.traces[key];
					tr.states.push_back(value);
					tr.times.push_back(t);
					it->second = value;
				}
			}
		}
		return ts;
	}

      private:
	struct Scope {
		std::string path;
		const RtlModule *mod;
	};
	struct CombProc {
		size_t scope;
		const FunctionalStatement *fs;
	};
	struct SeqProc {
		size_t scope;
		const FunctionalStatement *fs;
		std::string clock_key;
	};
	struct PortIn {
		size_t parent_scope;
		const Expr *expr; // parent-side expression
		std::string dst;  // child port key
		int width;
	};
	struct PortOut {
		std::string src; // child port key
		size_t parent_scope;
		const Expr *lvalue; // parent-side net
	};
	struct Env {
		const std::map<std::string, BitVec> *base = nullptr;  // reads
		std::map<std::string, BitVec> *overlay = nullptr;     // seq blocking writes (read-preferred)
		std::map<std::string, BitVec> *nbq = nullptr;         // nonblocking queue
		Locals *locals = nullptr;                             // function frame
	};

	void flatten(const RtlModule &mod, const std::string &path)
	{
		size_t scope_id = scopes_.size();
		scopes_.push_back({path, &mod});
		for (const auto &p : mod.ports) {
			if (p.dir == PortDir::Inout) {
				throw UnsupportedForSimulation("inout port " + mod.name + "." + p.name);
			}
			declare(path + "." + p.name, p.width());
		}
		for (const auto &s : mod.signals) {
			declare(path + "." + s.name, s.width());
			if (s.init) {
				state_[path + "." + s.name] = BitVec(s.width(), s.init->value);
			}
		}
		for (const auto &fs : mod.statements) {
			switch (fs.kind) {
			case FsKind::ContinuousAssign:
			case FsKind::FunctionCallAssign:
			case FsKind::IfElse:
			case FsKind::CaseStatement:
				comb_.push_back({scope_id, &fs});
				break;
			case FsKind::AlwaysBlock:
				if (fs.clocked) {
					seq_.push_back({scope_id, &fs, path + "." + fs.clock});
				} else {
					comb_.push_back({scope_id, &fs});
				}
				break;
			case FsKind::FunctionDecl:
				break;
			}
		}
		for (const auto &inst : mod.instances) {
			const RtlModule &child = *ast_.find_module(inst.module_name);
			std::string child_path = path + "." + inst.instance_name;
			flatten(child, child_path);
			for (const auto &b : inst.bindings) {
				if (!b.expr) {
					continue;
				}
				const Port *p = child.find_port(b.port);
				std::string port_key = child_path + "." + p->name;
				if (p->dir == PortDir::Input) {
					pin_.push_back({scope_id, b.expr.get(), port_key, p->width()});
				} else {
					if (b.expr->kind != ExprKind::SignalRef && b.expr->kind != ExprKind::BitSelect &&
					    b.expr->kind != ExprKind::PartSelect) {
						throw UnsupportedForSimulation("output port " + inst.instance_name + "." +
									       p->name + " bound to a non-net expression");
					}
					pout_.push_back({port_key, scope_id, b.expr.get()});
				}
			}
		}
	}

	void declare(const std::string &key, int width)
	{
		state_.emplace(key, BitVec(width));
		width_of_[key] = width;
	}

	void write_key(const std::string &key, uint64_t value) { state_[key] = BitVec(width_of_.at(key), value); }

	// --- expression evaluation -----------------------------------------

	int declared_lsb(const Scope &scope, const std::string &name, const Env &env)
	{
		if (env.locals && env.locals->holds(name)) {
			return env.locals->lsb(name);
		}
		if (const Port *p = scope.mod->find_port(name)) {
			return p->lsb;
		}
		if (const Signal *s = scope.mod->find_signal(name)) {
			return s->lsb;
		}
		return 0;
	}

	uint64_t read(const Scope &scope, const std::string &name, const Env &env)
	{
		if (env.locals && env.locals->holds(name)) {
			return env.locals->values.at(name);
		}
		std::string key = scope.path + "." + name;
		if (env.overlay) {
			if (auto it = env.overlay->find(key); it != env.overlay->end()) {
				return it->second.to_u64();
			}
		}
		return env.base->at(key).to_u64();
	}

	uint64_t eval(const Expr &e, const Scope &scope, Env &env, int depth)
	{
		if (e.width > 64) {
			throw UnsupportedForSimulation("expression wider than 64 bits at " + e.span.file + ":" +
						       std::to_string(e.span.first_line));
		}
		switch (e.kind) {
		case ExprKind::SignalRef:
			return mask_to(read(scope, e.name, env), e.width);
		case ExprKind::Constant:
			return mask_to(e.value, e.width);
		case ExprKind::Unary: {
			uint64_t v = eval(*e.args[0], scope, env, depth);
			return mask_to(e.un == UnOp::BitNot ? ~v : uint64_t(0) - v, e.width);
		}
		case ExprKind::Binary: {
			uint64_t a = eval(*e.args[0], scope, env, depth);
			uint64_t b = eval(*e.args[1], scope, env, depth);
			switch (e.bin) {
			case BinOp::And:
				return a & b;
			case BinOp::Or:
				return a | b;
			case BinOp::Xor:
				return a ^ b;
			case BinOp::Add:
				return mask_to(a + b, e.width);
			case BinOp::Sub:
				return mask_to(a - b, e.width);
			case BinOp::Mul:
				return mask_to(a * b, e.width);
			case BinOp::Shl:
				return b >= 64 ? 0 : mask_to(a << b, e.width);
			case BinOp::Shr:
				return b >= 64 ? 0 : a >> b;
			case BinOp::Eq:
				return a == b;
			case BinOp::Neq:
				return a != b;
			case BinOp::Lt:
				return a < b;
			case BinOp::Gt:
				return a > b;
			case BinOp::Le:
				return a <= b;
			case BinOp::Ge:
				return a >= b;
			}
			return 0;
		}
		case ExprKind::Ternary:
			return mask_to(eval(*e.args[0], scope, env, depth) ? eval(*e.args[1], scope, env, depth)
									   : eval(*e.args[2], scope, env, depth),
				       e.width);
		case ExprKind::BitSelect: {
			const Expr &base = *e.args[0];
			uint64_t v = eval(base, scope, env, depth);
			uint64_t idx = eval(*e.args[1], scope, env, depth);
			int lsb = base.kind == ExprKind::SignalRef ? declared_lsb(scope, base.name, env) : 0;
			int64_t off = int64_t(idx) - lsb;
			if (off < 0 || off >= base.width) {
				return 0; // out-of-range select reads as 0
			}
			return (v >> off) & 1;
		}
		case ExprKind::PartSelect: {
			const Expr &base = *e.args[0];
			uint64_t v = eval(base, scope, env, depth);
			int msb = int(e.args[1]->value);
			int lsb = int(e.args[2]->value);
			int base_lsb = base.kind == ExprKind::SignalRef ? declared_lsb(scope, base.name, env) : 0;
			return mask_to(v >> (lsb - base_lsb), msb - lsb + 1);
		}
		case ExprKind::Concat: {
			uint64_t v = 0;
			for (const auto &a : e.args) {
				v = (v << a->width) | eval(*a, scope, env, depth);
			}
			return v;
		}
		case ExprKind::Replicate: {
			uint64_t body = 0;
			int body_width = 0;
			for (size_t i = 1; i < e.args.size(); ++i) {
				body = (body << e.args[i]->width) | eval(*e.args[i], scope, env, depth);
				body_width += e.args[i]->width;
			}
			uint64_t v = 0;
			for (uint64_t i = 0; i < e.args[0]->value; ++i) {
				v = (v << body_width) | body;
			}
			return mask_to(v, e.width);
		}
		case ExprKind::FunctionCall: {
			if (depth >= kMaxCallDepth) {
				throw UnsupportedForSimulation("function call depth over " + std::to_string(kMaxCallDepth));
			}
			const RtlFunction *fn = scope.mod->find_function(e.name);
			Locals frame;
			frame.fn = fn;
			frame.values[fn->name] = 0;
			for (size_t i = 0; i < fn->inputs.size(); ++i) {
				frame.values[fn->inputs[i].name] =
				    mask_to(eval(*e.args[i], scope, env, depth), fn->inputs[i].width());
			}
			Env inner = env;
			inner.locals = &frame;
			exec_stmt_impl(*fn->body, scope, inner, depth + 1);
			return mask_to(frame.values.at(fn->name), fn->width());
		}
		}
		return 0;
	}

	// --- statement execution -------------------------------------------

	void store(const Expr &lhs, uint64_t value, const Scope &scope, Env &env, bool nonblocking, int depth)
	{
		// resolve target name and the bit range being written
		const Expr *ref = &lhs;
		int sel_lsb = 0;
		int sel_width = -1; // -1 = whole signal
		if (lhs.kind == ExprKind::BitSelect) {
			ref = lhs.args[0].get();
			uint64_t idx = eval(*lhs.args[1], scope, env, depth);
			sel_lsb = int(idx) - declared_lsb(scope, ref->name, env);
			sel_width = 1;
		} else if (lhs.kind == ExprKind::PartSelect) {
			ref = lhs.args[0].get();
			sel_lsb = int(lhs.args[2]->value) - declared_lsb(scope, ref->name, env);
			sel_width = int(lhs.args[1]->value - lhs.args[2]->value) + 1;
		}
		const std::string &name = ref->name;

		if (env.locals && env.locals->holds(name)) {
			int w = env.locals->width(name);
			uint64_t old = env.locals->values.at(name);
			env.locals->values[name] = merge(old, w, value, sel_lsb, sel_width);
			return;
		}

		std::string key = scope.path + "." + name;
		int w = width_of_.at(key);
		if (w > 64) {
			throw UnsupportedForSimulation("assignment to signal wider than 64 bits: " + key);
		}
		uint64_t old = current(key, env);
		uint64_t merged = merge(old, w, value, sel_lsb, sel_width);
		if (nonblocking && env.nbq) {
			(*env.nbq)[key] = BitVec(w, merged);
		} else if (env.overlay) {
			(*env.overlay)[key] = BitVec(w, merged);
		} else {
			state_[key] = BitVec(w, merged);
		}
	}

	uint64_t current(const std::string &key, const Env &env)
	{
		if (env.overlay) {
			if (auto it = env.overlay->find(key); it != env.overlay->end()) {
				return it->second.to_u64();
			}
		}
		return env.base->at(key).to_u64();
	}

	static uint64_t merge(uint64_t old, int width, uint64_t value, int sel_lsb, int sel_width)
	{
		if (sel_width < 0) {
			return mask_to(value, width);
		}
		if (sel_lsb < 0 || sel_lsb + sel_width > width) {
			return old; // out-of-range write has no effect
		}
		uint64_t field_mask = mask_to(~uint64_t(0), sel_width) << sel_lsb;
		return (old & ~field_mask) | ((mask_to(value, sel_width) << sel_lsb) & field_mask);
	}

	void exec_stmt_impl(const Stmt &st, const Scope &scope, Env &env, int depth)
	{
		switch (st.kind) {
		case StmtKind::Assign: {
			uint64_t v = eval(*st.rhs, scope, env, depth);
			store(*st.lhs, v, scope, env, st.nonblocking, depth);
			break;
		}
		case StmtKind::If:
			if (eval(*st.cond, scope, env, depth)) {
				exec_stmt_impl(*st.then_branch, scope, env, depth);
			} else if (st.else_branch) {
				exec_stmt_impl(*st.else_branch, scope, env, depth);
			}
			break;
		case StmtKind::Case: {
			uint64_t sel = eval(*st.selector, scope, env, depth);
			const CaseArm *hit = nullptr;
			const CaseArm *dflt = nullptr;
			for (const auto &arm : st.arms) {
				if (arm.is_default) {
					dflt = &arm;
					continue;
				}
				for (const auto &label : arm.labels) {
					if (eval(*label, scope, env, depth) == sel) {
						hit = &arm;
						break;
					}
				}
				if (hit) {
					break;
				}
			}
			if (!hit) {
				hit = dflt;
			}
			if (hit) {
				exec_stmt_impl(*hit->body, scope, env, depth);
			}
			break;
		}
		case StmtKind::Block:
			for (const auto &s : st.stmts) {
				exec_stmt_impl(*s, scope, env, depth);
			}
			break;
		}
	}

	void settle()
	{
		for (int iter = 0;; ++iter) {
			if (iter >= kMaxSettleIterations) {
				throw UnsupportedForSimulation("combinational logic did not settle");
			}
			std::map<std::string, BitVec> before = state_;
			for (const auto &cp : comb_) {
				Env env;
				env.base = &state_;
				exec_stmt_impl(*cp.fs->body, scopes_[cp.scope], env, 0);
			}
			for (const auto &p : pin_) {
				Env env;
				env.base = &state_;
				uint64_t v = eval(*p.expr, scopes_[p.parent_scope], env, 0);
				state_[p.dst] = BitVec(p.width, mask_to(v, p.width));
			}
			for (const auto &p : pout_) {
				Env env;
				env.base = &state_;
				uint64_t v = state_.at(p.src).to_u64();
				store(*p.lvalue, v, scopes_[p.parent_scope], env, false, 0);
			}
			if (state_ == before) {
				return;
			}
		}
	}

	const DesignAst &ast_;
	std::vector<Scope> scopes_;
	std::vector<CombProc> comb_;
	std::vector<SeqProc> seq_;
	std::vector<PortIn> pin_;
	std::vector<PortOut> pout_;
	std::map<std::string, BitVec> state_;
	std::map<std::string, int> width_of_;
};

} // namespace

TraceSet simulate_fixture(const DesignAst &ast, const std::vector<Stimulus> &stimulus, uint64_t cycles)
{
	return simulate_fixture(ast, stimulus, cycles, {});
}

TraceSet simulate_fixture(const DesignAst &ast, const std::vector<Stimulus> &stimulus, uint64_t cycles,
			  const std::vector<Deposit> &deposits)
{
	return Simulator(ast).run(stimulus, cycles, deposits);
}

std::vector<Stimulus> clock_stimulus(const std::string &signal, uint64_t cycles)
{
	std::vector<Stimulus> out;
	out.reserve(cycles);
	for (uint64_t t = 0; t < cycles; ++t) {
		out.push_back({t, signal, t % 2});
	}
	return out;
}

} // namespace psc
