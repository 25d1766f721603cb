#include "psc/parser.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "psc/errors.hpp"

namespace psc {
namespace {

enum class Tok { Ident, Number, Punct, End };

struct Token {
	Tok kind = Tok::End;
	std::string text;
	uint64_t value = 0;
	int lit_width = -1; // -1 = unsized literal
	int line = 1;
};

const std::set<std::string> kUnsupportedKeywords = {
    "initial", "task",   "endtask", "generate", "endgenerate", "for",    "while",  "repeat",   "forever",
    "fork",    "join",   "casex",   "casez",    "specify",     "endspecify", "defparam", "genvar", "parameter",
    "localparam", "integer", "real", "time",    "signed",      "primitive",  "table",  "wait",     "deassign",
    "force",   "release", "event",  "realtime", "supply0",     "supply1",    "tri",    "trireg",   "strong0",
};

class Lexer {
      public:
	Lexer(std::string file, const std::string &text) : file_(std::move(file)), text_(normalize_line_endings(text)) {}

	std::vector<Token> run()
	{
		std::vector<Token> out;
		while (true) {
			skip_space_and_comments();
			if (pos_ >= text_.size()) {
				break;
			}
			out.push_back(next_token());
		}
		Token end;
		end.kind = Tok::End;
		end.line = line_;
		out.push_back(end);
		return out;
	}

      private:
	void skip_space_and_comments()
	{
		while (pos_ < text_.size()) {
			char c = text_[pos_];
			if (c == '\n') {
				++line_;
				++pos_;
			} else if (std::isspace(static_cast<unsigned char>(c))) {
				++pos_;
			} else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
				while (pos_ < text_.size() && text_[pos_] != '\n') {
					++pos_;
				}
			} else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') {
				pos_ += 2;
				while (pos_ + 1 < text_.size() && !(text_[pos_] == '*' && text_[pos_ + 1] == '/')) {
					if (text_[pos_] == '\n') {
						++line_;
					}
					++pos_;
				}
				if (pos_ + 1 >= text_.size()) {
					throw SyntaxError(file_, line_, "unterminated block comment");
				}
				pos_ += 2;
			} else {
				return;
			}
		}
	}

	Token next_token()
	{
		char c = text_[pos_];
		if (c == '`') {
			throw UnsupportedConstruct(file_, line_, "preprocessor directive");
		}
		if (c == '"') {
			throw UnsupportedConstruct(file_, line_, "string literal");
		}
		if (c == '$') {
			throw UnsupportedConstruct(file_, line_, "system task or function");
		}
		if (c == '#') {
			throw UnsupportedConstruct(file_, line_, "delay control");
		}
		if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
			return ident();
		}
		if (std::isdigit(static_cast<unsigned char>(c)) || c == '\'') {
			return number();
		}
		return punct();
	}

	Token ident()
	{
		Token t;
		t.kind = Tok::Ident;
		t.line = line_;
		while (pos_ < text_.size()) {
			char c = text_[pos_];
			if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$') {
				t.text.push_back(c);
				++pos_;
			} else {
				break;
			}
		}
		if (kUnsupportedKeywords.count(t.text)) {
			throw UnsupportedConstruct(file_, t.line, "'" + t.text + "'");
		}
		return t;
	}

	Token number()
	{
		Token t;
		t.kind = Tok::Number;
		t.line = line_;
		std::string digits;
		while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
			if (text_[pos_] != '_') {
				digits.push_back(text_[pos_]);
			}
			++pos_;
		}
		if (pos_ < text_.size() && text_[pos_] == '\'') {
			++pos_;
			if (pos_ >= text_.size()) {
				throw SyntaxError(file_, line_, "truncated based literal");
			}
			int base = 0;
			switch (std::tolower(static_cast<unsigned char>(text_[pos_]))) {
			case 'b':
				base = 2;
				break;
			case 'o':
				base = 8;
				break;
			case 'd':
				base = 10;
				break;
			case 'h':
				base = 16;
				break;
			default:
				throw SyntaxError(file_, line_, std::string("bad literal base '") + text_[pos_] + "'");
			}
			++pos_;
			std::string value_digits;
			while (pos_ < text_.size()) {
				char c = std::tolower(static_cast<unsigned char>(text_[pos_]));
				if (c == '_') {
					++pos_;
					continue;
				}
				if (c == 'x' || c == 'z' || c == '?') {
					throw UnsupportedConstruct(file_, line_, "x/z literal digit");
				}
				bool ok = (base == 16 && std::isxdigit(static_cast<unsigned char>(c))) ||
					  (base == 10 && std::isdigit(static_cast<unsigned char>(c))) ||
					  (base == 8 && c >= '0' && c <= '7') || (base == 2 && (c == '0' || c == '1'));
				if (!ok) {
					break;
				}
				value_digits.push_back(c);
				++pos_;
			}
			if (value_digits.empty()) {
				throw SyntaxError(file_, line_, "based literal without digits");
			}
			uint64_t v = 0;
			for (char c : value_digits) {
				uint64_t digit = std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : 10 + (c - 'a');
				if (v > (~uint64_t(0) - digit) / base) {
					throw UnsupportedConstruct(file_, line_, "literal wider than 64 bits");
				}
				v = v * base + digit;
			}
			t.value = v;
			t.lit_width = digits.empty() ? -1 : std::stoi(digits);
			if (t.lit_width == 0) {
				throw SyntaxError(file_, line_, "zero-width literal");
			}
			if (t.lit_width > 0 && t.lit_width < 64 && v >= (uint64_t(1) << t.lit_width)) {
				t.value = v & ((uint64_t(1) << t.lit_width) - 1);
			}
			return t;
		}
		if (digits.empty()) {
			throw SyntaxError(file_, line_, "malformed number");
		}
		uint64_t v = 0;
		for (char c : digits) {
			uint64_t digit = c - '0';
			if (v > (~uint64_t(0) - digit) / 10) {
				throw UnsupportedConstruct(file_, line_, "literal wider than 64 bits");
			}
			v = v * 10 + digit;
		}
		t.value = v;
		t.lit_width = -1;
		return t;
	}

	Token punct()
	{
		static const std::vector<std::string> multi = {"<=", ">=", "==", "!=", "<<", ">>", "@*"};
		Token t;
		t.kind = Tok::Punct;
		t.line = line_;
		for (const auto &m : multi) {
			if (text_.compare(pos_, m.size(), m) == 0) {
				t.text = m;
				pos_ += m.size();
				return t;
			}
		}
		char c = text_[pos_];
		static const std::string single = "()[]{}:;,.=?~^&|+-*<>@!";
		if (single.find(c) == std::string::npos) {
			throw SyntaxError(file_, line_, std::string("unexpected character '") + c + "'");
		}
		t.text = std::string(1, c);
		++pos_;
		return t;
	}

	std::string file_;
	std::string text_;
	size_t pos_ = 0;
	int line_ = 1;
};

class ModuleParser {
      public:
	ModuleParser(std::string file, std::vector<Token> tokens) : file_(std::move(file)), toks_(std::move(tokens)) {}

	std::vector<RtlModule> parse_all()
	{
		std::vector<RtlModule> out;
		while (!at_end()) {
			out.push_back(parse_module());
		}
		return out;
	}

      private:
	const Token &peek(int ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
	bool at_end() const { return peek().kind == Tok::End; }

	const Token &advance() { return toks_[pos_++]; }

	bool check_punct(const std::string &p) const { return peek().kind == Tok::Punct && peek().text == p; }
	bool check_ident(const std::string &w) const { return peek().kind == Tok::Ident && peek().text == w; }

	bool accept_punct(const std::string &p)
	{
		if (check_punct(p)) {
			++pos_;
			return true;
		}
		return false;
	}

	bool accept_ident(const std::string &w)
	{
		if (check_ident(w)) {
			++pos_;
			return true;
		}
		return false;
	}

	void expect_punct(const std::string &p, const std::string &ctx)
	{
		if (!accept_punct(p)) {
			throw SyntaxError(file_, peek().line, "expected '" + p + "' " + ctx + ", got '" + describe(peek()) + "'");
		}
	}

	void expect_ident(const std::string &w, const std::string &ctx)
	{
		if (!accept_ident(w)) {
			throw SyntaxError(file_, peek().line, "expected '" + w + "' " + ctx + ", got '" + describe(peek()) + "'");
		}
	}

	std::string expect_name(const std::string &ctx)
	{
		if (peek().kind != Tok::Ident) {
			throw SyntaxError(file_, peek().line, "expected identifier " + ctx + ", got '" + describe(peek()) + "'");
		}
		return advance().text;
	}

	static std::string describe(const Token &t)
	{
		switch (t.kind) {
		case Tok::Ident:
		case Tok::Punct:
			return t.text;
		case Tok::Number:
			return std::to_string(t.value);
		case Tok::End:
			return "<eof>";
		}
		return "?";
	}

	// [msb:lsb]; returns {0,0} (scalar) when absent.
	std::pair<int, int> parse_optional_range()
	{
		if (!accept_punct("[")) {
			return {0, 0};
		}
		int line = peek().line;
		ExprPtr msb = parse_expr();
		expect_punct(":", "in range");
		ExprPtr lsb = parse_expr();
		expect_punct("]", "after range");
		if (msb->kind != ExprKind::Constant || lsb->kind != ExprKind::Constant) {
			throw UnsupportedConstruct(file_, line, "non-constant declaration range");
		}
		int m = int(msb->value);
		int l = int(lsb->value);
		if (m < l) {
			throw UnsupportedConstruct(file_, line, "descending bit range");
		}
		return {m, l};
	}

	RtlModule parse_module()
	{
		expect_ident("module", "at top level");
		RtlModule mod;
		mod.file = file_;
		mod.header_line = toks_[pos_ - 1].line;
		mod.name = expect_name("after 'module'");

		std::vector<std::string> header_ports;
		if (accept_punct("(")) {
			if (!check_punct(")")) {
				do {
					if (check_ident("input") || check_ident("output") || check_ident("inout")) {
						parse_ansi_port(mod);
					} else {
						header_ports.push_back(expect_name("in port list"));
					}
				} while (accept_punct(","));
			}
			expect_punct(")", "after port list");
		}
		expect_punct(";", "after module header");

		while (!accept_ident("endmodule")) {
			if (at_end()) {
				throw SyntaxError(file_, peek().line, "missing 'endmodule' in module " + mod.name);
			}
			parse_module_item(mod);
		}

		// Non-ANSI headers list names only; directions must follow as items.
		for (const auto &name : header_ports) {
			if (!mod.find_port(name)) {
				throw SyntaxError(file_, mod.header_line, "port '" + name + "' has no direction declaration");
			}
		}
		for (size_t i = 0; i < mod.statements.size(); ++i) {
			mod.statements[i].index = int(i) + 1;
		}
		return mod;
	}

	void parse_ansi_port(RtlModule &mod)
	{
		PortDir dir = PortDir::Input;
		if (accept_ident("input")) {
			dir = PortDir::Input;
		} else if (accept_ident("output")) {
			dir = PortDir::Output;
		} else {
			expect_ident("inout", "in ANSI port");
			dir = PortDir::Inout;
		}
		bool is_reg = accept_ident("reg");
		accept_ident("wire");
		auto [msb, lsb] = parse_optional_range();
		Port p;
		p.dir = dir;
		p.msb = msb;
		p.lsb = lsb;
		p.line = peek().line;
		p.name = expect_name("in ANSI port");
		if (mod.find_port(p.name)) {
			throw SyntaxError(file_, p.line, "duplicate port '" + p.name + "'");
		}
		mod.ports.push_back(p);
		if (is_reg) {
			Signal s;
			s.name = p.name;
			s.kind = SignalKind::Reg;
			s.msb = msb;
			s.lsb = lsb;
			s.line = p.line;
			mod.signals.push_back(std::move(s));
		}
	}

	void parse_module_item(RtlModule &mod)
	{
		if (check_ident("input") || check_ident("output") || check_ident("inout")) {
			parse_port_decl(mod);
		} else if (check_ident("wire") || check_ident("reg")) {
			parse_net_decl(mod);
		} else if (check_ident("assign")) {
			parse_continuous_assign(mod);
		} else if (check_ident("always")) {
			parse_always(mod);
		} else if (check_ident("if") || check_ident("case")) {
			// Tolerated at module level as an implicitly combinational
			// block (common in textbook-style listings).
			FunctionalStatement fs;
			fs.kind = check_ident("if") ? FsKind::IfElse : FsKind::CaseStatement;
			fs.sens_star = true;
			fs.body = parse_statement();
			fs.span = fs.body->span;
			mod.statements.push_back(std::move(fs));
		} else if (check_ident("function")) {
			parse_function(mod);
		} else if (peek().kind == Tok::Ident) {
			parse_instance(mod);
		} else {
			throw SyntaxError(file_, peek().line, "unexpected '" + describe(peek()) + "' in module body");
		}
	}

	void parse_port_decl(RtlModule &mod)
	{
		PortDir dir = PortDir::Input;
		if (accept_ident("input")) {
			dir = PortDir::Input;
		} else if (accept_ident("output")) {
			dir = PortDir::Output;
		} else {
			expect_ident("inout", "in declaration");
			dir = PortDir::Inout;
		}
		bool is_reg = accept_ident("reg");
		accept_ident("wire");
		auto [msb, lsb] = parse_optional_range();
		do {
			Port p;
			p.dir = dir;
			p.msb = msb;
			p.lsb = lsb;
			p.line = peek().line;
			p.name = expect_name("in port declaration");
			if (mod.find_port(p.name)) {
				throw SyntaxError(file_, p.line, "duplicate port '" + p.name + "'");
			}
			mod.ports.push_back(p);
			if (is_reg) {
				Signal s;
				s.name = p.name;
				s.kind = SignalKind::Reg;
				s.msb = msb;
				s.lsb = lsb;
				s.line = p.line;
				mod.signals.push_back(std::move(s));
			}
		} while (accept_punct(","));
		expect_punct(";", "after port declaration");
	}

	void parse_net_decl(RtlModule &mod)
	{
		SignalKind kind = accept_ident("wire") ? SignalKind::Wire : (expect_ident("reg", "in declaration"), SignalKind::Reg);
		auto [msb, lsb] = parse_optional_range();
		do {
			Signal s;
			s.kind = kind;
			s.msb = msb;
			s.lsb = lsb;
			s.line = peek().line;
			s.name = expect_name("in declaration");
			if (accept_punct("=")) {
				s.init = parse_expr();
				if (kind == SignalKind::Wire) {
					// wire w = expr; is sugar for a continuous assign
					FunctionalStatement fs;
					fs.kind = FsKind::ContinuousAssign;
					fs.span = {file_, s.line, toks_[pos_ - 1].line};
					auto st = std::make_unique<Stmt>();
					st->kind = StmtKind::Assign;
					st->continuous = true;
					st->span = fs.span;
					auto ref = std::make_unique<Expr>();
					ref->kind = ExprKind::SignalRef;
					ref->name = s.name;
					ref->span = fs.span;
					st->lhs = std::move(ref);
					st->rhs = std::move(s.init);
					fs.body = std::move(st);
					mod.statements.push_back(std::move(fs));
				}
			}
			if (mod.find_signal(s.name)) {
				throw SyntaxError(file_, s.line, "duplicate signal '" + s.name + "'");
			}
			mod.signals.push_back(std::move(s));
		} while (accept_punct(","));
		expect_punct(";", "after declaration");
	}

	void parse_continuous_assign(RtlModule &mod)
	{
		int first = peek().line;
		expect_ident("assign", "");
		auto st = std::make_unique<Stmt>();
		st->kind = StmtKind::Assign;
		st->continuous = true;
		st->lhs = parse_lvalue();
		expect_punct("=", "in assign");
		st->rhs = parse_expr();
		expect_punct(";", "after assign");
		int last = toks_[pos_ - 1].line;
		st->span = {file_, first, last};

		FunctionalStatement fs;
		fs.kind = st->rhs->kind == ExprKind::FunctionCall ? FsKind::FunctionCallAssign : FsKind::ContinuousAssign;
		fs.span = st->span;
		fs.body = std::move(st);
		mod.statements.push_back(std::move(fs));
	}

	void parse_always(RtlModule &mod)
	{
		int first = peek().line;
		expect_ident("always", "");
		FunctionalStatement fs;
		fs.kind = FsKind::AlwaysBlock;
		if (accept_punct("@*")) {
			fs.sens_star = true;
		} else {
			expect_punct("@", "after 'always'");
			if (accept_punct("*")) {
				fs.sens_star = true;
			} else {
				expect_punct("(", "in sensitivity list");
				if (accept_punct("*")) {
					fs.sens_star = true;
				} else {
					do {
						if (accept_ident("posedge")) {
							if (fs.clocked || !fs.sens.empty()) {
								throw UnsupportedConstruct(file_, peek().line, "mixed sensitivity list");
							}
							fs.clocked = true;
							fs.clock = expect_name("after 'posedge'");
						} else if (check_ident("negedge")) {
							throw UnsupportedConstruct(file_, peek().line, "negedge sensitivity");
						} else {
							if (fs.clocked) {
								throw UnsupportedConstruct(file_, peek().line, "mixed sensitivity list");
							}
							fs.sens.push_back(expect_name("in sensitivity list"));
						}
					} while (accept_punct(",") || accept_ident("or"));
				}
				expect_punct(")", "after sensitivity list");
			}
		}
		fs.body = parse_statement();
		fs.span = {file_, first, fs.body->span.last_line};
		mod.statements.push_back(std::move(fs));
	}

	StmtPtr parse_statement()
	{
		int first = peek().line;
		if (accept_ident("begin")) {
			auto st = std::make_unique<Stmt>();
			st->kind = StmtKind::Block;
			while (!check_ident("end")) {
				if (at_end()) {
					throw SyntaxError(file_, peek().line, "missing 'end'");
				}
				st->stmts.push_back(parse_statement());
			}
			expect_ident("end", "");
			st->span = {file_, first, toks_[pos_ - 1].line};
			return st;
		}
		if (accept_ident("if")) {
			auto st = std::make_unique<Stmt>();
			st->kind = StmtKind::If;
			expect_punct("(", "after 'if'");
			st->cond = parse_expr();
			expect_punct(")", "after if condition");
			st->then_branch = parse_statement();
			int last = st->then_branch->span.last_line;
			if (accept_ident("else")) {
				st->else_branch = parse_statement();
				last = st->else_branch->span.last_line;
			}
			st->span = {file_, first, last};
			return st;
		}
		if (accept_ident("case")) {
			auto st = std::make_unique<Stmt>();
			st->kind = StmtKind::Case;
			expect_punct("(", "after 'case'");
			st->selector = parse_expr();
			expect_punct(")", "after case selector");
			while (!check_ident("endcase")) {
				if (at_end()) {
					throw SyntaxError(file_, peek().line, "missing 'endcase'");
				}
				CaseArm arm;
				if (accept_ident("default")) {
					arm.is_default = true;
					accept_punct(":");
				} else {
					do {
						arm.labels.push_back(parse_expr());
					} while (accept_punct(","));
					expect_punct(":", "after case label");
				}
				arm.body = parse_statement();
				st->arms.push_back(std::move(arm));
			}
			expect_ident("endcase", "");
			if (st->arms.empty()) {
				throw SyntaxError(file_, first, "case statement without arms");
			}
			st->span = {file_, first, toks_[pos_ - 1].line};
			return st;
		}
		// Procedural assignment; a leading `assign` keyword is tolerated
		// and treated as a blocking assignment.
		accept_ident("assign");
		auto st = std::make_unique<Stmt>();
		st->kind = StmtKind::Assign;
		st->lhs = parse_lvalue();
		if (accept_punct("<=")) {
			st->nonblocking = true;
		} else {
			expect_punct("=", "in assignment");
		}
		st->rhs = parse_expr();
		expect_punct(";", "after assignment");
		st->span = {file_, first, toks_[pos_ - 1].line};
		return st;
	}

	ExprPtr parse_lvalue()
	{
		if (check_punct("{")) {
			throw UnsupportedConstruct(file_, peek().line, "concatenation lvalue");
		}
		int line = peek().line;
		std::string name = expect_name("as assignment target");
		auto ref = std::make_unique<Expr>();
		ref->kind = ExprKind::SignalRef;
		ref->name = name;
		ref->span = {file_, line, line};
		if (accept_punct("[")) {
			ExprPtr a = parse_expr();
			if (accept_punct(":")) {
				ExprPtr b = parse_expr();
				expect_punct("]", "after part select");
				auto sel = std::make_unique<Expr>();
				sel->kind = ExprKind::PartSelect;
				sel->span = {file_, line, toks_[pos_ - 1].line};
				sel->args.push_back(std::move(ref));
				sel->args.push_back(std::move(a));
				sel->args.push_back(std::move(b));
				return sel;
			}
			expect_punct("]", "after bit select");
			auto sel = std::make_unique<Expr>();
			sel->kind = ExprKind::BitSelect;
			sel->span = {file_, line, toks_[pos_ - 1].line};
			sel->args.push_back(std::move(ref));
			sel->args.push_back(std::move(a));
			return sel;
		}
		return ref;
	}

	// Precedence climbing, lowest first: ?: | ^ & ==/!= relational shifts +- *
	ExprPtr parse_expr() { return parse_ternary(); }

	ExprPtr parse_ternary()
	{
		ExprPtr cond = parse_binary(0);
		if (!accept_punct("?")) {
			return cond;
		}
		auto e = std::make_unique<Expr>();
		e->kind = ExprKind::Ternary;
		e->span = cond->span;
		ExprPtr then = parse_ternary();
		expect_punct(":", "in conditional expression");
		ExprPtr other = parse_ternary();
		e->span.last_line = other->span.last_line;
		e->args.push_back(std::move(cond));
		e->args.push_back(std::move(then));
		e->args.push_back(std::move(other));
		return e;
	}

	struct Level {
		std::vector<std::pair<std::string, BinOp>> ops;
	};

	static const std::vector<Level> &levels()
	{
		static const std::vector<Level> ls = {
		    {{{"|", BinOp::Or}}},
		    {{{"^", BinOp::Xor}}},
		    {{{"&", BinOp::And}}},
		    {{{"==", BinOp::Eq}, {"!=", BinOp::Neq}}},
		    {{{"<", BinOp::Lt}, {">", BinOp::Gt}, {"<=", BinOp::Le}, {">=", BinOp::Ge}}},
		    {{{"<<", BinOp::Shl}, {">>", BinOp::Shr}}},
		    {{{"+", BinOp::Add}, {"-", BinOp::Sub}}},
		    {{{"*", BinOp::Mul}}},
		};
		return ls;
	}

	ExprPtr parse_binary(size_t level)
	{
		if (level >= levels().size()) {
			return parse_unary();
		}
		ExprPtr left = parse_binary(level + 1);
		while (true) {
			bool matched = false;
			for (const auto &[text, op] : levels()[level].ops) {
				if (check_punct(text)) {
					++pos_;
					ExprPtr right = parse_binary(level + 1);
					auto e = std::make_unique<Expr>();
					e->kind = ExprKind::Binary;
					e->bin = op;
					e->span = {file_, left->span.first_line, right->span.last_line};
					e->args.push_back(std::move(left));
					e->args.push_back(std::move(right));
					left = std::move(e);
					matched = true;
					break;
				}
			}
			if (!matched) {
				return left;
			}
		}
	}

	ExprPtr parse_unary()
	{
		int line = peek().line;
		if (accept_punct("~")) {
			auto e = std::make_unique<Expr>();
			e->kind = ExprKind::Unary;
			e->un = UnOp::BitNot;
			e->args.push_back(parse_unary());
			e->span = {file_, line, e->args[0]->span.last_line};
			return e;
		}
		if (accept_punct("-")) {
			auto e = std::make_unique<Expr>();
			e->kind = ExprKind::Unary;
			e->un = UnOp::Neg;
			e->args.push_back(parse_unary());
			e->span = {file_, line, e->args[0]->span.last_line};
			return e;
		}
		if (check_punct("!")) {
			throw UnsupportedConstruct(file_, line, "logical negation");
		}
		return parse_primary();
	}

	ExprPtr parse_primary()
	{
		int line = peek().line;
		if (accept_punct("(")) {
			ExprPtr e = parse_expr();
			expect_punct(")", "after parenthesized expression");
			return e;
		}
		if (check_punct("{")) {
			return parse_concat();
		}
		if (peek().kind == Tok::Number) {
			const Token &t = advance();
			auto e = std::make_unique<Expr>();
			e->kind = ExprKind::Constant;
			e->value = t.value;
			e->literal_width = t.lit_width;
			e->span = {file_, t.line, t.line};
			return e;
		}
		if (peek().kind != Tok::Ident) {
			throw SyntaxError(file_, line, "expected expression, got '" + describe(peek()) + "'");
		}
		std::string name = advance().text;
		if (accept_punct("(")) {
			auto e = std::make_unique<Expr>();
			e->kind = ExprKind::FunctionCall;
			e->name = name;
			if (!check_punct(")")) {
				do {
					e->args.push_back(parse_expr());
				} while (accept_punct(","));
			}
			expect_punct(")", "after call arguments");
			e->span = {file_, line, toks_[pos_ - 1].line};
			return e;
		}
		auto ref = std::make_unique<Expr>();
		ref->kind = ExprKind::SignalRef;
		ref->name = name;
		ref->span = {file_, line, line};
		if (accept_punct("[")) {
			ExprPtr a = parse_expr();
			if (accept_punct(":")) {
				ExprPtr b = parse_expr();
				expect_punct("]", "after part select");
				auto sel = std::make_unique<Expr>();
				sel->kind = ExprKind::PartSelect;
				sel->span = {file_, line, toks_[pos_ - 1].line};
				sel->args.push_back(std::move(ref));
				sel->args.push_back(std::move(a));
				sel->args.push_back(std::move(b));
				return sel;
			}
			expect_punct("]", "after bit select");
			auto sel = std::make_unique<Expr>();
			sel->kind = ExprKind::BitSelect;
			sel->span = {file_, line, toks_[pos_ - 1].line};
			sel->args.push_back(std::move(ref));
			sel->args.push_back(std::move(a));
			return sel;
		}
		return ref;
	}

	ExprPtr parse_concat()
	{
		int line = peek().line;
		expect_punct("{", "");
		ExprPtr first = parse_expr();
		if (check_punct("{")) {
			// {N{expr}} replication
			if (first->kind != ExprKind::Constant) {
				throw UnsupportedConstruct(file_, line, "non-constant replication count");
			}
			expect_punct("{", "");
			auto e = std::make_unique<Expr>();
			e->kind = ExprKind::Replicate;
			e->args.push_back(std::move(first));
			do {
				e->args.push_back(parse_expr());
			} while (accept_punct(","));
			expect_punct("}", "after replication body");
			expect_punct("}", "after replication");
			e->span = {file_, line, toks_[pos_ - 1].line};
			return e;
		}
		auto e = std::make_unique<Expr>();
		e->kind = ExprKind::Concat;
		e->args.push_back(std::move(first));
		while (accept_punct(",")) {
			e->args.push_back(parse_expr());
		}
		expect_punct("}", "after concatenation");
		e->span = {file_, line, toks_[pos_ - 1].line};
		return e;
	}

	void parse_function(RtlModule &mod)
	{
		int first = peek().line;
		expect_ident("function", "");
		auto fn = std::make_unique<RtlFunction>();
		auto [msb, lsb] = parse_optional_range();
		fn->msb = msb;
		fn->lsb = lsb;
		fn->name = expect_name("after 'function'");
		if (accept_punct("(")) {
			// Verilog-2001 inline parameter list
			do {
				expect_ident("input", "in function parameter list");
				auto [pm, pl] = parse_optional_range();
				FunctionParam p;
				p.msb = pm;
				p.lsb = pl;
				p.name = expect_name("in function parameter list");
				fn->inputs.push_back(p);
			} while (accept_punct(","));
			expect_punct(")", "after function parameters");
		}
		expect_punct(";", "after function header");
		while (check_ident("input")) {
			expect_ident("input", "");
			auto [pm, pl] = parse_optional_range();
			do {
				FunctionParam p;
				p.msb = pm;
				p.lsb = pl;
				p.name = expect_name("in function input declaration");
				fn->inputs.push_back(p);
			} while (accept_punct(","));
			expect_punct(";", "after function input declaration");
		}
		fn->body = parse_statement();
		expect_ident("endfunction", "");
		fn->span = {file_, first, toks_[pos_ - 1].line};

		FunctionalStatement fs;
		fs.kind = FsKind::FunctionDecl;
		fs.span = fn->span;
		fs.function = std::move(fn);
		mod.statements.push_back(std::move(fs));
	}

	void parse_instance(RtlModule &mod)
	{
		Instance inst;
		inst.line = peek().line;
		inst.module_name = expect_name("as module type");
		inst.instance_name = expect_name("as instance name");
		expect_punct("(", "after instance name");
		if (!check_punct(")")) {
			bool named = check_punct(".");
			do {
				PortBinding b;
				b.line = peek().line;
				if (named) {
					expect_punct(".", "in named port binding");
					b.port = expect_name("after '.'");
					expect_punct("(", "in named port binding");
					if (!check_punct(")")) {
						b.expr = parse_expr();
					}
					expect_punct(")", "after port binding");
				} else {
					b.expr = parse_expr();
				}
				inst.bindings.push_back(std::move(b));
			} while (accept_punct(","));
		}
		expect_punct(")", "after port bindings");
		expect_punct(";", "after instance");
		mod.instances.push_back(std::move(inst));
	}

	std::string file_;
	std::vector<Token> toks_;
	size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Elaboration: name resolution, width annotation, structural checks.

class Elaborator {
      public:
	explicit Elaborator(DesignAst &ast) : ast_(ast) {}

	void run()
	{
		for (auto &mod : ast_.modules) {
			module_ = &mod;
			for (auto &sig : mod.signals) {
				if (const Port *p = mod.find_port(sig.name); p && p->width() != sig.width()) {
					throw SyntaxError(mod.file, sig.line, "'" + sig.name + "' redeclared with a different range");
				}
				if (sig.init) {
					if (sig.kind == SignalKind::Reg && sig.init->kind != ExprKind::Constant) {
						throw UnsupportedConstruct(mod.file, sig.line, "non-constant register initializer");
					}
					elaborate_expr(*sig.init);
				}
			}
			for (auto &fs : mod.statements) {
				elaborate_functional(fs);
			}
			for (auto &inst : mod.instances) {
				elaborate_instance(inst);
			}
		}
	}

      private:
	void elaborate_functional(FunctionalStatement &fs)
	{
		if (fs.kind == FsKind::FunctionDecl) {
			function_scope_ = fs.function.get();
			elaborate_stmt(*fs.function->body);
			function_scope_ = nullptr;
			return;
		}
		if (fs.kind == FsKind::AlwaysBlock) {
			if (fs.clocked && lookup_width(fs.clock) < 0) {
				throw UndeclaredSignal(module_->file, fs.span.first_line, fs.clock);
			}
			for (const auto &s : fs.sens) {
				if (lookup_width(s) < 0) {
					throw UndeclaredSignal(module_->file, fs.span.first_line, s);
				}
			}
		}
		elaborate_stmt(*fs.body);
	}

	void elaborate_stmt(Stmt &st)
	{
		switch (st.kind) {
		case StmtKind::Assign:
			elaborate_expr(*st.lhs);
			elaborate_expr(*st.rhs);
			break;
		case StmtKind::If:
			elaborate_expr(*st.cond);
			elaborate_stmt(*st.then_branch);
			if (st.else_branch) {
				elaborate_stmt(*st.else_branch);
			}
			break;
		case StmtKind::Case:
			elaborate_expr(*st.selector);
			for (auto &arm : st.arms) {
				for (auto &l : arm.labels) {
					elaborate_expr(*l);
				}
				elaborate_stmt(*arm.body);
			}
			break;
		case StmtKind::Block:
			for (auto &s : st.stmts) {
				elaborate_stmt(*s);
			}
			break;
		}
	}

	int lookup_width(const std::string &name) const
	{
		if (function_scope_) {
			if (name == function_scope_->name) {
				return function_scope_->width();
			}
			for (const auto &p : function_scope_->inputs) {
				if (p.name == name) {
					return p.width();
				}
			}
		}
		return module_->declared_width(name);
	}

	void elaborate_expr(Expr &e)
	{
		for (auto &a : e.args) {
			elaborate_expr(*a);
		}
		switch (e.kind) {
		case ExprKind::SignalRef: {
			int w = lookup_width(e.name);
			if (w < 0) {
				throw UndeclaredSignal(module_->file, e.span.first_line, e.name);
			}
			e.width = w;
			break;
		}
		case ExprKind::Constant:
			e.width = e.literal_width > 0 ? e.literal_width : 32;
			break;
		case ExprKind::Unary:
			e.width = e.args[0]->width;
			break;
		case ExprKind::Binary:
			switch (e.bin) {
			case BinOp::Eq:
			case BinOp::Neq:
			case BinOp::Lt:
			case BinOp::Gt:
			case BinOp::Le:
			case BinOp::Ge:
				e.width = 1;
				break;
			case BinOp::Shl:
			case BinOp::Shr:
				e.width = e.args[0]->width;
				break;
			default:
				e.width = std::max(e.args[0]->width, e.args[1]->width);
				break;
			}
			break;
		case ExprKind::Ternary:
			e.width = std::max(e.args[1]->width, e.args[2]->width);
			break;
		case ExprKind::BitSelect: {
			const Expr &base = *e.args[0];
			const Expr &idx = *e.args[1];
			if (idx.kind == ExprKind::Constant && base.kind == ExprKind::SignalRef) {
				int lsb = select_base_lsb(base.name);
				int offset = int(idx.value) - lsb;
				if (offset < 0 || offset >= base.width) {
					throw SyntaxError(module_->file, e.span.first_line,
							  "bit index " + std::to_string(idx.value) + " out of range for '" + base.name + "'");
				}
			}
			e.width = 1;
			break;
		}
		case ExprKind::PartSelect: {
			const Expr &msb = *e.args[1];
			const Expr &lsb = *e.args[2];
			if (msb.kind != ExprKind::Constant || lsb.kind != ExprKind::Constant) {
				throw UnsupportedConstruct(module_->file, e.span.first_line, "non-constant part select");
			}
			if (msb.value < lsb.value) {
				throw SyntaxError(module_->file, e.span.first_line, "reversed part select");
			}
			const Expr &base = *e.args[0];
			if (base.kind == ExprKind::SignalRef) {
				int base_lsb = select_base_lsb(base.name);
				if (int(msb.value) - base_lsb >= base.width || int(lsb.value) < base_lsb) {
					throw SyntaxError(module_->file, e.span.first_line, "part select out of range for '" + base.name + "'");
				}
			}
			e.width = int(msb.value - lsb.value) + 1;
			break;
		}
		case ExprKind::Concat: {
			int w = 0;
			for (const auto &a : e.args) {
				w += a->width;
			}
			e.width = w;
			break;
		}
		case ExprKind::Replicate: {
			int count = int(e.args[0]->value);
			if (count < 1) {
				throw SyntaxError(module_->file, e.span.first_line, "replication count must be >= 1");
			}
			int w = 0;
			for (size_t i = 1; i < e.args.size(); ++i) {
				w += e.args[i]->width;
			}
			e.width = count * w;
			break;
		}
		case ExprKind::FunctionCall: {
			const RtlFunction *fn = module_->find_function(e.name);
			if (!fn) {
				throw UndeclaredSignal(module_->file, e.span.first_line, e.name);
			}
			if (fn->inputs.size() != e.args.size()) {
				throw SyntaxError(module_->file, e.span.first_line,
						  "function '" + e.name + "' expects " + std::to_string(fn->inputs.size()) + " arguments, got " +
						      std::to_string(e.args.size()));
			}
			e.width = fn->width();
			break;
		}
		}
		if (e.width < 1) {
			throw SyntaxError(module_->file, e.span.first_line, "zero-width expression");
		}
	}

	// lsb of the declared range, for [msb:lsb] declarations not based at 0
	int select_base_lsb(const std::string &name) const
	{
		if (function_scope_) {
			if (name == function_scope_->name) {
				return function_scope_->lsb;
			}
			for (const auto &p : function_scope_->inputs) {
				if (p.name == name) {
					return p.lsb;
				}
			}
		}
		if (const Port *p = module_->find_port(name)) {
			return p->lsb;
		}
		if (const Signal *s = module_->find_signal(name)) {
			return s->lsb;
		}
		return 0;
	}

	void elaborate_instance(Instance &inst)
	{
		const RtlModule *child = ast_.find_module(inst.module_name);
		if (!child) {
			throw UnresolvedModule(inst.module_name);
		}
		bool positional = !inst.bindings.empty() && inst.bindings[0].port.empty();
		if (positional) {
			if (inst.bindings.size() > child->ports.size()) {
				throw SyntaxError(module_->file, inst.line, "too many positional bindings for '" + inst.module_name + "'");
			}
			for (size_t i = 0; i < inst.bindings.size(); ++i) {
				inst.bindings[i].port = child->ports[i].name;
			}
		}
		std::set<std::string> seen;
		for (auto &b : inst.bindings) {
			if (!child->find_port(b.port)) {
				throw UndeclaredSignal(module_->file, b.line, inst.module_name + "." + b.port);
			}
			if (!seen.insert(b.port).second) {
				throw SyntaxError(module_->file, b.line, "port '" + b.port + "' bound twice");
			}
			if (b.expr) {
				elaborate_expr(*b.expr);
			}
		}
	}

	DesignAst &ast_;
	RtlModule *module_ = nullptr;
	const RtlFunction *function_scope_ = nullptr;
};

} // namespace

DesignAst parse_design(const std::vector<std::pair<std::string, std::string>> &sources, const std::string &top)
{
	if (sources.empty()) {
		throw SyntaxError("", 0, "no source files given");
	}
	DesignAst ast;
	ast.top = top;

	std::vector<RtlModule> all;
	for (const auto &[file, text] : sources) {
		ast.source_map.add_file(file, text);
		ModuleParser parser(file, Lexer(file, text).run());
		for (auto &mod : parser.parse_all()) {
			for (const auto &existing : all) {
				if (existing.name == mod.name) {
					throw SyntaxError(mod.file, mod.header_line, "duplicate module '" + mod.name + "'");
				}
			}
			all.push_back(std::move(mod));
		}
	}

	auto find = [&all](const std::string &name) -> RtlModule * {
		for (auto &m : all) {
			if (m.name == name) {
				return &m;
			}
		}
		return nullptr;
	};
	if (!find(top)) {
		throw UnresolvedModule(top);
	}

	// Keep the top module and everything transitively instantiated, in
	// deterministic preorder.
	std::vector<std::string> order;
	std::set<std::string> visited;
	std::vector<std::string> stack = {top};
	while (!stack.empty()) {
		std::string name = stack.back();
		stack.pop_back();
		if (!visited.insert(name).second) {
			continue;
		}
		order.push_back(name);
		RtlModule *m = find(name);
		if (!m) {
			throw UnresolvedModule(name);
		}
		// push children in reverse so they pop in source order
		for (auto it = m->instances.rbegin(); it != m->instances.rend(); ++it) {
			stack.push_back(it->module_name);
		}
	}
	for (const auto &name : order) {
		ast.modules.push_back(std::move(*find(name)));
	}

	Elaborator(ast).run();
	return ast;
}

std::vector<const FunctionalStatement *> functional_statements(const DesignAst &ast, const std::string &module)
{
	const RtlModule &mod = ast.module_or_throw(module);
	std::vector<const FunctionalStatement *> out;
	out.reserve(mod.statements.size());
	for (const auto &fs : mod.statements) {
		out.push_back(&fs);
	}
	return out;
}

} // namespace psc
