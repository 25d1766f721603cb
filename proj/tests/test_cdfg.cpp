#include <doctest.h>

#include <algorithm>
#include <set>

#include "psc/cdfg.hpp"
#include "psc/parser.hpp"

using namespace psc;

namespace {

DesignAst parse_one(const std::string &text, const std::string &top)
{
	return parse_design({{"test.v", text}}, top);
}

const CdfgNode *find_kind(const Cdfg &g, CdfgKind kind)
{
	for (const auto &n : g.nodes) {
		if (n.kind == kind) {
			return &n;
		}
	}
	return nullptr;
}

int count_kind(const Cdfg &g, CdfgKind kind)
{
	int c = 0;
	for (const auto &n : g.nodes) {
		c += n.kind == kind;
	}
	return c;
}

bool has_edge(const Cdfg &g, int src, int dst)
{
	return std::any_of(g.edges.begin(), g.edges.end(),
			   [&](const CdfgEdge &e) { return e.src == src && e.dst == dst; });
}

} // namespace

TEST_CASE("single assign module gives ENTRY -> AS -> EXIT")
{
	DesignAst ast = parse_one("module m(input a, input b, output y);\nassign y = a ^ b;\nendmodule\n", "m");
	Cdfg g = build_cdfg(ast);
	REQUIRE(g.nodes.size() == 3);
	const CdfgNode *entry = find_kind(g, CdfgKind::ENTRY);
	const CdfgNode *as = find_kind(g, CdfgKind::AS);
	const CdfgNode *exit = find_kind(g, CdfgKind::EXIT);
	REQUIRE(entry != nullptr);
	REQUIRE(as != nullptr);
	REQUIRE(exit != nullptr);
	REQUIRE(g.edges.size() == 2);
	CHECK(has_edge(g, entry->id, as->id));
	CHECK(has_edge(g, as->id, exit->id));
	CHECK(as->label == "m.2:AS");
	CHECK(as->signals == std::set<std::string>{"a", "b", "y"});
	for (const auto &e : g.edges) {
		CHECK(e.weight == 1.0);
	}
}

TEST_CASE("if/else inside always: IF with two AS arms rejoining, 5 non-entry edges")
{
	DesignAst ast = parse_one("module m(input c, input a, input b, output reg x);\n"
				  "always @(*) begin\n"
				  "  if (c) x = a;\n"
				  "  else x = b;\n"
				  "end\n"
				  "endmodule\n",
				  "m");
	Cdfg g = build_cdfg(ast);
	const CdfgNode *ifn = find_kind(g, CdfgKind::IF);
	const CdfgNode *entry = find_kind(g, CdfgKind::ENTRY);
	const CdfgNode *exit = find_kind(g, CdfgKind::EXIT);
	REQUIRE(ifn != nullptr);
	CHECK(count_kind(g, CdfgKind::AS) == 2);

	int if_out = 0;
	for (const auto &e : g.edges) {
		if (e.src == ifn->id) {
			++if_out;
			CHECK(g.node(e.dst).kind == CdfgKind::AS);
		}
		if (g.node(e.src).kind == CdfgKind::AS) {
			CHECK(e.dst == exit->id);
		}
	}
	CHECK(if_out == 2);

	int non_entry_edges = 0;
	for (const auto &e : g.edges) {
		non_entry_edges += e.src != entry->id;
	}
	CHECK(non_entry_edges == 5);
	CHECK(ifn->signals == std::set<std::string>{"c"});
}

TEST_CASE("instance hierarchy: CALL node links to child ENTRY and back")
{
	const char *text = "module sbox(input [3:0] in, output [3:0] out);\n"
			   "assign out = in ^ 4'h9;\n"
			   "endmodule\n"
			   "module top(input [3:0] x, output [3:0] y, output [3:0] z);\n"
			   "assign z = x & 4'h3;\n"
			   "sbox u0(.in(x), .out(y));\n"
			   "endmodule\n";
	DesignAst ast = parse_design({{"test.v", text}}, "top");
	Cdfg g = build_cdfg(ast);

	const CdfgNode *call = find_kind(g, CdfgKind::CALL);
	REQUIRE(call != nullptr);
	CHECK(call->module == "top");
	CHECK(call->instance != nullptr);

	int child_entry = -1;
	int child_exit = -1;
	int top_exit = -1;
	for (const auto &n : g.nodes) {
		if (n.module == "sbox" && n.kind == CdfgKind::ENTRY) {
			child_entry = n.id;
		}
		if (n.module == "sbox" && n.kind == CdfgKind::EXIT) {
			child_exit = n.id;
		}
		if (n.module == "top" && n.kind == CdfgKind::EXIT) {
			top_exit = n.id;
		}
	}
	REQUIRE(child_entry >= 0);
	CHECK(has_edge(g, call->id, child_entry));
	// control returns to the caller: child EXIT feeds the call's successor
	CHECK(has_edge(g, child_exit, top_exit));
	CHECK(call->signals == std::set<std::string>{"x", "y"});
}

TEST_CASE("node ids are dense, deterministic, and preorder from top entry")
{
	const char *text = "module child(input a, output b);\nassign b = ~a;\nendmodule\n"
			   "module top(input i, output o);\nchild u(.a(i), .b(o));\nendmodule\n";
	DesignAst ast1 = parse_design({{"t.v", text}}, "top");
	DesignAst ast2 = parse_design({{"t.v", text}}, "top");
	Cdfg g1 = build_cdfg(ast1);
	Cdfg g2 = build_cdfg(ast2);
	REQUIRE(g1.nodes.size() == g2.nodes.size());
	for (size_t i = 0; i < g1.nodes.size(); ++i) {
		CHECK(g1.nodes[i].id == int(i));
		CHECK(g1.nodes[i].label == g2.nodes[i].label);
		CHECK(g1.nodes[i].kind == g2.nodes[i].kind);
	}
	CHECK(g1.nodes[0].kind == CdfgKind::ENTRY);
	CHECK(g1.nodes[0].module == "top");
	CHECK(export_cdfg(g1) == export_cdfg(g2));
}

TEST_CASE("every non-entry node is reachable from its module entry")
{
	const char *text = "module m(input clk, input [1:0] s, input [3:0] a, input [3:0] b, output reg [3:0] y);\n"
			   "wire [3:0] t;\n"
			   "assign t = a | b;\n"
			   "always @(posedge clk) begin\n"
			   "  case (s)\n"
			   "    2'd0: y <= a;\n"
			   "    2'd1: begin y <= b; end\n"
			   "    default: y <= t;\n"
			   "  endcase\n"
			   "end\n"
			   "endmodule\n";
	DesignAst ast = parse_one(text, "m");
	Cdfg g = build_cdfg(ast);

	std::vector<std::vector<int>> out(g.nodes.size());
	for (const auto &e : g.edges) {
		out[size_t(e.src)].push_back(e.dst);
	}
	std::set<int> seen;
	std::vector<int> stack = {0};
	while (!stack.empty()) {
		int v = stack.back();
		stack.pop_back();
		if (!seen.insert(v).second) {
			continue;
		}
		for (int w : out[size_t(v)]) {
			stack.push_back(w);
		}
	}
	CHECK(seen.size() == g.nodes.size());

	// case with default: CASE out-degree equals number of arms
	const CdfgNode *cs = find_kind(g, CdfgKind::CASE);
	REQUIRE(cs != nullptr);
	int case_out = 0;
	for (const auto &e : g.edges) {
		case_out += e.src == cs->id;
	}
	CHECK(case_out == 3);
	CHECK(cs->signals == std::set<std::string>{"s"});
}

TEST_CASE("consecutive assignments form one basic block")
{
	DesignAst ast = parse_one("module m(input clk, input [3:0] d, output reg [3:0] q0, output reg [3:0] q1);\n"
				  "always @(posedge clk) begin\n"
				  "  q0 <= d;\n"
				  "  q1 <= q0;\n"
				  "end\n"
				  "endmodule\n",
				  "m");
	Cdfg g = build_cdfg(ast);
	REQUIRE(count_kind(g, CdfgKind::AS) == 1);
	const CdfgNode *as = find_kind(g, CdfgKind::AS);
	CHECK(as->stmts.size() == 2);
	CHECK(as->signals == std::set<std::string>{"d", "q0", "q1"});
	CHECK(as->line == 3); // first assignment of the group
	const CdfgNode *always = find_kind(g, CdfgKind::ALWAYS);
	REQUIRE(always != nullptr);
	CHECK(always->signals == std::set<std::string>{"clk"});

	// a branch splits the block
	DesignAst ast2 = parse_one("module m(input clk, input c, input [3:0] d, output reg [3:0] q0, output reg [3:0] q1);\n"
				   "always @(posedge clk) begin\n"
				   "  q0 <= d;\n"
				   "  if (c) q1 <= q0;\n"
				   "  q1 <= d;\n"
				   "end\n"
				   "endmodule\n",
				   "m");
	CHECK(count_kind(build_cdfg(ast2), CdfgKind::AS) == 3);
}

TEST_CASE("label collisions on one line get a deterministic suffix")
{
	DesignAst ast = parse_one("module m(input a, output x, output y);\nassign x = a; assign y = a;\nendmodule\n", "m");
	Cdfg g = build_cdfg(ast);
	std::set<std::string> labels;
	for (const auto &n : g.nodes) {
		CHECK(labels.insert(n.label).second); // unique
	}
	CHECK(labels.count("m.2:AS"));
	CHECK(labels.count("m.2:AS#2"));
}

TEST_CASE("node_line_map covers all nodes; entry and exit use the header line")
{
	DesignAst ast = parse_one("module m(input a, output y);\nassign y = a;\nendmodule\n", "m");
	Cdfg g = build_cdfg(ast);
	auto map = node_line_map(g);
	REQUIRE(map.size() == g.nodes.size());
	for (const auto &n : g.nodes) {
		auto [mod, line] = map.at(n.id);
		CHECK(mod == "m");
		if (n.kind == CdfgKind::ENTRY || n.kind == CdfgKind::EXIT) {
			CHECK(line == 1);
		} else {
			CHECK(line == 2);
		}
	}
}

TEST_CASE("label format parses back to module and line")
{
	// mirror of the published label shape: Module.line:KIND
	DesignAst ast = parse_one("module AES_Comp_DEC(input [7:0] a, output [7:0] y);\nassign y = a ^ 8'h1b;\nendmodule\n",
				  "AES_Comp_DEC");
	Cdfg g = build_cdfg(ast);
	const CdfgNode *as = find_kind(g, CdfgKind::AS);
	REQUIRE(as != nullptr);
	CHECK(as->label == "AES_Comp_DEC.2:AS");
	auto map = node_line_map(g);
	CHECK(map.at(as->id) == std::make_pair(std::string("AES_Comp_DEC"), 2));
}

TEST_CASE("function-call assign is a CALL node; function body inlines at its declaration")
{
	DesignAst ast = parse_one("module m(input [7:0] x, output [7:0] y);\n"
				  "function [7:0] f;\n"
				  "input [7:0] v;\n"
				  "f = v ^ 8'h5a;\n"
				  "endfunction\n"
				  "assign y = f(x);\n"
				  "endmodule\n",
				  "m");
	Cdfg g = build_cdfg(ast);
	const CdfgNode *call = find_kind(g, CdfgKind::CALL);
	REQUIRE(call != nullptr);
	CHECK(call->line == 6);
	CHECK(call->signals == std::set<std::string>{"x", "y"});
	// the function body line contributes a node of its own
	auto map = node_line_map(g);
	bool body_present = false;
	for (const auto &[id, loc] : map) {
		body_present = body_present || loc.second == 4;
	}
	CHECK(body_present);
}

TEST_CASE("if without else keeps a fall-through edge")
{
	DesignAst ast = parse_one("module m(input c, input a, output reg x);\n"
				  "always @(*) begin\n"
				  "  x = 1'b0;\n"
				  "  if (c) x = a;\n"
				  "end\n"
				  "endmodule\n",
				  "m");
	Cdfg g = build_cdfg(ast);
	const CdfgNode *ifn = find_kind(g, CdfgKind::IF);
	const CdfgNode *exit = find_kind(g, CdfgKind::EXIT);
	REQUIRE(ifn != nullptr);
	CHECK(has_edge(g, ifn->id, exit->id)); // not-taken path
}
