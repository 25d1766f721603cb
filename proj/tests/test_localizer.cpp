#include <doctest.h>

#include <json.hpp>

#include "psc/errors.hpp"
#include "psc/localizer.hpp"
#include "psc/parser.hpp"

using namespace psc;

namespace {

DesignAst parse_one(const std::string &text, const std::string &top)
{
	return parse_design({{"test.v", text}}, top);
}

const FunctionalStatement &fs_of_kind(const RtlModule &mod, FsKind kind)
{
	for (const FunctionalStatement &fs : mod.statements) {
		if (fs.kind == kind) {
			return fs;
		}
	}
	REQUIRE(false);
	return mod.statements.front();
}

LeakageScore score_fs(const DesignAst &ast, FsKind kind)
{
	const RtlModule &mod = ast.modules.front();
	return leakage_score(mod, fs_of_kind(mod, kind), build_vardep(ast));
}

/// Bare frequency-counting graph: (module, line, kind) triples.
Cdfg bare_graph(const std::vector<std::tuple<std::string, int, CdfgKind>> &nodes)
{
	Cdfg g;
	for (const auto &[module, line, kind] : nodes) {
		CdfgNode n;
		n.id = int(g.nodes.size());
		n.module = module;
		n.line = line;
		n.kind = kind;
		g.nodes.push_back(std::move(n));
	}
	return g;
}

Prediction all_ones(size_t n)
{
	Prediction p;
	p.probability.assign(n, 1.0);
	p.label.assign(n, 1);
	return p;
}

} // namespace

TEST_CASE("the combined conditional/bit/call/depth block scores six")
{
	DesignAst ast = parse_one("module scorefix(input clk, input [7:0] private_data, input [7:0] flag,\n"
				  "                input [7:0] data_val, input [7:0] secret, input [7:0] a,\n"
				  "                input [7:0] b, input [7:0] c);\n"
				  "  reg [7:0] bit_transform;\n"
				  "  reg [7:0] result;\n"
				  "  reg [7:0] sum;\n"
				  "  reg [7:0] product;\n"
				  "  function [7:0] Decrypt;\n"
				  "    input [7:0] d;\n"
				  "    input [7:0] k;\n"
				  "    Decrypt = d ^ k;\n"
				  "  endfunction\n"
				  "  always @(posedge clk) begin\n"
				  "    if (private_data == flag) begin\n"
				  "      bit_transform = (data_val >> 3) | (data_val << 5);\n"
				  "      result = Decrypt(bit_transform, secret);\n"
				  "      sum = a + b;\n"
				  "      product = sum * c;\n"
				  "    end\n"
				  "  end\n"
				  "endmodule\n",
				  "scorefix");
	LeakageScore s = score_fs(ast, FsKind::AlwaysBlock);
	CHECK(s.conditional_dependency == 1);
	CHECK(s.bit_manipulation == 3);
	CHECK(s.function_calls == 1);
	CHECK(s.dependency_depth == 1);
	CHECK(s.total == 6);
}

TEST_CASE("pure arithmetic scores zero and a one-step chain scores depth one")
{
	DesignAst ast = parse_one("module depthfix(input [7:0] x, input [7:0] y, output [7:0] w);\n"
				  "  wire [7:0] z;\n"
				  "  assign z = x + y;\n"
				  "  assign w = z * 2;\n"
				  "endmodule\n",
				  "depthfix");
	const RtlModule &mod = ast.modules.front();
	VarDepGraph dep = build_vardep(ast);

	LeakageScore first = leakage_score(mod, mod.statements[0], dep);
	CHECK(first == LeakageScore{0, 0, 0, 0, 0});

	LeakageScore second = leakage_score(mod, mod.statements[1], dep);
	CHECK(second.dependency_depth == 1);
	CHECK(second.total == 1);
}

TEST_CASE("each metric scores its own construct")
{
	SUBCASE("condition check")
	{
		DesignAst ast = parse_one("module m(input clk, input [7:0] secret_key, input [7:0] inp);\n"
					  "  reg [7:0] outp;\n"
					  "  always @(posedge clk) begin\n"
					  "    if (secret_key == inp) outp <= 1; else outp <= 0;\n"
					  "  end\n"
					  "endmodule\n",
					  "m");
		LeakageScore s = score_fs(ast, FsKind::AlwaysBlock);
		CHECK(s.conditional_dependency == 1);
		CHECK(s.bit_manipulation == 0);
		CHECK(s.total == 1);
	}
	SUBCASE("two shifts and an xor count three")
	{
		DesignAst ast = parse_one("module m(input [7:0] old_val, output [7:0] new_val);\n"
					  "  assign new_val = (old_val << 4) ^ (old_val >> 2);\n"
					  "endmodule\n",
					  "m");
		LeakageScore s = score_fs(ast, FsKind::ContinuousAssign);
		CHECK(s.bit_manipulation == 3);
		CHECK(s.total == 3);
	}
	SUBCASE("bitwise not counts, comparisons do not")
	{
		DesignAst ast = parse_one("module m(input [7:0] a, input [7:0] b, output [7:0] y);\n"
					  "  assign y = (~a) + (b > 2);\n"
					  "endmodule\n",
					  "m");
		CHECK(score_fs(ast, FsKind::ContinuousAssign).bit_manipulation == 1);
	}
	SUBCASE("call site counts one")
	{
		DesignAst ast = parse_one("module m(input [7:0] inp, input [7:0] key, output [7:0] outp);\n"
					  "  function [7:0] Encrypt;\n"
					  "    input [7:0] v;\n"
					  "    input [7:0] k;\n"
					  "    Encrypt = v + k;\n"
					  "  endfunction\n"
					  "  assign outp = Encrypt(inp, key);\n"
					  "endmodule\n",
					  "m");
		LeakageScore s = score_fs(ast, FsKind::FunctionCallAssign);
		CHECK(s.function_calls == 1);
		CHECK(s.bit_manipulation == 0);
		CHECK(s.total == 1);
	}
	SUBCASE("ternary counts as a condition")
	{
		DesignAst ast = parse_one("module m(input s, input [7:0] a, input [7:0] b, output [7:0] y);\n"
					  "  assign y = s ? a : b;\n"
					  "endmodule\n",
					  "m");
		CHECK(score_fs(ast, FsKind::ContinuousAssign).conditional_dependency == 1);
	}
}

TEST_CASE("independent statements concatenated into a block sum component-wise")
{
	const char *stmt_a = "    xr = a ^ b;\n";
	const char *stmt_b = "    if (c) yr = d | e;\n";
	std::string decls = "module m(input clk, input [7:0] a, input [7:0] b, input c,\n"
			    "         input [7:0] d, input [7:0] e);\n"
			    "  reg [7:0] xr;\n"
			    "  reg [7:0] yr;\n";

	auto always_score = [&](const std::string &body) {
		DesignAst ast =
			parse_one(decls + "  always @(posedge clk) begin\n" + body + "  end\nendmodule\n", "m");
		return score_fs(ast, FsKind::AlwaysBlock);
	};

	LeakageScore sa = always_score(stmt_a);
	LeakageScore sb = always_score(stmt_b);
	LeakageScore both = always_score(std::string(stmt_a) + stmt_b);
	CHECK(both.conditional_dependency == sa.conditional_dependency + sb.conditional_dependency);
	CHECK(both.bit_manipulation == sa.bit_manipulation + sb.bit_manipulation);
	CHECK(both.function_calls == sa.function_calls + sb.function_calls);
}

TEST_CASE("register feedback does not blow up the dependency depth")
{
	DesignAst ast = parse_one("module m(input clk, input [7:0] d);\n"
				  "  reg [7:0] q;\n"
				  "  always @(posedge clk) q <= q + d;\n"
				  "endmodule\n",
				  "m");
	CHECK(score_fs(ast, FsKind::AlwaysBlock).dependency_depth == 0);
}

TEST_CASE("a two-step chain scores depth two")
{
	DesignAst ast = parse_one("module m(input [7:0] x, output [7:0] w);\n"
				  "  wire [7:0] u;\n"
				  "  wire [7:0] v;\n"
				  "  assign u = x + 1;\n"
				  "  assign v = u + 1;\n"
				  "  assign w = v + 1;\n"
				  "endmodule\n",
				  "m");
	const RtlModule &mod = ast.modules.front();
	VarDepGraph dep = build_vardep(ast);
	CHECK(leakage_score(mod, mod.statements[2], dep).dependency_depth == 2);
}

TEST_CASE("taint mode only counts conditions fed by sensitive data")
{
	DesignAst ast = parse_one("module m(input clk, input [7:0] key, input [7:0] ctr);\n"
				  "  reg [7:0] kd;\n"
				  "  reg [7:0] r1;\n"
				  "  reg [7:0] r2;\n"
				  "  always @(posedge clk) kd <= key ^ 8'h5a;\n"
				  "  always @(posedge clk) begin\n"
				  "    if (kd > 3) r1 <= 1; else r1 <= 0;\n"
				  "  end\n"
				  "  always @(posedge clk) begin\n"
				  "    if (ctr > 3) r2 <= 1; else r2 <= 0;\n"
				  "  end\n"
				  "endmodule\n",
				  "m");
	const RtlModule &mod = ast.modules.front();
	VarDepGraph dep = build_vardep(ast);

	LocalizeConfig taint;
	taint.conditional_requires_taint = true;
	std::set<std::string> sensitive = {"key"};

	CHECK(leakage_score(mod, mod.statements[1], dep, sensitive, taint).conditional_dependency == 1);
	CHECK(leakage_score(mod, mod.statements[2], dep, sensitive, taint).conditional_dependency == 0);

	// Default mode counts both.
	CHECK(leakage_score(mod, mod.statements[1], dep).conditional_dependency == 1);
	CHECK(leakage_score(mod, mod.statements[2], dep).conditional_dependency == 1);
}

TEST_CASE("leaky node counts group by module and line")
{
	Cdfg g = bare_graph({{"m", 12, CdfgKind::AS},
			     {"m", 12, CdfgKind::IF},
			     {"m", 12, CdfgKind::AS},
			     {"m", 30, CdfgKind::AS},
			     {"m", 1, CdfgKind::ENTRY},
			     {"m", 1, CdfgKind::EXIT}});
	LineFrequency freq = collect_leaky_lines(all_ones(6), g);
	CHECK(freq.counts.size() == 2);
	CHECK(freq.counts.at({"m", 12}) == 3);
	CHECK(freq.counts.at({"m", 30}) == 1);
	CHECK(freq.warnings.empty());
}

TEST_CASE("entry and exit nodes never contribute to frequency")
{
	Cdfg g = bare_graph({{"m", 1, CdfgKind::ENTRY}, {"m", 1, CdfgKind::EXIT}});
	LineFrequency freq = collect_leaky_lines(all_ones(2), g);
	CHECK(freq.counts.empty());
	REQUIRE(freq.warnings.size() == 1);
	CHECK(freq.warnings[0] == "no leakage predicted");
}

TEST_CASE("same line number in different modules stays distinct")
{
	Cdfg g = bare_graph({{"alpha", 7, CdfgKind::AS}, {"beta", 7, CdfgKind::AS}});
	LineFrequency freq = collect_leaky_lines(all_ones(2), g);
	CHECK(freq.counts.size() == 2);
	CHECK(freq.counts.at({"alpha", 7}) == 1);
	CHECK(freq.counts.at({"beta", 7}) == 1);
}

TEST_CASE("prediction and graph sizes must agree")
{
	Cdfg g = bare_graph({{"m", 1, CdfgKind::AS}});
	CHECK_THROWS_AS(collect_leaky_lines(all_ones(3), g), ShapeMismatch);
}

TEST_CASE("frequency counts conserve the number of leaky blocks")
{
	DesignAst ast = parse_one("module m(input clk, input [7:0] a, input [7:0] b);\n"
				  "  reg [7:0] x;\n"
				  "  reg [7:0] y;\n"
				  "  always @(posedge clk) begin\n"
				  "    if (a > b) x <= a ^ b; else x <= a + b;\n"
				  "    y <= x;\n"
				  "  end\n"
				  "endmodule\n",
				  "m");
	Cdfg g = build_cdfg(ast);
	LineFrequency freq = collect_leaky_lines(all_ones(g.nodes.size()), g);

	size_t blocks = 0;
	for (const CdfgNode &n : g.nodes) {
		blocks += size_t(n.kind != CdfgKind::ENTRY && n.kind != CdfgKind::EXIT);
	}
	size_t counted = 0;
	for (const auto &[key, count] : freq.counts) {
		(void)key;
		counted += size_t(count);
	}
	CHECK(counted == blocks);
	CHECK(blocks > 0);
}

TEST_CASE("lines rank by frequency, then leakage, then name")
{
	LineFrequency freq;
	freq.counts[{"m", 12}] = 3;
	freq.counts[{"m", 30}] = 1;
	CHECK(rank_lines(freq, {}) == std::vector<LineKey>{{"m", 12}, {"m", 30}});

	LineFrequency tie;
	tie.counts[{"m", 5}] = 2;
	tie.counts[{"m", 9}] = 2;
	std::map<LineKey, LeakageScore> scores;
	scores[{"m", 5}] = {1, 2, 1, 0, 4};
	scores[{"m", 9}] = {1, 3, 1, 1, 6};
	CHECK(rank_lines(tie, scores) == std::vector<LineKey>{{"m", 9}, {"m", 5}});

	// Equal frequency and score: (module, line) ascending decides.
	std::map<LineKey, LeakageScore> equal;
	equal[{"m", 5}] = {0, 0, 0, 0, 0};
	equal[{"m", 9}] = {0, 0, 0, 0, 0};
	CHECK(rank_lines(tie, equal) == std::vector<LineKey>{{"m", 5}, {"m", 9}});

	CHECK(rank_lines(LineFrequency{}, {}).empty());
}

namespace {

StatementScore stmt_score(const std::string &module, int fs_index, int first, int last, LeakageScore s)
{
	StatementScore out;
	out.module = module;
	out.fs_index = fs_index;
	out.span = {"test.v", first, last};
	out.score = s;
	return out;
}

} // namespace

TEST_CASE("reports corroborate top-ranked lines with above-median scores")
{
	std::vector<StatementScore> scores = {
		stmt_score("m", 1, 10, 12, {1, 3, 1, 1, 6}),
		stmt_score("m", 2, 20, 21, {1, 2, 0, 1, 4}),
		stmt_score("m", 3, 30, 30, {0, 1, 0, 1, 2}),
		stmt_score("m", 4, 40, 40, {0, 0, 0, 0, 0}),
	};
	LineFrequency freq;
	freq.counts[{"m", 11}] = 3; // inside statement 1 (total 6)
	freq.counts[{"m", 40}] = 1; // inside statement 4 (total 0)

	VulnerabilityReport rep = build_report(freq, scores);
	REQUIRE(rep.entries.size() == 2);

	// Median of {0,2,4,6} by nearest rank = 2; cut = ceil(0.25·2) = 1.
	CHECK(rep.entries[0].module == "m");
	CHECK(rep.entries[0].line == 11);
	CHECK(rep.entries[0].fs_index == 1);
	CHECK(rep.entries[0].rank == 1);
	CHECK(rep.entries[0].frequency == 3);
	CHECK(rep.entries[0].score.total == 6);
	CHECK(rep.entries[0].corroborated);

	CHECK(rep.entries[1].line == 40);
	CHECK(rep.entries[1].rank == 2);
	CHECK_FALSE(rep.entries[1].corroborated);

	// Statements 2 and 3 score at or above the median but were never
	// predicted leaky: appendix, highest total first.
	REQUIRE(rep.score_only.size() == 2);
	CHECK(rep.score_only[0].fs_index == 2);
	CHECK(rep.score_only[1].fs_index == 3);
	CHECK_FALSE(rep.score_only[0].corroborated);
}

TEST_CASE("empty inputs produce an empty report with a warning")
{
	VulnerabilityReport rep = build_report(LineFrequency{}, {});
	CHECK(rep.entries.empty());
	CHECK(rep.score_only.empty());
	REQUIRE_FALSE(rep.warnings.empty());
	CHECK(rep.warnings.back() == "empty report: no leaky lines");
}

TEST_CASE("a line with no enclosing statement is reported with a warning")
{
	LineFrequency freq;
	freq.counts[{"m", 99}] = 1;
	VulnerabilityReport rep = build_report(freq, {stmt_score("m", 1, 1, 3, {0, 1, 0, 0, 1})});
	REQUIRE(rep.entries.size() == 1);
	CHECK(rep.entries[0].fs_index == 0);
	REQUIRE_FALSE(rep.warnings.empty());
	CHECK(rep.warnings.back() == "no statement found at m:99");
}

TEST_CASE("report json carries the schema version and every entry field")
{
	std::vector<StatementScore> scores = {stmt_score("m", 1, 10, 12, {1, 3, 1, 1, 6})};
	LineFrequency freq;
	freq.counts[{"m", 11}] = 2;
	VulnerabilityReport rep = build_report(freq, scores);

	auto j = nlohmann::json::parse(report_to_json(rep));
	CHECK(j["schema_version"] == 1);
	CHECK(j["config"]["rank_fraction"] == 0.25);
	REQUIRE(j["entries"].size() == 1);
	CHECK(j["entries"][0]["module"] == "m");
	CHECK(j["entries"][0]["line"] == 11);
	CHECK(j["entries"][0]["frequency"] == 2);
	CHECK(j["entries"][0]["rank"] == 1);
	CHECK(j["entries"][0]["score"]["total"] == 6);
	CHECK(j["entries"][0]["corroborated"] == true);
	CHECK(j["warnings"].empty());
}

TEST_CASE("report markdown lists corroborated lines in the table")
{
	std::vector<StatementScore> scores = {stmt_score("m", 2, 10, 12, {1, 3, 1, 1, 6})};
	LineFrequency freq;
	freq.counts[{"m", 11}] = 2;
	VulnerabilityReport rep = build_report(freq, scores);
	rep.entries[0].masked_text = "assign y = x ^ mask;";

	SourceMap src;
	src.add_file("test.v", "line one\nline two\n");

	std::string md = report_to_markdown(rep, "toybench", &src);
	CHECK(md.find("| Benchmark | Vulnerable Module | Functional Statement No. | Vulnerable Line | "
		      "Masked Implementation |") != std::string::npos);
	CHECK(md.find("| toybench | m | 2 | 11") != std::string::npos);
	CHECK(md.find("assign y = x ^ mask;") != std::string::npos);
}
