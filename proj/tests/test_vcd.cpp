#include <doctest.h>

#include "psc/errors.hpp"
#include "psc/rng.hpp"
#include "psc/vcd.hpp"

using namespace psc;

namespace {

const char *kTinyVcd = "$timescale 1 ns $end\n"
		       "$scope module top $end\n"
		       "$var wire 1 ! y $end\n"
		       "$upscope $end\n"
		       "$enddefinitions $end\n"
		       "#0\n0!\n#5\n1!\n#9\n0!\n";

const char *kVectorVcd = "$timescale 1 ns $end\n"
			 "$scope module top $end\n"
			 "$var wire 4 ! v [3:0] $end\n"
			 "$upscope $end\n"
			 "$enddefinitions $end\n"
			 "#0\nb1010 !\n#3\nb0110 !\n";

} // namespace

TEST_CASE("scalar toggle parses to three states")
{
	TraceSet ts = parse_vcd(kTinyVcd);
	REQUIRE(ts.traces.count("top.y"));
	const SignalTrace &tr = ts.traces.at("top.y");
	REQUIRE(tr.states.size() == 3);
	CHECK(tr.states[0].to_u64() == 0);
	CHECK(tr.states[1].to_u64() == 1);
	CHECK(tr.states[2].to_u64() == 0);
	CHECK(tr.times == std::vector<uint64_t>{0, 5, 9});
	CHECK(ts.timescale == "1 ns");
}

TEST_CASE("vector changes parse in order")
{
	TraceSet ts = parse_vcd(kVectorVcd);
	const SignalTrace &tr = ts.traces.at("top.v");
	REQUIRE(tr.states.size() == 2);
	CHECK(tr.states[0].to_u64() == 0b1010);
	CHECK(tr.states[1].to_u64() == 0b0110);
	CHECK(tr.width == 4);
}

TEST_CASE("undeclared id code is an error")
{
	CHECK_THROWS_AS(parse_vcd("$enddefinitions $end\n#0\n1%\n"), VcdSyntaxError);
}

TEST_CASE("duplicate id code is an error")
{
	const char *vcd = "$var wire 1 ! a $end\n$var wire 1 ! b $end\n$enddefinitions $end\n";
	CHECK_THROWS_AS(parse_vcd(vcd), DuplicateIdCode);
}

TEST_CASE("value change before end of definitions is an error")
{
	CHECK_THROWS_AS(parse_vcd("$var wire 1 ! a $end\n1!\n$enddefinitions $end\n"), ValueBeforeDumpvars);
}

TEST_CASE("timestamps must strictly increase")
{
	const char *vcd = "$var wire 1 ! a $end\n$enddefinitions $end\n#5\n1!\n#5\n0!\n";
	CHECK_THROWS_AS(parse_vcd(vcd), VcdSyntaxError);
	const char *back = "$var wire 1 ! a $end\n$enddefinitions $end\n#5\n1!\n#4\n0!\n";
	CHECK_THROWS_AS(parse_vcd(back), VcdSyntaxError);
}

TEST_CASE("same-timestamp changes keep the last value")
{
	const char *vcd = "$var wire 4 ! v $end\n$enddefinitions $end\n#0\nb0001 !\nb0011 !\n";
	TraceSet ts = parse_vcd(vcd);
	const SignalTrace &tr = ts.traces.at("v");
	REQUIRE(tr.states.size() == 1);
	CHECK(tr.states[0].to_u64() == 0b0011);
}

TEST_CASE("x and z bits normalize to zero and are flagged")
{
	const char *vcd = "$var wire 4 ! v $end\n$enddefinitions $end\n#0\nbx01z !\n";
	TraceSet ts = parse_vcd(vcd);
	const SignalTrace &tr = ts.traces.at("v");
	CHECK(tr.states[0].to_u64() == 0b0010);
	CHECK(tr.xz_normalized);
	const char *scalar = "$var wire 1 ! s $end\n$enddefinitions $end\n#0\nx!\n";
	TraceSet st = parse_vcd(scalar);
	CHECK(st.traces.at("s").states[0].to_u64() == 0);
}

TEST_CASE("real-valued tokens are rejected")
{
	CHECK_THROWS_AS(parse_vcd("$var wire 1 ! a $end\n$enddefinitions $end\n#0\nr3.14 !\n"), VcdSyntaxError);
}

TEST_CASE("dumpvars wrapper is tolerated")
{
	const char *vcd = "$var wire 1 ! a $end\n$enddefinitions $end\n$dumpvars\n0!\n$end\n#1\n1!\n";
	TraceSet ts = parse_vcd(vcd);
	const SignalTrace &tr = ts.traces.at("a");
	REQUIRE(tr.states.size() == 2);
	CHECK(tr.times == std::vector<uint64_t>{0, 1});
}

TEST_CASE("step hamming basics")
{
	CHECK(step_hamming(BitVec(4, 0b1010), BitVec(4, 0b0110)) == 2);
	BitVec a(8, 0x5a);
	CHECK(step_hamming(a, a) == 0);
	CHECK_THROWS_AS(step_hamming(BitVec(4, 1), BitVec(5, 1)), WidthMismatch);
}

TEST_CASE("step hamming equals the per-bit oracle on random 64-bit pairs")
{
	Rng rng(derive_seed(7, "hamming-test"));
	for (int trial = 0; trial < 200; ++trial) {
		uint64_t x = rng.next_u64();
		uint64_t y = rng.next_u64();
		BitVec a(64, x);
		BitVec b(64, y);
		int oracle = 0;
		for (int i = 0; i < 64; ++i) {
			oracle += int(((x >> i) & 1) != ((y >> i) & 1));
		}
		CHECK(step_hamming(a, b) == oracle);
		CHECK(step_hamming(a, b) == step_hamming(b, a)); // symmetry
	}
}

TEST_CASE("step hamming satisfies the triangle inequality")
{
	Rng rng(derive_seed(11, "hamming-triangle"));
	for (int trial = 0; trial < 100; ++trial) {
		BitVec a(32, rng.next_u64());
		BitVec b(32, rng.next_u64());
		BitVec c(32, rng.next_u64());
		CHECK(step_hamming(a, c) <= step_hamming(a, b) + step_hamming(b, c));
	}
}

TEST_CASE("total hamming sums step costs")
{
	SignalTrace tr;
	tr.width = 4;
	tr.states = {BitVec(4, 0b0000), BitVec(4, 0b1111), BitVec(4, 0b0000)};
	tr.times = {0, 1, 2};
	CHECK(total_hamming(tr) == 8);

	SignalTrace single;
	single.width = 8;
	single.states = {BitVec(8, 0x42)};
	single.times = {0};
	CHECK(total_hamming(single) == 0);
}

TEST_CASE("total hamming equals the per-bit toggle oracle")
{
	Rng rng(derive_seed(13, "toggle-oracle"));
	SignalTrace tr;
	tr.width = 8;
	for (int i = 0; i < 20; ++i) {
		tr.states.push_back(BitVec(8, rng.next_u64()));
		tr.times.push_back(uint64_t(i));
	}
	uint64_t oracle = 0;
	for (int bit = 0; bit < 8; ++bit) {
		for (size_t i = 1; i < tr.states.size(); ++i) {
			oracle += uint64_t(tr.states[i - 1].bit(bit) != tr.states[i].bit(bit));
		}
	}
	CHECK(total_hamming(tr) == oracle);
}

TEST_CASE("total hamming ignores inserted repeat states")
{
	SignalTrace tr;
	tr.width = 4;
	tr.states = {BitVec(4, 3), BitVec(4, 12)};
	tr.times = {0, 1};
	SignalTrace padded;
	padded.width = 4;
	padded.states = {BitVec(4, 3), BitVec(4, 3), BitVec(4, 12), BitVec(4, 12)};
	padded.times = {0, 1, 2, 3};
	CHECK(total_hamming(tr) == total_hamming(padded));
}

TEST_CASE("node hamming is the max over node signals")
{
	TraceSet ts;
	SignalTrace a;
	a.signal = "top.a";
	a.width = 4;
	a.states = {BitVec(4, 0), BitVec(4, 0b0111)};
	a.times = {0, 1};
	ts.traces["top.a"] = a;
	SignalTrace b;
	b.signal = "top.b";
	b.width = 4;
	b.states = {BitVec(4, 0), BitVec(4, 0b1111), BitVec(4, 0b0000), BitVec(4, 0b0001)};
	b.times = {0, 1, 2, 3};
	ts.traces["top.b"] = b;

	CdfgNode node;
	node.label = "m.3:AS";
	node.signals = {"a", "b"};
	CHECK(node_hamming(node, ts) == 9); // max(3, 4+4+1)

	CdfgNode only_a;
	only_a.signals = {"a"};
	CHECK(node_hamming(only_a, ts) == 3);

	CdfgNode missing;
	missing.label = "m.9:AS";
	missing.signals = {"ghost"};
	std::vector<std::string> warnings;
	CHECK(node_hamming(missing, ts, &warnings) == 0);
	REQUIRE(warnings.size() == 1);
	CHECK(warnings[0].find("ghost") != std::string::npos);
}

TEST_CASE("emit and reparse round-trips")
{
	TraceSet ts = parse_vcd(kVectorVcd);
	TraceSet again = parse_vcd(emit_vcd(ts));
	CHECK(again.traces.at("top.v").states == ts.traces.at("top.v").states);
	CHECK(again.traces.at("top.v").times == ts.traces.at("top.v").times);
}
