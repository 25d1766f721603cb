#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "psc/localizer.hpp"
#include "psc/rtl_ast.hpp"
#include "psc/sim.hpp"

namespace psc {

/// Prints an expression as subset Verilog with minimal parentheses: a child
/// is parenthesized only when its operator binds looser than its context
/// requires, so left-associative chains of one operator stay flat
/// ("a ^ b ^ c") while explicit right grouping survives ("a ^ (b ^ c)").
/// Sized constants are printed as 1'b<v> (width 1) or <w>'h<HEX>; unsized
/// ones as plain decimals.
std::string emit_expr(const Expr &e);

/// Prints a statement tree, one line per simple statement, indented with
/// tabs starting at `indent` levels. No trailing newline.
std::string emit_stmt(const Stmt &st, int indent = 0);

/// Prints one top-level statement: continuous assigns as "assign l = r;",
/// always blocks with their sensitivity header, bare if/case blocks as-is,
/// and function declarations as function/endfunction items.
std::string emit_functional(const FunctionalStatement &fs, int indent = 0);

/// Prints a whole module with an ANSI header. Declaration order is
/// canonical (ports, nets, functions, statements, instances), so the text
/// is not byte-identical to the source it was parsed from, but it parses
/// back to a structurally equal module.
std::string emit_module(const RtlModule &m);

/// All modules of the design, top first; parse_design(emit_design(ast))
/// yields a structurally equal design.
std::string emit_design(const DesignAst &ast);

/// How a flagged statement is rewritten to carry a random mask.
enum class MaskStyle {
	/// Append "^ mask" to every right-hand side, rename the written
	/// target to a fresh carrier, and drive the original name from
	/// "carrier ^ mask" so downstream readers see the clean value.
	/// Registers written on a clock edge unmask against a one-cycle
	/// delayed copy of the mask, since the generator has already
	/// advanced by the time the carrier holds the masked value.
	XorTermAppend,
	/// Wrap paired operands so the masks cancel within the same
	/// expression: "x ^ z" becomes "(x ^ mask) ^ (z ^ mask)" and a
	/// comparison "l == r" becomes "(l ^ mask) == (r ^ mask)". No
	/// unmask stage is needed. Conditions without a top-level
	/// equality are wrapped whole: "(cond ^ mask) != mask".
	OperandWrap,
	/// Stage "selector ^ mask" into a fresh wire, select on
	/// "staged ^ mask" (which restores the original value), append
	/// "^ mask" to every arm's right-hand side, and unmask the renamed
	/// target at the module boundary.
	CaseSelectorAndArm,
};

const char *to_string(MaskStyle style);

/// One rewrite decision for one flagged statement.
struct MaskPlanEntry {
	std::string module;
	int fs_index = 1; ///< 1-based position among the module's statements
	SourceSpan span;  ///< lines the rewritten text replaces
	MaskStyle style = MaskStyle::OperandWrap;
	std::string mask_name; ///< mask register XORed into this statement
	int mask_width = 16;	///< register width; sizes the selector slice
	int mask_decl_line = 0; ///< line the module's mask block is inserted before
	/// Written targets renamed to fresh masked carriers (empty for pure
	/// operand wraps, which leave every name in place).
	std::vector<std::pair<std::string, std::string>> renames;
	std::string stage_signal; ///< fresh masked-selector wire (case style only)
	bool delayed_unmask = false; ///< clock-edge target; unmask with the previous cycle's mask
	std::string delayed_mask;    ///< previous-cycle mask register (set with delayed_unmask)
};

/// Rewrite decisions for every supported flagged statement, plus one warning
/// per statement that was skipped as unsafe to rewrite.
struct MaskPlan {
	std::vector<MaskPlanEntry> entries;
	std::vector<std::string> warnings;
};

/// Where the per-module mask register gets its values.
enum class MaskSource {
	Lfsr,         ///< seeded maximal-length shift register, advances per clock
	DollarRandom, ///< literal "$random" text; does not re-parse or simulate here
};

struct FortifyConfig {
	std::string mask_name = "psc_mask";
	/// Register width; one of 1, 2, 3, 4, 8, 16. Width 1 is only valid
	/// for modules without a clock (the mask register is static there).
	int mask_width = 16;
	/// Fallback clock input for modules that have no clocked block of
	/// their own; when absent too, the mask register stays constant.
	std::string clock = "clk";
	uint64_t seed = 0;
	/// Also rewrite patterns that are textually faithful to published
	/// masked listings but not value-preserving (multiplication with
	/// both operands masked). Each such rewrite adds a warning.
	bool paper_fidelity = false;
	MaskSource mask_source = MaskSource::Lfsr;
	std::string suffix = "_masked.v"; ///< replaces a trailing ".v" of each file name
};

/// Chooses a rewrite style for every corroborated report line. Statements
/// that cannot be masked soundly (clocked case blocks, mixed blocks,
/// partial-bit targets outside operand wraps, self-reading targets,
/// multiplications without paper_fidelity, statements that already read the
/// mask, ...) are skipped with a warning instead of rewritten unsoundly.
/// Throws NameCollision if a module needing a rewrite already declares
/// cfg.mask_name; fresh derived names are suffixed until unique instead.
MaskPlan plan_masks(const DesignAst &ast, const VulnerabilityReport &report, const FortifyConfig &cfg = {});

/// Renders the rewritten text for one planned statement (no indentation on
/// the first line; inner lines use tabs). Declarations, the mask generator
/// and unmask assigns are emitted by fortify_design, not here. Throws
/// UnsupportedPattern if the statement does not have the planned shape.
std::string mask_statement(const FunctionalStatement &stmt, const MaskPlanEntry &entry);

/// One replaced source line span: the first original line and the full
/// rewritten statement text.
struct LineRewrite {
	std::string file;
	int line = 0; ///< first line of the replaced span
	std::string original;
	std::string masked;
};

struct FortifiedDesign {
	/// Output file name -> full rewritten text, one per input file
	/// (unaffected files pass through byte-identical under the new name).
	std::vector<std::pair<std::string, std::string>> files;
	std::vector<LineRewrite> rewrites;
	std::string unified_diff; ///< all files, standard unified format
	MaskPlan plan;
	std::vector<std::string> warnings;
	/// False only when the mask source is the literal "$random" text,
	/// which is outside the supported grammar.
	bool reparses = true;
};

/// Applies the mask plan textually: flagged statements are replaced by
/// their rewritten form, a seeded mask register (with its clock-driven
/// update when the module has a clock) is inserted before the first flagged
/// statement of each affected module, carrier declarations and unmask
/// assigns are inserted next to their statements, and every line outside
/// those edits is kept byte-identical. The result is re-parsed to guarantee
/// it stays inside the supported grammar (skipped for $random, see
/// FortifiedDesign::reparses).
FortifiedDesign fortify_design(const DesignAst &ast, const VulnerabilityReport &report,
			       const FortifyConfig &cfg = {});

/// First point where the two designs disagree on a top-level output.
struct Divergence {
	uint64_t time = 0;
	std::string signal; ///< output port name
	uint64_t original = 0;
	uint64_t fortified = 0;
};

struct EquivalenceConfig {
	/// Random mode: this many seeded input assignments, each re-drawn at
	/// every time step, with the mask generator free-running.
	int random_vectors = 256;
	uint64_t seed = 0;
	/// Exhaustive mode: enumerate every value of every input the base
	/// stimulus leaves undriven, crossed with every mask value forced
	/// into the mask registers at every step.
	bool exhaustive = false;
	int input_budget_bits = 10; ///< exhaustive cap on input+mask bits
	std::string mask_name = "psc_mask"; ///< register forced in exhaustive mode
	int mask_width = 16;		    ///< values 0 .. 2^width-1 are forced
	std::string clock; ///< input excluded from random/exhaustive driving
};

struct EquivalenceResult {
	bool equivalent = true;
	std::optional<Divergence> divergence; ///< first mismatch when not equivalent
	uint64_t vectors = 0;		      ///< simulated stimulus assignments
	std::vector<std::string> outputs;     ///< compared port names
};

/// Simulates both designs under identical stimulus and compares every
/// top-level output port at every time step. The base stimulus (typically a
/// clock) is shared; remaining inputs are driven randomly or exhaustively
/// per EquivalenceConfig. In exhaustive mode every register named
/// cfg.mask_name (searched through the whole hierarchy) is deposited with
/// the same forced value at every step. Returns the first divergence on
/// failure.
EquivalenceResult check_equivalence(const DesignAst &original, const DesignAst &fortified,
				    const std::vector<Stimulus> &stimulus, uint64_t cycles,
				    const EquivalenceConfig &cfg = {});

} // namespace psc
