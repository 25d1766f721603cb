#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psc/explainer.hpp"
#include "psc/features.hpp"
#include "psc/fortifier.hpp"
#include "psc/gnn.hpp"
#include "psc/localizer.hpp"
#include "psc/sim.hpp"

namespace psc {

/// How design activity is produced when no VCD dump is given: the design is
/// simulated with a toggling clock and, optionally, seeded random values on
/// every other top-level input at every step. Explicit drives are applied
/// after the random values, so they win at their time step.
struct StimulusConfig {
	std::string clock = "clk";
	uint64_t cycles = 64;
	bool random_inputs = true;
	std::vector<Stimulus> drive;
};

/// Everything one run needs, loaded from a single JSON config file.
/// Command-line flags override individual fields after loading. Relative
/// `sources`, `vcd` and `model_path` entries are resolved against the config
/// file's directory; `out_dir` stays relative to the working directory.
struct PipelineConfig {
	std::vector<std::string> sources; ///< Verilog file paths, in parse order
	std::string top;
	std::string out_dir = "out";
	uint64_t seed = 0;

	std::vector<std::string> sensitive_signals;
	std::string vcd; ///< when nonempty, replay this dump instead of simulating
	StimulusConfig stimulus;

	std::map<std::string, bool> labels; ///< module name → leaky, for training
	int hidden = 16;                    ///< GCN hidden width
	TrainConfig train;
	ExplainConfig explain;
	LocalizeConfig localize;
	FortifyConfig fortify;
	uint64_t equivalence_vectors = 256;

	bool mux_includes_case = true;
	HammingAggregation hamming_aggregation = HammingAggregation::Sum;

	/// "7" trains on the full feature set; "top3" trains a full model,
	/// ranks features by explanation importance, and retrains on the top
	/// three columns. The saved model records its own column contract, so
	/// later stages follow whichever model they load.
	std::string feature_set = "7";

	std::string model_path; ///< defaults to <out_dir>/model.bin
};

/// Parses config JSON. `origin` names the source file for error messages and
/// anchors relative paths; unknown keys are rejected. Throws ConfigError.
PipelineConfig parse_config(const std::string &json_text, const std::string &origin = "");

/// Reads and parses a config file.
PipelineConfig load_config(const std::string &path);

/// Outcome of one subcommand. Hard failures throw; a run that finishes with
/// analysis warnings still writes its artifacts and reports exit code 2.
struct StageResult {
	int exit_code = 0;
	std::vector<std::string> warnings;
	std::vector<std::string> artifacts; ///< paths written, in write order
};

/// Stage names in pipeline order: parse, cdfg, features, train, predict,
/// explain, localize, fortify.
const std::vector<std::string> &stage_names();

/// Runs one stage, or the whole chain in order when `stage` is "pipeline",
/// writing artifacts under cfg.out_dir:
///   parse     ast.json
///   cdfg      cdfg.txt
///   features  features.csv
///   train     model.bin, loss_history.json
///   predict   predictions.json
///   explain   explanations.json, feature_ranking.csv
///   localize  report.json, report.md
///   fortify   masked sources, fortified.patch, equivalence.json, and the
///             report files again with the masked lines filled in
///   pipeline  all of the above plus metadata.json (the only artifact that
///             may differ between identical runs; it carries the timestamp)
///
/// Every stage is a pure function of (files on disk, config): identical
/// inputs and seed give byte-identical artifacts. All randomness splits off
/// the one config seed, per purpose: "stimulus" (random input drive), "init"
/// (weight init; index 1 for the reduced retrain), "train" (batch shuffling
/// and dropout), "explain" (one stream per node id), "fortify" (mask seeds),
/// and "equivalence" (input vectors).
StageResult run_stage(const PipelineConfig &cfg, const std::string &stage);

} // namespace psc
