#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "psc/errors.hpp"
#include "psc/pipeline.hpp"

int main(int argc, char **argv)
{
	CLI::App app{"Power side-channel leakage analysis for Verilog RTL"};
	app.require_subcommand(1);

	std::string config_path;
	std::string top;
	std::string out_dir;
	std::string features = "7";
	uint64_t seed = 0;
	bool paper_fidelity = false;

	app.add_option("--config", config_path, "JSON config file")->required();
	app.add_option("--top", top, "override the top module name");
	app.add_option("--seed", seed, "override the run seed");
	app.add_option("--out", out_dir, "override the output directory");
	app.add_flag("--paper-fidelity", paper_fidelity,
		     "mask multiplications as published ($random masks, no soundness guarantee)");
	app.add_option("--features", features, "feature set to train on")
	    ->check(CLI::IsMember({"7", "top3"}));

	const char *descriptions[][2] = {
	    {"parse", "dump the elaborated design as JSON"},
	    {"cdfg", "export the control-data flow graph"},
	    {"features", "write the per-node feature matrix as CSV"},
	    {"train", "train the leakage classifier"},
	    {"predict", "score every graph node with a trained model"},
	    {"explain", "rank features by importance for the predicted-leaky nodes"},
	    {"localize", "report vulnerable lines"},
	    {"fortify", "rewrite vulnerable lines with fresh masks"},
	    {"pipeline", "run every stage in order"},
	};
	for (const auto &d : descriptions) {
		app.add_subcommand(d[0], d[1])->fallthrough();
	}

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		int code = app.exit(e);
		return code == 0 ? 0 : 1;
	}

	try {
		psc::PipelineConfig cfg = psc::load_config(config_path);
		if (app.count("--top") > 0) {
			cfg.top = top;
		}
		if (app.count("--seed") > 0) {
			cfg.seed = seed;
		}
		if (app.count("--out") > 0) {
			cfg.out_dir = out_dir;
		}
		if (app.count("--features") > 0) {
			cfg.feature_set = features;
		}
		if (paper_fidelity) {
			cfg.fortify.paper_fidelity = true;
			cfg.fortify.mask_source = psc::MaskSource::DollarRandom;
		}

		std::string stage = app.get_subcommands().at(0)->get_name();
		psc::StageResult result = psc::run_stage(cfg, stage);
		for (const std::string &w : result.warnings) {
			std::fprintf(stderr, "warning: %s\n", w.c_str());
		}
		for (const std::string &a : result.artifacts) {
			std::printf("wrote %s\n", a.c_str());
		}
		return result.exit_code;
	} catch (const psc::Error &e) {
		std::fprintf(stderr, "error: %s\n", e.what());
		return 1;
	} catch (const std::exception &e) {
		std::fprintf(stderr, "error: %s\n", e.what());
		return 1;
	}
}
