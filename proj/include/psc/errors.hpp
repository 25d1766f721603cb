#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace psc {

/// Base class for all analysis errors. Carries an optional source location
/// (file + 1-based line) so the CLI can print actionable diagnostics.
class Error : public std::runtime_error {
      public:
	Error(std::string file, int line, const std::string &message)
	    : std::runtime_error(format(file, line, message)), file_(std::move(file)), line_(line)
	{
	}
	explicit Error(const std::string &message) : std::runtime_error(message), line_(0) {}

	const std::string &file() const { return file_; }
	int line() const { return line_; }

      private:
	static std::string format(const std::string &file, int line, const std::string &message)
	{
		if (file.empty()) {
			return message;
		}
		return file + ":" + std::to_string(line) + ": " + message;
	}

	std::string file_;
	int line_;
};

struct SyntaxError : Error {
	using Error::Error;
};

struct UnsupportedConstruct : Error {
	UnsupportedConstruct(std::string file, int line, const std::string &construct)
	    : Error(std::move(file), line, "unsupported construct: " + construct), construct(construct)
	{
	}
	std::string construct;
};

struct UnresolvedModule : Error {
	explicit UnresolvedModule(const std::string &name) : Error("unresolved module: " + name), name(name) {}
	std::string name;
};

struct UndeclaredSignal : Error {
	UndeclaredSignal(std::string file, int line, const std::string &name)
	    : Error(std::move(file), line, "undeclared signal: " + name), name(name)
	{
	}
	std::string name;
};

struct UnknownModule : Error {
	explicit UnknownModule(const std::string &name) : Error("unknown module: " + name) {}
};

struct CombinationalLoop : Error {
	explicit CombinationalLoop(const std::string &cycle) : Error("combinational loop through: " + cycle) {}
};

struct UnknownSignal : Error {
	explicit UnknownSignal(const std::string &name) : Error("unknown signal: " + name) {}
};

struct VcdSyntaxError : Error {
	VcdSyntaxError(int line, const std::string &message) : Error("<vcd>", line, message) {}
};

struct DuplicateIdCode : Error {
	DuplicateIdCode(int line, const std::string &id) : Error("<vcd>", line, "duplicate id code: " + id) {}
};

struct ValueBeforeDumpvars : Error {
	explicit ValueBeforeDumpvars(int line) : Error("<vcd>", line, "value change before declarations ended") {}
};

struct WidthMismatch : Error {
	using Error::Error;
};

struct ShapeMismatch : Error {
	using Error::Error;
};

struct DimensionMismatch : Error {
	using Error::Error;
};

struct UnsupportedForSimulation : Error {
	explicit UnsupportedForSimulation(const std::string &construct) : Error("unsupported for simulation: " + construct) {}
};

struct SingleClassLabels : Error {
	SingleClassLabels() : Error("training labels contain only one class") {}
};

struct UntrainedModel : Error {
	UntrainedModel() : Error("model has not been trained") {}
};

struct UnknownNode : Error {
	explicit UnknownNode(int id) : Error("unknown graph node: " + std::to_string(id)) {}
};

struct EmptyInput : Error {
	using Error::Error;
};

struct MixedContracts : Error {
	using Error::Error;
};

/// Divergence during training: the loss left the finite range. Carries the
/// loss history collected up to the aborting step.
struct NonFiniteLoss : Error {
	std::vector<double> history;

	explicit NonFiniteLoss(std::vector<double> partial_history)
	    : Error("training loss became non-finite at step " + std::to_string(partial_history.size())),
	      history(std::move(partial_history))
	{
	}
};

struct CorruptModel : Error {
	using Error::Error;
};

struct VersionMismatch : Error {
	using Error::Error;
};

struct ConfigError : Error {
	using Error::Error;
};

struct UnsupportedPattern : Error {
	explicit UnsupportedPattern(const std::string &what) : Error("unsupported masking pattern: " + what) {}
};

struct NameCollision : Error {
	explicit NameCollision(const std::string &name) : Error("name collision: " + name) {}
};

} // namespace psc
