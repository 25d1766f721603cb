#include "psc/vcd.hpp"

#include <algorithm>
#include <cctype>

#include "psc/errors.hpp"
#include "psc/source.hpp"

namespace psc {

namespace {

struct VcdToken {
	std::string text;
	int line = 1;
};

/// Whitespace-separated token stream with line tracking.
class VcdLexer {
      public:
	explicit VcdLexer(const std::string &text) : text_(normalize_line_endings(text)) {}

	bool next(VcdToken &tok)
	{
		while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
			if (text_[pos_] == '\n') {
				++line_;
			}
			++pos_;
		}
		if (pos_ >= text_.size()) {
			return false;
		}
		tok.text.clear();
		tok.line = line_;
		while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
			tok.text.push_back(text_[pos_++]);
		}
		return true;
	}

	int line() const { return line_; }

      private:
	std::string text_;
	size_t pos_ = 0;
	int line_ = 1;
};

std::string base94_id(size_t n)
{
	std::string id;
	do {
		id.push_back(char('!' + n % 94));
		n /= 94;
	} while (n > 0);
	return id;
}

} // namespace

TraceSet parse_vcd(const std::string &text)
{
	VcdLexer lex(text);
	TraceSet ts;

	struct Var {
		std::string name;
		int width = 1;
	};
	std::map<std::string, Var> vars; // id code → var
	std::vector<std::string> scope;
	bool definitions_done = false;
	bool time_seen = false;
	uint64_t now = 0;

	auto skip_to_end = [&lex](int from_line, const char *section) {
		VcdToken t;
		while (lex.next(t)) {
			if (t.text == "$end") {
				return;
			}
		}
		throw VcdSyntaxError(from_line, std::string("unterminated ") + section);
	};

	auto record = [&](const std::string &id, const std::string &bits, int line) {
		auto it = vars.find(id);
		if (it == vars.end()) {
			throw VcdSyntaxError(line, "value change for undeclared id code '" + id + "'");
		}
		if (!definitions_done) {
			throw ValueBeforeDumpvars(line);
		}
		SignalTrace &trace = ts.traces.at(it->second.name);
		bool had_xz = false;
		BitVec v = BitVec::from_binary(bits, trace.width, &had_xz);
		trace.xz_normalized = trace.xz_normalized || had_xz;
		if (!trace.times.empty() && trace.times.back() == now) {
			trace.states.back() = v; // same-timestamp change replaces
		} else {
			trace.states.push_back(v);
			trace.times.push_back(now);
		}
	};

	VcdToken tok;
	while (lex.next(tok)) {
		const std::string &t = tok.text;
		if (t == "$date" || t == "$version" || t == "$comment") {
			skip_to_end(tok.line, t.c_str());
		} else if (t == "$timescale") {
			std::string value;
			VcdToken part;
			while (lex.next(part) && part.text != "$end") {
				value += (value.empty() ? "" : " ") + part.text;
			}
			ts.timescale = value;
		} else if (t == "$scope") {
			VcdToken kind, name, end;
			if (!lex.next(kind) || !lex.next(name) || !lex.next(end) || end.text != "$end") {
				throw VcdSyntaxError(tok.line, "malformed $scope");
			}
			scope.push_back(name.text);
		} else if (t == "$upscope") {
			VcdToken end;
			if (!lex.next(end) || end.text != "$end") {
				throw VcdSyntaxError(tok.line, "malformed $upscope");
			}
			if (scope.empty()) {
				throw VcdSyntaxError(tok.line, "$upscope without open scope");
			}
			scope.pop_back();
		} else if (t == "$var") {
			VcdToken type, width, id, name, part;
			if (!lex.next(type) || !lex.next(width) || !lex.next(id) || !lex.next(name)) {
				throw VcdSyntaxError(tok.line, "malformed $var");
			}
			if (type.text != "wire" && type.text != "reg") {
				throw VcdSyntaxError(tok.line, "unsupported var type '" + type.text + "'");
			}
			int w = 0;
			try {
				w = std::stoi(width.text);
			} catch (...) {
				throw VcdSyntaxError(tok.line, "bad var width '" + width.text + "'");
			}
			if (w < 1) {
				throw VcdSyntaxError(tok.line, "bad var width '" + width.text + "'");
			}
			// optional [msb:lsb] tail, then $end
			while (lex.next(part) && part.text != "$end") {
				if (part.text[0] != '[') {
					throw VcdSyntaxError(tok.line, "malformed $var tail '" + part.text + "'");
				}
			}
			if (vars.count(id.text)) {
				throw DuplicateIdCode(tok.line, id.text);
			}
			std::string qualified;
			for (const auto &s : scope) {
				qualified += s + ".";
			}
			qualified += name.text;
			if (ts.traces.count(qualified)) {
				throw VcdSyntaxError(tok.line, "duplicate signal name '" + qualified + "'");
			}
			vars[id.text] = {qualified, w};
			SignalTrace trace;
			trace.signal = qualified;
			trace.width = w;
			ts.traces.emplace(qualified, std::move(trace));
		} else if (t == "$enddefinitions") {
			VcdToken end;
			if (!lex.next(end) || end.text != "$end") {
				throw VcdSyntaxError(tok.line, "malformed $enddefinitions");
			}
			definitions_done = true;
		} else if (t == "$dumpvars" || t == "$dumpall" || t == "$dumpon" || t == "$dumpoff" || t == "$end") {
			// section markers around value changes; contents handled below
		} else if (t[0] == '#') {
			uint64_t stamp = 0;
			try {
				stamp = std::stoull(t.substr(1));
			} catch (...) {
				throw VcdSyntaxError(tok.line, "bad timestamp '" + t + "'");
			}
			if (time_seen && stamp <= now) {
				throw VcdSyntaxError(tok.line, "timestamps must strictly increase");
			}
			now = stamp;
			time_seen = true;
		} else if (t[0] == '0' || t[0] == '1' || t[0] == 'x' || t[0] == 'X' || t[0] == 'z' || t[0] == 'Z') {
			if (t.size() < 2) {
				throw VcdSyntaxError(tok.line, "scalar change without id code");
			}
			record(t.substr(1), t.substr(0, 1), tok.line);
		} else if (t[0] == 'b' || t[0] == 'B') {
			VcdToken id;
			if (!lex.next(id)) {
				throw VcdSyntaxError(tok.line, "vector change without id code");
			}
			record(id.text, t.substr(1), tok.line);
		} else if (t[0] == 'r' || t[0] == 'R') {
			throw VcdSyntaxError(tok.line, "real-valued signals are not supported");
		} else if (t[0] == '$') {
			throw VcdSyntaxError(tok.line, "unsupported section '" + t + "'");
		} else {
			throw VcdSyntaxError(tok.line, "unexpected token '" + t + "'");
		}
	}
	return ts;
}

std::string emit_vcd(const TraceSet &ts)
{
	std::string out;
	out += "$timescale " + ts.timescale + " $end\n";

	// id codes assigned in name order; scopes reconstructed from the
	// qualified names
	std::map<std::string, std::string> ids;
	size_t n = 0;
	for (const auto &[name, trace] : ts.traces) {
		(void)trace;
		ids[name] = base94_id(n++);
	}

	std::vector<std::string> open;
	auto emit_scoped_var = [&](const std::string &name, const SignalTrace &trace) {
		std::vector<std::string> parts;
		size_t start = 0;
		for (size_t dot = name.find('.'); dot != std::string::npos; dot = name.find('.', start)) {
			parts.push_back(name.substr(start, dot - start));
			start = dot + 1;
		}
		std::string leaf = name.substr(start);

		size_t common = 0;
		while (common < open.size() && common < parts.size() && open[common] == parts[common]) {
			++common;
		}
		while (open.size() > common) {
			out += "$upscope $end\n";
			open.pop_back();
		}
		for (size_t i = common; i < parts.size(); ++i) {
			out += "$scope module " + parts[i] + " $end\n";
			open.push_back(parts[i]);
		}
		out += "$var wire " + std::to_string(trace.width) + " " + ids.at(name) + " " + leaf + " $end\n";
	};
	for (const auto &[name, trace] : ts.traces) {
		emit_scoped_var(name, trace);
	}
	while (!open.empty()) {
		out += "$upscope $end\n";
		open.pop_back();
	}
	out += "$enddefinitions $end\n";

	// merge change points across signals into one timeline
	std::map<uint64_t, std::vector<std::pair<std::string, const BitVec *>>> timeline;
	for (const auto &[name, trace] : ts.traces) {
		for (size_t i = 0; i < trace.states.size(); ++i) {
			timeline[trace.times[i]].push_back({name, &trace.states[i]});
		}
	}
	for (const auto &[time, changes] : timeline) {
		out += "#" + std::to_string(time) + "\n";
		for (const auto &[name, value] : changes) {
			const SignalTrace &trace = ts.traces.at(name);
			if (trace.width == 1) {
				out += (value->bit(0) ? "1" : "0") + ids.at(name) + "\n";
			} else {
				out += "b" + value->to_binary() + " " + ids.at(name) + "\n";
			}
		}
	}
	return out;
}

int step_hamming(const BitVec &prev, const BitVec &next)
{
	return (prev ^ next).popcount();
}

uint64_t total_hamming(const SignalTrace &trace)
{
	uint64_t total = 0;
	for (size_t i = 1; i < trace.states.size(); ++i) {
		total += uint64_t(step_hamming(trace.states[i - 1], trace.states[i]));
	}
	return total;
}

uint64_t max_step_hamming(const SignalTrace &trace)
{
	uint64_t best = 0;
	for (size_t i = 1; i < trace.states.size(); ++i) {
		best = std::max(best, uint64_t(step_hamming(trace.states[i - 1], trace.states[i])));
	}
	return best;
}

uint64_t node_hamming(const CdfgNode &node, const TraceSet &traces, std::vector<std::string> *warnings,
		      HammingAggregation agg)
{
	uint64_t best = 0;
	for (const auto &signal : node.signals) {
		bool found = false;
		uint64_t signal_best = 0;
		for (const auto &[name, trace] : traces.traces) {
			bool match = name == signal ||
				     (name.size() > signal.size() &&
				      name.compare(name.size() - signal.size(), signal.size(), signal) == 0 &&
				      name[name.size() - signal.size() - 1] == '.');
			if (match) {
				found = true;
				uint64_t v = agg == HammingAggregation::Sum ? total_hamming(trace)
									    : max_step_hamming(trace);
				signal_best = std::max(signal_best, v);
			}
		}
		if (!found && warnings) {
			warnings->push_back("no trace for signal '" + signal + "' of node " + node.label);
		}
		best = std::max(best, signal_best);
	}
	return best;
}

} // namespace psc
