#pragma once

#include <map>
#include <string>
#include <vector>

namespace psc {

/// Half-open span is not used; lines are 1-based and inclusive on both ends,
/// matching how RTL tools report locations.
struct SourceSpan {
	std::string file;
	int first_line = 0;
	int last_line = 0;

	bool operator==(const SourceSpan &) const = default;
};

/// Line-indexed text of every parsed file. Line endings are normalized to LF
/// before any span is computed.
class SourceMap {
      public:
	void add_file(const std::string &name, const std::string &text);

	bool has_file(const std::string &name) const { return files_.count(name) != 0; }
	const std::vector<std::string> &lines(const std::string &file) const;

	/// Text of the given line (1-based). Out-of-range lines return "".
	std::string line(const std::string &file, int line_no) const;

	/// All lines covered by the span, joined with '\n'.
	std::string slice(const SourceSpan &span) const;

	const std::map<std::string, std::vector<std::string>> &files() const { return files_; }

      private:
	std::map<std::string, std::vector<std::string>> files_;
};

/// CRLF/CR to LF normalization.
std::string normalize_line_endings(const std::string &text);

} // namespace psc
