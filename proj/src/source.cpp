#include "psc/source.hpp"

#include <sstream>

namespace psc {

std::string normalize_line_endings(const std::string &text)
{
	std::string out;
	out.reserve(text.size());
	for (size_t i = 0; i < text.size(); ++i) {
		if (text[i] == '\r') {
			if (i + 1 < text.size() && text[i + 1] == '\n') {
				continue;
			}
			out.push_back('\n');
		} else {
			out.push_back(text[i]);
		}
	}
	return out;
}

void SourceMap::add_file(const std::string &name, const std::string &text)
{
	std::vector<std::string> lines;
	std::string cur;
	for (char c : normalize_line_endings(text)) {
		if (c == '\n') {
			lines.push_back(cur);
			cur.clear();
		} else {
			cur.push_back(c);
		}
	}
	if (!cur.empty()) {
		lines.push_back(cur);
	}
	files_[name] = std::move(lines);
}

const std::vector<std::string> &SourceMap::lines(const std::string &file) const
{
	static const std::vector<std::string> empty;
	auto it = files_.find(file);
	return it == files_.end() ? empty : it->second;
}

std::string SourceMap::line(const std::string &file, int line_no) const
{
	const auto &ls = lines(file);
	if (line_no < 1 || line_no > int(ls.size())) {
		return "";
	}
	return ls[line_no - 1];
}

std::string SourceMap::slice(const SourceSpan &span) const
{
	const auto &ls = lines(span.file);
	std::ostringstream out;
	for (int i = span.first_line; i <= span.last_line && i <= int(ls.size()); ++i) {
		if (i > span.first_line) {
			out << '\n';
		}
		out << ls[i - 1];
	}
	return out.str();
}

} // namespace psc
