#include "psc/bitvec.hpp"

namespace psc {

BitVec BitVec::from_binary(const std::string &bits, int width, bool *had_xz)
{
	BitVec out(width);
	bool saw_xz = false;
	// The string may be shorter than width (zero-extend) or longer
	// (drop high bits), mirroring value-change records in waveform dumps.
	int n = int(bits.size());
	for (int i = 0; i < n && i < width; ++i) {
		char c = bits[n - 1 - i]; // string is MSB first
		if (c == '1') {
			out.set_bit(i, true);
		} else if (c == '0') {
			// already 0
		} else if (c == 'x' || c == 'X' || c == 'z' || c == 'Z') {
			saw_xz = true;
		} else {
			throw WidthMismatch(std::string("bad binary digit '") + c + "'");
		}
	}
	if (had_xz) {
		*had_xz = saw_xz;
	}
	return out;
}

std::string BitVec::to_binary() const
{
	std::string s(width_, '0');
	for (int i = 0; i < width_; ++i) {
		if (bit(i)) {
			s[width_ - 1 - i] = '1';
		}
	}
	return s;
}

} // namespace psc
