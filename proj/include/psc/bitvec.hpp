#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "psc/errors.hpp"

namespace psc {

/// Fixed-width bit vector. Bit 0 is the least significant bit. Widths above
/// 64 are supported for waveform bookkeeping; the expression evaluator only
/// produces values up to 64 bits.
class BitVec {
      public:
	BitVec() = default;
	explicit BitVec(int width) : width_(width), words_((width + 63) / 64, 0) {}
	BitVec(int width, uint64_t value) : BitVec(width)
	{
		if (width > 0) {
			words_[0] = width >= 64 ? value : (value & mask_low(width));
		}
		canonicalize();
	}

	/// Parses a binary string, most significant bit first. 'x' and 'z'
	/// normalize to 0; *had_xz reports whether any were seen.
	static BitVec from_binary(const std::string &bits, int width, bool *had_xz = nullptr);

	int width() const { return width_; }
	bool bit(int i) const { return (words_[i / 64] >> (i % 64)) & 1; }
	void set_bit(int i, bool v)
	{
		if (v) {
			words_[i / 64] |= uint64_t(1) << (i % 64);
		} else {
			words_[i / 64] &= ~(uint64_t(1) << (i % 64));
		}
	}

	/// Low 64 bits.
	uint64_t to_u64() const { return words_.empty() ? 0 : words_[0]; }

	/// MSB-first binary string of exactly width() characters.
	std::string to_binary() const;

	int popcount() const
	{
		int n = 0;
		for (uint64_t w : words_) {
			n += std::popcount(w);
		}
		return n;
	}

	BitVec operator^(const BitVec &other) const
	{
		if (other.width_ != width_) {
			throw WidthMismatch("xor width mismatch: " + std::to_string(width_) + " vs " + std::to_string(other.width_));
		}
		BitVec out(width_);
		for (size_t i = 0; i < words_.size(); ++i) {
			out.words_[i] = words_[i] ^ other.words_[i];
		}
		return out;
	}

	bool operator==(const BitVec &) const = default;

      private:
	static uint64_t mask_low(int bits) { return bits >= 64 ? ~uint64_t(0) : ((uint64_t(1) << bits) - 1); }

	void canonicalize()
	{
		int top_bits = width_ % 64;
		if (top_bits != 0 && !words_.empty()) {
			words_.back() &= mask_low(top_bits);
		}
	}

	int width_ = 0;
	std::vector<uint64_t> words_;
};

} // namespace psc
