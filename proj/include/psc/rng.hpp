#pragma once

#include <cstdint>
#include <string>

namespace psc {

/// Deterministic 64-bit generator (splitmix64). Used everywhere randomness is
/// needed so results do not depend on the standard library's distribution
/// implementations.
class Rng {
      public:
	explicit Rng(uint64_t seed) : state_(seed) {}

	uint64_t next_u64()
	{
		uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
		z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
		z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
		return z ^ (z >> 31);
	}

	/// Uniform in [0, 1).
	double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

	/// Uniform in [lo, hi).
	double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

	/// Uniform integer in [0, n).
	uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

	bool next_bool(double p_true) { return next_double() < p_true; }

      private:
	uint64_t state_;
};

/// Derives an independent stream from a root seed and a purpose label. All
/// randomness in a run (weight init, dropout, batch shuffling, explainer
/// noise, stimulus, mask generator seeding) flows from one config seed
/// through this function, so runs are reproducible end to end.
uint64_t derive_seed(uint64_t root_seed, const std::string &purpose, uint64_t index = 0);

} // namespace psc
