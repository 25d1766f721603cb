#include "psc/rng.hpp"

namespace psc {

uint64_t derive_seed(uint64_t root_seed, const std::string &purpose, uint64_t index)
{
	// FNV-1a over the purpose label, then mix with the root and index
	// through one splitmix64 round each so nearby roots stay decorrelated.
	uint64_t h = 0xcbf29ce484222325ULL;
	for (unsigned char c : purpose) {
		h ^= c;
		h *= 0x100000001b3ULL;
	}
	Rng mixer(root_seed ^ h);
	uint64_t s = mixer.next_u64();
	Rng indexed(s + index * 0x9e3779b97f4a7c15ULL);
	return indexed.next_u64();
}

} // namespace psc
