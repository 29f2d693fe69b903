#pragma once

// Seeded generator of parliamentary-style English sentences, used when no
// real corpus is at hand.

#include <cstdint>
#include <string>
#include <vector>

namespace rissc::corpus {

// n sentences, each 4..20 tokens after tokenization, identical for a given seed.
std::vector<std::string> synthetic_sentences(std::size_t n, std::uint64_t seed);

}  // namespace rissc::corpus
