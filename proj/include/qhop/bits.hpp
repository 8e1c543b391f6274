#pragma once

#include <bit>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace qhop {

// Bit sequences travel as one value per element (0/1) where random access
// matters, as MSB-first octets on wire formats, and as LSB-first u64 words
// inside the GF(2) kernels.

// MSB-first packing: bit 0 of the sequence is the high bit of octet 0.
inline std::vector<uint8_t> pack_bits_msb(const std::vector<uint8_t>& bits) {
    std::vector<uint8_t> out((bits.size() + 7) / 8, 0);
    for (size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i / 8] |= static_cast<uint8_t>(0x80u >> (i % 8));
    return out;
}

inline std::vector<uint8_t> unpack_bits_msb(const std::vector<uint8_t>& octets, size_t nbits) {
    std::vector<uint8_t> out(nbits, 0);
    for (size_t i = 0; i < nbits; ++i)
        out[i] = (octets[i / 8] >> (7 - i % 8)) & 1u;
    return out;
}

// LSB-first word packing: bit k of the sequence is bit (k % 64) of word k/64.
inline std::vector<uint64_t> pack_bits_words(const std::vector<uint8_t>& bits) {
    std::vector<uint64_t> out((bits.size() + 63) / 64, 0);
    for (size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i / 64] |= (1ull << (i % 64));
    return out;
}

inline int parity64(uint64_t x) { return std::popcount(x) & 1; }

// Reads nbits of s starting at bit offset, ANDs against key (same packing,
// key length nbits), and returns the GF(2) inner product.
inline int window_dot(const std::vector<uint64_t>& s, size_t offset,
                      const std::vector<uint64_t>& key, size_t nbits) {
    const size_t q = offset / 64;
    const unsigned r = offset % 64;
    const size_t nwords = (nbits + 63) / 64;
    uint64_t acc = 0;
    if (r == 0) {
        for (size_t w = 0; w < nwords; ++w) acc ^= s[q + w] & key[w];
    } else {
        for (size_t w = 0; w < nwords; ++w) {
            uint64_t sw = (s[q + w] >> r) | (s[q + w + 1] << (64 - r));
            acc ^= sw & key[w];
        }
    }
    const unsigned tail = nbits % 64;
    (void)tail; // key words beyond nbits are zero by construction
    return parity64(acc);
}

} // namespace qhop
