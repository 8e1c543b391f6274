#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <set>
#include <string>
#include <vector>

#include "qhop/bits.hpp"
#include "qhop/errors.hpp"
#include "qhop/rng.hpp"

namespace qhop::qkdlink {

inline double binary_entropy(double q) {
    if (q < 0.0 || q > 1.0) throw std::domain_error("binary_entropy: q must be in [0, 1]");
    if (q == 0.0 || q == 1.0) return 0.0;
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

struct QkdLinkConfig {
    uint64_t n_pulses = 1'000'000;
    double fiber_length_km = 25.0;
    double loss_db_per_km = 0.2;
    double detector_efficiency = 1.0;
    double flip_prob = 0.035;
    double decoy_fraction = 0.1;
    uint64_t seed = 1;

    void validate() const {
        if (n_pulses == 0) throw ConfigError("n_pulses must be positive");
        if (fiber_length_km < 0.0) throw ConfigError("fiber_length_km must be nonnegative");
        if (loss_db_per_km < 0.0) throw ConfigError("loss_db_per_km must be nonnegative");
        if (detector_efficiency <= 0.0 || detector_efficiency > 1.0)
            throw ConfigError("detector_efficiency must be in (0, 1]");
        if (flip_prob < 0.0 || flip_prob >= 0.5)
            throw ConfigError("flip_prob must be in [0, 0.5)");
        if (decoy_fraction < 0.0 || decoy_fraction > 1.0)
            throw ConfigError("decoy_fraction must be in [0, 1]");
    }

    double transmittance() const {
        return std::pow(10.0, -fiber_length_km * loss_db_per_km / 10.0);
    }
};

// Per-pulse symbols: 0/1 carry key bits, 2 marks a decoy (monitoring) pulse.
struct RawExchange {
    std::vector<uint8_t> alice_symbols;
    std::vector<uint8_t> detected;
    std::vector<uint8_t> bob_bits;
    double transmittance = 0.0;
    uint64_t detected_count = 0;
};

// Draw order per pulse is fixed (decoy?, bit, detect, flip) so runs are
// reproducible from the seed alone.
inline RawExchange simulate_exchange(const QkdLinkConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    RawExchange ex;
    ex.transmittance = cfg.transmittance();
    ex.alice_symbols.resize(cfg.n_pulses);
    ex.detected.resize(cfg.n_pulses);
    ex.bob_bits.assign(cfg.n_pulses, 0);
    const double p_detect = ex.transmittance * cfg.detector_efficiency;
    for (uint64_t i = 0; i < cfg.n_pulses; ++i) {
        const bool decoy = rng.bernoulli(cfg.decoy_fraction);
        const uint8_t bit = static_cast<uint8_t>(rng.below(2));
        ex.alice_symbols[i] = decoy ? 2 : bit;
        const bool det = rng.bernoulli(p_detect);
        ex.detected[i] = det ? 1 : 0;
        if (det) {
            ++ex.detected_count;
            if (!decoy) {
                const bool flip = rng.bernoulli(cfg.flip_prob);
                ex.bob_bits[i] = static_cast<uint8_t>(bit ^ (flip ? 1 : 0));
            }
        }
    }
    return ex;
}

struct SiftedKeys {
    std::vector<uint8_t> alice;
    std::vector<uint8_t> bob;
    double qber_estimate = 0.0;
    uint64_t sifted_len = 0; // before estimation bits were removed
    uint64_t disclosed = 0;
};

// Keeps detected data pulses, discloses a random fraction to estimate QBER,
// and removes the disclosed bits from both keys.
inline SiftedKeys sift_and_estimate(const RawExchange& ex, double estimation_fraction,
                                    uint64_t seed) {
    if (estimation_fraction <= 0.0 || estimation_fraction >= 1.0)
        throw ConfigError("estimation_fraction must be in (0, 1)");
    std::vector<uint64_t> kept;
    for (uint64_t i = 0; i < ex.alice_symbols.size(); ++i)
        if (ex.detected[i] && ex.alice_symbols[i] != 2) kept.push_back(i);
    if (kept.size() < 2) throw StageError("sift", "no sifted bits to work with");

    Rng rng(seed);
    std::vector<uint64_t> order(kept.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(i + 1)]);

    size_t d = static_cast<size_t>(std::llround(static_cast<double>(kept.size()) * estimation_fraction));
    if (d == 0) d = 1;
    if (d >= kept.size()) throw StageError("sift", "estimation would consume the whole key");

    uint64_t mismatches = 0;
    std::vector<uint8_t> is_disclosed(kept.size(), 0);
    for (size_t j = 0; j < d; ++j) {
        const uint64_t pulse = kept[order[j]];
        is_disclosed[order[j]] = 1;
        const uint8_t a = ex.alice_symbols[pulse];
        const uint8_t b = ex.bob_bits[pulse];
        if (a != b) ++mismatches;
    }

    SiftedKeys out;
    out.sifted_len = kept.size();
    out.disclosed = d;
    out.qber_estimate = static_cast<double>(mismatches) / static_cast<double>(d);
    out.alice.reserve(kept.size() - d);
    out.bob.reserve(kept.size() - d);
    for (size_t j = 0; j < kept.size(); ++j) {
        if (is_disclosed[j]) continue;
        out.alice.push_back(ex.alice_symbols[kept[j]]);
        out.bob.push_back(ex.bob_bits[kept[j]]);
    }
    return out;
}

// GF(2^64), reduction polynomial x^64 + x^4 + x^3 + x + 1.
inline uint64_t gf64_mul(uint64_t a, uint64_t b) {
    uint64_t r = 0;
    while (b) {
        if (b & 1) r ^= a;
        b >>= 1;
        const uint64_t hi = a >> 63;
        a <<= 1;
        if (hi) a ^= 0x1Bull;
    }
    return r;
}

// Polynomial-evaluation hash of the key at a seeded point; 64-bit collision
// bound, used only to flag residual disagreement after reconciliation.
inline uint64_t key_digest(const std::vector<uint8_t>& bits, uint64_t seed) {
    uint64_t r = mix64(seed);
    if (r == 0) r = 1;
    uint64_t h = static_cast<uint64_t>(bits.size());
    const auto words = pack_bits_words(bits);
    for (const uint64_t w : words) h = gf64_mul(h, r) ^ w;
    return h;
}

struct ReconcileResult {
    std::vector<uint8_t> alice;
    std::vector<uint8_t> bob; // corrected side
    uint64_t leak_bits = 0;
    bool verified = false;
};

namespace detail {

inline uint32_t ceil_log2(uint64_t k) {
    uint32_t b = 0;
    uint64_t v = 1;
    while (v < k) {
        v <<= 1;
        ++b;
    }
    return b;
}

}

// Cascade-style reconciliation: per pass, parity-compare blocks of doubling
// size over a reshuffled key, binary-search mismatches, and backtrack fixes
// into earlier passes until no block disagrees. leak_bits counts every alice
// parity disclosed (block scans plus each binary-search step).
inline ReconcileResult reconcile(const std::vector<uint8_t>& alice,
                                 const std::vector<uint8_t>& bob,
                                 uint32_t passes, uint32_t initial_block, uint64_t seed) {
    if (alice.size() != bob.size()) throw ConfigError("reconcile: length mismatch");
    if (alice.empty()) throw ConfigError("reconcile: empty key");
    if (passes == 0) throw ConfigError("reconcile: passes must be positive");
    if (initial_block == 0 || initial_block > alice.size())
        throw ConfigError("reconcile: initial_block must be in [1, n]");

    const size_t n = alice.size();
    ReconcileResult res;
    res.alice = alice;
    res.bob = bob;

    Rng rng(seed);
    std::vector<std::vector<uint32_t>> perm(passes);
    std::vector<std::vector<uint32_t>> slot_of(passes);
    std::vector<uint64_t> block_size(passes);
    for (uint32_t p = 0; p < passes; ++p) {
        block_size[p] = std::min<uint64_t>(static_cast<uint64_t>(initial_block) << p, n);
        perm[p].resize(n);
        for (uint32_t i = 0; i < n; ++i) perm[p][i] = i;
        if (p > 0)
            for (size_t i = n - 1; i > 0; --i)
                std::swap(perm[p][i], perm[p][rng.below(i + 1)]);
        slot_of[p].resize(n);
        for (uint32_t s = 0; s < n; ++s) slot_of[p][perm[p][s]] = s;
    }

    auto parity_range = [&](const std::vector<uint8_t>& key, uint32_t p, size_t lo, size_t hi) {
        unsigned acc = 0;
        for (size_t s = lo; s < hi; ++s) acc ^= key[perm[p][s]];
        return acc & 1u;
    };

    std::deque<std::pair<uint32_t, uint64_t>> work; // (pass, block)
    std::set<std::pair<uint32_t, uint64_t>> queued;

    auto enqueue = [&](uint32_t p, uint64_t b) {
        if (queued.insert({p, b}).second) work.emplace_back(p, b);
    };

    // Binary search one error inside block b of pass p; returns the fixed key
    // index. Each halving discloses one alice parity.
    auto search_and_fix = [&](uint32_t p, uint64_t b) {
        size_t lo = b * block_size[p];
        size_t hi = std::min<size_t>(lo + block_size[p], n);
        while (hi - lo > 1) {
            const size_t mid = lo + (hi - lo) / 2;
            res.leak_bits += 1;
            const unsigned pa = parity_range(res.alice, p, lo, mid);
            const unsigned pb = parity_range(res.bob, p, lo, mid);
            if (pa != pb)
                hi = mid;
            else
                lo = mid;
        }
        const uint32_t idx = perm[p][lo];
        res.bob[idx] ^= 1u;
        return idx;
    };

    uint32_t max_pass_seen = 0;
    for (uint32_t p = 0; p < passes; ++p) {
        max_pass_seen = p;
        const uint64_t n_blocks = (n + block_size[p] - 1) / block_size[p];
        res.leak_bits += n_blocks; // alice discloses every block parity
        for (uint64_t b = 0; b < n_blocks; ++b) enqueue(p, b);
        while (!work.empty()) {
            const auto [q, blk] = work.front();
            work.pop_front();
            queued.erase({q, blk});
            const size_t lo = blk * block_size[q];
            const size_t hi = std::min<size_t>(lo + block_size[q], n);
            if (parity_range(res.alice, q, lo, hi) == parity_range(res.bob, q, lo, hi)) continue;
            const uint32_t fixed = search_and_fix(q, blk);
            for (uint32_t r2 = 0; r2 <= max_pass_seen; ++r2) {
                const uint64_t bb = slot_of[r2][fixed] / block_size[r2];
                enqueue(r2, bb);
            }
        }
    }

    const uint64_t da = key_digest(res.alice, derive_seed(seed, 0xD16E57));
    const uint64_t db = key_digest(res.bob, derive_seed(seed, 0xD16E57));
    res.verified = (da == db);
    return res;
}

struct ReconciledKey {
    std::vector<uint8_t> bits;
    uint64_t leak_bits = 0;
    bool verified = false;
};

struct SecretKey {
    std::vector<uint8_t> octets; // MSB-first packing, zero-padded tail
    uint64_t bit_len = 0;

    // Whole bytes usable downstream; a partial trailing byte is discarded.
    std::vector<uint8_t> whole_octets() const {
        return {octets.begin(), octets.begin() + bit_len / 8};
    }
};

inline uint64_t secret_length_bits(uint64_t n, double qber, uint64_t leak_bits,
                                   uint32_t epsilon_exponent) {
    const double m = static_cast<double>(n) * (1.0 - binary_entropy(qber)) -
                     static_cast<double>(leak_bits) - 2.0 * static_cast<double>(epsilon_exponent);
    if (m <= 0.0) return 0;
    return static_cast<uint64_t>(std::floor(m));
}

// Toeplitz extractor over GF(2). The m+n-1 diagonal bits come from the seeded
// RNG; both ends call this with the same seed and obtain identical output.
inline SecretKey privacy_amplify(const ReconciledKey& key, double qber,
                                 uint32_t epsilon_exponent, uint64_t seed) {
    if (!key.verified) throw StageError("privacy_amplify", "refusing unverified key");
    if (qber < 0.0 || qber >= 0.5)
        throw std::domain_error("privacy_amplify: qber must be in [0, 0.5)");
    const uint64_t n = key.bits.size();
    if (n == 0) throw StageError("privacy_amplify", "empty reconciled key");
    const uint64_t m = secret_length_bits(n, qber, key.leak_bits, epsilon_exponent);
    if (m == 0) throw StageError("privacy_amplify", "no extractable secret key");

    Rng rng(seed);
    const uint64_t t_len = m + n - 1;
    std::vector<uint8_t> t_bits(t_len);
    {
        uint64_t w = 0;
        for (uint64_t k = 0; k < t_len; ++k) {
            if (k % 64 == 0) w = rng.next_u64();
            t_bits[k] = (w >> (k % 64)) & 1u;
        }
    }
    // Reversing the diagonal makes row i the contiguous window starting at
    // bit m-1-i, so each output bit is one sliding AND+parity.
    std::vector<uint8_t> s_bits(t_len);
    for (uint64_t k = 0; k < t_len; ++k) s_bits[k] = t_bits[t_len - 1 - k];
    auto s_words = pack_bits_words(s_bits);
    s_words.push_back(0);
    const auto key_words = pack_bits_words(key.bits);

    std::vector<uint8_t> out_bits(m);
    for (uint64_t i = 0; i < m; ++i)
        out_bits[i] = static_cast<uint8_t>(window_dot(s_words, m - 1 - i, key_words, n));

    SecretKey sk;
    sk.bit_len = m;
    sk.octets = pack_bits_msb(out_bits);
    return sk;
}

// Test- and tooling-visible core of the extractor: y = T x with
// T[i][j] = t[i - j + n - 1].
inline std::vector<uint8_t> toeplitz_multiply(const std::vector<uint8_t>& t_bits,
                                              const std::vector<uint8_t>& x_bits, uint64_t m) {
    const uint64_t n = x_bits.size();
    if (t_bits.size() != m + n - 1)
        throw ConfigError("toeplitz_multiply: need m + n - 1 diagonal bits");
    std::vector<uint8_t> s_bits(t_bits.rbegin(), t_bits.rend());
    auto s_words = pack_bits_words(s_bits);
    s_words.push_back(0);
    const auto x_words = pack_bits_words(x_bits);
    std::vector<uint8_t> out(m);
    for (uint64_t i = 0; i < m; ++i)
        out[i] = static_cast<uint8_t>(window_dot(s_words, m - 1 - i, x_words, n));
    return out;
}

struct ChainConfig {
    QkdLinkConfig link;
    double estimation_fraction = 0.1;
    uint32_t passes = 4;
    uint32_t epsilon_exponent = 64;
    double target_key_rate_bps = 2000.0;
    // Reconciliation is not attempted above this estimated QBER: the
    // extractable fraction 1 - (1 + f) h2(q) crosses zero near q ≈ 0.1.
    double qber_abort_threshold = 0.1;

    void validate() const {
        link.validate();
        if (estimation_fraction <= 0.0 || estimation_fraction >= 1.0)
            throw ConfigError("estimation_fraction must be in (0, 1)");
        if (passes == 0) throw ConfigError("passes must be positive");
        if (target_key_rate_bps <= 0.0) throw ConfigError("target_key_rate_bps must be positive");
        if (qber_abort_threshold <= 0.0 || qber_abort_threshold > 0.5)
            throw ConfigError("qber_abort_threshold must be in (0, 0.5]");
    }
};

struct ChainResult {
    SecretKey alice_key;
    SecretKey bob_key;
    uint64_t n_pulses = 0;
    uint64_t detected = 0;
    uint64_t sifted_len = 0;
    double qber = 0.0;
    uint64_t leak_bits = 0;
    uint64_t secret_len = 0;
    double seconds = 0.0; // simulated delivery time at the target key rate
    double secret_fraction = 0.0;
    bool verified = false;
};

inline uint32_t cascade_initial_block(double qber, size_t n) {
    double ib = std::ceil(0.73 / std::max(qber, 1e-6));
    ib = std::min(ib, static_cast<double>(n) / 4.0);
    ib = std::max(ib, 8.0);
    ib = std::min(ib, static_cast<double>(n));
    return static_cast<uint32_t>(ib);
}

// Full pipeline: exchange -> sift/estimate -> cascade -> amplification.
// Stage seeds fan out from link.seed; both ends share the Toeplitz seed.
inline ChainResult run_qkd_chain(const ChainConfig& cfg) {
    cfg.validate();
    const auto ex = simulate_exchange(cfg.link);
    const auto sifted = sift_and_estimate(ex, cfg.estimation_fraction, derive_seed(cfg.link.seed, 1));

    if (sifted.qber_estimate >= cfg.qber_abort_threshold) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "estimated qber %.4f is at or above the abort threshold %.4f",
                      sifted.qber_estimate, cfg.qber_abort_threshold);
        throw StageError("reconcile", buf);
    }

    const uint32_t ib = cascade_initial_block(sifted.qber_estimate, sifted.alice.size());
    const auto rec = reconcile(sifted.alice, sifted.bob, cfg.passes, ib, derive_seed(cfg.link.seed, 2));
    if (!rec.verified)
        throw StageError("reconcile", "verification digest mismatch after cascade");

    const uint64_t toeplitz_seed = derive_seed(cfg.link.seed, 3);
    const ReconciledKey ka{rec.alice, rec.leak_bits, rec.verified};
    const ReconciledKey kb{rec.bob, rec.leak_bits, rec.verified};
    const auto ska = privacy_amplify(ka, sifted.qber_estimate, cfg.epsilon_exponent, toeplitz_seed);
    const auto skb = privacy_amplify(kb, sifted.qber_estimate, cfg.epsilon_exponent, toeplitz_seed);
    if (ska.octets != skb.octets)
        throw StageError("privacy_amplify", "end keys diverge despite verified reconciliation");

    ChainResult r;
    r.alice_key = ska;
    r.bob_key = skb;
    r.n_pulses = cfg.link.n_pulses;
    r.detected = ex.detected_count;
    r.sifted_len = sifted.sifted_len;
    r.qber = sifted.qber_estimate;
    r.leak_bits = rec.leak_bits;
    r.secret_len = ska.bit_len;
    r.seconds = static_cast<double>(ska.bit_len) / cfg.target_key_rate_bps;
    r.secret_fraction = static_cast<double>(ska.bit_len) / static_cast<double>(rec.alice.size());
    r.verified = true;
    return r;
}

} // namespace qhop::qkdlink
