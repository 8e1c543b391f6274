#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "qhop/airsim.hpp"
#include "qhop/errors.hpp"
#include "qhop/rng.hpp"

namespace qhop::oracle {

enum class IdealMethod { closed_form, monte_carlo, enumeration };

inline const char* to_string(IdealMethod m) {
    switch (m) {
        case IdealMethod::closed_form: return "closed_form";
        case IdealMethod::monte_carlo: return "monte_carlo";
        case IdealMethod::enumeration: return "enumeration";
    }
    return "?";
}

struct IdealPoint {
    uint64_t hop_interval_us = 0;
    uint64_t value_us = 0; // T_d or T_j
    uint32_t n_channels = 0;
    double mean = 0.0;
    double std_error = 0.0; // 0 iff method != monte_carlo
    double peak_over_phase = 0.0;
    IdealMethod method = IdealMethod::closed_form;
};

// Monte Carlo of the declared detector model: i.i.d. uniform channels on a
// hop grid, one window at a uniform integer phase, occupancy argmax with
// ties to the lowest channel index, success = match at the window's final
// instant. Exposed separately so tests can cross-check the closed form.
inline IdealPoint mc_detection_probability(uint64_t t_h, uint64_t t_d, uint32_t n,
                                           uint64_t trials, uint64_t seed) {
    if (t_h == 0 || t_d == 0 || n < 2 || trials == 0)
        throw ConfigError("mc_detection_probability: positive parameters required");
    Rng rng(seed);
    std::vector<uint32_t> chans;
    std::vector<std::pair<uint32_t, uint64_t>> occ;
    uint64_t successes = 0;
    for (uint64_t t = 0; t < trials; ++t) {
        const uint64_t phase = rng.below(t_h);
        const uint64_t end = phase + t_d;
        const size_t k1 = static_cast<size_t>((end - 1) / t_h);
        chans.resize(k1 + 1);
        for (auto& c : chans) c = static_cast<uint32_t>(rng.below(n));
        occ.clear();
        for (size_t k = 0; k <= k1; ++k) {
            const uint64_t lo = std::max<uint64_t>(phase, k * t_h);
            const uint64_t hi = std::min<uint64_t>(end, (k + 1) * t_h);
            bool merged = false;
            for (auto& [ch, tt] : occ)
                if (ch == chans[k]) {
                    tt += hi - lo;
                    merged = true;
                    break;
                }
            if (!merged) occ.emplace_back(chans[k], hi - lo);
        }
        uint64_t best = 0;
        uint32_t peak = n;
        for (const auto& [ch, tt] : occ)
            if (tt > best || (tt == best && ch < peak)) {
                best = tt;
                peak = ch;
            }
        if (peak == chans[k1]) ++successes;
    }
    IdealPoint p;
    p.hop_interval_us = t_h;
    p.value_us = t_d;
    p.n_channels = n;
    p.mean = static_cast<double>(successes) / static_cast<double>(trials);
    p.std_error = std::sqrt(p.mean * (1.0 - p.mean) / static_cast<double>(trials));
    p.peak_over_phase = p.mean;
    p.method = IdealMethod::monte_carlo;
    return p;
}

// Closed form 1 - (T_d/2T_h)(1 - 1/N) for windows no longer than one hop
// (the (1 - 1/N) factor is the straddling-coincidence correction); Monte
// Carlo beyond that.
inline IdealPoint ideal_detection_probability(uint64_t t_h, uint64_t t_d, uint32_t n,
                                              uint64_t trials, uint64_t seed) {
    if (t_h == 0 || t_d == 0 || n < 2)
        throw ConfigError("ideal_detection_probability: positive parameters required");
    if (t_d <= t_h) {
        IdealPoint p;
        p.hop_interval_us = t_h;
        p.value_us = t_d;
        p.n_channels = n;
        p.mean = 1.0 - (static_cast<double>(t_d) / (2.0 * static_cast<double>(t_h))) *
                           (1.0 - 1.0 / static_cast<double>(n));
        p.std_error = 0.0;
        p.peak_over_phase = p.mean;
        p.method = IdealMethod::closed_form;
        return p;
    }
    if (trials < 10000)
        throw ConfigError("ideal_detection_probability: Monte Carlo needs trials >= 10^4");
    return mc_detection_probability(t_h, t_d, n, trials, seed);
}

namespace detail {

// |{f-1, f, f+1} ∩ [0, N-1]|
inline uint32_t adjacency_size(uint32_t f, uint32_t n) {
    return 3u - (f == 0 ? 1u : 0u) - (f == n - 1 ? 1u : 0u);
}

// Exact miss-probability ratios accumulated per tx channel. For
// uniform_random each of k dwells independently misses with (N-a_f)/N; for
// sweep the k consecutive (mod N) jammer channels miss iff the start avoids
// an arc of length (a_f + k - 1).
inline double enum_ser(uint32_t n, uint64_t k, airsim::JamStrategy strategy) {
    double acc = 0.0;
    for (uint32_t f = 0; f < n; ++f) {
        if (strategy == airsim::JamStrategy::uniform_random) {
            const double ratio = static_cast<double>(n - adjacency_size(f, n)) /
                                 static_cast<double>(n);
            double miss = 1.0;
            for (uint64_t j = 0; j < k; ++j) miss *= ratio;
            acc += miss;
        } else {
            const uint32_t lo = f == 0 ? 0 : f - 1;
            const uint32_t hi = std::min(f + 1, n - 1);
            const int64_t allowed = static_cast<int64_t>(n) - (hi - lo + 1) -
                                    (static_cast<int64_t>(k) - 1);
            acc += allowed > 0 ? static_cast<double>(allowed) / static_cast<double>(n) : 0.0;
        }
    }
    return 1.0 - acc / static_cast<double>(n);
}

} // namespace detail

// Aligned cases (T_j | T_s or T_s | T_j, phase 0) are exact enumerations;
// anything else is Monte Carlo over random phases. peak_over_phase for the
// enumeration path is the exact worst-offset value: a nonzero offset makes
// 1/m of symbols straddle one extra dwell (m = T_j/T_s clamped to >= 1).
inline IdealPoint ideal_jamming_ser(uint64_t t_h, uint64_t t_j, const airsim::SymbolConfig& sym,
                                    uint32_t n, airsim::JamStrategy strategy, uint64_t trials,
                                    uint64_t seed) {
    if (t_h == 0 || t_j == 0 || n < 2)
        throw ConfigError("ideal_jamming_ser: positive parameters required");
    if (strategy == airsim::JamStrategy::genie)
        throw ConfigError("ideal_jamming_ser: genie is a simulator test hook");
    const uint64_t ts = sym.symbol_duration_us;
    sym.symbols_per_hop(t_h);

    IdealPoint p;
    p.hop_interval_us = t_h;
    p.value_us = t_j;
    p.n_channels = n;

    if (t_j % ts == 0 || ts % t_j == 0) {
        const uint64_t k = t_j >= ts ? 1 : ts / t_j;
        const uint64_t m = t_j >= ts ? t_j / ts : 1;
        p.mean = detail::enum_ser(n, k, strategy);
        const double p1 = detail::enum_ser(n, 1, strategy);
        const double pk1 = detail::enum_ser(n, k + 1, strategy);
        p.peak_over_phase = (static_cast<double>(m - 1) * p1 + pk1) / static_cast<double>(m);
        p.std_error = 0.0;
        p.method = IdealMethod::enumeration;
        return p;
    }

    if (trials < 10000) throw ConfigError("ideal_jamming_ser: Monte Carlo needs trials >= 10^4");
    Rng rng(seed);
    const uint64_t buckets = 50;
    const uint64_t per_bucket = trials / buckets;
    uint64_t total_errors = 0;
    double peak = 0.0;
    for (uint64_t b = 0; b < buckets; ++b) {
        const uint64_t phase = rng.below(t_j);
        const uint64_t offset = phase == 0 ? 0 : t_j - phase;
        uint64_t errors = 0;
        for (uint64_t s = 0; s < per_bucket; ++s) {
            const uint32_t f = static_cast<uint32_t>(rng.below(n));
            const uint64_t d0 = offset / t_j;
            const uint64_t d1 = (ts - 1 + offset) / t_j;
            bool hit = false;
            uint32_t c = static_cast<uint32_t>(rng.below(n)); // first dwell (or sweep start)
            for (uint64_t d = d0; d <= d1; ++d) {
                if (d != d0)
                    c = strategy == airsim::JamStrategy::uniform_random
                            ? static_cast<uint32_t>(rng.below(n))
                            : (c + 1) % n;
                const int64_t diff = static_cast<int64_t>(c) - static_cast<int64_t>(f);
                if (diff >= -1 && diff <= 1) {
                    hit = true;
                    break;
                }
            }
            if (hit) ++errors;
        }
        total_errors += errors;
        peak = std::max(peak, static_cast<double>(errors) / static_cast<double>(per_bucket));
    }
    const uint64_t used = buckets * per_bucket;
    p.mean = static_cast<double>(total_errors) / static_cast<double>(used);
    p.std_error = std::sqrt(p.mean * (1.0 - p.mean) / static_cast<double>(used));
    p.peak_over_phase = peak;
    p.method = IdealMethod::monte_carlo;
    return p;
}

// Berlekamp-Massey over GF(2). Returns (L, c) with c[0] = 1 and the
// recurrence s[i] = XOR_{j=1..L} c[j] * s[i-j].
inline std::pair<uint32_t, std::vector<uint8_t>> berlekamp_massey(const std::vector<uint8_t>& s) {
    const size_t n = s.size();
    std::vector<uint8_t> c(n + 1, 0), b(n + 1, 0);
    c[0] = b[0] = 1;
    uint32_t L = 0;
    size_t m = 0; // index after the last L update, offset by one via (i - m + 1)
    bool have_m = false;
    std::vector<uint8_t> t;
    for (size_t i = 0; i < n; ++i) {
        unsigned d = s[i];
        for (uint32_t j = 1; j <= L && j <= i; ++j) d ^= static_cast<unsigned>(c[j] & s[i - j]);
        d &= 1u;
        if (!d) continue;
        const size_t shift = have_m ? i - m : i + 1;
        if (2 * L <= i) {
            t = c;
            for (size_t j = 0; j + shift <= n; ++j) c[j + shift] ^= b[j];
            L = static_cast<uint32_t>(i + 1 - L);
            m = i;
            have_m = true;
            b = t;
        } else {
            for (size_t j = 0; j + shift <= n; ++j) c[j + shift] ^= b[j];
        }
    }
    c.resize(L + 1);
    return {L, c};
}

struct PredictabilityReport {
    uint32_t linear_complexity = 0;
    double next_symbol_accuracy = 0.0;
    uint64_t sequence_length = 0;
};

// Linear complexity of the whole sequence, plus held-out prediction: the
// recurrence is learned on the first half only and scored on the second.
inline PredictabilityReport linear_complexity_predictor(const std::vector<uint8_t>& bits) {
    if (bits.size() < 4) throw ConfigError("linear_complexity_predictor: need >= 4 bits");
    PredictabilityReport rep;
    rep.sequence_length = bits.size();
    rep.linear_complexity = berlekamp_massey(bits).first;

    const size_t half = bits.size() / 2;
    const std::vector<uint8_t> train(bits.begin(), bits.begin() + half);
    const auto [lt, c] = berlekamp_massey(train);
    uint64_t correct = 0;
    for (size_t i = half; i < bits.size(); ++i) {
        unsigned pred = 0;
        for (uint32_t j = 1; j <= lt; ++j) pred ^= static_cast<unsigned>(c[j] & bits[i - j]);
        if ((pred & 1u) == bits[i]) ++correct;
    }
    rep.next_symbol_accuracy =
        static_cast<double>(correct) / static_cast<double>(bits.size() - half);
    return rep;
}

struct RandomnessReport {
    double monobit_z = 0.0;
    double runs_z = 0.0;
    double serial_corr = 0.0;
};

// Monobit z, Wald-Wolfowitz runs z, and lag-1 serial correlation. Degenerate
// statistics (constant sequences) report 0 for the affected entries; the
// monobit score flags those inputs anyway.
inline RandomnessReport randomness_suite(const std::vector<uint8_t>& bits) {
    if (bits.size() < 100) throw ConfigError("randomness_suite: need >= 100 bits");
    const double n = static_cast<double>(bits.size());
    uint64_t ones = 0;
    for (const auto b : bits) ones += b;
    const double n1 = static_cast<double>(ones);
    const double n0 = n - n1;

    RandomnessReport rep;
    rep.monobit_z = (2.0 * n1 - n) / std::sqrt(n);

    if (n1 > 0 && n0 > 0) {
        uint64_t runs = 1;
        for (size_t i = 1; i < bits.size(); ++i)
            if (bits[i] != bits[i - 1]) ++runs;
        const double mu = 1.0 + 2.0 * n1 * n0 / n;
        const double var = 2.0 * n1 * n0 * (2.0 * n1 * n0 - n) / (n * n * (n - 1.0));
        rep.runs_z = var > 0.0 ? (static_cast<double>(runs) - mu) / std::sqrt(var) : 0.0;
    }

    const double mean = n1 / n;
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < bits.size(); ++i) {
        const double d = static_cast<double>(bits[i]) - mean;
        den += d * d;
        if (i + 1 < bits.size()) num += d * (static_cast<double>(bits[i + 1]) - mean);
    }
    rep.serial_corr = den > 0.0 ? num / den : 0.0;
    return rep;
}

} // namespace qhop::oracle
