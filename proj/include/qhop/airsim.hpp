#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qhop/errors.hpp"
#include "qhop/hopplan.hpp"
#include "qhop/rng.hpp"
#include "qhop/stats.hpp"

namespace qhop::airsim {

struct SymbolConfig {
    uint64_t symbol_duration_us = 500;

    uint64_t symbols_per_hop(uint64_t hop_interval_us) const {
        if (symbol_duration_us == 0) throw ConfigError("symbol_duration_us must be positive");
        if (hop_interval_us % symbol_duration_us != 0)
            throw ConfigError("symbol_duration_us must divide hop_interval_us exactly");
        return hop_interval_us / symbol_duration_us;
    }
};

struct EveConfig {
    uint64_t detection_period_us = 5000; // T_d
    uint64_t phase_us = 0;               // in [0, T_d)
    double noise_power = 0.0;            // 0 = noiseless

    void validate() const {
        if (detection_period_us == 0) throw ConfigError("detection_period_us must be positive");
        if (phase_us >= detection_period_us) throw ConfigError("eve phase must be in [0, T_d)");
        if (noise_power < 0.0) throw ConfigError("noise_power must be nonnegative");
    }
};

enum class JamStrategy { uniform_random, sweep, genie }; // genie is a test hook

inline const char* to_string(JamStrategy s) {
    switch (s) {
        case JamStrategy::uniform_random: return "uniform_random";
        case JamStrategy::sweep: return "sweep";
        case JamStrategy::genie: return "genie";
    }
    return "?";
}

struct JamConfig {
    uint64_t jamming_period_us = 5000; // T_j
    uint64_t phase_us = 0;             // in [0, T_j)
    JamStrategy strategy = JamStrategy::uniform_random;
    double sir_db = 20.0; // recorded metadata; the hit rule is binary

    void validate() const {
        if (jamming_period_us == 0) throw ConfigError("jamming_period_us must be positive");
        if (phase_us >= jamming_period_us) throw ConfigError("jammer phase must be in [0, T_j)");
    }
};

struct LinkReport {
    uint64_t symbols = 0;
    uint64_t errors = 0;
    double ser = 0.0;
};

struct DetectionReport {
    uint64_t windows = 0;
    uint64_t successes = 0;
    double probability = 0.0;
};

struct JamReport {
    uint64_t symbols = 0;
    uint64_t errors = 0;
    double ser = 0.0;
};

// Synchronized-receiver link: a symbol decodes iff the rx index matches the
// tx index over the symbol's whole duration.
inline LinkReport run_link(const hopplan::HopSchedule& tx, const hopplan::HopSchedule& rx,
                           const SymbolConfig& sym) {
    if (tx.entries.empty() || rx.entries.empty()) throw ConfigError("run_link: empty schedule");
    if (tx.start_us() != rx.start_us() || tx.end_us() != rx.end_us())
        throw ConfigError("run_link: schedules must cover equal time spans");
    sym.symbols_per_hop(tx.hop_interval_us);

    const uint64_t t0 = tx.start_us();
    const uint64_t ts = sym.symbol_duration_us;
    LinkReport rep;
    rep.symbols = tx.span_us() / ts;
    for (uint64_t s = 0; s < rep.symbols; ++s) {
        const uint64_t a = t0 + s * ts;
        const uint64_t b = a + ts;
        const uint32_t f = tx.channel_at(a);
        const size_t r0 = static_cast<size_t>((a - t0) / rx.hop_interval_us);
        const size_t r1 = static_cast<size_t>((b - 1 - t0) / rx.hop_interval_us);
        bool ok = true;
        for (size_t r = r0; r <= r1 && ok; ++r) ok = rx.entries[r].index == f;
        if (!ok) ++rep.errors;
    }
    rep.ser = rep.symbols ? static_cast<double>(rep.errors) / static_cast<double>(rep.symbols) : 0.0;
    return rep;
}

// Spectral-peak eavesdropper: time splits into windows of T_d from the phase
// offset; per window the per-channel energy is its occupancy time (plus
// optional Gaussian noise), the peak is the argmax (tie -> lowest index), and
// the window succeeds iff the peak is the channel in use at the window's
// final instant.
inline DetectionReport run_eavesdropper(const hopplan::HopSchedule& tx,
                                        const hopplan::ChannelTable& plan, const EveConfig& eve,
                                        uint64_t seed) {
    eve.validate();
    if (tx.entries.empty()) throw ConfigError("run_eavesdropper: empty schedule");
    const uint64_t td = eve.detection_period_us;
    if (eve.phase_us + td > tx.span_us())
        throw ConfigError("run_eavesdropper: T_d exceeds schedule span");

    const uint64_t t0 = tx.start_us();
    const uint64_t th = tx.hop_interval_us;
    const uint32_t n = plan.size();
    Rng rng(seed);
    std::vector<double> noisy(n);
    std::vector<std::pair<uint32_t, uint64_t>> occ; // (channel, microseconds)

    DetectionReport rep;
    for (uint64_t ws = t0 + eve.phase_us; ws + td <= tx.end_us(); ws += td) {
        const uint64_t we = ws + td;
        occ.clear();
        const size_t k0 = static_cast<size_t>((ws - t0) / th);
        const size_t k1 = static_cast<size_t>((we - 1 - t0) / th);
        for (size_t k = k0; k <= k1; ++k) {
            const auto& e = tx.entries[k];
            const uint64_t lo = std::max(ws, e.start_us);
            const uint64_t hi = std::min(we, e.start_us + e.duration_us);
            const uint32_t c = e.index;
            bool merged = false;
            for (auto& [ch, t] : occ)
                if (ch == c) {
                    t += hi - lo;
                    merged = true;
                    break;
                }
            if (!merged) occ.emplace_back(c, hi - lo);
        }

        uint32_t peak = 0;
        if (eve.noise_power == 0.0) {
            uint64_t best = 0;
            peak = n; // sentinel above all channel indices
            for (const auto& [ch, t] : occ)
                if (t > best || (t == best && ch < peak)) {
                    best = t;
                    peak = ch;
                }
        } else {
            for (uint32_t c = 0; c < n; ++c) noisy[c] = eve.noise_power * rng.normal();
            for (const auto& [ch, t] : occ) noisy[ch] += static_cast<double>(t);
            double best = noisy[0];
            peak = 0;
            for (uint32_t c = 1; c < n; ++c)
                if (noisy[c] > best) {
                    best = noisy[c];
                    peak = c;
                }
        }

        ++rep.windows;
        if (peak == tx.channel_at(we - 1)) ++rep.successes;
    }
    if (rep.windows == 0) throw ConfigError("run_eavesdropper: no complete window fits the span");
    rep.probability = static_cast<double>(rep.successes) / static_cast<double>(rep.windows);
    return rep;
}

// Narrowband jammer: one channel per dwell of T_j; a symbol is lost iff at
// any instant the jammer sits on the tx channel or an adjacent one (clamped
// at the band edges, no wraparound). No FEC.
inline JamReport run_jammer(const hopplan::HopSchedule& tx, const hopplan::ChannelTable& plan,
                            const JamConfig& jam, const SymbolConfig& sym, uint64_t seed) {
    jam.validate();
    if (tx.entries.empty()) throw ConfigError("run_jammer: empty schedule");
    sym.symbols_per_hop(tx.hop_interval_us); // validates divisibility

    const uint64_t ts = sym.symbol_duration_us;
    const uint64_t tj = jam.jamming_period_us;
    const uint64_t span = tx.span_us();
    const uint32_t n = plan.size();

    JamReport rep;
    rep.symbols = span / ts;
    if (rep.symbols == 0) throw ConfigError("run_jammer: schedule shorter than one symbol");

    if (jam.strategy == JamStrategy::genie) {
        rep.errors = rep.symbols;
        rep.ser = 1.0;
        return rep;
    }

    // Dwell 0 starts `offset` before the schedule so boundaries fall at
    // phase + k*T_j.
    const uint64_t offset = jam.phase_us == 0 ? 0 : tj - jam.phase_us;
    const uint64_t n_dwells = (span + offset + tj - 1) / tj;
    Rng rng(seed);
    std::vector<uint32_t> dwell_channel(n_dwells);
    if (jam.strategy == JamStrategy::uniform_random) {
        for (auto& c : dwell_channel) c = static_cast<uint32_t>(rng.below(n));
    } else { // sweep
        const uint32_t start = static_cast<uint32_t>(rng.below(n));
        for (uint64_t d = 0; d < n_dwells; ++d)
            dwell_channel[d] = static_cast<uint32_t>((start + d) % n);
    }

    for (uint64_t s = 0; s < rep.symbols; ++s) {
        const uint64_t a = s * ts; // relative to the schedule start
        const uint64_t b = a + ts;
        const uint32_t f = tx.entries[a / tx.hop_interval_us].index;
        const uint64_t d0 = (a + offset) / tj;
        const uint64_t d1 = (b - 1 + offset) / tj;
        bool hit = false;
        for (uint64_t d = d0; d <= d1 && !hit; ++d) {
            const int64_t diff = static_cast<int64_t>(dwell_channel[d]) - static_cast<int64_t>(f);
            hit = diff >= -1 && diff <= 1;
        }
        if (hit) ++rep.errors;
    }
    rep.ser = static_cast<double>(rep.errors) / static_cast<double>(rep.symbols);
    return rep;
}

enum class SweptParam { detection_period_us, jamming_period_us };

inline const char* to_string(SweptParam p) {
    return p == SweptParam::detection_period_us ? "detection_period_us" : "jamming_period_us";
}

struct MetricRow {
    std::string swept_param;
    uint64_t value_us = 0;
    uint64_t hop_interval_us = 0;
    std::string metric;
    double mean = 0.0;
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    double peak_over_phase = 0.0;
    uint32_t trials = 0;
    uint64_t seed = 0;
    bool degenerate_ci = false; // in-memory flag; the CSV schema is fixed
    std::string method;         // oracle overlays only
};

struct MetricSeries {
    std::vector<MetricRow> rows;
};

inline void append_row_csv(std::string& out, const MetricRow& r, bool with_method) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%s,%.10g,%.10g,%.10g,%.10g,%u,%llu",
                  r.swept_param.c_str(), static_cast<unsigned long long>(r.value_us),
                  static_cast<unsigned long long>(r.hop_interval_us), r.metric.c_str(), r.mean,
                  r.ci95_low, r.ci95_high, r.peak_over_phase, r.trials,
                  static_cast<unsigned long long>(r.seed));
    out += buf;
    if (with_method) {
        out += ',';
        out += r.method;
    }
    out += '\n';
}

inline std::string metric_series_csv(const MetricSeries& s) {
    std::string out =
        "swept_param,value_us,hop_interval_us,metric,mean,ci95_low,ci95_high,peak_over_phase,"
        "trials,seed\n";
    for (const auto& r : s.rows) append_row_csv(out, r, false);
    return out;
}

inline std::string oracle_series_csv(const MetricSeries& s) {
    std::string out =
        "swept_param,value_us,hop_interval_us,metric,mean,ci95_low,ci95_high,peak_over_phase,"
        "trials,seed,method\n";
    for (const auto& r : s.rows) append_row_csv(out, r, true);
    return out;
}

struct SweepConfig {
    hopplan::ChannelTable table;
    uint64_t hop_interval_us = 5000;
    SymbolConfig sym{};
    uint32_t windows_per_trial = 1000;  // detection sweeps
    uint32_t symbols_per_trial = 10000; // jamming sweeps
    double eve_noise_power = 0.0;
    JamStrategy jam_strategy = JamStrategy::uniform_random;
    double sir_db = 20.0;
    std::optional<uint64_t> fixed_phase_us; // unset: fresh random phase per trial
    uint32_t parallel = 1;
};

namespace detail {

// One trial of one swept point; per-trial seeds are seed + trial_index so
// parallel and serial execution agree bit-for-bit.
inline double sweep_trial(const SweepConfig& cfg, SweptParam param, uint64_t value,
                          uint64_t trial_seed) {
    const uint64_t key_seed = derive_seed(trial_seed, 11);
    const uint64_t phase_seed = derive_seed(trial_seed, 12);
    const uint64_t run_seed = derive_seed(trial_seed, 13);
    Rng phase_rng(phase_seed);

    if (param == SweptParam::detection_period_us) {
        const uint64_t td = value;
        uint64_t phase = cfg.fixed_phase_us ? *cfg.fixed_phase_us : phase_rng.below(td);
        if (phase >= td) phase = 0;
        const uint64_t span = phase + static_cast<uint64_t>(cfg.windows_per_trial) * td;
        const uint64_t hops = (span + cfg.hop_interval_us - 1) / cfg.hop_interval_us + 1;
        const auto key = Rng(key_seed).bytes(hops);
        const auto sched = hopplan::derive_hop_schedule(key, cfg.table, cfg.hop_interval_us);
        EveConfig eve{td, phase, cfg.eve_noise_power};
        return run_eavesdropper(sched, cfg.table, eve, run_seed).probability;
    }

    const uint64_t tj = value;
    uint64_t phase = cfg.fixed_phase_us ? *cfg.fixed_phase_us : phase_rng.below(tj);
    if (phase >= tj) phase = 0;
    const uint64_t span = static_cast<uint64_t>(cfg.symbols_per_trial) * cfg.sym.symbol_duration_us;
    const uint64_t hops = (span + cfg.hop_interval_us - 1) / cfg.hop_interval_us + 1;
    const auto key = Rng(key_seed).bytes(hops);
    const auto sched = hopplan::derive_hop_schedule(key, cfg.table, cfg.hop_interval_us);
    JamConfig jam{tj, phase, cfg.jam_strategy, cfg.sir_db};
    return run_jammer(sched, cfg.table, jam, cfg.sym, run_seed).ser;
}

} // namespace detail

// Sweeps one adversary parameter across `values`; per value, `trials`
// independent runs with fresh key material. Rows keep the input order.
inline MetricSeries sweep_metric(const SweepConfig& cfg, SweptParam param,
                                 const std::vector<uint64_t>& values, uint32_t trials,
                                 uint64_t seed) {
    if (values.empty()) throw ConfigError("sweep_metric: values must be nonempty");
    if (trials < 1) throw ConfigError("sweep_metric: trials must be >= 1");
    if (param == SweptParam::jamming_period_us)
        cfg.sym.symbols_per_hop(cfg.hop_interval_us); // validate divisibility up front

    MetricSeries series;
    for (const uint64_t v : values) {
        std::vector<double> vals(trials);
        std::exception_ptr first_error;
        std::mutex err_mu;
        auto run_range = [&](uint32_t begin, uint32_t step) {
            for (uint32_t t = begin; t < trials; t += step) {
                try {
                    vals[t] = detail::sweep_trial(cfg, param, v, seed + t);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        const uint32_t workers = std::max<uint32_t>(1, std::min(cfg.parallel, trials));
        if (workers == 1) {
            run_range(0, 1);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (uint32_t w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
            for (auto& th : pool) th.join();
        }
        if (first_error) {
            try {
                std::rethrow_exception(first_error);
            } catch (const std::exception& e) {
                throw StageError("sweep", std::string(to_string(param)) + "=" +
                                              std::to_string(v) + ": " + e.what());
            }
        }

        const auto ci = mean_ci95(vals);
        MetricRow row;
        row.swept_param = to_string(param);
        row.value_us = v;
        row.hop_interval_us = cfg.hop_interval_us;
        row.metric = param == SweptParam::detection_period_us ? "detect_prob" : "ser";
        row.mean = ci.mean;
        row.ci95_low = ci.lo;
        row.ci95_high = ci.hi;
        row.peak_over_phase = *std::max_element(vals.begin(), vals.end());
        row.trials = trials;
        row.seed = seed;
        row.degenerate_ci = trials == 1;
        series.rows.push_back(std::move(row));
    }
    return series;
}

} // namespace qhop::airsim
