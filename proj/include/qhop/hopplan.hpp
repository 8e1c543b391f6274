#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qhop/errors.hpp"

namespace qhop::hopplan {

struct ChannelTable {
    std::vector<double> freqs_hz;

    uint32_t size() const { return static_cast<uint32_t>(freqs_hz.size()); }

    double freq_of(uint32_t index) const {
        if (index >= freqs_hz.size()) throw ConfigError("channel index out of range");
        return freqs_hz[index];
    }

    uint32_t nearest_index(double freq_hz) const {
        uint32_t best = 0;
        double best_d = std::fabs(freqs_hz[0] - freq_hz);
        for (uint32_t i = 1; i < freqs_hz.size(); ++i) {
            const double d = std::fabs(freqs_hz[i] - freq_hz);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }
};

inline ChannelTable build_channel_table(double base_freq_hz, double spacing_hz, uint32_t n_channels) {
    if (n_channels < 2 || n_channels > 256)
        throw ConfigError("n_channels must be in [2, 256]");
    if (base_freq_hz <= 0.0) throw ConfigError("base_freq_hz must be positive");
    if (spacing_hz <= 0.0) throw ConfigError("spacing_hz must be positive");
    ChannelTable t;
    t.freqs_hz.resize(n_channels);
    for (uint32_t i = 0; i < n_channels; ++i)
        t.freqs_hz[i] = base_freq_hz + static_cast<double>(i) * spacing_hz;
    return t;
}

// Key bytes map onto indices as byte mod N; when N does not divide 256 the
// induced distribution is uneven by this factor.
inline double bias_ratio(uint32_t n_channels) {
    if (n_channels == 0) throw ConfigError("n_channels must be positive");
    const uint32_t hi = (256 + n_channels - 1) / n_channels;
    const uint32_t lo = 256 / n_channels;
    return static_cast<double>(hi) / static_cast<double>(lo);
}

inline void write_channel_table_csv(const ChannelTable& table, std::ostream& out) {
    out << "index,freq_hz\n";
    char buf[64];
    for (uint32_t i = 0; i < table.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%u,%.6f\n", i, table.freqs_hz[i]);
        out << buf;
    }
}

inline ChannelTable load_channel_table_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "index,freq_hz")
        throw ConfigError("channel table: expected header index,freq_hz");
    ChannelTable t;
    uint32_t expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("channel table: malformed row");
        uint32_t idx = 0;
        double freq = 0.0;
        try {
            idx = static_cast<uint32_t>(std::stoul(line.substr(0, comma)));
            freq = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ConfigError("channel table: malformed row: " + line);
        }
        if (idx != expect)
            throw ConfigError("channel table: indices must be contiguous from 0");
        ++expect;
        t.freqs_hz.push_back(freq);
    }
    if (t.size() < 2 || t.size() > 256)
        throw ConfigError("channel table: need between 2 and 256 rows");
    return t;
}

inline ChannelTable load_channel_table_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open channel table: " + path);
    return load_channel_table_csv(in);
}

struct HopEntry {
    uint64_t start_us = 0;
    uint64_t duration_us = 0;
    uint32_t index = 0;
    double freq_hz = 0.0;
};

struct HopSchedule {
    std::vector<HopEntry> entries;
    uint64_t hop_interval_us = 0;

    uint64_t start_us() const { return entries.empty() ? 0 : entries.front().start_us; }
    uint64_t end_us() const {
        return entries.empty() ? 0 : entries.back().start_us + entries.back().duration_us;
    }
    uint64_t span_us() const { return end_us() - start_us(); }

    // Channel in effect at instant t (entries are contiguous and uniform).
    uint32_t channel_at(uint64_t t_us) const {
        if (entries.empty() || t_us < start_us() || t_us >= end_us())
            throw ConfigError("channel_at: instant outside schedule span");
        const size_t k = static_cast<size_t>((t_us - start_us()) / hop_interval_us);
        return entries[k].index;
    }
};

inline HopSchedule derive_hop_schedule(const std::vector<uint8_t>& key_bytes,
                                       const ChannelTable& table,
                                       uint64_t hop_interval_us,
                                       uint64_t start_us = 0) {
    if (key_bytes.empty()) throw ConfigError("derive_hop_schedule: key must be nonempty");
    if (hop_interval_us == 0) throw ConfigError("derive_hop_schedule: hop interval must be positive");
    if (table.size() < 2) throw ConfigError("derive_hop_schedule: channel table too small");
    HopSchedule s;
    s.hop_interval_us = hop_interval_us;
    s.entries.resize(key_bytes.size());
    for (size_t k = 0; k < key_bytes.size(); ++k) {
        const uint32_t idx = key_bytes[k] % table.size();
        s.entries[k] = {start_us + k * hop_interval_us, hop_interval_us, idx, table.freqs_hz[idx]};
    }
    return s;
}

inline void write_schedule_csv(const HopSchedule& s, std::ostream& out) {
    out << "start_us,duration_us,index,freq_hz\n";
    char buf[96];
    for (const auto& e : s.entries) {
        std::snprintf(buf, sizeof buf, "%llu,%llu,%u,%.6f\n",
                      static_cast<unsigned long long>(e.start_us),
                      static_cast<unsigned long long>(e.duration_us), e.index, e.freq_hz);
        out << buf;
    }
}

struct SyncDivergence {
    uint64_t entry = 0;
    std::string field;
};

struct SyncReport {
    uint64_t match_count = 0;
    std::vector<SyncDivergence> divergences;

    bool full_match() const { return divergences.empty(); }
};

// Field-level comparison of two schedules; a length mismatch is itself a
// divergence at the first missing entry.
inline SyncReport verify_sync(const HopSchedule& a, const HopSchedule& b) {
    SyncReport r;
    const size_t n = std::min(a.entries.size(), b.entries.size());
    for (size_t k = 0; k < n; ++k) {
        const auto& ea = a.entries[k];
        const auto& eb = b.entries[k];
        bool diverged = false;
        if (ea.start_us != eb.start_us) {
            r.divergences.push_back({k, "start_us"});
            diverged = true;
        }
        if (ea.duration_us != eb.duration_us) {
            r.divergences.push_back({k, "duration_us"});
            diverged = true;
        }
        if (ea.index != eb.index) {
            r.divergences.push_back({k, "index"});
            diverged = true;
        }
        if (!diverged) ++r.match_count;
    }
    if (a.entries.size() != b.entries.size())
        r.divergences.push_back({n, "length"});
    return r;
}

} // namespace qhop::hopplan
