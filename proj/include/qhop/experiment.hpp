#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qhop/airsim.hpp"
#include "qhop/errors.hpp"
#include "qhop/hopplan.hpp"
#include "qhop/kms.hpp"
#include "qhop/kms_http.hpp"
#include "qhop/oracle.hpp"
#include "qhop/qkdlink.hpp"
#include "qhop/rng.hpp"
#include "qhop/sha256.hpp"

namespace qhop::experiment {

struct KmsSettings {
    uint32_t record_size_bits = 256;
    uint64_t max_key_count = 4096;
    std::string endpoint; // "host:port"; empty = in-process store
};

struct ChannelSettings {
    double base_freq_hz = 2.4e9;
    double spacing_hz = 1.0e6;
    uint32_t n_channels = 128;
    std::string table_file; // nonempty = load instead of generating
};

struct EveSettings {
    std::vector<uint64_t> detection_period_us = {500, 1000, 2500, 5000, 10000, 20000};
    double noise_power = 0.0;
};

struct JamSettings {
    std::vector<uint64_t> jamming_period_us = {100, 250, 500, 1000, 2500, 5000, 10000, 20000};
    airsim::JamStrategy strategy = airsim::JamStrategy::uniform_random;
    double sir_db = 20.0;
};

// Everything a run needs; (config, master_seed) fully determines all
// artifacts. Stage seeds fan out as derive_seed(master_seed, counter):
//   1            qkd link
//   5            kms uuid stream (in-process store)
//   0x100 + i    detection sweep at hop interval i
//   0x200 + i    jamming sweep at hop interval i
//   0x300 + i    detection oracle at hop interval i (then , j per point)
//   0x400 + i    jamming oracle at hop interval i (then , j per point)
struct ExperimentConfig {
    qkdlink::ChainConfig qkd;
    KmsSettings kms;
    ChannelSettings channel;
    std::vector<uint64_t> hop_interval_us = {5000, 1000};
    EveSettings eve;
    JamSettings jam;
    airsim::SymbolConfig sym;
    uint32_t trials = 10;
    uint32_t windows_per_trial = 1000;
    uint32_t symbols_per_trial = 10000;
    uint64_t mc_trials = 100000;
    uint64_t baseline_span_us = 1'000'000;
    uint32_t parallel = 1;
    uint64_t master_seed = 1;
    std::string output_dir = "out";

    void validate() const {
        qkd.validate();
        if (kms.record_size_bits == 0 || kms.record_size_bits % 8 != 0)
            throw ConfigError("kms.record_size_bits must be a positive multiple of 8");
        if (kms.max_key_count == 0) throw ConfigError("kms.max_key_count must be positive");
        if (channel.table_file.empty()) {
            if (channel.n_channels < 2 || channel.n_channels > 256)
                throw ConfigError("channel.n_channels must be in [2, 256]");
            if (channel.base_freq_hz <= 0.0 || channel.spacing_hz <= 0.0)
                throw ConfigError("channel frequencies must be positive");
        }
        if (hop_interval_us.empty()) throw ConfigError("hop.hop_interval_us must be nonempty");
        for (size_t i = 0; i < hop_interval_us.size(); ++i) {
            sym.symbols_per_hop(hop_interval_us[i]); // positivity + divisibility
            for (size_t j = i + 1; j < hop_interval_us.size(); ++j)
                if (hop_interval_us[i] == hop_interval_us[j])
                    throw ConfigError("hop.hop_interval_us values must be distinct");
        }
        if (eve.detection_period_us.empty())
            throw ConfigError("eve.detection_period_us must be nonempty");
        for (const auto v : eve.detection_period_us)
            if (v == 0) throw ConfigError("eve.detection_period_us values must be positive");
        if (eve.noise_power < 0.0) throw ConfigError("eve.noise_power must be nonnegative");
        if (jam.jamming_period_us.empty())
            throw ConfigError("jam.jamming_period_us must be nonempty");
        for (const auto v : jam.jamming_period_us)
            if (v == 0) throw ConfigError("jam.jamming_period_us values must be positive");
        if (jam.strategy == airsim::JamStrategy::genie)
            throw ConfigError("jam.strategy genie is a simulator test hook, not an experiment mode");
        if (trials == 0) throw ConfigError("trials must be positive");
        if (windows_per_trial == 0) throw ConfigError("windows_per_trial must be positive");
        if (symbols_per_trial == 0) throw ConfigError("symbols_per_trial must be positive");
        if (mc_trials < 10000 || mc_trials > 0xFFFFFFFFull)
            throw ConfigError("mc_trials must be in [10^4, 2^32)");
        if (baseline_span_us == 0) throw ConfigError("baseline_span_us must be positive");
        if (parallel == 0) throw ConfigError("parallel must be positive");
        if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
        if (!kms.endpoint.empty()) {
            std::string host;
            int port = 0;
            parse_endpoint(kms.endpoint, host, port);
        }
    }

    static void parse_endpoint(const std::string& ep, std::string& host, int& port) {
        const auto colon = ep.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == ep.size())
            throw ConfigError("kms.endpoint must look like host:port");
        host = ep.substr(0, colon);
        try {
            port = std::stoi(ep.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("kms.endpoint port is not a number");
        }
        if (port < 1 || port > 65535) throw ConfigError("kms.endpoint port out of range");
    }
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& obj, const char* where,
                       std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(std::string("config: ") + where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError(std::string("config: unknown key '") + key + "' in " + where);
    }
}

template <typename T>
inline void read_field(const json& obj, const char* key, T& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
}

inline void read_strategy(const json& obj, const char* key, airsim::JamStrategy& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    std::string s;
    try {
        s = it->get<std::string>();
    } catch (const json::exception&) {
        throw ConfigError("config: jam.strategy must be a string");
    }
    if (s == "uniform_random")
        out = airsim::JamStrategy::uniform_random;
    else if (s == "sweep")
        out = airsim::JamStrategy::sweep;
    else if (s == "genie")
        out = airsim::JamStrategy::genie;
    else
        throw ConfigError("config: jam.strategy must be uniform_random, sweep, or genie");
}

} // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::read_field;
    ExperimentConfig cfg;
    check_keys(j, "the top level",
               {"qkd", "kms", "channel", "hop", "eve", "jam", "sym", "trials", "windows_per_trial",
                "symbols_per_trial", "mc_trials", "baseline_span_us", "parallel", "master_seed",
                "output_dir"});
    if (j.contains("qkd")) {
        const auto& q = j.at("qkd");
        check_keys(q, "qkd",
                   {"n_pulses", "fiber_length_km", "loss_db_per_km", "detector_efficiency",
                    "flip_prob", "decoy_fraction", "estimation_fraction", "passes",
                    "epsilon_exponent", "target_key_rate_bps", "qber_abort_threshold"});
        read_field(q, "n_pulses", cfg.qkd.link.n_pulses);
        read_field(q, "fiber_length_km", cfg.qkd.link.fiber_length_km);
        read_field(q, "loss_db_per_km", cfg.qkd.link.loss_db_per_km);
        read_field(q, "detector_efficiency", cfg.qkd.link.detector_efficiency);
        read_field(q, "flip_prob", cfg.qkd.link.flip_prob);
        read_field(q, "decoy_fraction", cfg.qkd.link.decoy_fraction);
        read_field(q, "estimation_fraction", cfg.qkd.estimation_fraction);
        read_field(q, "passes", cfg.qkd.passes);
        read_field(q, "epsilon_exponent", cfg.qkd.epsilon_exponent);
        read_field(q, "target_key_rate_bps", cfg.qkd.target_key_rate_bps);
        read_field(q, "qber_abort_threshold", cfg.qkd.qber_abort_threshold);
    }
    if (j.contains("kms")) {
        const auto& k = j.at("kms");
        check_keys(k, "kms", {"record_size_bits", "max_key_count", "endpoint"});
        read_field(k, "record_size_bits", cfg.kms.record_size_bits);
        read_field(k, "max_key_count", cfg.kms.max_key_count);
        read_field(k, "endpoint", cfg.kms.endpoint);
    }
    if (j.contains("channel")) {
        const auto& c = j.at("channel");
        check_keys(c, "channel", {"base_freq_hz", "spacing_hz", "n_channels", "table_file"});
        read_field(c, "base_freq_hz", cfg.channel.base_freq_hz);
        read_field(c, "spacing_hz", cfg.channel.spacing_hz);
        read_field(c, "n_channels", cfg.channel.n_channels);
        read_field(c, "table_file", cfg.channel.table_file);
    }
    if (j.contains("hop")) {
        const auto& h = j.at("hop");
        check_keys(h, "hop", {"hop_interval_us"});
        read_field(h, "hop_interval_us", cfg.hop_interval_us);
    }
    if (j.contains("eve")) {
        const auto& e = j.at("eve");
        check_keys(e, "eve", {"detection_period_us", "noise_power"});
        read_field(e, "detection_period_us", cfg.eve.detection_period_us);
        read_field(e, "noise_power", cfg.eve.noise_power);
    }
    if (j.contains("jam")) {
        const auto& ja = j.at("jam");
        check_keys(ja, "jam", {"jamming_period_us", "strategy", "sir_db"});
        read_field(ja, "jamming_period_us", cfg.jam.jamming_period_us);
        detail::read_strategy(ja, "strategy", cfg.jam.strategy);
        read_field(ja, "sir_db", cfg.jam.sir_db);
    }
    if (j.contains("sym")) {
        const auto& s = j.at("sym");
        check_keys(s, "sym", {"symbol_duration_us"});
        read_field(s, "symbol_duration_us", cfg.sym.symbol_duration_us);
    }
    read_field(j, "trials", cfg.trials);
    read_field(j, "windows_per_trial", cfg.windows_per_trial);
    read_field(j, "symbols_per_trial", cfg.symbols_per_trial);
    read_field(j, "mc_trials", cfg.mc_trials);
    read_field(j, "baseline_span_us", cfg.baseline_span_us);
    read_field(j, "parallel", cfg.parallel);
    read_field(j, "master_seed", cfg.master_seed);
    read_field(j, "output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return experiment_config_from_json(j);
}

inline ExperimentConfig load_experiment_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_experiment_config(text);
}

struct ManifestEntry {
    std::string path; // relative to output_dir
    uint64_t bytes = 0;
    std::string sha256;
};

struct Manifest {
    uint64_t master_seed = 0;
    std::vector<ManifestEntry> files;
};

inline std::string manifest_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["master_seed"] = m.master_seed;
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : m.files) {
        nlohmann::ordered_json e;
        e["path"] = f.path;
        e["bytes"] = f.bytes;
        e["sha256"] = f.sha256;
        j["files"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

struct ExperimentResult {
    qkdlink::ChainResult chain;
    std::vector<std::pair<uint64_t, double>> baseline_ser; // per hop interval
    Manifest manifest;
};

namespace detail {

inline void write_artifact(const std::string& dir, const std::string& name,
                           const std::string& content, Manifest& manifest) {
    const auto full = std::filesystem::path(dir) / name;
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content) || (out.flush(), !out))
        throw StageError("artifacts", "cannot write " + full.string());
    manifest.files.push_back({name, content.size(), sha256_hex(content)});
}

inline airsim::MetricRow ideal_row(const oracle::IdealPoint& pt, const char* param,
                                   const char* metric, uint64_t seed) {
    airsim::MetricRow row;
    row.swept_param = param;
    row.value_us = pt.value_us;
    row.hop_interval_us = pt.hop_interval_us;
    row.metric = metric;
    row.mean = pt.mean;
    row.ci95_low = pt.mean - 1.96 * pt.std_error;
    row.ci95_high = pt.mean + 1.96 * pt.std_error;
    row.peak_over_phase = pt.peak_over_phase;
    const bool mc = pt.method == oracle::IdealMethod::monte_carlo;
    row.trials = 0;
    row.seed = mc ? seed : 0;
    row.method = oracle::to_string(pt.method);
    return row;
}

} // namespace detail

// One full pipeline run: qkd chain -> kms delivery -> schedules at both ends
// -> sync check -> clean baseline -> adversary sweeps -> ideal overlays ->
// summary + manifest. Any stage failure surfaces as StageError(stage, cause).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    auto note = [&](const char* stage, const std::string& msg) {
        if (log) *log << "[" << stage << "] " << msg << "\n";
    };

    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw StageError("artifacts", "cannot create " + cfg.output_dir + ": " + ec.message());

    const auto table = cfg.channel.table_file.empty()
                           ? hopplan::build_channel_table(cfg.channel.base_freq_hz,
                                                          cfg.channel.spacing_hz,
                                                          cfg.channel.n_channels)
                           : hopplan::load_channel_table_csv_file(cfg.channel.table_file);
    const uint32_t n = table.size();

    ExperimentResult result;

    qkdlink::ChainConfig chain_cfg = cfg.qkd;
    chain_cfg.link.seed = derive_seed(cfg.master_seed, 1);
    result.chain = qkdlink::run_qkd_chain(chain_cfg);
    note("qkd", "secret_len=" + std::to_string(result.chain.secret_len) +
                    " qber=" + std::to_string(result.chain.qber));

    // Key material for the baseline schedules travels through the KMS like
    // any consumer: master stores and fetches, slave resolves the same IDs.
    uint64_t max_hops = 0;
    for (const auto th : cfg.hop_interval_us)
        max_hops = std::max(max_hops, (cfg.baseline_span_us + th - 1) / th);
    std::vector<uint8_t> tx_bytes, rx_bytes;
    try {
        std::unique_ptr<kms::KeyDelivery> delivery;
        if (cfg.kms.endpoint.empty()) {
            delivery = std::make_unique<kms::LocalDelivery>(cfg.kms.record_size_bits,
                                                            cfg.kms.max_key_count,
                                                            derive_seed(cfg.master_seed, 5));
        } else {
            std::string host;
            int port = 0;
            ExperimentConfig::parse_endpoint(cfg.kms.endpoint, host, port);
            delivery = std::make_unique<kms::RemoteDelivery>(host, port);
        }
        const size_t record_bytes = cfg.kms.record_size_bits / 8;
        const uint64_t number = (max_hops + record_bytes - 1) / record_bytes;
        delivery->store_keys({result.chain.alice_key.whole_octets()});
        const auto enc = delivery->get_enc_keys("qhop-rx", number, cfg.kms.record_size_bits);
        std::vector<std::string> ids;
        for (const auto& e : enc.keys) {
            ids.push_back(e.key_id);
            tx_bytes.insert(tx_bytes.end(), e.octets.begin(), e.octets.end());
        }
        const auto dec = delivery->get_dec_keys("qhop-tx", ids);
        for (const auto& e : dec.keys)
            rx_bytes.insert(rx_bytes.end(), e.octets.begin(), e.octets.end());
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("kms", e.what());
    }
    if (tx_bytes != rx_bytes)
        throw StageError("kms", "delivered key material differs between the two ends");
    if (tx_bytes.size() < max_hops)
        throw StageError("kms", "delivered key material shorter than the baseline schedule");
    note("kms", std::to_string(tx_bytes.size()) + " bytes delivered to both ends");

    Manifest manifest;
    manifest.master_seed = cfg.master_seed;
    airsim::MetricSeries ideal_det, ideal_jam;

    for (size_t i = 0; i < cfg.hop_interval_us.size(); ++i) {
        const uint64_t th = cfg.hop_interval_us[i];
        const uint64_t hops = (cfg.baseline_span_us + th - 1) / th;
        const std::vector<uint8_t> tx_slice(tx_bytes.begin(), tx_bytes.begin() + hops);
        const std::vector<uint8_t> rx_slice(rx_bytes.begin(), rx_bytes.begin() + hops);
        const auto tx_sched = hopplan::derive_hop_schedule(tx_slice, table, th);
        const auto rx_sched = hopplan::derive_hop_schedule(rx_slice, table, th);

        const auto sync = hopplan::verify_sync(tx_sched, rx_sched);
        if (!sync.full_match())
            throw StageError("sync", "schedules diverge at entry " +
                                         std::to_string(sync.divergences.front().entry) + " (" +
                                         sync.divergences.front().field + ")");

        const auto base = airsim::run_link(tx_sched, rx_sched, cfg.sym);
        if (base.errors != 0)
            throw StageError("baseline", "synchronized link lost " +
                                             std::to_string(base.errors) + " symbols");
        result.baseline_ser.emplace_back(th, base.ser);
        note("baseline", "hop_interval_us=" + std::to_string(th) + " ser=0 over " +
                             std::to_string(base.symbols) + " symbols");

        airsim::SweepConfig sc;
        sc.table = table;
        sc.hop_interval_us = th;
        sc.sym = cfg.sym;
        sc.windows_per_trial = cfg.windows_per_trial;
        sc.symbols_per_trial = cfg.symbols_per_trial;
        sc.eve_noise_power = cfg.eve.noise_power;
        sc.jam_strategy = cfg.jam.strategy;
        sc.sir_db = cfg.jam.sir_db;
        sc.parallel = cfg.parallel;

        const auto det = airsim::sweep_metric(sc, airsim::SweptParam::detection_period_us,
                                              cfg.eve.detection_period_us, cfg.trials,
                                              derive_seed(cfg.master_seed, 0x100 + i));
        detail::write_artifact(cfg.output_dir, "detection_th" + std::to_string(th) + ".csv",
                               airsim::metric_series_csv(det), manifest);

        auto sc_jam = sc;
        sc_jam.fixed_phase_us = 0; // aligned dwells; the ideal overlay enumerates this case
        const auto jam = airsim::sweep_metric(sc_jam, airsim::SweptParam::jamming_period_us,
                                              cfg.jam.jamming_period_us, cfg.trials,
                                              derive_seed(cfg.master_seed, 0x200 + i));
        detail::write_artifact(cfg.output_dir, "jamming_th" + std::to_string(th) + ".csv",
                               airsim::metric_series_csv(jam), manifest);
        note("sweep", "hop_interval_us=" + std::to_string(th) + " done");

        const uint64_t det_oracle_seed = derive_seed(cfg.master_seed, 0x300 + i);
        for (size_t jdx = 0; jdx < cfg.eve.detection_period_us.size(); ++jdx) {
            const uint64_t seed = derive_seed(det_oracle_seed, jdx);
            const auto pt = oracle::ideal_detection_probability(
                th, cfg.eve.detection_period_us[jdx], n, cfg.mc_trials, seed);
            auto row = detail::ideal_row(pt, "detection_period_us", "detect_prob", seed);
            if (pt.method == oracle::IdealMethod::monte_carlo)
                row.trials = static_cast<uint32_t>(cfg.mc_trials);
            ideal_det.rows.push_back(std::move(row));
        }
        const uint64_t jam_oracle_seed = derive_seed(cfg.master_seed, 0x400 + i);
        for (size_t jdx = 0; jdx < cfg.jam.jamming_period_us.size(); ++jdx) {
            const uint64_t seed = derive_seed(jam_oracle_seed, jdx);
            const auto pt = oracle::ideal_jamming_ser(th, cfg.jam.jamming_period_us[jdx], cfg.sym,
                                                      n, cfg.jam.strategy, cfg.mc_trials, seed);
            auto row = detail::ideal_row(pt, "jamming_period_us", "ser", seed);
            if (pt.method == oracle::IdealMethod::monte_carlo)
                row.trials = static_cast<uint32_t>(cfg.mc_trials);
            ideal_jam.rows.push_back(std::move(row));
        }
    }

    detail::write_artifact(cfg.output_dir, "ideal_detection.csv", airsim::oracle_series_csv(ideal_det),
                           manifest);
    detail::write_artifact(cfg.output_dir, "ideal_jamming.csv", airsim::oracle_series_csv(ideal_jam),
                           manifest);

    {
        nlohmann::ordered_json j;
        j["n_pulses"] = result.chain.n_pulses;
        j["detected"] = result.chain.detected;
        j["sifted_len"] = result.chain.sifted_len;
        j["qber"] = result.chain.qber;
        j["leak_bits"] = result.chain.leak_bits;
        j["secret_len"] = result.chain.secret_len;
        j["seconds"] = result.chain.seconds;
        detail::write_artifact(cfg.output_dir, "qkd_summary.json", j.dump(2) + "\n", manifest);
    }

    std::sort(manifest.files.begin(), manifest.files.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    const auto mjson = manifest_json(manifest);
    const auto mpath = std::filesystem::path(cfg.output_dir) / "manifest.json";
    std::ofstream out(mpath, std::ios::binary | std::ios::trunc);
    if (!out || !(out << mjson) || (out.flush(), !out))
        throw StageError("artifacts", "cannot write " + mpath.string());
    note("artifacts", std::to_string(manifest.files.size()) + " files + manifest in " +
                          cfg.output_dir);

    result.manifest = std::move(manifest);
    return result;
}

} // namespace qhop::experiment
