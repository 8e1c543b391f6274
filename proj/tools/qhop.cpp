#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qhop/airsim.hpp"
#include "qhop/bits.hpp"
#include "qhop/encoding.hpp"
#include "qhop/errors.hpp"
#include "qhop/experiment.hpp"
#include "qhop/hopplan.hpp"
#include "qhop/kms.hpp"
#include "qhop/kms_http.hpp"
#include "qhop/oracle.hpp"
#include "qhop/qkdlink.hpp"
#include "qhop/rng.hpp"

namespace {

std::atomic<int> g_signal{0};

void handle_signal(int sig) { g_signal.store(sig); }

std::vector<uint8_t> read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw qhop::ConfigError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content) || (out.flush(), !out))
        throw qhop::StageError("artifacts", "cannot write " + path);
}

std::vector<uint8_t> hex_to_bytes(const std::string& hex) {
    if (hex.size() % 2 != 0) throw qhop::ConfigError("hex string must have even length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw qhop::ConfigError("invalid hex digit");
    };
    std::vector<uint8_t> out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
    return out;
}

struct QkdSimArgs {
    qhop::qkdlink::ChainConfig chain{};
    std::string push_endpoint;
    bool as_json = false;
};

int run_qkd_sim(const QkdSimArgs& a) {
    const auto r = qhop::qkdlink::run_qkd_chain(a.chain);
    if (!a.push_endpoint.empty()) {
        std::string host;
        int port = 0;
        qhop::experiment::ExperimentConfig::parse_endpoint(a.push_endpoint, host, port);
        qhop::kms::RemoteDelivery remote(host, port);
        const auto ids = remote.store_keys({r.alice_key.whole_octets()});
        std::cout << "pushed " << ids.size() << " key records to " << a.push_endpoint << "\n";
    }
    if (a.as_json) {
        nlohmann::ordered_json j;
        j["n_pulses"] = r.n_pulses;
        j["detected"] = r.detected;
        j["sifted_len"] = r.sifted_len;
        j["qber"] = r.qber;
        j["leak_bits"] = r.leak_bits;
        j["secret_len"] = r.secret_len;
        j["seconds"] = r.seconds;
        j["secret_fraction"] = r.secret_fraction;
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("n_pulses        %llu\n", static_cast<unsigned long long>(r.n_pulses));
        std::printf("detected        %llu\n", static_cast<unsigned long long>(r.detected));
        std::printf("sifted_len      %llu\n", static_cast<unsigned long long>(r.sifted_len));
        std::printf("qber            %.6f\n", r.qber);
        std::printf("leak_bits       %llu\n", static_cast<unsigned long long>(r.leak_bits));
        std::printf("secret_len      %llu\n", static_cast<unsigned long long>(r.secret_len));
        std::printf("seconds         %.6f\n", r.seconds);
        std::printf("secret_fraction %.6f\n", r.secret_fraction);
    }
    return 0;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8085;
    uint32_t record_bits = 256;
    uint64_t max_keys = 4096;
    uint64_t uuid_seed = 0x5eed;
};

int run_kms_serve(const ServeArgs& a) {
    qhop::kms::KeyStore store(a.record_bits, a.max_keys, a.uuid_seed);
    qhop::kms::KmsHttpServer server(store, &std::cout);
    const int port = server.start(a.host, a.port);
    if (port <= 0) throw qhop::StageError("kms", "cannot bind " + a.host + ":" + std::to_string(a.port));
    std::cout << "kms listening on " << a.host << ":" << port << "\n" << std::flush;

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (g_signal.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    std::cout << "signal " << g_signal.load() << ", shutting down\n";
    server.stop();
    return 0;
}

struct KeySourceArgs {
    std::string key_hex;
    std::string key_file;
    uint64_t seed = 1;
    uint64_t n_bytes = 32;
};

std::vector<uint8_t> key_bytes_from(const KeySourceArgs& a) {
    if (!a.key_hex.empty()) return hex_to_bytes(a.key_hex);
    if (!a.key_file.empty()) return read_binary_file(a.key_file);
    if (a.n_bytes == 0) throw qhop::ConfigError("--bytes must be positive");
    return qhop::Rng(a.seed).bytes(a.n_bytes);
}

struct PatternArgs {
    KeySourceArgs key{};
    double base_hz = 2.4e9;
    double spacing_hz = 1.0e6;
    uint32_t n_channels = 128;
    std::string table_file;
    uint64_t hop_us = 5000;
    std::string out_path;
};

int run_pattern(const PatternArgs& a) {
    const auto table = a.table_file.empty()
                           ? qhop::hopplan::build_channel_table(a.base_hz, a.spacing_hz, a.n_channels)
                           : qhop::hopplan::load_channel_table_csv_file(a.table_file);
    if (256 % table.size() != 0)
        std::fprintf(stderr, "warning: 256 %% %u != 0; byte-to-channel bias ratio %.4f\n",
                     table.size(), qhop::hopplan::bias_ratio(table.size()));
    const auto key = key_bytes_from(a.key);
    const auto sched = qhop::hopplan::derive_hop_schedule(key, table, a.hop_us);
    std::ostringstream csv;
    qhop::hopplan::write_schedule_csv(sched, csv);
    if (a.out_path.empty()) {
        std::cout << csv.str();
    } else {
        write_text_file(a.out_path, csv.str());
        std::cout << "wrote " << a.out_path << "\n";
    }
    return 0;
}

struct SimulateArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed;
    std::optional<uint32_t> trials;
    std::optional<uint32_t> parallel;
};

int run_simulate(const SimulateArgs& a) {
    qhop::experiment::ExperimentConfig cfg;
    if (!a.config_path.empty())
        cfg = qhop::experiment::load_experiment_config_file(a.config_path);
    if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
    if (a.seed) cfg.master_seed = *a.seed;
    if (a.trials) cfg.trials = *a.trials;
    if (a.parallel) cfg.parallel = *a.parallel;
    (void)qhop::experiment::run_experiment(cfg, &std::cout);
    std::cout << "manifest: " << cfg.output_dir << "/manifest.json\n";
    return 0;
}

struct SweepArgs {
    std::string param = "detection";
    std::vector<uint64_t> values;
    uint64_t th = 5000;
    uint32_t n_channels = 128;
    uint64_t sym_us = 500;
    uint32_t trials = 10;
    uint32_t windows = 1000;
    uint32_t symbols = 10000;
    std::string strategy = "uniform_random";
    double noise = 0.0;
    std::optional<uint64_t> fixed_phase;
    uint64_t seed = 1;
    uint32_t parallel = 1;
    std::string out_path;
};

qhop::airsim::JamStrategy strategy_from(const std::string& s) {
    if (s == "uniform_random") return qhop::airsim::JamStrategy::uniform_random;
    if (s == "sweep") return qhop::airsim::JamStrategy::sweep;
    if (s == "genie") return qhop::airsim::JamStrategy::genie;
    throw qhop::ConfigError("strategy must be uniform_random, sweep, or genie");
}

int run_sweep(const SweepArgs& a) {
    qhop::airsim::SweepConfig sc;
    sc.table = qhop::hopplan::build_channel_table(2.4e9, 1.0e6, a.n_channels);
    sc.hop_interval_us = a.th;
    sc.sym.symbol_duration_us = a.sym_us;
    sc.windows_per_trial = a.windows;
    sc.symbols_per_trial = a.symbols;
    sc.eve_noise_power = a.noise;
    sc.jam_strategy = strategy_from(a.strategy);
    sc.fixed_phase_us = a.fixed_phase;
    sc.parallel = a.parallel;
    const auto param = a.param == "detection" ? qhop::airsim::SweptParam::detection_period_us
                                              : qhop::airsim::SweptParam::jamming_period_us;
    auto values = a.values;
    if (values.empty()) values = {500, 1000, 2500, 5000, 10000, 20000};
    if (a.trials == 1)
        std::fprintf(stderr, "warning: trials=1 gives a degenerate confidence interval\n");
    const auto series = qhop::airsim::sweep_metric(sc, param, values, a.trials, a.seed);
    const auto csv = qhop::airsim::metric_series_csv(series);
    if (a.out_path.empty()) {
        std::cout << csv;
    } else {
        write_text_file(a.out_path, csv);
        std::cout << "wrote " << a.out_path << "\n";
    }
    return 0;
}

struct OracleArgs {
    std::string param = "detection";
    std::vector<uint64_t> values;
    uint64_t th = 5000;
    uint32_t n_channels = 128;
    uint64_t sym_us = 500;
    std::string strategy = "uniform_random";
    uint64_t mc_trials = 100000;
    uint64_t seed = 1;
    std::string out_path;
};

int run_oracle(const OracleArgs& a) {
    auto values = a.values;
    if (values.empty()) values = {500, 1000, 2500, 5000, 10000, 20000};
    qhop::airsim::SymbolConfig sym{a.sym_us};
    qhop::airsim::MetricSeries series;
    for (size_t j = 0; j < values.size(); ++j) {
        const uint64_t seed = qhop::derive_seed(a.seed, j);
        if (a.param == "detection") {
            const auto pt = qhop::oracle::ideal_detection_probability(a.th, values[j], a.n_channels,
                                                                      a.mc_trials, seed);
            auto row = qhop::experiment::detail::ideal_row(pt, "detection_period_us", "detect_prob",
                                                           seed);
            if (pt.method == qhop::oracle::IdealMethod::monte_carlo)
                row.trials = static_cast<uint32_t>(a.mc_trials);
            series.rows.push_back(std::move(row));
        } else {
            const auto pt = qhop::oracle::ideal_jamming_ser(a.th, values[j], sym, a.n_channels,
                                                            strategy_from(a.strategy), a.mc_trials,
                                                            seed);
            auto row = qhop::experiment::detail::ideal_row(pt, "jamming_period_us", "ser", seed);
            if (pt.method == qhop::oracle::IdealMethod::monte_carlo)
                row.trials = static_cast<uint32_t>(a.mc_trials);
            series.rows.push_back(std::move(row));
        }
    }
    const auto csv = qhop::airsim::oracle_series_csv(series);
    if (a.out_path.empty()) {
        std::cout << csv;
    } else {
        write_text_file(a.out_path, csv);
        std::cout << "wrote " << a.out_path << "\n";
    }
    return 0;
}

struct RandomnessArgs {
    std::string key_hex;
    std::string key_file;
    bool from_qkd = false;
    uint64_t pulses = 100000;
    double flip = 0.035;
    uint64_t seed = 1;
    uint64_t max_bits = 10000;
    bool as_json = false;
};

int run_randomness(const RandomnessArgs& a) {
    std::vector<uint8_t> bits;
    if (!a.key_hex.empty()) {
        const auto bytes = hex_to_bytes(a.key_hex);
        bits = qhop::unpack_bits_msb(bytes, bytes.size() * 8);
    } else if (!a.key_file.empty()) {
        const auto bytes = read_binary_file(a.key_file);
        bits = qhop::unpack_bits_msb(bytes, bytes.size() * 8);
    } else if (a.from_qkd) {
        qhop::qkdlink::ChainConfig cc;
        cc.link.n_pulses = a.pulses;
        cc.link.flip_prob = a.flip;
        cc.link.seed = a.seed;
        const auto r = qhop::qkdlink::run_qkd_chain(cc);
        bits = qhop::unpack_bits_msb(r.alice_key.octets, r.alice_key.bit_len);
    } else {
        throw qhop::ConfigError("choose a bit source: --key-hex, --key-file, or --from-qkd");
    }
    if (a.max_bits > 0 && bits.size() > a.max_bits) bits.resize(a.max_bits);

    const auto rnd = qhop::oracle::randomness_suite(bits);
    const auto pred = qhop::oracle::linear_complexity_predictor(bits);
    if (a.as_json) {
        nlohmann::ordered_json j;
        j["length"] = pred.sequence_length;
        j["monobit_z"] = rnd.monobit_z;
        j["runs_z"] = rnd.runs_z;
        j["serial_corr"] = rnd.serial_corr;
        j["linear_complexity"] = pred.linear_complexity;
        j["next_symbol_accuracy"] = pred.next_symbol_accuracy;
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("length               %llu\n",
                    static_cast<unsigned long long>(pred.sequence_length));
        std::printf("monobit_z            %.4f\n", rnd.monobit_z);
        std::printf("runs_z               %.4f\n", rnd.runs_z);
        std::printf("serial_corr          %.6f\n", rnd.serial_corr);
        std::printf("linear_complexity    %u\n", pred.linear_complexity);
        std::printf("next_symbol_accuracy %.4f\n", pred.next_symbol_accuracy);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"QKD-keyed frequency-hopping testbed"};
    app.require_subcommand(1);

    QkdSimArgs qkd_args;
    auto* qkd_cmd = app.add_subcommand("qkd-sim", "Run the QKD chain and print a key summary");
    qkd_cmd->add_option("--pulses", qkd_args.chain.link.n_pulses, "Number of pulses");
    qkd_cmd->add_option("--fiber-km", qkd_args.chain.link.fiber_length_km, "Fiber length (km)");
    qkd_cmd->add_option("--loss-db-km", qkd_args.chain.link.loss_db_per_km, "Fiber loss (dB/km)");
    qkd_cmd->add_option("--efficiency", qkd_args.chain.link.detector_efficiency,
                        "Detector efficiency");
    qkd_cmd->add_option("--flip", qkd_args.chain.link.flip_prob, "Bit flip probability");
    qkd_cmd->add_option("--decoy", qkd_args.chain.link.decoy_fraction, "Decoy pulse fraction");
    qkd_cmd->add_option("--rate", qkd_args.chain.target_key_rate_bps, "Target key rate (bps)");
    qkd_cmd->add_option("--seed", qkd_args.chain.link.seed, "Link seed");
    qkd_cmd->add_option("--push", qkd_args.push_endpoint, "Push the secret key to a kms (host:port)");
    qkd_cmd->add_flag("--json", qkd_args.as_json, "JSON output");

    ServeArgs serve_args;
    auto* kms_cmd = app.add_subcommand("kms", "Key management service");
    kms_cmd->require_subcommand(1);
    auto* serve_cmd = kms_cmd->add_subcommand("serve", "Serve the ETSI-style delivery API");
    serve_cmd->add_option("--host", serve_args.host, "Listen host");
    serve_cmd->add_option("--port", serve_args.port, "Listen port (0 = ephemeral)");
    serve_cmd->add_option("--record-bits", serve_args.record_bits, "Key record size (bits)");
    serve_cmd->add_option("--max-keys", serve_args.max_keys, "Store capacity (records)");
    serve_cmd->add_option("--uuid-seed", serve_args.uuid_seed, "Key-ID stream seed");

    PatternArgs pat_args;
    auto* pat_cmd = app.add_subcommand("pattern", "Derive a hop schedule from key bytes");
    pat_cmd->add_option("--key-hex", pat_args.key.key_hex, "Key bytes as hex");
    pat_cmd->add_option("--key-file", pat_args.key.key_file, "Key bytes from a binary file");
    pat_cmd->add_option("--seed", pat_args.key.seed, "Seed for generated key bytes");
    pat_cmd->add_option("--bytes", pat_args.key.n_bytes, "Generated key length (bytes)");
    pat_cmd->add_option("--base", pat_args.base_hz, "Base frequency (Hz)");
    pat_cmd->add_option("--spacing", pat_args.spacing_hz, "Channel spacing (Hz)");
    pat_cmd->add_option("--channels", pat_args.n_channels, "Channel count");
    pat_cmd->add_option("--table", pat_args.table_file, "Channel table CSV");
    pat_cmd->add_option("--hop-us", pat_args.hop_us, "Hop interval (us)");
    pat_cmd->add_option("--out", pat_args.out_path, "Output CSV path (default stdout)");

    SimulateArgs sim_args;
    uint64_t sim_seed = 0;
    uint32_t sim_trials = 0, sim_parallel = 0;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the full experiment pipeline");
    sim_cmd->add_option("--config", sim_args.config_path, "Experiment config JSON");
    sim_cmd->add_option("--out", sim_args.out_dir, "Output directory override");
    auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "Master seed override");
    auto* sim_trials_opt = sim_cmd->add_option("--trials", sim_trials, "Trials override");
    auto* sim_par_opt = sim_cmd->add_option("--parallel", sim_parallel, "Worker threads");

    SweepArgs sweep_args;
    uint64_t sweep_phase = 0;
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one adversary parameter");
    sweep_cmd->add_option("--param", sweep_args.param, "detection or jamming")
        ->check(CLI::IsMember({"detection", "jamming"}));
    sweep_cmd->add_option("--values", sweep_args.values, "Swept values (us)")->delimiter(',');
    sweep_cmd->add_option("--th", sweep_args.th, "Hop interval (us)");
    sweep_cmd->add_option("--channels", sweep_args.n_channels, "Channel count");
    sweep_cmd->add_option("--sym-us", sweep_args.sym_us, "Symbol duration (us)");
    sweep_cmd->add_option("--trials", sweep_args.trials, "Trials per point");
    sweep_cmd->add_option("--windows", sweep_args.windows, "Windows per trial (detection)");
    sweep_cmd->add_option("--symbols", sweep_args.symbols, "Symbols per trial (jamming)");
    sweep_cmd->add_option("--strategy", sweep_args.strategy, "Jammer strategy")
        ->check(CLI::IsMember({"uniform_random", "sweep", "genie"}));
    sweep_cmd->add_option("--noise", sweep_args.noise, "Eavesdropper noise power");
    auto* phase_opt = sweep_cmd->add_option("--fixed-phase", sweep_phase,
                                            "Fix the adversary phase (us) instead of randomizing");
    sweep_cmd->add_option("--seed", sweep_args.seed, "Sweep seed");
    sweep_cmd->add_option("--parallel", sweep_args.parallel, "Worker threads");
    sweep_cmd->add_option("--out", sweep_args.out_path, "Output CSV path (default stdout)");

    OracleArgs oracle_args;
    auto* oracle_cmd = app.add_subcommand("oracle", "Emit the ideal reference curve");
    oracle_cmd->add_option("--param", oracle_args.param, "detection or jamming")
        ->check(CLI::IsMember({"detection", "jamming"}));
    oracle_cmd->add_option("--values", oracle_args.values, "Swept values (us)")->delimiter(',');
    oracle_cmd->add_option("--th", oracle_args.th, "Hop interval (us)");
    oracle_cmd->add_option("--channels", oracle_args.n_channels, "Channel count");
    oracle_cmd->add_option("--sym-us", oracle_args.sym_us, "Symbol duration (us)");
    oracle_cmd->add_option("--strategy", oracle_args.strategy, "Jammer strategy")
        ->check(CLI::IsMember({"uniform_random", "sweep"}));
    oracle_cmd->add_option("--mc-trials", oracle_args.mc_trials, "Monte Carlo trials");
    oracle_cmd->add_option("--seed", oracle_args.seed, "Monte Carlo seed");
    oracle_cmd->add_option("--out", oracle_args.out_path, "Output CSV path (default stdout)");

    RandomnessArgs rnd_args;
    auto* rnd_cmd = app.add_subcommand("randomness", "Score a bit stream for hop-key use");
    rnd_cmd->add_option("--key-hex", rnd_args.key_hex, "Bits from hex bytes");
    rnd_cmd->add_option("--key-file", rnd_args.key_file, "Bits from a binary file");
    rnd_cmd->add_flag("--from-qkd", rnd_args.from_qkd, "Bits from a fresh QKD chain run");
    rnd_cmd->add_option("--pulses", rnd_args.pulses, "QKD pulses (with --from-qkd)");
    rnd_cmd->add_option("--flip", rnd_args.flip, "QKD flip probability (with --from-qkd)");
    rnd_cmd->add_option("--seed", rnd_args.seed, "QKD seed (with --from-qkd)");
    rnd_cmd->add_option("--max-bits", rnd_args.max_bits, "Cap on scored bits (0 = no cap)");
    rnd_cmd->add_flag("--json", rnd_args.as_json, "JSON output");

    std::string validate_path;
    auto* val_cmd = app.add_subcommand("validate", "Check an experiment config file");
    val_cmd->add_option("--config", validate_path, "Experiment config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (qkd_cmd->parsed()) return run_qkd_sim(qkd_args);
        if (serve_cmd->parsed()) return run_kms_serve(serve_args);
        if (pat_cmd->parsed()) return run_pattern(pat_args);
        if (sim_cmd->parsed()) {
            if (sim_seed_opt->count()) sim_args.seed = sim_seed;
            if (sim_trials_opt->count()) sim_args.trials = sim_trials;
            if (sim_par_opt->count()) sim_args.parallel = sim_parallel;
            return run_simulate(sim_args);
        }
        if (sweep_cmd->parsed()) {
            if (phase_opt->count()) sweep_args.fixed_phase = sweep_phase;
            return run_sweep(sweep_args);
        }
        if (oracle_cmd->parsed()) return run_oracle(oracle_args);
        if (rnd_cmd->parsed()) return run_randomness(rnd_args);
        if (val_cmd->parsed()) {
            (void)qhop::experiment::load_experiment_config_file(validate_path);
            std::cout << "config ok: " << validate_path << "\n";
            return 0;
        }
    } catch (const qhop::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const qhop::StageError& e) {
        std::fprintf(stderr, "stage failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
