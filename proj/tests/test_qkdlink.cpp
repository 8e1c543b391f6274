#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "qhop/bits.hpp"
#include "qhop/qkdlink.hpp"
#include "qhop/rng.hpp"

using Catch::Approx;
using namespace qhop;
using namespace qhop::qkdlink;

namespace {

// Dense reference for the Toeplitz product: T[i][j] = t[i - j + n - 1].
std::vector<uint8_t> dense_toeplitz(const std::vector<uint8_t>& t,
                                    const std::vector<uint8_t>& x, uint64_t m) {
    const uint64_t n = x.size();
    std::vector<uint8_t> y(m, 0);
    for (uint64_t i = 0; i < m; ++i) {
        uint8_t acc = 0;
        for (uint64_t j = 0; j < n; ++j) acc ^= static_cast<uint8_t>(t[i - j + n - 1] & x[j]);
        y[i] = acc;
    }
    return y;
}

std::vector<uint8_t> random_bits(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<uint8_t> out(n);
    for (auto& b : out) b = static_cast<uint8_t>(rng.below(2));
    return out;
}

} // namespace

TEST_CASE("binary entropy endpoints and reference values", "[qkdlink]") {
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.5) == Approx(1.0).epsilon(1e-15));
    CHECK(binary_entropy(0.035) == Approx(0.218877726539011).epsilon(1e-12));
    CHECK(binary_entropy(0.25) == binary_entropy(0.75));
    CHECK_THROWS_AS(binary_entropy(-0.01), std::domain_error);
    CHECK_THROWS_AS(binary_entropy(1.01), std::domain_error);
}

TEST_CASE("exchange transmittance follows the fiber loss model", "[qkdlink]") {
    QkdLinkConfig cfg;
    cfg.n_pulses = 1000;
    auto ex = simulate_exchange(cfg);
    CHECK(ex.transmittance == Approx(0.31622776601683794).epsilon(1e-14));

    cfg.fiber_length_km = 0.0;
    ex = simulate_exchange(cfg);
    CHECK(ex.transmittance == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("exchange is reproducible and hits the expected rates", "[qkdlink]") {
    QkdLinkConfig cfg;
    cfg.n_pulses = 100000;
    cfg.seed = 7;
    const auto a = simulate_exchange(cfg);
    const auto b = simulate_exchange(cfg);
    CHECK(a.alice_symbols == b.alice_symbols);
    CHECK(a.detected == b.detected);
    CHECK(a.bob_bits == b.bob_bits);
    CHECK(a.detected_count == b.detected_count);

    REQUIRE(a.alice_symbols.size() == cfg.n_pulses);
    REQUIRE(a.detected.size() == cfg.n_pulses);
    REQUIRE(a.bob_bits.size() == cfg.n_pulses);

    // Detection is Bernoulli(0.3162) per pulse: mean 31623, sigma ~147.
    CHECK(a.detected_count > 31623 - 5 * 147);
    CHECK(a.detected_count < 31623 + 5 * 147);

    uint64_t decoys = 0;
    for (auto s : a.alice_symbols) {
        REQUIRE(s <= 2);
        if (s == 2) ++decoys;
    }
    // Decoy marking is Bernoulli(0.1): sigma ~95 over 1e5 pulses.
    CHECK(decoys > 10000 - 5 * 95);
    CHECK(decoys < 10000 + 5 * 95);

    // Bit flips among detected data pulses sit near flip_prob.
    uint64_t kept = 0, flipped = 0;
    for (size_t i = 0; i < a.alice_symbols.size(); ++i) {
        if (!a.detected[i] || a.alice_symbols[i] == 2) continue;
        ++kept;
        if (a.bob_bits[i] != a.alice_symbols[i]) ++flipped;
    }
    REQUIRE(kept > 20000);
    const double q = static_cast<double>(flipped) / static_cast<double>(kept);
    const double sigma = std::sqrt(0.035 * 0.965 / static_cast<double>(kept));
    CHECK(std::fabs(q - 0.035) < 5 * sigma);
}

TEST_CASE("link config validation rejects bad parameters", "[qkdlink]") {
    QkdLinkConfig cfg;
    cfg.n_pulses = 0;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
    cfg = {};
    cfg.flip_prob = 0.5;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
    cfg = {};
    cfg.detector_efficiency = 0.0;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
    cfg = {};
    cfg.detector_efficiency = 1.1;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
    cfg = {};
    cfg.decoy_fraction = -0.1;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
    cfg = {};
    cfg.decoy_fraction = 1.5;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
    cfg = {};
    cfg.loss_db_per_km = -1.0;
    CHECK_THROWS_AS(simulate_exchange(cfg), ConfigError);
}

TEST_CASE("sifting keeps detected data pulses and estimates the error rate", "[qkdlink]") {
    QkdLinkConfig cfg;
    cfg.n_pulses = 200000;
    cfg.flip_prob = 0.05;
    cfg.seed = 3;
    const auto ex = simulate_exchange(cfg);

    uint64_t kept = 0;
    for (size_t i = 0; i < ex.alice_symbols.size(); ++i)
        if (ex.detected[i] && ex.alice_symbols[i] != 2) ++kept;

    const auto s = sift_and_estimate(ex, 0.1, 9);
    CHECK(s.sifted_len == kept);
    CHECK(s.disclosed ==
          static_cast<uint64_t>(std::llround(static_cast<double>(kept) * 0.1)));
    CHECK(s.alice.size() == kept - s.disclosed);
    CHECK(s.bob.size() == s.alice.size());

    const double sigma = std::sqrt(0.05 * 0.95 / static_cast<double>(s.disclosed));
    CHECK(std::fabs(s.qber_estimate - 0.05) < 5 * sigma);

    // Same seeds, same outcome.
    const auto s2 = sift_and_estimate(ex, 0.1, 9);
    CHECK(s2.alice == s.alice);
    CHECK(s2.bob == s.bob);
    CHECK(s2.qber_estimate == s.qber_estimate);

    // A different disclosure seed picks a different sample.
    const auto s3 = sift_and_estimate(ex, 0.1, 10);
    CHECK(s3.alice != s.alice);

    CHECK_THROWS_AS(sift_and_estimate(ex, 0.0, 9), ConfigError);
    CHECK_THROWS_AS(sift_and_estimate(ex, 1.0, 9), ConfigError);
}

TEST_CASE("sifting needs at least two kept pulses", "[qkdlink]") {
    RawExchange ex;
    ex.alice_symbols = {0, 2, 1};
    ex.detected = {1, 1, 0};
    ex.bob_bits = {0, 0, 0};
    try {
        sift_and_estimate(ex, 0.1, 1);
        FAIL("expected a sift failure");
    } catch (const StageError& e) {
        CHECK(e.stage() == "sift");
    }
}

TEST_CASE("gf64 arithmetic matches hand-worked products", "[qkdlink]") {
    CHECK(gf64_mul(0, 0x1234) == 0);
    CHECK(gf64_mul(1, 0xdeadbeef) == 0xdeadbeef);
    CHECK(gf64_mul(0xdeadbeef, 1) == 0xdeadbeef);
    CHECK(gf64_mul(2, 3) == 6);
    // x^63 * x reduces by the pentanomial x^64 + x^4 + x^3 + x + 1.
    CHECK(gf64_mul(0x8000000000000000ull, 2) == 0x1B);
    Rng rng(99);
    for (int i = 0; i < 50; ++i) {
        const uint64_t a = rng.next_u64(), b = rng.next_u64();
        CHECK(gf64_mul(a, b) == gf64_mul(b, a));
    }
}

TEST_CASE("key digest separates unequal keys", "[qkdlink]") {
    auto bits = random_bits(1024, 5);
    const uint64_t d1 = key_digest(bits, 42);
    CHECK(key_digest(bits, 42) == d1);
    CHECK(key_digest(bits, 43) != d1);
    bits[517] ^= 1;
    CHECK(key_digest(bits, 42) != d1);
}

TEST_CASE("cascade with no errors leaks exactly the block parities", "[qkdlink]") {
    const auto alice = random_bits(1024, 21);
    const auto r = reconcile(alice, alice, 4, 16, 7);
    CHECK(r.verified);
    CHECK(r.bob == alice);
    // 64 + 32 + 16 + 8 top-block parities across the four passes.
    CHECK(r.leak_bits == 120);
}

TEST_CASE("cascade pinpoints a single error with a short binary search", "[qkdlink]") {
    const auto alice = random_bits(1024, 22);
    auto bob = alice;
    bob[317] ^= 1;
    const auto r = reconcile(alice, bob, 4, 16, 7);
    CHECK(r.verified);
    CHECK(r.bob == alice);
    CHECK(r.leak_bits == 124); // 120 parities + 4 halving steps on a 16-bit block
}

TEST_CASE("cascade corrects realistic error densities", "[qkdlink]") {
    const size_t n = 8192;
    const auto alice = random_bits(n, 23);
    auto bob = alice;
    Rng rng(24);
    uint64_t errs = 0;
    for (size_t i = 0; i < n; ++i)
        if (rng.bernoulli(0.035)) {
            bob[i] ^= 1;
            ++errs;
        }
    REQUIRE(errs > 200);
    const auto r = reconcile(alice, bob, 4, cascade_initial_block(0.035, n), 7);
    CHECK(r.verified);
    CHECK(r.bob == alice);
    const double per_bit = static_cast<double>(r.leak_bits) / static_cast<double>(n);
    CHECK(per_bit > 0.218877726539011);       // Shannon floor at q = 0.035
    CHECK(per_bit < 1.5 * 0.218877726539011); // practical ceiling
}

TEST_CASE("cascade leak grows once errors are present", "[qkdlink]") {
    const auto alice = random_bits(1024, 25);
    for (int e : {1, 2, 5, 20}) {
        auto bob = alice;
        for (int i = 0; i < e; ++i) bob[(i * 37 + 11) % 1024] ^= 1;
        const auto r = reconcile(alice, bob, 4, 16, 7);
        CHECK(r.verified);
        CHECK(r.bob == alice);
        CHECK(r.leak_bits > 120);
        CHECK(r.leak_bits <= 120 + static_cast<uint64_t>(e) * 40);
    }
}

TEST_CASE("reconcile validates its inputs", "[qkdlink]") {
    const auto a = random_bits(64, 1);
    auto b = random_bits(32, 2);
    CHECK_THROWS_AS(reconcile(a, b, 4, 8, 1), ConfigError);
    CHECK_THROWS_AS(reconcile({}, {}, 4, 8, 1), ConfigError);
    b = a;
    CHECK_THROWS_AS(reconcile(a, b, 0, 8, 1), ConfigError);
    CHECK_THROWS_AS(reconcile(a, b, 4, 0, 1), ConfigError);
    CHECK_THROWS_AS(reconcile(a, b, 4, 65, 1), ConfigError);
}

TEST_CASE("secret length accounting", "[qkdlink]") {
    CHECK(secret_length_bits(1024, 0.0, 0, 64) == 896);
    CHECK(secret_length_bits(1024, 0.035, 200, 64) == 471);
    CHECK(secret_length_bits(100, 0.035, 500, 64) == 0);
    CHECK(secret_length_bits(1000, 0.4999, 900, 64) == 0);
}

TEST_CASE("toeplitz multiply agrees with the dense definition", "[qkdlink]") {
    const std::vector<uint8_t> t = {1, 0, 1, 1, 0, 0, 1, 0};
    const std::vector<uint8_t> x = {1, 1, 0, 1, 0};
    CHECK(toeplitz_multiply(t, x, 4) == dense_toeplitz(t, x, 4));

    const auto tr = random_bits(33 + 70 - 1, 31);
    const auto xr = random_bits(70, 32);
    CHECK(toeplitz_multiply(tr, xr, 33) == dense_toeplitz(tr, xr, 33));

    // Linearity over GF(2).
    const auto yr = random_bits(70, 33);
    auto x_xor_y = xr;
    for (size_t i = 0; i < x_xor_y.size(); ++i) x_xor_y[i] ^= yr[i];
    auto lhs = toeplitz_multiply(tr, x_xor_y, 33);
    auto rhs = toeplitz_multiply(tr, xr, 33);
    const auto ty = toeplitz_multiply(tr, yr, 33);
    for (size_t i = 0; i < rhs.size(); ++i) rhs[i] ^= ty[i];
    CHECK(lhs == rhs);

    CHECK_THROWS_AS(toeplitz_multiply(t, x, 5), ConfigError);
}

TEST_CASE("privacy amplification is deterministic and shared", "[qkdlink]") {
    ReconciledKey k;
    k.bits = random_bits(2048, 41);
    k.leak_bits = 100;
    k.verified = true;

    const auto s1 = privacy_amplify(k, 0.035, 64, 77);
    const auto s2 = privacy_amplify(k, 0.035, 64, 77);
    CHECK(s1.octets == s2.octets);
    CHECK(s1.bit_len == secret_length_bits(2048, 0.035, 100, 64));
    CHECK(s1.octets.size() == (s1.bit_len + 7) / 8);
    CHECK(s1.whole_octets().size() == s1.bit_len / 8);

    const auto s3 = privacy_amplify(k, 0.035, 64, 78);
    CHECK(s3.octets != s1.octets);

    ReconciledKey bad = k;
    bad.verified = false;
    CHECK_THROWS_AS(privacy_amplify(bad, 0.035, 64, 77), StageError);
    CHECK_THROWS_AS(privacy_amplify(k, 0.6, 64, 77), std::domain_error);

    ReconciledKey drained = k;
    drained.leak_bits = 5000;
    CHECK_THROWS_AS(privacy_amplify(drained, 0.035, 64, 77), StageError);
}

TEST_CASE("cascade initial block sizing", "[qkdlink]") {
    CHECK(cascade_initial_block(0.035, 100000) == 21);
    CHECK(cascade_initial_block(0.25, 64000) == 8);
    CHECK(cascade_initial_block(0.5, 64000) == 8);
    CHECK(cascade_initial_block(1e-9, 4096) == 1024);
    CHECK(cascade_initial_block(0.035, 16) == 8);
}

TEST_CASE("full chain produces identical keys at both ends", "[qkdlink]") {
    ChainConfig cfg;
    cfg.link.n_pulses = 200000;
    cfg.link.seed = 11;
    const auto r = run_qkd_chain(cfg);
    CHECK(r.verified);
    REQUIRE_FALSE(r.alice_key.octets.empty());
    CHECK(r.alice_key.octets == r.bob_key.octets);
    CHECK(r.alice_key.bit_len == r.secret_len);
    CHECK(r.n_pulses == cfg.link.n_pulses);
    CHECK(r.detected > 0);
    CHECK(r.sifted_len > 0);
    CHECK(r.qber > 0.02);
    CHECK(r.qber < 0.05);
    CHECK(r.secret_fraction > 0.45);
    CHECK(r.secret_fraction < 0.60);
    CHECK(r.seconds == Approx(static_cast<double>(r.secret_len) / 2000.0).epsilon(1e-12));

    const auto r2 = run_qkd_chain(cfg);
    CHECK(r2.alice_key.octets == r.alice_key.octets);
}

TEST_CASE("chain refuses to reconcile an unusable error rate", "[qkdlink]") {
    ChainConfig cfg;
    cfg.link.n_pulses = 100000;
    cfg.link.flip_prob = 0.25;
    try {
        run_qkd_chain(cfg);
        FAIL("expected the chain to abort");
    } catch (const StageError& e) {
        CHECK(e.stage() == "reconcile");
        CHECK(std::string(e.what()).find("abort threshold") != std::string::npos);
    }
}

TEST_CASE("chain succeeds at elevated error rates below the threshold", "[qkdlink]") {
    ChainConfig cfg;
    cfg.link.n_pulses = 200000;
    cfg.link.flip_prob = 0.06;
    cfg.link.seed = 12;
    const auto r = run_qkd_chain(cfg);
    CHECK(r.verified);
    CHECK(r.alice_key.octets == r.bob_key.octets);
    CHECK(r.secret_fraction > 0.15);
    CHECK(r.secret_fraction < 0.45);
}

TEST_CASE("chain config validation", "[qkdlink]") {
    ChainConfig cfg;
    cfg.estimation_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.passes = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.target_key_rate_bps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.qber_abort_threshold = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.qber_abort_threshold = 0.51;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
