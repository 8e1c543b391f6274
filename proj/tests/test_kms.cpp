#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cctype>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "qhop/kms.hpp"

using namespace qhop;
using namespace qhop::kms;

namespace {

std::vector<uint8_t> counting_bytes(size_t n, uint8_t start = 0) {
    std::vector<uint8_t> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<uint8_t>(start + i);
    return out;
}

bool looks_like_uuid_v4(const std::string& id) {
    if (id.size() != 36) return false;
    for (size_t i = 0; i < id.size(); ++i) {
        if (i == 8 || i == 13 || i == 18 || i == 23) {
            if (id[i] != '-') return false;
        } else if (!std::isxdigit(static_cast<unsigned char>(id[i])) ||
                   std::isupper(static_cast<unsigned char>(id[i]))) {
            return false;
        }
    }
    if (id[14] != '4') return false;
    return id[19] == '8' || id[19] == '9' || id[19] == 'a' || id[19] == 'b';
}

} // namespace

TEST_CASE("store slices incoming material into fixed records", "[kms]") {
    KeyStore store(256, 100, 1);
    const auto ids = store.store_keys({counting_bytes(80)});
    CHECK(ids.size() == 2); // 80 bytes -> two 32-byte records, 16 bytes dropped

    const auto st = store.get_status("rx");
    CHECK(st.stored_key_count == 2);
    CHECK(st.key_size_bits == 256);
    CHECK(st.max_key_count == 100);

    CHECK(store.store_keys({}).empty());
    CHECK_THROWS_AS(store.store_keys({{}}), InvalidRequest);
}

TEST_CASE("material shorter than one record stores nothing", "[kms]") {
    KeyStore store(256, 100, 1);
    CHECK(store.store_keys({counting_bytes(31)}).empty());
    CHECK(store.get_status("rx").stored_key_count == 0);
}

TEST_CASE("capacity is enforced atomically", "[kms]") {
    KeyStore store(256, 3, 1);
    CHECK(store.store_keys({counting_bytes(64)}).size() == 2);
    CHECK_THROWS_AS(store.store_keys({counting_bytes(64)}), CapacityExceeded);
    // The failed call must not have stored a partial batch.
    CHECK(store.get_status("rx").stored_key_count == 2);
    CHECK(store.store_keys({counting_bytes(32)}).size() == 1);
}

TEST_CASE("delivery preserves octets and fifo order", "[kms]") {
    KeyStore store(256, 100, 1);
    const auto id_a = store.store_keys({counting_bytes(32, 0)});
    const auto id_b = store.store_keys({counting_bytes(32, 100)});
    REQUIRE(id_a.size() == 1);
    REQUIRE(id_b.size() == 1);

    const auto enc = store.get_enc_keys("rx", 2, 256);
    REQUIRE(enc.keys.size() == 2);
    CHECK(enc.keys[0].key_id == id_a[0]);
    CHECK(enc.keys[1].key_id == id_b[0]);
    CHECK(enc.keys[0].octets == counting_bytes(32, 0));
    CHECK(enc.keys[1].octets == counting_bytes(32, 100));

    const auto dec = store.get_dec_keys("tx", {id_a[0], id_b[0]});
    REQUIRE(dec.keys.size() == 2);
    CHECK(dec.keys[0].octets == counting_bytes(32, 0));
    CHECK(dec.keys[1].octets == counting_bytes(32, 100));

    CHECK_THROWS_AS(store.get_dec_keys("tx", {id_a[0]}), UnknownKey);
}

TEST_CASE("enc request validation", "[kms]") {
    KeyStore store(256, 100, 1);
    store.store_keys({counting_bytes(32)});
    CHECK_THROWS_AS(store.get_enc_keys("rx", 0, 256), InvalidRequest);
    CHECK_THROWS_AS(store.get_enc_keys("rx", 1, 128), InvalidRequest);
    CHECK_THROWS_AS(store.get_enc_keys("rx", 2, 256), InsufficientKeys);
    CHECK(store.get_enc_keys("rx", 1, 256).keys.size() == 1);
}

TEST_CASE("dec rejects unknown ids atomically", "[kms]") {
    KeyStore store(256, 100, 1);
    const auto ids = store.store_keys({counting_bytes(32)});
    REQUIRE(ids.size() == 1);

    // A key never delivered for encryption is not yet claimable.
    CHECK_THROWS_AS(store.get_dec_keys("tx", ids), UnknownKey);

    const auto enc = store.get_enc_keys("rx", 1, 256);
    const std::string id = enc.keys[0].key_id;

    CHECK_THROWS_AS(store.get_dec_keys("tx", {id, "not-a-key"}), UnknownKey);
    // The valid id must have survived the failed batch.
    const auto dec = store.get_dec_keys("tx", {id});
    CHECK(dec.keys.size() == 1);
    CHECK_THROWS_AS(store.get_dec_keys("tx", {id}), UnknownKey);

    CHECK_THROWS_AS(store.get_dec_keys("tx", {}), InvalidRequest);
}

TEST_CASE("key ids are well-formed v4 uuids and unique", "[kms]") {
    KeyStore store(256, 100, 9);
    const auto ids = store.store_keys({counting_bytes(50 * 32)});
    REQUIRE(ids.size() == 50);
    std::set<std::string> seen;
    for (const auto& id : ids) {
        CHECK(looks_like_uuid_v4(id));
        seen.insert(id);
    }
    CHECK(seen.size() == ids.size());
}

TEST_CASE("uuid sequence is reproducible per seed", "[kms]") {
    KeyStore a(256, 10, 5);
    KeyStore b(256, 10, 5);
    KeyStore c(256, 10, 6);
    CHECK(a.store_keys({counting_bytes(64)}) == b.store_keys({counting_bytes(64)}));
    CHECK(a.store_keys({counting_bytes(32)}) != c.store_keys({counting_bytes(32)}));
}

TEST_CASE("concurrent single-key requests get disjoint keys", "[kms]") {
    KeyStore store(256, 100, 1);
    store.store_keys({counting_bytes(10 * 32)});

    std::mutex mu;
    std::set<std::string> claimed;
    std::vector<std::thread> pool;
    for (int t = 0; t < 10; ++t)
        pool.emplace_back([&] {
            const auto c = store.get_enc_keys("rx", 1, 256);
            std::lock_guard<std::mutex> lk(mu);
            claimed.insert(c.keys[0].key_id);
        });
    for (auto& th : pool) th.join();

    CHECK(claimed.size() == 10);
    CHECK(store.get_status("rx").stored_key_count == 0);
}
