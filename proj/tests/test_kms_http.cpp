#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "qhop/encoding.hpp"
#include "qhop/kms.hpp"
#include "qhop/kms_http.hpp"

using namespace qhop;
using namespace qhop::kms;
using nlohmann::json;

namespace {

struct ServerFixture {
    KeyStore store;
    std::ostringstream log;
    KmsHttpServer server;
    int port;

    explicit ServerFixture(uint32_t bits = 256, uint64_t max = 100)
        : store(bits, max, 7), server(store, &log), port(server.start("127.0.0.1", 0)) {}
    ~ServerFixture() { server.stop(); }

    httplib::Client client() { return httplib::Client("127.0.0.1", port); }
};

std::vector<uint8_t> counting_bytes(size_t n, uint8_t start = 0) {
    std::vector<uint8_t> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<uint8_t>(start + i);
    return out;
}

} // namespace

TEST_CASE("enc keys arrive as base64 with their ids", "[kms-http]") {
    ServerFixture fx;
    fx.store.store_keys({counting_bytes(32, 5)});

    auto cli = fx.client();
    const auto res = cli.Get("/api/v1/keys/rx/enc_keys?number=1&size=256");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto body = json::parse(res->body);
    REQUIRE(body.at("keys").size() == 1);
    const auto& k = body["keys"][0];
    CHECK(k.at("key_ID").get<std::string>().size() == 36);
    CHECK(base64_decode(k.at("key").get<std::string>()) == counting_bytes(32, 5));
}

TEST_CASE("an empty store reports insufficient keys verbatim", "[kms-http]") {
    ServerFixture fx;
    auto cli = fx.client();
    const auto res = cli.Get("/api/v1/keys/rx/enc_keys?number=1&size=256");
    REQUIRE(res);
    CHECK(res->status == 503);
    CHECK(res->body == R"({"message":"insufficient keys"})");
}

TEST_CASE("bad enc parameters map to 400", "[kms-http]") {
    ServerFixture fx;
    fx.store.store_keys({counting_bytes(32)});
    auto cli = fx.client();
    const auto res = cli.Get("/api/v1/keys/rx/enc_keys?number=1&size=128");
    REQUIRE(res);
    CHECK(res->status == 400);
    const auto body = json::parse(res->body);
    CHECK(body.at("message").get<std::string>().find("size") != std::string::npos);
}

TEST_CASE("consumed and unknown ids report the documented message", "[kms-http]") {
    ServerFixture fx;
    fx.store.store_keys({counting_bytes(32)});
    auto cli = fx.client();

    const auto bogus = cli.Post("/api/v1/keys/tx/dec_keys",
                                R"({"key_IDs":[{"key_ID":"no-such-id"}]})", "application/json");
    REQUIRE(bogus);
    CHECK(bogus->status == 400);
    CHECK(bogus->body == R"({"message":"unknown or consumed key_ID"})");

    const auto enc = cli.Get("/api/v1/keys/rx/enc_keys?number=1&size=256");
    REQUIRE(enc);
    REQUIRE(enc->status == 200);
    const std::string id =
        json::parse(enc->body).at("keys")[0].at("key_ID").get<std::string>();
    const std::string dec_body =
        json{{"key_IDs", json::array({json{{"key_ID", id}}})}}.dump();

    const auto dec = cli.Post("/api/v1/keys/tx/dec_keys", dec_body, "application/json");
    REQUIRE(dec);
    CHECK(dec->status == 200);

    const auto again = cli.Post("/api/v1/keys/tx/dec_keys", dec_body, "application/json");
    REQUIRE(again);
    CHECK(again->status == 400);
    CHECK(again->body == R"({"message":"unknown or consumed key_ID"})");
}

TEST_CASE("status endpoint reports store counters", "[kms-http]") {
    ServerFixture fx(256, 42);
    fx.store.store_keys({counting_bytes(64)});
    auto cli = fx.client();
    const auto res = cli.Get("/api/v1/keys/rx/status");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto body = json::parse(res->body);
    CHECK(body.at("stored_key_count").get<uint64_t>() == 2);
    CHECK(body.at("key_size").get<uint32_t>() == 256);
    CHECK(body.at("max_key_count").get<uint64_t>() == 42);
}

TEST_CASE("internal push feeds the store and reports capacity", "[kms-http]") {
    ServerFixture fx(256, 3);
    auto cli = fx.client();

    const std::string push =
        json{{"keys", json::array({base64_encode(counting_bytes(64))})}}.dump();
    const auto ok = cli.Post("/internal/v1/keys", push, "application/json");
    REQUIRE(ok);
    REQUIRE(ok->status == 200);
    CHECK(json::parse(ok->body).at("key_IDs").size() == 2);
    CHECK(fx.store.get_status("rx").stored_key_count == 2);

    const auto full = cli.Post("/internal/v1/keys", push, "application/json");
    REQUIRE(full);
    CHECK(full->status == 503);
    CHECK(fx.store.get_status("rx").stored_key_count == 2);
}

TEST_CASE("typed client round trips against the server", "[kms-http]") {
    ServerFixture fx;
    KmsHttpClient cli("127.0.0.1", fx.port);

    const auto ids = cli.store_keys({counting_bytes(64, 9)});
    REQUIRE(ids.size() == 2);

    auto st = cli.get_status("rx");
    CHECK(st.stored_key_count == 2);
    CHECK(st.key_size_bits == 256);

    const auto enc = cli.get_enc_keys("rx", 2, 256);
    REQUIRE(enc.keys.size() == 2);
    CHECK(enc.keys[0].key_id == ids[0]);
    CHECK(enc.keys[0].octets == counting_bytes(32, 9));
    CHECK(enc.keys[1].octets == counting_bytes(32, 41));

    const auto dec = cli.get_dec_keys("tx", {ids[0], ids[1]});
    REQUIRE(dec.keys.size() == 2);
    CHECK(dec.keys[0].octets == enc.keys[0].octets);
    CHECK(dec.keys[1].octets == enc.keys[1].octets);

    CHECK_THROWS_AS(cli.get_dec_keys("tx", {ids[0]}), UnknownKey);
    CHECK_THROWS_AS(cli.get_enc_keys("rx", 1, 256), InsufficientKeys);
    CHECK_THROWS_AS(cli.get_enc_keys("rx", 1, 128), InvalidRequest);
}

TEST_CASE("remote delivery adapter matches the store contents", "[kms-http]") {
    ServerFixture fx;
    RemoteDelivery remote("127.0.0.1", fx.port);

    const auto ids = remote.store_keys({counting_bytes(32, 200)});
    REQUIRE(ids.size() == 1);
    const auto enc = remote.get_enc_keys("rx", 1, 256);
    REQUIRE(enc.keys.size() == 1);
    CHECK(enc.keys[0].octets == counting_bytes(32, 200));
    const auto dec = remote.get_dec_keys("tx", {enc.keys[0].key_id});
    CHECK(dec.keys[0].octets == enc.keys[0].octets);
    CHECK(remote.get_status("rx").stored_key_count == 0);
}

TEST_CASE("delivery log lines carry direction, key id and sae id", "[kms-http]") {
    ServerFixture fx;
    fx.store.store_keys({counting_bytes(32)});
    KmsHttpClient cli("127.0.0.1", fx.port);

    const auto enc = cli.get_enc_keys("alpha", 1, 256);
    cli.get_dec_keys("beta", {enc.keys[0].key_id});

    const std::string text = fx.log.str();
    CHECK(text.find("enc key_ID=" + enc.keys[0].key_id + " sae_id=alpha") != std::string::npos);
    CHECK(text.find("dec key_ID=" + enc.keys[0].key_id + " sae_id=beta") != std::string::npos);
}
