#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "qhop/encoding.hpp"
#include "qhop/errors.hpp"
#include "qhop/kms.hpp"

namespace qhop::kms {

using wire_json = nlohmann::ordered_json;

inline std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ETSI GS QKD 014 v1 endpoint shapes over plain HTTP (TLS out of scope):
//   GET  /api/v1/keys/{slave_sae_id}/enc_keys?number=N&size=S
//   POST /api/v1/keys/{master_sae_id}/dec_keys   {"key_IDs":[{"key_ID":...}]}
//   GET  /api/v1/keys/{slave_sae_id}/status
// plus one non-ETSI plumbing endpoint so a QKD run can feed the store:
//   POST /internal/v1/keys   {"keys":["<base64>", ...]} -> {"key_IDs":[...]}
class KmsHttpServer {
public:
    explicit KmsHttpServer(KeyStore& store, std::ostream* log = nullptr)
        : store_(store), log_(log) {
        install_routes();
    }

    ~KmsHttpServer() { stop(); }

    // Binds immediately (any free port when port == 0) and serves on a
    // background thread. Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        host_ = host;
        if (port == 0) {
            port_ = srv_.bind_to_any_port(host.c_str());
            if (port_ < 0) throw StageError("kms", "cannot bind " + host);
        } else {
            if (!srv_.bind_to_port(host.c_str(), port))
                throw StageError("kms", "cannot bind " + host + ":" + std::to_string(port));
            port_ = port;
        }
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
        while (!srv_.is_running() && !failed_.load()) std::this_thread::yield();
        return port_;
    }

    int port() const { return port_; }
    std::string base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

    void stop() {
        if (thread_.joinable()) {
            srv_.stop();
            thread_.join();
        }
    }

private:
    static void reply(httplib::Response& res, int status, const wire_json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static wire_json container_json(const KeyContainer& c) {
        wire_json keys = wire_json::array();
        for (const auto& k : c.keys)
            keys.push_back(wire_json{{"key_ID", k.key_id}, {"key", base64_encode(k.octets)}});
        return wire_json{{"keys", std::move(keys)}};
    }

    void log_delivery(const char* dir, const KeyContainer& c, const std::string& sae_id) {
        if (!log_) return;
        const std::string ts = iso8601_now();
        for (const auto& k : c.keys)
            (*log_) << ts << " " << dir << " key_ID=" << k.key_id << " sae_id=" << sae_id << "\n";
        log_->flush();
    }

    void install_routes() {
        srv_.Get(R"(/api/v1/keys/([^/]+)/enc_keys)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                     const std::string sae = req.matches[1];
                     try {
                         uint64_t number = 1;
                         uint32_t size = store_.record_size_bits();
                         if (req.has_param("number")) number = std::stoull(req.get_param_value("number"));
                         if (req.has_param("size")) size = static_cast<uint32_t>(std::stoul(req.get_param_value("size")));
                         const auto c = store_.get_enc_keys(sae, number, size);
                         log_delivery("enc", c, sae);
                         reply(res, 200, container_json(c));
                     } catch (const InsufficientKeys& e) {
                         reply(res, 503, wire_json{{"message", e.what()}});
                     } catch (const std::exception& e) {
                         reply(res, 400, wire_json{{"message", e.what()}});
                     }
                 });

        srv_.Post(R"(/api/v1/keys/([^/]+)/dec_keys)",
                  [this](const httplib::Request& req, httplib::Response& res) {
                      const std::string sae = req.matches[1];
                      try {
                          const auto body = wire_json::parse(req.body);
                          std::vector<std::string> ids;
                          for (const auto& item : body.at("key_IDs"))
                              ids.push_back(item.at("key_ID").get<std::string>());
                          const auto c = store_.get_dec_keys(sae, ids);
                          log_delivery("dec", c, sae);
                          reply(res, 200, container_json(c));
                      } catch (const UnknownKey& e) {
                          reply(res, 400, wire_json{{"message", e.what()}});
                      } catch (const std::exception& e) {
                          reply(res, 400, wire_json{{"message", e.what()}});
                      }
                  });

        srv_.Get(R"(/api/v1/keys/([^/]+)/status)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                     const auto st = store_.get_status(req.matches[1]);
                     reply(res, 200,
                           wire_json{{"stored_key_count", st.stored_key_count},
                                     {"key_size", st.key_size_bits},
                                     {"max_key_count", st.max_key_count}});
                 });

        srv_.Post("/internal/v1/keys",
                  [this](const httplib::Request& req, httplib::Response& res) {
                      try {
                          const auto body = wire_json::parse(req.body);
                          std::vector<std::vector<uint8_t>> keys;
                          for (const auto& k : body.at("keys"))
                              keys.push_back(base64_decode(k.get<std::string>()));
                          const auto ids = store_.store_keys(keys);
                          reply(res, 200, wire_json{{"key_IDs", ids}});
                      } catch (const CapacityExceeded& e) {
                          reply(res, 503, wire_json{{"message", e.what()}});
                      } catch (const std::exception& e) {
                          reply(res, 400, wire_json{{"message", e.what()}});
                      }
                  });
    }

    KeyStore& store_;
    std::ostream* log_;
    httplib::Server srv_;
    std::thread thread_;
    std::string host_ = "127.0.0.1";
    int port_ = -1;
    std::atomic<bool> failed_{false};
};

// Client side of the same wire contract; HTTP errors map back onto the
// KeyStore exception types.
class KmsHttpClient {
public:
    KmsHttpClient(const std::string& host, int port) : cli_(host, port) {
        cli_.set_connection_timeout(5, 0);
        cli_.set_read_timeout(30, 0);
    }

    KeyContainer get_enc_keys(const std::string& slave_sae_id, uint64_t number, uint32_t size_bits) {
        const std::string path = "/api/v1/keys/" + slave_sae_id +
                                 "/enc_keys?number=" + std::to_string(number) +
                                 "&size=" + std::to_string(size_bits);
        auto res = cli_.Get(path.c_str());
        return parse_container("enc_keys", res);
    }

    KeyContainer get_dec_keys(const std::string& master_sae_id,
                              const std::vector<std::string>& key_ids) {
        wire_json ids = wire_json::array();
        for (const auto& id : key_ids) ids.push_back(wire_json{{"key_ID", id}});
        const std::string body = wire_json{{"key_IDs", std::move(ids)}}.dump();
        auto res = cli_.Post(("/api/v1/keys/" + master_sae_id + "/dec_keys").c_str(), body,
                             "application/json");
        return parse_container("dec_keys", res);
    }

    StatusRecord get_status(const std::string& slave_sae_id) {
        auto res = cli_.Get(("/api/v1/keys/" + slave_sae_id + "/status").c_str());
        if (!res) throw StageError("kms", "status: transport failure");
        const auto j = wire_json::parse(res->body);
        StatusRecord st;
        st.stored_key_count = j.at("stored_key_count").get<uint64_t>();
        st.key_size_bits = j.at("key_size").get<uint32_t>();
        st.max_key_count = j.at("max_key_count").get<uint64_t>();
        return st;
    }

    std::vector<std::string> store_keys(const std::vector<std::vector<uint8_t>>& keys) {
        wire_json arr = wire_json::array();
        for (const auto& k : keys) arr.push_back(base64_encode(k));
        auto res = cli_.Post("/internal/v1/keys", wire_json{{"keys", std::move(arr)}}.dump(),
                             "application/json");
        if (!res) throw StageError("kms", "store_keys: transport failure");
        if (res->status == 503) throw CapacityExceeded();
        if (res->status != 200) throw InvalidRequest(message_of(res->body));
        const auto j = wire_json::parse(res->body);
        return j.at("key_IDs").get<std::vector<std::string>>();
    }

private:
    static std::string message_of(const std::string& body) {
        try {
            return wire_json::parse(body).at("message").get<std::string>();
        } catch (const std::exception&) {
            return body;
        }
    }

    KeyContainer parse_container(const char* op, const httplib::Result& res) {
        if (!res) throw StageError("kms", std::string(op) + ": transport failure");
        if (res->status == 503) throw InsufficientKeys(message_of(res->body));
        if (res->status == 400) {
            const std::string msg = message_of(res->body);
            if (msg == "unknown or consumed key_ID") throw UnknownKey(msg);
            throw InvalidRequest(msg);
        }
        if (res->status != 200)
            throw StageError("kms", std::string(op) + ": unexpected status " +
                                        std::to_string(res->status));
        const auto j = wire_json::parse(res->body);
        KeyContainer c;
        for (const auto& item : j.at("keys"))
            c.keys.push_back({item.at("key_ID").get<std::string>(),
                              base64_decode(item.at("key").get<std::string>())});
        return c;
    }

    httplib::Client cli_;
};

class RemoteDelivery final : public KeyDelivery {
public:
    RemoteDelivery(const std::string& host, int port) : cli_(host, port) {}

    std::vector<std::string> store_keys(const std::vector<std::vector<uint8_t>>& keys) override {
        return cli_.store_keys(keys);
    }
    KeyContainer get_enc_keys(const std::string& s, uint64_t n, uint32_t bits) override {
        return cli_.get_enc_keys(s, n, bits);
    }
    KeyContainer get_dec_keys(const std::string& m, const std::vector<std::string>& ids) override {
        return cli_.get_dec_keys(m, ids);
    }
    StatusRecord get_status(const std::string& s) override { return cli_.get_status(s); }

private:
    KmsHttpClient cli_;
};

} // namespace qhop::kms
