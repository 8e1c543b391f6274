#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "qhop/encoding.hpp"
#include "qhop/errors.hpp"
#include "qhop/rng.hpp"

namespace qhop::kms {

enum class KeyState { stored, delivered_enc, consumed };

struct KeyRecord {
    std::string key_id;
    std::vector<uint8_t> octets;
    KeyState state = KeyState::stored;
    uint64_t created_at = 0; // monotonic sequence number
};

struct KeyEntry {
    std::string key_id;
    std::vector<uint8_t> octets;
};

struct KeyContainer {
    std::vector<KeyEntry> keys;
};

struct StatusRecord {
    uint64_t stored_key_count = 0;
    uint32_t key_size_bits = 0;
    uint64_t max_key_count = 0;
};

// In-memory key store with ETSI-014 delivery semantics: records move
// stored -> delivered_enc -> consumed, FIFO by creation, all transitions
// atomic under a single lock (linearizable; clients are request/response).
class KeyStore {
public:
    explicit KeyStore(uint32_t record_size_bits = 256, uint64_t max_key_count = 4096,
                      uint64_t uuid_seed = 0x5eedu)
        : record_size_bits_(record_size_bits), max_key_count_(max_key_count), rng_(uuid_seed) {
        if (record_size_bits_ == 0 || record_size_bits_ % 8 != 0)
            throw ConfigError("record_size_bits must be a positive multiple of 8");
        if (max_key_count_ == 0) throw ConfigError("max_key_count must be positive");
    }

    uint32_t record_size_bits() const { return record_size_bits_; }

    // Slices each key into record-size chunks; a trailing remainder shorter
    // than one record is discarded.
    std::vector<std::string> store_keys(const std::vector<std::vector<uint8_t>>& keys) {
        std::lock_guard<std::mutex> lk(mu_);
        const size_t record_bytes = record_size_bits_ / 8;
        uint64_t incoming = 0;
        for (const auto& k : keys) {
            if (k.empty()) throw InvalidRequest("store_keys: empty key");
            incoming += k.size() / record_bytes;
        }
        if (stored_count_ + incoming > max_key_count_)
            throw CapacityExceeded();
        std::vector<std::string> ids;
        ids.reserve(incoming);
        for (const auto& k : keys) {
            for (size_t off = 0; off + record_bytes <= k.size(); off += record_bytes) {
                KeyRecord rec;
                rec.key_id = fresh_uuid();
                rec.octets.assign(k.begin() + off, k.begin() + off + record_bytes);
                rec.state = KeyState::stored;
                rec.created_at = next_seq_++;
                by_id_[rec.key_id] = records_.size();
                ids.push_back(rec.key_id);
                records_.push_back(std::move(rec));
                ++stored_count_;
            }
        }
        return ids;
    }

    KeyContainer get_enc_keys(const std::string& slave_sae_id, uint64_t number, uint32_t size_bits) {
        (void)slave_sae_id; // no per-SAE auth in this tool
        std::lock_guard<std::mutex> lk(mu_);
        if (number < 1) throw InvalidRequest("number must be >= 1");
        if (size_bits != record_size_bits_)
            throw InvalidRequest("requested size does not match stored record size");
        if (stored_count_ < number) throw InsufficientKeys();
        KeyContainer out;
        out.keys.reserve(number);
        size_t i = first_stored_hint_;
        while (out.keys.size() < number) {
            while (i < records_.size() && records_[i].state != KeyState::stored) ++i;
            KeyRecord& rec = records_[i];
            rec.state = KeyState::delivered_enc;
            --stored_count_;
            out.keys.push_back({rec.key_id, rec.octets});
            ++i;
        }
        first_stored_hint_ = i;
        return out;
    }

    // All-or-nothing: any unknown or non-delivered ID fails the whole call
    // with no state change.
    KeyContainer get_dec_keys(const std::string& master_sae_id,
                              const std::vector<std::string>& key_ids) {
        (void)master_sae_id;
        std::lock_guard<std::mutex> lk(mu_);
        if (key_ids.empty()) throw InvalidRequest("key_IDs must be nonempty");
        std::vector<size_t> idx;
        idx.reserve(key_ids.size());
        for (const auto& id : key_ids) {
            const auto it = by_id_.find(id);
            if (it == by_id_.end() || records_[it->second].state != KeyState::delivered_enc)
                throw UnknownKey();
            idx.push_back(it->second);
        }
        KeyContainer out;
        out.keys.reserve(idx.size());
        for (const size_t i : idx) {
            records_[i].state = KeyState::consumed;
            out.keys.push_back({records_[i].key_id, records_[i].octets});
        }
        return out;
    }

    StatusRecord get_status(const std::string& slave_sae_id) const {
        (void)slave_sae_id;
        std::lock_guard<std::mutex> lk(mu_);
        return {stored_count_, record_size_bits_, max_key_count_};
    }

private:
    // RFC-4122 v4, lowercase hyphenated.
    std::string fresh_uuid() {
        for (;;) {
            uint8_t b[16];
            for (int i = 0; i < 16; ++i) b[i] = rng_.byte();
            b[6] = static_cast<uint8_t>(0x40 | (b[6] & 0x0F));
            b[8] = static_cast<uint8_t>(0x80 | (b[8] & 0x3F));
            const std::string hex = hex_encode(b, 16);
            std::string id = hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) +
                             "-" + hex.substr(16, 4) + "-" + hex.substr(20, 12);
            if (by_id_.find(id) == by_id_.end()) return id;
        }
    }

    uint32_t record_size_bits_;
    uint64_t max_key_count_;
    Rng rng_;
    mutable std::mutex mu_;
    std::vector<KeyRecord> records_;
    std::unordered_map<std::string, size_t> by_id_;
    uint64_t stored_count_ = 0;
    uint64_t next_seq_ = 0;
    size_t first_stored_hint_ = 0;
};

// Uniform face over the in-process store and the HTTP client so the
// experiment runner can use either.
class KeyDelivery {
public:
    virtual ~KeyDelivery() = default;
    virtual std::vector<std::string> store_keys(const std::vector<std::vector<uint8_t>>& keys) = 0;
    virtual KeyContainer get_enc_keys(const std::string& slave_sae_id, uint64_t number,
                                      uint32_t size_bits) = 0;
    virtual KeyContainer get_dec_keys(const std::string& master_sae_id,
                                      const std::vector<std::string>& key_ids) = 0;
    virtual StatusRecord get_status(const std::string& slave_sae_id) = 0;
};

class LocalDelivery final : public KeyDelivery {
public:
    explicit LocalDelivery(uint32_t record_size_bits = 256, uint64_t max_key_count = 4096,
                           uint64_t uuid_seed = 0x5eedu)
        : store_(record_size_bits, max_key_count, uuid_seed) {}

    KeyStore& store() { return store_; }

    std::vector<std::string> store_keys(const std::vector<std::vector<uint8_t>>& keys) override {
        return store_.store_keys(keys);
    }
    KeyContainer get_enc_keys(const std::string& s, uint64_t n, uint32_t bits) override {
        return store_.get_enc_keys(s, n, bits);
    }
    KeyContainer get_dec_keys(const std::string& m, const std::vector<std::string>& ids) override {
        return store_.get_dec_keys(m, ids);
    }
    StatusRecord get_status(const std::string& s) override { return store_.get_status(s); }

private:
    KeyStore store_;
};

} // namespace qhop::kms
