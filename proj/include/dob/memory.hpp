#pragma once

#include <algorithm>
#include <climits>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dob/crypto.hpp"
#include "dob/errors.hpp"
#include "dob/rng.hpp"

namespace dob {

// Simulated enclave/untrusted split. The adversary observes the sequence of
// block transfers (kind + address) and nothing else; contents are sealed.
// Every explicit block transfer counts as one observable event (we do not
// model page-fault granularity below that).

using RegionId = uint32_t;

struct BlockAddr {
    RegionId region;
    uint64_t index;

    bool operator==(const BlockAddr&) const = default;
};

enum class AccessKind : uint8_t { Read = 0, Write = 1 };

struct TraceEvent {
    AccessKind kind;
    BlockAddr addr;
    uint64_t seq;
};

class TraceLog {
  public:
    void append(AccessKind kind, BlockAddr addr) {
        events_.push_back({kind, addr, next_seq_++});
    }

    std::size_t size() const { return events_.size(); }
    const std::vector<TraceEvent>& events() const { return events_; }

    // Canonical digest of the (kind, region, index) sequence. Ignores seq
    // values and all content bytes.
    std::string fingerprint(std::size_t first = 0, std::size_t last = SIZE_MAX) const {
        Sha256 h;
        last = std::min(last, events_.size());
        for (std::size_t i = first; i < last; ++i) {
            const auto& e = events_[i];
            uint8_t kind = static_cast<uint8_t>(e.kind);
            h.update(&kind, 1);
            h.update(&e.addr.region, sizeof(e.addr.region));
            h.update(&e.addr.index, sizeof(e.addr.index));
        }
        return h.hex();
    }

    // Newline-delimited records: seq,kind,region,index
    void dump(std::ostream& os) const {
        for (const auto& e : events_)
            os << e.seq << ',' << (e.kind == AccessKind::Read ? 'R' : 'W') << ','
               << e.addr.region << ',' << e.addr.index << '\n';
    }

    void clear() {
        events_.clear();
        next_seq_ = 0;
    }

  private:
    std::vector<TraceEvent> events_;
    uint64_t next_seq_ = 0;
};

struct CostCounters {
    uint64_t blocks_read = 0;
    uint64_t blocks_written = 0;
    uint64_t bytes_encrypted = 0;
    uint64_t bytes_decrypted = 0;
    uint64_t bytes_copied_in = 0;
    uint64_t bytes_copied_out = 0;
    uint64_t compute_ticks = 0;

    uint64_t block_transfers() const { return blocks_read + blocks_written; }

    void dump_json(std::ostream& os) const {
        os << "{\"blocks_read\": " << blocks_read << ", \"blocks_written\": " << blocks_written
           << ", \"bytes_encrypted\": " << bytes_encrypted
           << ", \"bytes_decrypted\": " << bytes_decrypted
           << ", \"bytes_copied_in\": " << bytes_copied_in
           << ", \"bytes_copied_out\": " << bytes_copied_out
           << ", \"compute_ticks\": " << compute_ticks << "}";
    }
};

enum class CryptoMode { Aead, PlaintextForTest };

struct EnvConfig {
    uint64_t private_capacity_bytes = 8ull << 20;  // M
    uint64_t block_size_bytes = 4096;              // B
    CryptoMode crypto = CryptoMode::Aead;
    uint64_t seed = 1;
};

class EnclaveEnv {
  public:
    explicit EnclaveEnv(const EnvConfig& cfg)
        : cfg_(cfg),
          rng_(cfg.seed),
          nonce_state_(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL),
          aead_(derive_key128(cfg.seed, 0x6b6579)) {
        if (cfg.block_size_bytes < 16) throw ParamError("block size too small");
    }

    uint64_t block_size() const { return cfg_.block_size_bytes; }
    uint64_t private_capacity() const { return cfg_.private_capacity_bytes; }
    CryptoMode crypto_mode() const { return cfg_.crypto; }
    uint64_t seed() const { return cfg_.seed; }

    RandomSource& rng() { return rng_; }
    TraceLog& trace() { return trace_; }
    const TraceLog& trace() const { return trace_; }
    CostCounters& counters() { return counters_; }
    const CostCounters& counters() const { return counters_; }

    void tick(uint64_t n = 1) { counters_.compute_ticks += n; }

    // ---- untrusted memory regions ----

    RegionId create_region() {
        regions_.emplace_back();
        return static_cast<RegionId>(regions_.size() - 1);
    }

    RegionId next_region_id() const { return static_cast<RegionId>(regions_.size()); }

    uint64_t region_blocks(RegionId r) const { return region(r).size(); }

    // Reads one block into private memory. Appends a Read trace event.
    std::vector<uint8_t> read_block(BlockAddr addr) {
        const auto& reg = region(addr.region);
        if (addr.index >= reg.size()) throw AddressError("read past end of region");
        trace_.append(AccessKind::Read, addr);
        counters_.blocks_read++;
        counters_.bytes_copied_in += cfg_.block_size_bytes;
        std::vector<uint8_t> plain;
        if (cfg_.crypto == CryptoMode::Aead) {
            aead_.open(reg[addr.index], plain);
            counters_.bytes_decrypted += cfg_.block_size_bytes;
        } else {
            plain = reg[addr.index];
        }
        return plain;
    }

    // Writes one block from private memory. A region grows by writing at
    // index == current block count. Fresh nonce per write, so re-encrypting
    // identical plaintext yields a different stored block.
    void write_block(BlockAddr addr, std::span<const uint8_t> plain) {
        if (plain.size() != cfg_.block_size_bytes) throw SizeError("plaintext must be one block");
        auto& reg = region_mut(addr.region);
        if (addr.index > reg.size()) throw AddressError("write past end of region");
        if (addr.index == reg.size()) reg.emplace_back();
        trace_.append(AccessKind::Write, addr);
        counters_.blocks_written++;
        counters_.bytes_copied_out += cfg_.block_size_bytes;
        if (cfg_.crypto == CryptoMode::Aead) {
            uint8_t nonce[Aead::kNonceLen];
            fill_nonce(nonce);
            aead_.seal(plain, std::span<const uint8_t>(nonce, sizeof nonce), reg[addr.index]);
            counters_.bytes_encrypted += cfg_.block_size_bytes;
        } else {
            reg[addr.index].assign(plain.begin(), plain.end());
        }
    }

    // Test hook: simulated tampering with the stored (sealed) bytes.
    std::vector<uint8_t>& raw_stored_block(BlockAddr addr) {
        auto& reg = region_mut(addr.region);
        if (addr.index >= reg.size()) throw AddressError("no such block");
        return reg[addr.index];
    }

    // ---- private memory accounting ----

    void acquire_private(uint64_t bytes) {
        if (private_in_use_ + bytes > cfg_.private_capacity_bytes)
            throw BudgetError("private memory budget exceeded");
        private_in_use_ += bytes;
        if (private_in_use_ > private_peak_) private_peak_ = private_in_use_;
    }

    void release_private(uint64_t bytes) {
        private_in_use_ = (bytes > private_in_use_) ? 0 : private_in_use_ - bytes;
    }

    uint64_t private_in_use() const { return private_in_use_; }
    uint64_t private_peak() const { return private_peak_; }

  private:
    using Region = std::vector<std::vector<uint8_t>>;

    const Region& region(RegionId r) const {
        if (r >= regions_.size()) throw AddressError("no such region");
        return regions_[r];
    }
    Region& region_mut(RegionId r) {
        if (r >= regions_.size()) throw AddressError("no such region");
        return regions_[r];
    }

    void fill_nonce(uint8_t* out) {
        // Nonces are not part of the semantic noise tape; they never affect
        // the trace, only ciphertext bytes.
        uint64_t a = splitmix64(nonce_state_);
        uint32_t b = static_cast<uint32_t>(splitmix64(nonce_state_));
        std::memcpy(out, &a, 8);
        std::memcpy(out + 8, &b, 4);
    }

    EnvConfig cfg_;
    RandomSource rng_;
    uint64_t nonce_state_;
    Aead aead_;
    TraceLog trace_;
    CostCounters counters_;
    std::vector<Region> regions_;
    uint64_t private_in_use_ = 0;
    uint64_t private_peak_ = 0;
};

// RAII registration of a private buffer against the env budget.
class PrivateReservation {
  public:
    PrivateReservation() = default;
    PrivateReservation(EnclaveEnv& env, uint64_t bytes) : env_(&env), bytes_(bytes) {
        env.acquire_private(bytes);
    }
    ~PrivateReservation() { reset(); }
    PrivateReservation(const PrivateReservation&) = delete;
    PrivateReservation& operator=(const PrivateReservation&) = delete;
    PrivateReservation(PrivateReservation&& o) noexcept : env_(o.env_), bytes_(o.bytes_) {
        o.env_ = nullptr;
    }
    PrivateReservation& operator=(PrivateReservation&& o) noexcept {
        reset();
        env_ = o.env_;
        bytes_ = o.bytes_;
        o.env_ = nullptr;
        return *this;
    }

    void reset() {
        if (env_) env_->release_private(bytes_);
        env_ = nullptr;
    }

  private:
    EnclaveEnv* env_ = nullptr;
    uint64_t bytes_ = 0;
};

}  // namespace dob
