#pragma once

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "dob/errors.hpp"
#include "dob/rng.hpp"

namespace dob {

using Key128 = std::array<uint8_t, 16>;

inline Key128 derive_key128(uint64_t seed, uint64_t purpose) {
    Key128 k;
    uint64_t st = seed ^ (purpose * 0x9e3779b97f4a7c15ULL);
    uint64_t a = splitmix64(st), b = splitmix64(st);
    std::memcpy(k.data(), &a, 8);
    std::memcpy(k.data() + 8, &b, 8);
    return k;
}

// AES-128-GCM block sealer. Stored form: nonce(12) || ciphertext || tag(16).
class Aead {
  public:
    static constexpr std::size_t kNonceLen = 12;
    static constexpr std::size_t kTagLen = 16;

    explicit Aead(const Key128& key) : key_(key) {}

    std::size_t sealed_size(std::size_t plain) const { return kNonceLen + plain + kTagLen; }

    void seal(std::span<const uint8_t> plain, std::span<const uint8_t> nonce,
              std::vector<uint8_t>& out) const {
        out.resize(sealed_size(plain.size()));
        std::memcpy(out.data(), nonce.data(), kNonceLen);
        EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
        if (!ctx) throw IntegrityError("EVP ctx alloc failed");
        int len = 0;
        int ok = EVP_EncryptInit_ex(ctx, EVP_aes_128_gcm(), nullptr, key_.data(), out.data()) &&
                 EVP_EncryptUpdate(ctx, out.data() + kNonceLen, &len, plain.data(),
                                   static_cast<int>(plain.size())) &&
                 EVP_EncryptFinal_ex(ctx, out.data() + kNonceLen + len, &len) &&
                 EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTagLen,
                                     out.data() + kNonceLen + plain.size());
        EVP_CIPHER_CTX_free(ctx);
        if (!ok) throw IntegrityError("AEAD seal failed");
    }

    // Throws IntegrityError on tag mismatch (simulated tampering).
    void open(std::span<const uint8_t> sealed, std::vector<uint8_t>& plain) const {
        if (sealed.size() < kNonceLen + kTagLen) throw IntegrityError("sealed block too short");
        const std::size_t ct_len = sealed.size() - kNonceLen - kTagLen;
        plain.resize(ct_len);
        EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
        if (!ctx) throw IntegrityError("EVP ctx alloc failed");
        int len = 0;
        int ok = EVP_DecryptInit_ex(ctx, EVP_aes_128_gcm(), nullptr, key_.data(), sealed.data()) &&
                 EVP_DecryptUpdate(ctx, plain.data(), &len, sealed.data() + kNonceLen,
                                   static_cast<int>(ct_len)) &&
                 EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTagLen,
                                     const_cast<uint8_t*>(sealed.data() + kNonceLen + ct_len));
        int fin = ok ? EVP_DecryptFinal_ex(ctx, plain.data() + len, &len) : 0;
        EVP_CIPHER_CTX_free(ctx);
        if (!ok || fin != 1) throw IntegrityError("AEAD authentication failed");
    }

  private:
    Key128 key_;
};

class Sha256 {
  public:
    Sha256() { ctx_ = EVP_MD_CTX_new(); EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t len) { EVP_DigestUpdate(ctx_, data, len); }

    std::string hex() {
        unsigned char md[32];
        unsigned int n = 0;
        EVP_DigestFinal_ex(ctx_, md, &n);
        static const char* d = "0123456789abcdef";
        std::string out;
        out.reserve(64);
        for (unsigned i = 0; i < n; ++i) {
            out.push_back(d[md[i] >> 4]);
            out.push_back(d[md[i] & 0xf]);
        }
        return out;
    }

  private:
    EVP_MD_CTX* ctx_;
};

// SipHash-2-4 with 128-bit output (reference construction). Keyed PRF for
// sketch hashing and group partitioning; fast enough for per-tuple use.
class SipHash {
  public:
    explicit SipHash(const Key128& key) {
        std::memcpy(&k0_, key.data(), 8);
        std::memcpy(&k1_, key.data() + 8, 8);
    }

    std::array<uint64_t, 2> hash128(std::span<const uint8_t> data) const {
        uint64_t v0 = 0x736f6d6570736575ULL ^ k0_;
        uint64_t v1 = 0x646f72616e646f6dULL ^ k1_ ^ 0xee;
        uint64_t v2 = 0x6c7967656e657261ULL ^ k0_;
        uint64_t v3 = 0x7465646279746573ULL ^ k1_;

        const uint8_t* in = data.data();
        const std::size_t len = data.size();
        const std::size_t left = len & 7;
        const uint64_t b_tail = static_cast<uint64_t>(len) << 56;

        const uint8_t* end = in + (len - left);
        for (; in != end; in += 8) {
            uint64_t m;
            std::memcpy(&m, in, 8);
            v3 ^= m;
            sipround(v0, v1, v2, v3);
            sipround(v0, v1, v2, v3);
            v0 ^= m;
        }
        uint64_t b = b_tail;
        for (std::size_t i = 0; i < left; ++i) b |= static_cast<uint64_t>(in[i]) << (8 * i);
        v3 ^= b;
        sipround(v0, v1, v2, v3);
        sipround(v0, v1, v2, v3);
        v0 ^= b;

        v2 ^= 0xee;
        for (int i = 0; i < 4; ++i) sipround(v0, v1, v2, v3);
        uint64_t h0 = v0 ^ v1 ^ v2 ^ v3;
        v1 ^= 0xdd;
        for (int i = 0; i < 4; ++i) sipround(v0, v1, v2, v3);
        uint64_t h1 = v0 ^ v1 ^ v2 ^ v3;
        return {h0, h1};
    }

    // Top 64 bits of the 128-bit output mapped to [0,1).
    double hash01(std::span<const uint8_t> data) const {
        auto h = hash128(data);
        return static_cast<double>(h[0] >> 11) * (1.0 / 9007199254740992.0);
    }

  private:
    static void sipround(uint64_t& v0, uint64_t& v1, uint64_t& v2, uint64_t& v3) {
        v0 += v1; v1 = rotl(v1, 13); v1 ^= v0; v0 = rotl(v0, 32);
        v2 += v3; v3 = rotl(v3, 16); v3 ^= v2;
        v0 += v3; v3 = rotl(v3, 21); v3 ^= v0;
        v2 += v1; v1 = rotl(v1, 17); v1 ^= v2; v2 = rotl(v2, 32);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t k0_, k1_;
};

}  // namespace dob
