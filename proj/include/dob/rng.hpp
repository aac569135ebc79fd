#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dob/errors.hpp"

namespace dob {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ (Blackman/Vigna, public domain reference).
class Xoshiro256 {
  public:
    explicit Xoshiro256(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// Every random draw a run makes (noise, tags, shuffles) can be recorded on a
// tape and played back, so an operator can be re-run with pinned randomness.
// Disclosed entries mark the DP-noised public quantities a run leaks (write
// targets, G-tilde); the data-free trace simulator consumes only those.
enum class TapeKind : uint8_t { Uniform, Laplace, Disclosed };

struct TapeEntry {
    TapeKind kind;
    double value;
};

class NoiseTape {
  public:
    enum class Mode { Record, Replay };

    NoiseTape() : mode_(Mode::Record) {}

    static NoiseTape replay_of(const NoiseTape& recorded) {
        NoiseTape t;
        t.mode_ = Mode::Replay;
        t.entries_ = recorded.entries_;
        return t;
    }

    Mode mode() const { return mode_; }
    const std::vector<TapeEntry>& entries() const { return entries_; }

    void record(TapeKind kind, double v) { entries_.push_back({kind, v}); }

    // Replay: returns the recorded draw; Disclosed entries are re-recorded in
    // place so the replayed run's own disclosures stay inspectable.
    double replay(TapeKind kind) {
        if (cursor_ >= entries_.size()) throw ParamError("noise tape exhausted");
        const TapeEntry& e = entries_[cursor_];
        if (e.kind != kind) throw ParamError("noise tape entry kind mismatch");
        ++cursor_;
        return e.value;
    }

    void overwrite_disclosure(double v) {
        entries_[cursor_ - 1].value = v;
    }

    std::vector<double> disclosed() const {
        std::vector<double> out;
        for (const auto& e : entries_)
            if (e.kind == TapeKind::Disclosed) out.push_back(e.value);
        return out;
    }

  private:
    Mode mode_;
    std::vector<TapeEntry> entries_;
    std::size_t cursor_ = 0;
};

// Seeded source for all semantic randomness of a run. Optionally taped.
class RandomSource {
  public:
    explicit RandomSource(uint64_t seed) : gen_(seed) {}

    void attach_tape(NoiseTape* tape) { tape_ = tape; }
    NoiseTape* tape() { return tape_; }

    // 53 random bits (stored as double on the tape, exactly representable).
    uint64_t uniform_bits() {
        if (tape_ && tape_->mode() == NoiseTape::Mode::Replay)
            return static_cast<uint64_t>(tape_->replay(TapeKind::Uniform));
        uint64_t v = gen_.next() >> 11;
        if (tape_) tape_->record(TapeKind::Uniform, static_cast<double>(v));
        return v;
    }

    // Uniform in (0,1), never returning an endpoint.
    double uniform01() {
        uint64_t bits = uniform_bits();
        double u = (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
        return u;
    }

    // Inverse-CDF Laplace draw with scale b.
    double laplace(double b) {
        if (!(b > 0.0)) throw ParamError("laplace scale must be positive");
        if (tape_ && tape_->mode() == NoiseTape::Mode::Replay)
            return tape_->replay(TapeKind::Laplace);
        double u = raw_uniform01();
        double x = (u < 0.5) ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
        if (tape_) tape_->record(TapeKind::Laplace, x);
        return x;
    }

    void disclose(double v) {
        if (!tape_) return;
        if (tape_->mode() == NoiseTape::Mode::Replay) {
            tape_->replay(TapeKind::Disclosed);
            tape_->overwrite_disclosure(v);
        } else {
            tape_->record(TapeKind::Disclosed, v);
        }
    }

  private:
    double raw_uniform01() {
        uint64_t bits = gen_.next() >> 11;
        return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
    }

    Xoshiro256 gen_;
    NoiseTape* tape_ = nullptr;
};

}  // namespace dob
