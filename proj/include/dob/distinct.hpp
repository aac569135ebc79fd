#pragma once

#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <unordered_set>
#include <vector>

#include "dob/crypto.hpp"
#include "dob/errors.hpp"
#include "dob/rng.hpp"

namespace dob {

// Bottom-t sketch with Laplace-noised estimate.

// General sketch size: max of the approximation term and the sensitivity
// term. The sensitivity constant follows the 1.1-approx specialization (25,
// which at eta = 0.1 collapses to the 10^3 eps^-1 log(...) log(...) form and
// dominates the approximation term for delta <= 1e-3).
inline double sketch_size_for(double epsilon, double eta, double delta) {
    if (!(epsilon > 0.0) || epsilon >= 1.0 + 1e-12) throw ParamError("epsilon must be in (0,1]");
    if (!(eta > 0.0) || !(eta < 0.5)) throw ParamError("eta must be in (0,1/2)");
    if (!(delta > 0.0) || !(delta < 0.5)) throw ParamError("delta must be in (0,1/2)");
    double q = eta / 4.0;
    double approx = 3.0 * (1.0 + q) / (q * q) * std::log(6.0 / delta);
    double sens = 25.0 / (epsilon * q) * std::log(24.0 * (1.0 + std::exp(-epsilon)) / delta) *
                  std::log(3.0 / delta);
    return std::max(approx, sens);
}

// Noise scale of the estimator: 20 eps^-1 (n/t) ln(24(1+e^-eps)/delta).
// n is the true distinct count, which the stream never reveals; callers plug
// in the raw sketch estimate t/v.
inline double distinct_noise_scale(double epsilon, double delta, double n_plug_in, double t) {
    return 20.0 / epsilon * (n_plug_in / t) * std::log(24.0 * (1.0 + std::exp(-epsilon)) / delta);
}

struct DistinctEstimate {
    double g_tilde = 0.0;
    uint64_t t_used = 0;
    double v = 0.0;  // t-th smallest hash
    double noise_scale = 0.0;
    bool underfilled = false;
};

class DistinctSketch {
  public:
    DistinctSketch(uint64_t t, const Key128& prf_key) : t_(t), prf_(prf_key) {
        if (t < 1) throw ParamError("sketch size must be >= 1");
        members_.reserve(t * 2);
    }

    uint64_t t() const { return t_; }
    uint64_t size() const { return heap_.size(); }
    uint64_t items_seen() const { return items_seen_; }
    bool full() const { return heap_.size() >= t_; }

    void update(std::span<const uint8_t> item) { update_hash(prf_.hash01(item)); }

    // Direct-hash entry point; unit tests inject rational hashes and the
    // Monte Carlo verifiers feed uniform draws here.
    void update_hash(double y) {
        ++items_seen_;
        if (heap_.size() < t_) {
            if (members_.insert(y).second) heap_.push(y);
        } else if (y < heap_.top() && !members_.count(y)) {
            members_.erase(heap_.top());
            heap_.pop();
            members_.insert(y);
            heap_.push(y);
        }
    }

    double top() const {
        if (heap_.empty()) throw ParamError("sketch is empty");
        return heap_.top();
    }

    std::vector<double> values() const {
        auto copy = heap_;
        std::vector<double> out;
        out.reserve(copy.size());
        while (!copy.empty()) {
            out.push_back(copy.top());
            copy.pop();
        }
        return out;
    }

  private:
    uint64_t t_;
    SipHash prf_;
    std::priority_queue<double> heap_;  // max-heap of the t smallest hashes
    std::unordered_set<double> members_;
    uint64_t items_seen_ = 0;
};

struct DistinctOptions {
    bool noise_enabled = true;
};

// G-tilde = (1 + 3 eta / 4) t / v + Lap(noise_scale). An under-filled sketch
// (fewer than t distinct items) holds every distinct hash, so it falls back
// to the exact count plus noise scaled from that count, and is flagged.
inline DistinctEstimate distinct_estimate(const DistinctSketch& sketch, double epsilon, double eta,
                                          double delta, RandomSource& rng,
                                          const DistinctOptions& opts = {}) {
    DistinctEstimate e;
    if (!sketch.full()) {
        e.underfilled = true;
        e.t_used = sketch.size();
        double n_exact = static_cast<double>(sketch.size());
        e.v = 1.0;
        e.noise_scale = n_exact > 0
                            ? distinct_noise_scale(epsilon, delta, n_exact,
                                                   std::max<double>(1.0, static_cast<double>(sketch.t())))
                            : 0.0;
        double noise = (opts.noise_enabled && e.noise_scale > 0) ? rng.laplace(e.noise_scale) : 0.0;
        e.g_tilde = n_exact + noise;
        return e;
    }
    e.t_used = sketch.t();
    e.v = sketch.top();
    double raw = static_cast<double>(e.t_used) / e.v;
    e.noise_scale = distinct_noise_scale(epsilon, delta, raw, static_cast<double>(e.t_used));
    double noise = opts.noise_enabled ? rng.laplace(e.noise_scale) : 0.0;
    e.g_tilde = (1.0 + 0.75 * eta) * raw + noise;
    return e;
}

}  // namespace dob
