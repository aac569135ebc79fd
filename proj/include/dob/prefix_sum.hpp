#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dob/errors.hpp"
#include "dob/rng.hpp"

namespace dob {

// All logs in the noise formulas are natural logs.

struct PrivacyParams {
    double epsilon = 1.0;
    double delta = std::pow(2.0, -30);

    void validate() const {
        if (!(epsilon > 0.0) || epsilon > 1.0) throw ParamError("epsilon must be in (0,1]");
        if (!(delta > 0.0) || !(delta < 0.5)) throw ParamError("delta must be in (0,1/2)");
    }
};

// Tail bound for a sum of n i.i.d. Lap(b): Pr[sum > t] <= delta with
// t = max{ sqrt(4 n b^2 ln(3/d)), (2/3) b ln(3n/d) ln(3/d) }.
inline double laplace_sum_tail(uint64_t n, double b, double delta) {
    if (n < 1) throw ParamError("n must be >= 1");
    if (!(b > 0.0)) throw ParamError("b must be positive");
    if (!(delta > 0.0) || delta > 1.0) throw ParamError("delta must be in (0,1]");
    double t1 = std::sqrt(4.0 * static_cast<double>(n) * b * b * std::log(3.0 / delta));
    double t2 = (2.0 / 3.0) * b * std::log(3.0 * static_cast<double>(n) / delta) *
                std::log(3.0 / delta);
    return std::max(t1, t2);
}

inline uint64_t ceil_log2(uint64_t n) {
    uint64_t l = 0;
    while ((1ull << l) < n) ++l;
    return l;
}

// Binary-mechanism DP prefix-sum oracle over a 0/1 stream of known horizon.
//
// Noisy dyadic nodes live at levels 0..L-1 (L = ceil(log2 N)); a stream
// position belongs to exactly L of them, so epsilon is split evenly as
// eps' = eps/L and each node gets Lap(L/eps) noise. A query at c sums the
// nodes given by the binary decomposition of c; when N is a power of two the
// full-range query uses the two half-range nodes instead of a root node.
// Exactly one node completes per position, so the noise draw order is a
// deterministic function of the horizon.
class PrefixSumOracle {
  public:
    PrefixSumOracle(uint64_t horizon, const PrivacyParams& params, RandomSource& rng,
                    bool noise_enabled = true)
        : horizon_(horizon),
          levels_(std::max<uint64_t>(ceil_log2(std::max<uint64_t>(horizon, 2)), 1)),
          noise_enabled_(noise_enabled),
          rng_(&rng) {
        params.validate();
        scale_ = static_cast<double>(levels_) / params.epsilon;
        prefix_.reserve(horizon + 1);
        prefix_.push_back(0);
        node_noise_.reserve(horizon + 1);
        node_noise_.push_back(0.0);
    }

    uint64_t horizon() const { return horizon_; }
    uint64_t items_consumed() const { return consumed_; }
    uint64_t levels() const { return levels_; }
    double node_scale() const { return scale_; }

    void feed(bool bit) {
        if (consumed_ >= horizon_) throw ParamError("feeding past oracle horizon");
        ++consumed_;
        prefix_.push_back(prefix_.back() + (bit ? 1 : 0));
        node_noise_.push_back(noise_enabled_ ? rng_->laplace(scale_) : 0.0);
    }

    // Noisy prefix sum at c; repeated queries return the same value.
    double query(uint64_t c) const {
        if (c > consumed_) throw ParamError("query beyond items consumed");
        double noise = 0.0;
        for_each_node(c, [&](uint64_t end) { noise += node_noise_[end]; });
        return static_cast<double>(prefix_[c]) + noise;
    }

    uint64_t exact(uint64_t c) const {
        if (c > consumed_) throw ParamError("query beyond items consumed");
        return prefix_[c];
    }

    // Number of dyadic nodes a query at c combines.
    uint64_t decomposition_size(uint64_t c) const {
        uint64_t n = 0;
        for_each_node(c, [&](uint64_t) { ++n; });
        return n;
    }

  private:
    template <typename F>
    void for_each_node(uint64_t c, F&& f) const {
        if (c == 0) return;
        uint64_t top = 1ull << levels_;
        if (c == top) {  // full-range query: two half nodes
            f(top >> 1);
            f(top);
            return;
        }
        for (uint64_t j = 0; j < levels_; ++j) {
            if (c & (1ull << j)) {
                uint64_t end = c & ~((1ull << j) - 1);  // node at level j ending here
                f(end);
            }
        }
    }

    uint64_t horizon_;
    uint64_t levels_;
    bool noise_enabled_;
    RandomSource* rng_;
    double scale_;
    uint64_t consumed_ = 0;
    std::vector<uint64_t> prefix_;
    std::vector<double> node_noise_;
};

// One Monte Carlo trial: max over c in [1..N] of |sum of node noises covering
// [1..c]| with per-node scale b. Mirrors the oracle's node layout exactly.
inline double simulate_bm_max_error(uint64_t n, double b, RandomSource& rng) {
    uint64_t levels = std::max<uint64_t>(ceil_log2(std::max<uint64_t>(n, 2)), 1);
    std::vector<double> level_noise(levels, 0.0);
    double max_err = 0.0;
    for (uint64_t c = 1; c <= n; ++c) {
        double fresh = rng.laplace(b);
        double err;
        if (c == (1ull << levels)) {
            err = level_noise[levels - 1] + fresh;  // two half nodes
        } else {
            uint64_t i = std::countr_zero(c);
            level_noise[i] = fresh;
            for (uint64_t j = 0; j < i; ++j) level_noise[j] = 0.0;
            err = 0.0;
            for (uint64_t j = 0; j < levels; ++j)
                if (c & (1ull << j)) err += level_noise[j];
        }
        max_err = std::max(max_err, std::abs(err));
    }
    return max_err;
}

enum class BoundMode { Analytic, Simulated };

struct BufferBound {
    uint64_t s = 0;
    BoundMode mode = BoundMode::Analytic;
};

// Analytic bound on the oracle error: n = ceil(log2 N) noisy summands per
// query, per-node scale b = n/eps, and delta' = delta/N from a union bound
// over the N query positions.
inline double analytic_oracle_error(const PrivacyParams& params, uint64_t n_stream) {
    uint64_t levels = std::max<uint64_t>(ceil_log2(std::max<uint64_t>(n_stream, 2)), 1);
    double b = static_cast<double>(levels) / params.epsilon;
    double dprime = params.delta / static_cast<double>(n_stream);
    return laplace_sum_tail(levels, b, dprime);
}

// Sorted max-error samples -> empirical (1-delta)-quantile, extrapolated
// linearly in ln(1/delta) once the tail runs out of samples (the simulated
// curve grows linearly in ln(1/delta)).
class SimulatedQuantile {
  public:
    SimulatedQuantile(const PrivacyParams& params, uint64_t n_stream, uint64_t trials,
                      uint64_t seed) {
        PrivacyParams p = params;
        p.validate();
        uint64_t levels = std::max<uint64_t>(ceil_log2(std::max<uint64_t>(n_stream, 2)), 1);
        double b = static_cast<double>(levels) / p.epsilon;
        samples_.reserve(trials);
        RandomSource rng(seed);
        for (uint64_t t = 0; t < trials; ++t)
            samples_.push_back(simulate_bm_max_error(n_stream, b, rng));
        std::sort(samples_.begin(), samples_.end());
        fit_tail();
    }

    // Smallest delta whose (1-delta)-quantile is still read directly from the
    // samples; below this the linear fit extrapolates.
    double min_direct_delta() const {
        return static_cast<double>(kMinTail) / static_cast<double>(samples_.size());
    }

    bool is_direct(double delta) const {
        return delta * static_cast<double>(samples_.size()) >= kMinTail;
    }

    double quantile(double delta) const {
        if (is_direct(delta)) return direct_quantile(delta);
        return fit_a_ + fit_b_ * std::log(1.0 / delta);
    }

    const std::vector<double>& samples() const { return samples_; }

  private:
    static constexpr uint64_t kMinTail = 8;

    double direct_quantile(double delta) const {
        double rank = (1.0 - delta) * static_cast<double>(samples_.size());
        std::size_t idx = static_cast<std::size_t>(rank);
        if (idx >= samples_.size()) idx = samples_.size() - 1;
        return samples_[idx];
    }

    void fit_tail() {
        // least squares of direct quantiles against ln(1/delta) over a dyadic
        // grid of simulable deltas
        std::vector<double> xs, ys;
        for (int k = 2; k <= 40; ++k) {
            double d = std::pow(2.0, -k);
            if (!is_direct(d)) break;
            xs.push_back(std::log(1.0 / d));
            ys.push_back(direct_quantile(d));
        }
        if (xs.size() < 2) {
            fit_a_ = samples_.empty() ? 0.0 : samples_.back();
            fit_b_ = 0.0;
            return;
        }
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
        mx /= xs.size();
        my /= ys.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        fit_b_ = sxx > 0 ? sxy / sxx : 0.0;
        fit_a_ = my - fit_b_ * mx;
    }

    std::vector<double> samples_;
    double fit_a_ = 0.0, fit_b_ = 0.0;
};

struct BufferBoundOptions {
    BoundMode mode = BoundMode::Analytic;
    bool noise_enabled = true;
    uint64_t sim_trials = 2000;
    uint64_t sim_seed = 0x5e11ed;
};

inline uint64_t round_up(uint64_t v, uint64_t m) { return ((v + m - 1) / m) * m; }

// Buffer bound s for the streaming operators, rounded up to whole blocks so
// batched reads stay block-aligned. Noise-disabled runs use the minimum batch.
inline BufferBound estimate_buffer_bound(const PrivacyParams& params, uint64_t n_stream,
                                         uint64_t rows_per_block,
                                         const BufferBoundOptions& opts = {}) {
    params.validate();
    if (n_stream < 2) n_stream = 2;
    if (rows_per_block == 0) throw ParamError("rows_per_block must be positive");
    if (!opts.noise_enabled) return {rows_per_block, opts.mode};
    double bound;
    if (opts.mode == BoundMode::Analytic) {
        bound = analytic_oracle_error(params, n_stream);
    } else {
        SimulatedQuantile q(params, n_stream, opts.sim_trials, opts.sim_seed);
        bound = q.quantile(params.delta);
    }
    uint64_t s = static_cast<uint64_t>(std::ceil(bound));
    s = std::max<uint64_t>(s, rows_per_block);
    return {round_up(s, rows_per_block), opts.mode};
}

}  // namespace dob
