#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dob/fixtures.hpp"
#include "dob/gen.hpp"
#include "dob/trace_sim.hpp"

namespace dob {

// Statistical suites report (claimed bound, empirical value, margin, verdict)
// so no check can pass silently.

struct CheckReport {
    std::string name;
    double claimed = 0.0;
    double empirical = 0.0;
    double margin = 0.0;
    bool pass = false;

    std::string str() const {
        std::ostringstream os;
        os << (pass ? "PASS " : "FAIL ") << name << ": claimed=" << claimed
           << " empirical=" << empirical << " margin=" << margin;
        return os.str();
    }
};

inline double binom_margin(double p, uint64_t trials) {
    double q = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    return 3.0 * std::sqrt(q * (1.0 - q) / static_cast<double>(trials));
}

// ---- order statistics of uniform samples ----

struct OrderStatParams {
    uint64_t n = 10000;
    uint64_t t = 100;
    double delta = 0.1;   // claim: y_t > delta t/n with prob >= 1-delta
    double alpha = 20.0;  // gap claims
    double eta = 0.25;    // approximation claim
    uint64_t trials = 4000;
    uint64_t seed = 7;
};

// Monte Carlo checks of the uniform order-statistic bounds behind the
// distinct-count sketch: lower bounds on y_t, the y_{t+1}-y_t gap, the
// 1/y_t - 1/y_{t+1} gap, and the (1 +- eta) coverage of t/y_t.
inline std::vector<CheckReport> verify_order_statistics(const OrderStatParams& p) {
    if (p.t < 1 || p.t + 1 > p.n / 2 + 1) throw ParamError("need 1 <= t <= n/2");
    if (!(p.alpha > 4.0) || !(p.alpha < static_cast<double>(p.n) / 2)) throw ParamError("need 4 < alpha < n/2");

    uint64_t hit_yt_delta = 0, hit_yt_half = 0, hit_gap = 0, hit_invgap = 0, hit_approx = 0;
    const double nd = static_cast<double>(p.n), td = static_cast<double>(p.t);
    // precondition of the approximation lemma: t > 3(1+eta) eta^-2 ln(2/delta_ap)
    const double delta_ap =
        std::min(0.49, 2.0 * std::exp(-td * p.eta * p.eta / (3.0 * (1.0 + p.eta))));

    RandomSource rng(p.seed);
    std::vector<double> xs(p.n);
    for (uint64_t trial = 0; trial < p.trials; ++trial) {
        for (auto& x : xs) x = rng.uniform01();
        std::nth_element(xs.begin(), xs.begin() + (p.t - 1), xs.end());
        double yt = xs[p.t - 1];
        double yt1 = *std::min_element(xs.begin() + p.t, xs.end());
        if (yt > p.delta * td / nd) ++hit_yt_delta;
        if (yt > td / (2.0 * nd)) ++hit_yt_half;
        if (yt1 < yt + p.alpha / nd) ++hit_gap;
        if (std::abs(1.0 / yt - 1.0 / yt1) < 4.0 * p.alpha * nd / (td * td)) ++hit_invgap;
        double est = td / yt;
        if ((1.0 - p.eta) * nd <= est && est <= (1.0 + p.eta) * nd) ++hit_approx;
    }

    auto coverage = [&](const char* name, uint64_t hits, double claimed) {
        CheckReport r;
        r.name = name;
        r.claimed = claimed;
        r.empirical = static_cast<double>(hits) / static_cast<double>(p.trials);
        r.margin = binom_margin(claimed, p.trials);
        r.pass = r.empirical >= claimed - r.margin;
        return r;
    };

    std::vector<CheckReport> out;
    out.push_back(coverage("y_t > delta*t/n", hit_yt_delta, 1.0 - p.delta));
    out.push_back(coverage("y_t > t/2n", hit_yt_half, 1.0 - std::exp(-td / 6.0)));
    out.push_back(coverage("y_{t+1} < y_t + alpha/n", hit_gap, 1.0 - std::exp(-p.alpha / 4.0)));
    out.push_back(coverage("|1/y_t - 1/y_{t+1}| < 4 alpha n/t^2", hit_invgap,
                           1.0 - std::exp(-td / 6.0) - std::exp(-p.alpha / 4.0)));
    out.push_back(coverage("(1-eta)n <= t/y_t <= (1+eta)n", hit_approx, 1.0 - delta_ap));
    return out;
}

// ---- sensitivity of the bottom-t estimate across neighbors ----

struct SensitivityParams {
    uint64_t n = 10000;
    uint64_t t = 200;
    double delta = 0.05;
    uint64_t trials = 4000;
    uint64_t seed = 11;
};

// Adds one element to a stream of n distinct elements and checks that the
// (1-delta)-quantile of |t/y_t - t/y_t'| stays within 20 ln(4/delta) n/t.
inline CheckReport verify_sensitivity(const SensitivityParams& p) {
    if (!(p.t > 16) || !(p.t < p.n / 2)) throw ParamError("need 16 < t < n/2");
    RandomSource rng(p.seed);
    std::vector<double> gaps(p.trials);
    std::vector<double> xs(p.n + 1);
    std::vector<double> tmp;
    for (uint64_t trial = 0; trial < p.trials; ++trial) {
        for (auto& x : xs) x = rng.uniform01();
        tmp.assign(xs.begin(), xs.begin() + p.n);
        std::nth_element(tmp.begin(), tmp.begin() + (p.t - 1), tmp.end());
        double yt_small = tmp[p.t - 1];
        tmp = xs;
        std::nth_element(tmp.begin(), tmp.begin() + (p.t - 1), tmp.end());
        double yt_big = tmp[p.t - 1];
        gaps[trial] = std::abs(static_cast<double>(p.t) / yt_small -
                               static_cast<double>(p.t) / yt_big);
    }
    std::sort(gaps.begin(), gaps.end());
    std::size_t idx = static_cast<std::size_t>((1.0 - p.delta) * static_cast<double>(p.trials));
    idx = std::min(idx, gaps.size() - 1);
    CheckReport r;
    r.name = "neighbor estimate gap quantile";
    r.claimed = 20.0 * std::log(4.0 / p.delta) * static_cast<double>(p.n) / static_cast<double>(p.t);
    r.empirical = gaps[idx];
    r.margin = 0.0;
    r.pass = r.empirical <= r.claimed;
    return r;
}

// ---- binomial tail ----

// Pr[X >= np + sqrt(0.5 n ln(1/delta))] <= delta for X ~ Bin(n, p).
inline CheckReport verify_binomial_tail(uint64_t n, double p, double delta, uint64_t trials,
                                        uint64_t seed) {
    if (!(p >= 0.0) || !(p <= 1.0)) throw ParamError("p must be in [0,1]");
    if (!(delta > 0.0) || delta > 1.0) throw ParamError("delta must be in (0,1]");
    double threshold = static_cast<double>(n) * p +
                       std::sqrt(0.5 * static_cast<double>(n) * std::log(1.0 / delta));
    std::mt19937_64 gen(seed);
    std::binomial_distribution<uint64_t> dist(n, p);
    uint64_t exceed = 0;
    for (uint64_t i = 0; i < trials; ++i)
        if (static_cast<double>(dist(gen)) >= threshold) ++exceed;
    CheckReport r;
    r.name = "binomial tail exceedance";
    r.claimed = delta;
    r.empirical = static_cast<double>(exceed) / static_cast<double>(trials);
    r.margin = binom_margin(delta, trials);
    r.pass = r.empirical <= delta + r.margin;
    return r;
}

// ---- binary mechanism concentration ----

struct BmConcentrationReport {
    struct Row {
        double delta;
        double quantile;
        double analytic;
        uint64_t exceed;
        bool direct;
        bool pass;
    };
    std::vector<Row> rows;
    uint64_t trials = 0;
    double r2 = 0.0;
    bool pass_exceedance = false;
    bool pass_r2 = false;
    bool pass() const { return pass_exceedance && pass_r2; }
};

// One set of max-error trials serves every delta: exceedance of the analytic
// bound must stay below delta, and the simulated quantile must grow linearly
// in ln(1/delta) (R^2 over the directly-simulated points).
inline BmConcentrationReport verify_bm_concentration(double epsilon, uint64_t n_stream,
                                                     const std::vector<double>& deltas,
                                                     uint64_t trials, uint64_t seed) {
    PrivacyParams base{epsilon, 1e-9};
    SimulatedQuantile sim(base, n_stream, trials, seed);
    const auto& samples = sim.samples();

    BmConcentrationReport rep;
    rep.trials = trials;
    std::vector<double> xs, ys;
    rep.pass_exceedance = true;
    for (double d : deltas) {
        PrivacyParams p{epsilon, d};
        double analytic = analytic_oracle_error(p, n_stream);
        uint64_t exceed = static_cast<uint64_t>(
            samples.end() - std::upper_bound(samples.begin(), samples.end(), analytic));
        double q = sim.quantile(d);
        bool direct = sim.is_direct(d);
        double allowed = d * static_cast<double>(trials) +
                         3.0 * std::sqrt(std::max(1.0, d * static_cast<double>(trials)));
        bool pass = static_cast<double>(exceed) <= allowed;
        rep.rows.push_back({d, q, analytic, exceed, direct, pass});
        rep.pass_exceedance = rep.pass_exceedance && pass;
        if (direct) {
            xs.push_back(std::log(1.0 / d));
            ys.push_back(q);
        }
    }
    // R^2 of the direct quantiles against ln(1/delta)
    if (xs.size() >= 3) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
        mx /= xs.size();
        my /= ys.size();
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
            syy += (ys[i] - my) * (ys[i] - my);
        }
        rep.r2 = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 0.0;
    }
    rep.pass_r2 = rep.r2 > 0.95;
    return rep;
}

// ---- distinct count accuracy ----

struct DistinctAccuracyReport {
    uint64_t t = 0;
    uint64_t n = 0;
    uint64_t trials = 0;
    uint64_t failures = 0;        // G~ outside [n, 1.1 n]
    uint64_t under_failures = 0;  // G~ < n (the estimate may only overshoot)
    double bound = 0.0;
    double margin = 0.0;
    bool pass = false;
};

// eta = 0.1 accuracy: Pr[ n <= G~ <= 1.1 n ] >= 1 - delta over fresh random
// hash draws; streams have n = multiplier * t distinct elements.
inline DistinctAccuracyReport verify_distinct_accuracy(double epsilon, double delta,
                                                       uint64_t n_multiplier, uint64_t trials,
                                                       uint64_t seed) {
    const double eta = 0.1;
    DistinctAccuracyReport rep;
    rep.t = static_cast<uint64_t>(std::ceil(sketch_size_for(epsilon, eta, delta)));
    rep.n = n_multiplier * rep.t;
    rep.trials = trials;
    RandomSource rng(seed);
    Key128 dummy_key{};
    for (uint64_t trial = 0; trial < trials; ++trial) {
        DistinctSketch sketch(rep.t, dummy_key);
        for (uint64_t i = 0; i < rep.n; ++i) sketch.update_hash(rng.uniform01());
        auto est = distinct_estimate(sketch, epsilon, eta, delta, rng);
        double nd = static_cast<double>(rep.n);
        if (est.g_tilde < nd) ++rep.under_failures;
        if (est.g_tilde < nd || est.g_tilde > 1.1 * nd) ++rep.failures;
    }
    rep.bound = delta;
    rep.margin = binom_margin(delta, trials);
    rep.pass = static_cast<double>(rep.failures) / static_cast<double>(trials) <= delta + rep.margin;
    return rep;
}

// ---- cache-complexity checks ----

struct ComplexityReport {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool exact = false;
    bool pass = false;

    double ratio() const { return bound > 0 ? measured / bound : 0.0; }
    std::string str() const {
        std::ostringstream os;
        os << (pass ? "PASS " : "FAIL ") << name << ": measured=" << measured
           << (exact ? " expected=" : " bound=") << bound << " ratio=" << ratio();
        return os.str();
    }
};

inline ComplexityReport check_exact(std::string name, uint64_t measured, uint64_t expected) {
    ComplexityReport r;
    r.name = std::move(name);
    r.measured = static_cast<double>(measured);
    r.bound = static_cast<double>(expected);
    r.exact = true;
    r.pass = measured == expected;
    return r;
}

inline ComplexityReport check_bound(std::string name, uint64_t measured, double bound) {
    ComplexityReport r;
    r.name = std::move(name);
    r.measured = static_cast<double>(measured);
    r.bound = bound;
    r.exact = false;
    r.pass = static_cast<double>(measured) <= bound;
    return r;
}

inline uint64_t div_ceil(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

// Least-squares fit of measured = C * x log2(x) + D * x; returns C.
inline double fit_nlogn_constant(const std::vector<std::array<double, 2>>& pts) {
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (const auto& p : pts) {
        double x = p[0], y = p[1];
        double u = x * std::log2(std::max(x, 2.0));
        a11 += u * u;
        a12 += u * x;
        a22 += x * x;
        b1 += u * y;
        b2 += x * y;
    }
    double det = a11 * a22 - a12 * a12;
    if (std::abs(det) < 1e-12) return 0.0;
    return (b1 * a22 - b2 * a12) / det;
}

// ---- trace structure verification ----

enum class OpKind { Filter, GroupHash, GroupSort, Join };

struct StructureOutcome {
    uint64_t trials = 0;
    uint64_t sim_match = 0;
    uint64_t runs_with_conversions = 0;
    uint64_t neighbor_pairs = 0;
    uint64_t equal_disclosed = 0;
    uint64_t equal_disclosed_and_digest = 0;
    uint64_t forced_equal_trials = 0;   // group-hash: pinned G~ across neighbors
    uint64_t forced_equal_matches = 0;
    bool all_sim_match() const { return sim_match == trials; }
    bool all_equal_disclosed_match() const { return equal_disclosed_and_digest == equal_disclosed; }
};

struct StructureConfig {
    OpKind kind = OpKind::Filter;
    uint64_t rows = 512;          // fk rows for join
    uint64_t pk_rows = 128;       // join only
    uint64_t trials = 100;
    uint64_t seed = 1234;
    PrivacyParams params{1.0, 1e-3};
    uint64_t block_size = 1024;
    uint64_t private_mem = 8ull << 20;
    uint64_t m_groups = 0;  // group-hash capacity override (0: derive)
};

namespace detail {

struct RecordedRun {
    std::string digest;
    NoiseTape tape;
    OperatorStats stats;
    bool ok = true;
};

// Runs one operator invocation on tables rebuilt from given rows inside a
// fresh env, so region ids and traces are comparable across runs.
template <typename BuildAndRun>
RecordedRun record_run(const EnvConfig& cfg, NoiseTape* replay, BuildAndRun&& fn) {
    EnclaveEnv env(cfg);
    RecordedRun rec;
    if (replay)
        rec.tape = NoiseTape::replay_of(*replay);
    env.rng().attach_tape(&rec.tape);
    std::size_t start_hint = 0;
    rec.stats = fn(env, start_hint);
    rec.digest = env.trace().fingerprint(start_hint);
    return rec;
}

}  // namespace detail

// Runs trials of (real run, data-free simulation, pinned-noise neighbor run)
// and accumulates the match statistics the acceptance criteria assert.
inline StructureOutcome verify_do_structure(const StructureConfig& sc) {
    StructureOutcome out;
    out.trials = sc.trials;

    EnvConfig cfg;
    cfg.block_size_bytes = sc.block_size;
    cfg.private_capacity_bytes = sc.private_mem;
    cfg.crypto = CryptoMode::PlaintextForTest;

    OperatorOptions opts;
    opts.sort.strict = true;  // fully data-independent sort traces

    GroupSpec group_spec;
    group_spec.keys = {{"key", 0}};
    group_spec.aggs = {{AggKind::Sum, "value"}, {AggKind::Count, ""}};

    Predicate pred = Predicate::cmp_i64("value", Predicate::Op::Gt, 50000);

    for (uint64_t trial = 0; trial < sc.trials; ++trial) {
        uint64_t seed = sc.seed + trial * 7919;
        cfg.seed = seed;

        // materialize input rows once so base and neighbor runs build
        // identical region layouts
        std::vector<Tuple> rows, pk_rows;
        Schema in_schema = kv_schema();
        Schema pk_schema = kv_schema();
        {
            EnvConfig gen_cfg = cfg;
            EnclaveEnv gen_env(gen_cfg);
            Table t = gen_kv(gen_env, sc.rows, std::max<uint64_t>(sc.rows / 4, 2), seed);
            rows = table_read_all(gen_env, t);
            if (sc.kind == OpKind::Join) {
                Table pk = gen_kv(gen_env, sc.pk_rows, sc.pk_rows, seed + 1);
                // unique keys for the primary side
                pk_rows = table_read_all(gen_env, pk);
                for (uint64_t i = 0; i < pk_rows.size(); ++i) {
                    char key[16];
                    std::snprintf(key, sizeof key, "k%010llu", static_cast<unsigned long long>(i));
                    row_set_ascii(pk_schema, pk_rows[i].data(), 0, key);
                }
                // foreign keys drawn from the primary key space
                uint64_t st = seed ^ 0xfefe;
                for (auto& r : rows) {
                    char key[16];
                    std::snprintf(key, sizeof key, "k%010llu",
                                  static_cast<unsigned long long>(splitmix64(st) % sc.pk_rows));
                    row_set_ascii(in_schema, r.data(), 0, key);
                }
            }
        }

        auto run_op = [&](EnclaveEnv& env, const std::vector<Tuple>& fk,
                          const std::vector<Tuple>& pk, std::size_t& start,
                          std::optional<double> force_gtilde) -> OperatorStats {
            switch (sc.kind) {
                case OpKind::Filter: {
                    Table t = table_from_tuples(env, in_schema, fk);
                    start = env.trace().size();
                    return do_filter(env, t, pred, {}, sc.params, opts).stats;
                }
                case OpKind::GroupHash: {
                    Table t = table_from_tuples(env, in_schema, fk);
                    start = env.trace().size();
                    GroupHashOptions g;
                    g.op = opts;
                    g.op.gtilde_override = force_gtilde;
                    g.m_groups_override = sc.m_groups;
                    return do_group_hash(env, t, group_spec, sc.params, g).stats;
                }
                case OpKind::GroupSort: {
                    Table t = table_from_tuples(env, in_schema, fk);
                    start = env.trace().size();
                    return do_group_sort(env, t, group_spec, sc.params, opts).stats;
                }
                case OpKind::Join: {
                    Table pkt = table_from_tuples(env, pk_schema, pk);
                    Table fkt = table_from_tuples(env, in_schema, fk);
                    start = env.trace().size();
                    return do_join(env, pkt, fkt, "key", "key", sc.params, opts).stats;
                }
            }
            throw ParamError("bad op kind");
        };

        auto base = detail::record_run(cfg, nullptr, [&](EnclaveEnv& env, std::size_t& start) {
            return run_op(env, rows, pk_rows, start, std::nullopt);
        });
        if (base.stats.conversions_overflow + base.stats.conversions_underflow > 0)
            ++out.runs_with_conversions;

        // data-free simulation from the recorded tape
        std::string sim;
        switch (sc.kind) {
            case OpKind::Filter: {
                OperatorOptions o = opts;
                o.s_override = base.stats.s;
                sim = simulate_filter_trace(cfg, in_schema, sc.rows, sc.params, o, base.tape);
                break;
            }
            case OpKind::GroupHash: {
                GroupHashOptions g;
                g.op = opts;
                g.m_groups_override = base.stats.m_groups;
                sim = simulate_group_hash_trace(cfg, in_schema, sc.rows, group_spec, sc.params, g,
                                                base.tape);
                break;
            }
            case OpKind::GroupSort: {
                OperatorOptions o = opts;
                o.s_override = base.stats.s;
                sim = simulate_group_sort_trace(cfg, in_schema, sc.rows, group_spec, sc.params, o,
                                                base.tape);
                break;
            }
            case OpKind::Join: {
                OperatorOptions o = opts;
                o.s_override = base.stats.s;
                sim = simulate_join_trace(cfg, pk_schema, sc.pk_rows, in_schema, sc.rows, "key",
                                          "key", sc.params, o, base.tape);
                break;
            }
        }
        if (sim == base.digest) ++out.sim_match;

        // pinned-noise neighbor run (for join: the foreign side differs)
        std::vector<Tuple> nrows = rows;
        {
            uint64_t st = seed ^ 0xabcdef;
            uint64_t idx = splitmix64(st) % nrows.size();
            if (splitmix64(st) % 2 == 0) {
                nrows[idx] = Tuple::filler(in_schema);
            } else {
                Tuple repl(in_schema);
                char key[16];
                uint64_t cardinality = sc.kind == OpKind::Join ? sc.pk_rows
                                                               : std::max<uint64_t>(sc.rows / 4, 2);
                std::snprintf(key, sizeof key, "k%010llu",
                              static_cast<unsigned long long>(splitmix64(st) % cardinality));
                row_set_ascii(in_schema, repl.data(), 0, key);
                row_set_i64(in_schema, repl.data(), 1, static_cast<int64_t>(splitmix64(st) % 100000));
                nrows[idx] = repl;
            }
        }
        auto neigh = detail::record_run(cfg, &base.tape, [&](EnclaveEnv& env, std::size_t& start) {
            return run_op(env, nrows, pk_rows, start, std::nullopt);
        });
        ++out.neighbor_pairs;
        if (disclosed_values(base.tape) == disclosed_values(neigh.tape)) {
            ++out.equal_disclosed;
            if (neigh.digest == base.digest) ++out.equal_disclosed_and_digest;
        }

        // group-hash: forcing the same G~ on both neighbors must equalize traces
        if (sc.kind == OpKind::GroupHash) {
            double forced = std::max(1.0, base.stats.gtilde);
            auto a = detail::record_run(cfg, nullptr, [&](EnclaveEnv& env, std::size_t& start) {
                return run_op(env, rows, pk_rows, start, forced);
            });
            auto b = detail::record_run(cfg, nullptr, [&](EnclaveEnv& env, std::size_t& start) {
                return run_op(env, nrows, pk_rows, start, forced);
            });
            ++out.forced_equal_trials;
            if (a.digest == b.digest) ++out.forced_equal_matches;
        }
    }
    return out;
}

// Negative control: the naive filter's trace must separate a neighbor pair
// that differs in one predicate outcome.
inline bool naive_filter_control_differs(uint64_t n_rows, uint64_t seed) {
    EnvConfig cfg;
    cfg.block_size_bytes = 256;
    cfg.crypto = CryptoMode::PlaintextForTest;
    cfg.seed = seed;
    Schema schema = kv_schema();
    Predicate pred = Predicate::cmp_i64("value", Predicate::Op::Ge, 0);  // match all

    std::vector<Tuple> rows;
    {
        EnclaveEnv env(cfg);
        rows = table_read_all(env, gen_kv(env, n_rows, n_rows, seed));
    }
    std::vector<Tuple> nrows = rows;
    nrows[0] = Tuple::filler(schema);  // first row no longer matches

    auto digest_of = [&](const std::vector<Tuple>& rs) {
        EnclaveEnv env(cfg);
        Table t = table_from_tuples(env, schema, rs);
        std::size_t start = env.trace().size();
        fixtures::naive_filter(env, t, pred);
        return env.trace().fingerprint(start);
    };
    return digest_of(rows) != digest_of(nrows);
}

}  // namespace dob
