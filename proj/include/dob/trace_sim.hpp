#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dob/operators.hpp"

namespace dob {

// Data-free trace replay.
//
// Each operator's trace is a function of public shape parameters plus the
// DP-noised quantities it disclosed (per-batch write targets, final output
// size, the distinct-count estimate). To reproduce a trace without the data,
// we re-run the operator on an all-filler table of the same shape with the
// disclosed quantities pinned: fillers match no predicate, form no groups and
// join with nothing, so every content-dependent count is zero and the pinned
// disclosures alone drive the memory accesses.

inline Table make_filler_table(EnclaveEnv& env, const Schema& schema, uint64_t rows) {
    Table t = make_table(env, schema);
    if (rows == 0) return t;
    TableWriter w(env, t);
    for (uint64_t i = 0; i < rows; ++i) w.append_filler();
    w.finish();
    return t;
}

// Disclosed quantities of a recorded run, in disclosure order.
inline std::vector<double> disclosed_values(const NoiseTape& tape) {
    std::vector<double> out;
    for (const auto& e : tape.entries())
        if (e.kind == TapeKind::Disclosed) out.push_back(e.value);
    return out;
}

inline std::vector<int64_t> disclosed_targets(const NoiseTape& tape) {
    std::vector<int64_t> out;
    for (const auto& e : tape.entries())
        if (e.kind == TapeKind::Disclosed) out.push_back(static_cast<int64_t>(e.value));
    return out;
}

// ---- per-operator simulators ----
// cfg must match the real run's env config; the dummy input is built first so
// region ids line up with the real run (input regions, then operator regions).

inline std::string simulate_filter_trace(const EnvConfig& cfg, const Schema& in_schema,
                                         uint64_t n_rows, const PrivacyParams& params,
                                         OperatorOptions opts, const NoiseTape& tape) {
    auto targets = disclosed_targets(tape);
    opts.pinned_targets = &targets;
    EnclaveEnv env(cfg);
    Table dummy = make_filler_table(env, in_schema, n_rows);
    std::size_t start = env.trace().size();
    do_filter(env, dummy, Predicate::all_rows(), {}, params, opts);
    return env.trace().fingerprint(start);
}

inline std::string simulate_group_hash_trace(const EnvConfig& cfg, const Schema& in_schema,
                                             uint64_t n_rows, const GroupSpec& spec,
                                             const PrivacyParams& params, GroupHashOptions gopts,
                                             const NoiseTape& tape) {
    auto disc = disclosed_values(tape);
    if (disc.empty()) throw ParamError("group trace needs the disclosed estimate");
    gopts.op.gtilde_override = disc.front();
    EnclaveEnv env(cfg);
    Table dummy = make_filler_table(env, in_schema, n_rows);
    std::size_t start = env.trace().size();
    do_group_hash(env, dummy, spec, params, gopts);
    return env.trace().fingerprint(start);
}

inline std::string simulate_group_sort_trace(const EnvConfig& cfg, const Schema& in_schema,
                                             uint64_t n_rows, const GroupSpec& spec,
                                             const PrivacyParams& params, OperatorOptions opts,
                                             const NoiseTape& tape) {
    auto targets = disclosed_targets(tape);
    opts.pinned_targets = &targets;
    EnclaveEnv env(cfg);
    Table dummy = make_filler_table(env, in_schema, n_rows);
    std::size_t start = env.trace().size();
    do_group_sort(env, dummy, spec, params, opts);
    return env.trace().fingerprint(start);
}

inline std::string simulate_join_trace(const EnvConfig& cfg, const Schema& pk_schema,
                                       uint64_t n_pk, const Schema& fk_schema, uint64_t n_fk,
                                       const std::string& pk_col, const std::string& fk_col,
                                       const PrivacyParams& params, OperatorOptions opts,
                                       const NoiseTape& tape) {
    auto targets = disclosed_targets(tape);
    opts.pinned_targets = &targets;
    EnclaveEnv env(cfg);
    Table dummy_pk = make_filler_table(env, pk_schema, n_pk);
    Table dummy_fk = make_filler_table(env, fk_schema, n_fk);
    std::size_t start = env.trace().size();
    do_join(env, dummy_pk, dummy_fk, pk_col, fk_col, params, opts);
    return env.trace().fingerprint(start);
}

}  // namespace dob
