#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dob/rng.hpp"
#include "dob/table.hpp"

namespace dob {

// BDB-flavoured synthetic tables. Column layout echoes the benchmark tables;
// row widths are in the same spirit, not byte-exact.

inline Schema rankings_schema() {
    return Schema({Column::ascii("pageURL", 100), Column::i64("pageRank"),
                   Column::i64("avgDuration")});
}

inline Schema uservisits_schema() {
    return Schema({Column::ascii("sourceIP", 16), Column::ascii("destURL", 100),
                   Column::i64("visitDate"), Column::i64("adRevenue")});
}

enum class GroupCardinality {
    SqrtN,        // distinct sourceIP prefixes grow sublinearly with n
    FixedTarget,  // aim for a given number of distinct prefixes
};

struct GenOptions {
    GroupCardinality model = GroupCardinality::SqrtN;
    uint64_t target_groups = 0;     // FixedTarget only
    uint64_t url_universe = 0;      // 0: derive from n
    int64_t max_page_rank = 10000;  // pageRank uniform in [0, max)
};

inline std::string format_url(uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "url-%012llu", static_cast<unsigned long long>(id));
    return buf;
}

inline Table gen_rankings(EnclaveEnv& env, uint64_t n, uint64_t seed, const GenOptions& opts = {}) {
    Schema schema = rankings_schema();
    Table t = make_table(env, schema);
    if (n == 0) return t;
    uint64_t universe = opts.url_universe ? opts.url_universe : n;
    uint64_t st = seed ^ 0x72616e6bULL;
    TableWriter w(env, t);
    Tuple row(schema);
    for (uint64_t i = 0; i < n; ++i) {
        row_set_filler(row.data(), false);
        // unique pageURL per row: the primary key of the join benchmark
        row_set_ascii(schema, row.data(), 0, format_url(i % universe));
        row_set_i64(schema, row.data(), 1,
                    static_cast<int64_t>(splitmix64(st) % static_cast<uint64_t>(opts.max_page_rank)));
        row_set_i64(schema, row.data(), 2, static_cast<int64_t>(splitmix64(st) % 600));
        w.append(row);
    }
    w.finish();
    return t;
}

inline uint64_t gen_group_count(uint64_t n, const GenOptions& opts) {
    if (opts.model == GroupCardinality::FixedTarget && opts.target_groups > 0)
        return opts.target_groups;
    uint64_t g = static_cast<uint64_t>(2.0 * std::sqrt(static_cast<double>(n)));
    return std::max<uint64_t>(g, 1);
}

// sourceIP carries the group id in its first 8 bytes; destURL references the
// Rankings pageURL universe so the join is referentially intact.
inline Table gen_uservisits(EnclaveEnv& env, uint64_t n, uint64_t seed,
                            uint64_t ranking_universe, const GenOptions& opts = {}) {
    Schema schema = uservisits_schema();
    Table t = make_table(env, schema);
    if (n == 0) return t;
    uint64_t groups = gen_group_count(n, opts);
    uint64_t st = seed ^ 0x75736572ULL;
    TableWriter w(env, t);
    Tuple row(schema);
    char ip[24];
    for (uint64_t i = 0; i < n; ++i) {
        row_set_filler(row.data(), false);
        uint64_t g = splitmix64(st) % groups;
        std::snprintf(ip, sizeof ip, "%08llx.%03llu", static_cast<unsigned long long>(g),
                      static_cast<unsigned long long>(splitmix64(st) % 1000));
        row_set_ascii(schema, row.data(), 0, ip);
        uint64_t url = ranking_universe ? splitmix64(st) % ranking_universe : 0;
        row_set_ascii(schema, row.data(), 1, format_url(url));
        row_set_i64(schema, row.data(), 2, static_cast<int64_t>(19800101 + splitmix64(st) % 10000));
        row_set_i64(schema, row.data(), 3, static_cast<int64_t>(splitmix64(st) % 1000));
        w.append(row);
    }
    w.finish();
    return t;
}

// Small generic table for randomized operator tests: key column with bounded
// cardinality plus a value column.
inline Schema kv_schema(uint32_t key_width = 12) {
    return Schema({Column::ascii("key", key_width), Column::i64("value")});
}

inline Table gen_kv(EnclaveEnv& env, uint64_t n, uint64_t key_cardinality, uint64_t seed) {
    Schema schema = kv_schema();
    Table t = make_table(env, schema);
    if (n == 0) return t;
    uint64_t st = seed ^ 0x6b76ULL;
    TableWriter w(env, t);
    Tuple row(schema);
    char key[16];
    for (uint64_t i = 0; i < n; ++i) {
        row_set_filler(row.data(), false);
        std::snprintf(key, sizeof key, "k%010llu",
                      static_cast<unsigned long long>(splitmix64(st) % key_cardinality));
        row_set_ascii(schema, row.data(), 0, key);
        row_set_i64(schema, row.data(), 1, static_cast<int64_t>(splitmix64(st) % 100000));
        w.append(row);
    }
    w.finish();
    return t;
}

}  // namespace dob
