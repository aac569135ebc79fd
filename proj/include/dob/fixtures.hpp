#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "dob/operators.hpp"

namespace dob {
namespace fixtures {

// Baselines used as negative controls and padding/transfer comparisons.
// Minimal single-purpose implementations, not full reimplementations.

// Naive non-oblivious filter: write each match as soon as it is read. The
// interleaving of reads and writes tracks the match positions directly.
inline OperatorResult naive_filter(EnclaveEnv& env, const Table& input, const Predicate& pred) {
    OperatorStats stats;
    stats.input_rows = input.row_count;
    Table out = make_table(env, input.schema);
    TableWriter w(env, out);
    if (input.row_count > 0) {
        TableScanner sc(env, input, input.rows_per_block(env));
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                env.tick();
                if (pred.eval(input.schema, sc.raw(i))) w.append_raw(sc.raw(i));
            }
        }
    }
    w.finish();
    stats.output_rows = out.row_count;
    return {out, stats};
}

// Fully oblivious filter with worst-case padding: one output row per input
// row (match or filler), so output size is always N.
inline OperatorResult padded_filter(EnclaveEnv& env, const Table& input, const Predicate& pred) {
    OperatorStats stats;
    stats.input_rows = input.row_count;
    Table out = make_table(env, input.schema);
    TableWriter w(env, out);
    if (input.row_count > 0) {
        TableScanner sc(env, input, input.rows_per_block(env));
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                env.tick();
                if (pred.eval(input.schema, sc.raw(i)))
                    w.append_raw(sc.raw(i));
                else
                    w.append_filler();
            }
        }
    }
    w.finish();
    stats.output_rows = out.row_count;
    return {out, stats};
}

// Single-pass hash grouping: assumes every distinct group fits in private
// memory at once; aborts otherwise. Output padded to the full capacity.
inline OperatorResult single_pass_group(EnclaveEnv& env, const Table& input, const GroupSpec& spec,
                                        uint64_t m_groups) {
    auto bound = detail::bind_group_spec(input.schema, spec);
    OperatorStats stats;
    stats.input_rows = input.row_count;
    stats.m_groups = m_groups;
    stats.k = 1;
    std::unordered_map<std::string, detail::AggState> groups;
    groups.reserve(m_groups + 1);
    PrivateReservation rsv(env, m_groups * (bound.out_schema.row_width() + 48));
    std::string keybuf;
    if (input.row_count > 0) {
        TableScanner sc(env, input, input.rows_per_block(env) * 8);
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                const uint8_t* row = sc.raw(i);
                if (row_is_filler(row)) continue;
                env.tick();
                detail::extract_group_key(bound, row, keybuf);
                auto it = groups.find(keybuf);
                if (it == groups.end()) {
                    if (groups.size() >= m_groups)
                        throw GroupCapacityExceeded("distinct groups exceed private capacity");
                    groups[keybuf].init(bound, row, input.schema);
                } else {
                    it->second.update(bound, row, input.schema);
                }
            }
        }
    }
    stats.groups_seen = groups.size();
    Table out = make_table(env, bound.out_schema);
    TableWriter w(env, out);
    std::vector<uint8_t> out_row(bound.out_schema.row_width(), 0);
    for (const auto& [key, st] : groups) {
        detail::emit_group_row(bound, key, st, out_row.data());
        w.append_raw(out_row.data());
    }
    for (uint64_t i = groups.size(); i < m_groups; ++i) w.append_filler();
    w.finish();
    stats.output_rows = out.row_count;
    return {out, stats};
}

// Fully oblivious foreign-key join: bitonic sort of the marked concatenation,
// a scan emitting one row per input row, a second bitonic pass to push the
// fillers behind the joined rows, output padded to the worst case (N rows).
inline OperatorResult padded_bitonic_join(EnclaveEnv& env, const Table& pk_table,
                                          const Table& fk_table, const std::string& pk_col,
                                          const std::string& fk_col) {
    const Schema& rs = pk_table.schema;
    const Schema& ss = fk_table.schema;
    std::size_t rk = rs.index_of(pk_col);
    std::size_t sk = ss.index_of(fk_col);
    if (rs.col(rk).type != ss.col(sk).type || rs.col(rk).width != ss.col(sk).width)
        throw SchemaError("join key columns must have identical type and width");

    OperatorStats stats;
    stats.input_rows = pk_table.row_count + fk_table.row_count;

    const uint32_t key_w = rs.col(rk).width;
    const uint32_t pay_w = std::max(rs.row_width(), ss.row_width());
    std::vector<Column> mcols;
    mcols.push_back(rs.col(rk).type == ColType::Int64 ? Column::i64("k") : Column::ascii("k", key_w));
    mcols.push_back(Column::ascii("mark", 1));
    mcols.push_back(Column::ascii("payload", pay_w));
    Schema mschema(mcols);

    Table marked = make_table(env, mschema);
    {
        TableWriter w(env, marked);
        std::vector<uint8_t> mrow(mschema.row_width(), 0);
        auto emit_side = [&](const Table& t, const Schema& s, std::size_t kc, char mark) {
            if (t.row_count == 0) return;
            TableScanner sc(env, t, t.rows_per_block(env) * 8);
            uint64_t m;
            while ((m = sc.next_batch()) > 0) {
                for (uint64_t i = 0; i < m; ++i) {
                    const uint8_t* row = sc.raw(i);
                    env.tick();
                    std::memset(mrow.data(), 0, mrow.size());
                    row_set_filler(mrow.data(), row_is_filler(row));
                    std::memcpy(mrow.data() + mschema.offset(0), row + s.offset(kc), key_w);
                    mrow[mschema.offset(1)] = static_cast<uint8_t>(mark);
                    std::memcpy(mrow.data() + mschema.offset(2), row, s.row_width());
                    w.append_raw(mrow.data());
                }
            }
        };
        emit_side(pk_table, rs, rk, 'r');
        emit_side(fk_table, ss, sk, 's');
        w.finish();
    }

    const uint64_t n_total = marked.row_count;
    uint64_t pow2 = 1;
    while (pow2 < n_total) pow2 <<= 1;
    {
        std::vector<uint8_t> pad(mschema.row_width(), 0);
        row_set_filler(pad.data(), true);
        ensure_region_rows(env, marked.region, mschema.row_width(), pow2, pad.data());
        SortKey mkey;
        mkey.cols = {0, 1};
        external_bitonic(env, marked.region, pow2, mschema.row_width(),
                         env.private_capacity() / 2,
                         [&](const uint8_t* a, const uint8_t* b) {
                             return row_compare(mschema, mkey, a, b);
                         });
    }

    std::vector<Column> jcols;
    jcols.push_back(mcols[0]);
    std::vector<std::size_t> s_cols, r_cols;
    for (std::size_t c = 0; c < ss.num_columns(); ++c)
        if (c != sk) { jcols.push_back(ss.col(c)); s_cols.push_back(c); }
    for (std::size_t c = 0; c < rs.num_columns(); ++c)
        if (c != rk) { jcols.push_back(rs.col(c)); r_cols.push_back(c); }
    Schema jschema(jcols);

    Table out = make_table(env, jschema);
    {
        TableWriter w(env, out);
        std::vector<uint8_t> jrow(jschema.row_width(), 0);
        std::vector<uint8_t> working(rs.row_width(), 0);
        std::vector<uint8_t> wkey(key_w, 0);
        bool have_working = false;
        TableScanner sc(env, marked, marked.rows_per_block(env) * 8);
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                const uint8_t* row = sc.raw(i);
                env.tick();
                std::memset(jrow.data(), 0, jrow.size());
                if (row_is_filler(row)) {
                    row_set_filler(jrow.data(), true);
                    w.append_raw(jrow.data());
                    continue;
                }
                const uint8_t* key_bytes = row + mschema.offset(0);
                char mark = static_cast<char>(row[mschema.offset(1)]);
                const uint8_t* payload = row + mschema.offset(2);
                if (mark == 'r') {
                    std::memcpy(working.data(), payload, rs.row_width());
                    std::memcpy(wkey.data(), key_bytes, key_w);
                    have_working = true;
                    row_set_filler(jrow.data(), true);
                } else {
                    bool matched = have_working && std::memcmp(wkey.data(), key_bytes, key_w) == 0;
                    if (!matched) ++stats.dangling_fk;
                    row_set_filler(jrow.data(), false);
                    std::memcpy(jrow.data() + jschema.offset(0), key_bytes, key_w);
                    std::size_t out_c = 1;
                    for (std::size_t c : s_cols)
                        std::memcpy(jrow.data() + jschema.offset(out_c++), payload + ss.offset(c),
                                    ss.col(c).width);
                    for (std::size_t c : r_cols) {
                        if (matched)
                            std::memcpy(jrow.data() + jschema.offset(out_c),
                                        working.data() + rs.offset(c), rs.col(c).width);
                        ++out_c;
                    }
                }
                w.append_raw(jrow.data());
            }
        }
        w.finish();
    }

    // push fillers behind the joined rows; keep the worst-case N output
    {
        uint64_t p2 = 1;
        while (p2 < out.row_count) p2 <<= 1;
        std::vector<uint8_t> pad(jschema.row_width(), 0);
        row_set_filler(pad.data(), true);
        ensure_region_rows(env, out.region, jschema.row_width(), p2, pad.data());
        SortKey fkey;  // filler flag only: stable enough for padding
        external_bitonic(env, out.region, p2, jschema.row_width(), env.private_capacity() / 2,
                         [&](const uint8_t* a, const uint8_t* b) {
                             return row_compare(jschema, fkey, a, b);
                         });
    }
    stats.output_rows = out.row_count;
    return {out, stats};
}

}  // namespace fixtures
}  // namespace dob
