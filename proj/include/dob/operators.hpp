#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dob/distinct.hpp"
#include "dob/prefix_sum.hpp"
#include "dob/sort.hpp"
#include "dob/table.hpp"

namespace dob {

// ---- predicates ----

// Column comparisons combinable with AND/OR; evaluation never touches
// untrusted memory. Filler rows never match.
class Predicate {
  public:
    enum class Op { Lt, Le, Eq, Ge, Gt, Ne };

    static Predicate cmp_i64(std::string col, Op op, int64_t value) {
        Predicate p;
        p.node_ = Node{Kind::CmpI64, op, std::move(col), value, "", {}};
        return p;
    }
    static Predicate cmp_ascii(std::string col, Op op, std::string value) {
        Predicate p;
        p.node_ = Node{Kind::CmpAscii, op, std::move(col), 0, std::move(value), {}};
        return p;
    }
    static Predicate all_rows() {  // matches every real row
        Predicate p;
        p.node_ = Node{Kind::True, Op::Eq, "", 0, "", {}};
        return p;
    }
    static Predicate none() {
        Predicate p;
        p.node_ = Node{Kind::False, Op::Eq, "", 0, "", {}};
        return p;
    }
    static Predicate and_(Predicate a, Predicate b) { return combine(Kind::And, std::move(a), std::move(b)); }
    static Predicate or_(Predicate a, Predicate b) { return combine(Kind::Or, std::move(a), std::move(b)); }

    bool eval(const Schema& s, const uint8_t* row) const {
        if (row_is_filler(row)) return false;
        return eval_node(node_, s, row);
    }

  private:
    enum class Kind { CmpI64, CmpAscii, True, False, And, Or };
    struct Node {
        Kind kind;
        Op op;
        std::string col;
        int64_t i64;
        std::string str;
        std::vector<Node> children;
    };

    static Predicate combine(Kind k, Predicate a, Predicate b) {
        Predicate p;
        p.node_ = Node{k, Op::Eq, "", 0, "", {std::move(a.node_), std::move(b.node_)}};
        return p;
    }

    static bool apply(Op op, int r) {
        switch (op) {
            case Op::Lt: return r < 0;
            case Op::Le: return r <= 0;
            case Op::Eq: return r == 0;
            case Op::Ge: return r >= 0;
            case Op::Gt: return r > 0;
            case Op::Ne: return r != 0;
        }
        return false;
    }

    static bool eval_node(const Node& n, const Schema& s, const uint8_t* row) {
        switch (n.kind) {
            case Kind::True: return true;
            case Kind::False: return false;
            case Kind::And: return eval_node(n.children[0], s, row) && eval_node(n.children[1], s, row);
            case Kind::Or: return eval_node(n.children[0], s, row) || eval_node(n.children[1], s, row);
            case Kind::CmpI64: {
                std::size_t c = s.index_of(n.col);
                int64_t v = row_get_i64(s, row, c);
                return apply(n.op, v < n.i64 ? -1 : v > n.i64 ? 1 : 0);
            }
            case Kind::CmpAscii: {
                std::size_t c = s.index_of(n.col);
                std::string v = row_get_ascii(s, row, c);
                return apply(n.op, v.compare(n.str));
            }
        }
        return false;
    }

    Node node_;
};

// ---- grouping spec ----

enum class AggKind : uint8_t { Sum, Count, Min, Max };

struct GroupColumn {
    std::string name;
    uint32_t prefix_len = 0;  // ascii only: group by the first prefix_len bytes
};

struct Aggregation {
    AggKind kind;
    std::string col;  // ignored for Count

    std::string output_name() const {
        switch (kind) {
            case AggKind::Sum: return "sum_" + col;
            case AggKind::Count: return "count";
            case AggKind::Min: return "min_" + col;
            case AggKind::Max: return "max_" + col;
        }
        return "agg";
    }
};

struct GroupSpec {
    std::vector<GroupColumn> keys;
    std::vector<Aggregation> aggs;
};

namespace detail {

struct BoundGroupSpec {
    struct Key {
        std::size_t col;
        uint32_t offset;  // into the input row
        uint32_t width;   // bytes taken (prefix for substr grouping)
        ColType type;
        uint32_t out_width;
    };
    struct Agg {
        AggKind kind;
        std::size_t col;  // input column (unused for Count)
    };
    std::vector<Key> keys;
    std::vector<Agg> aggs;
    uint32_t key_width = 0;
    Schema out_schema;
};

inline BoundGroupSpec bind_group_spec(const Schema& in, const GroupSpec& spec) {
    if (spec.keys.empty()) throw SchemaError("grouping requires at least one key column");
    BoundGroupSpec b;
    std::vector<Column> out_cols;
    for (const auto& k : spec.keys) {
        std::size_t c = in.index_of(k.name);
        const Column& col = in.col(c);
        uint32_t width = col.width;
        if (k.prefix_len) {
            if (col.type != ColType::Ascii) throw SchemaError("prefix grouping needs an ascii column");
            width = std::min(width, k.prefix_len);
        }
        b.keys.push_back({c, in.offset(c), width, col.type, width});
        b.key_width += width;
        out_cols.push_back(col.type == ColType::Int64 ? Column::i64(k.name)
                                                      : Column::ascii(k.name, width));
    }
    for (const auto& a : spec.aggs) {
        std::size_t c = a.kind == AggKind::Count ? 0 : in.index_of(a.col);
        if (a.kind != AggKind::Count && in.col(c).type != ColType::Int64)
            throw SchemaError("aggregation needs an int64 column");
        b.aggs.push_back({a.kind, c});
        out_cols.push_back(Column::i64(a.output_name()));
    }
    b.out_schema = Schema(out_cols);
    return b;
}

inline void extract_group_key(const BoundGroupSpec& b, const uint8_t* row, std::string& out) {
    out.clear();
    for (const auto& k : b.keys)
        out.append(reinterpret_cast<const char*>(row + k.offset), k.width);
}

struct AggState {
    std::vector<int64_t> v;
    void init(const BoundGroupSpec& b, const uint8_t* row, const Schema& in) {
        v.resize(b.aggs.size());
        for (std::size_t i = 0; i < b.aggs.size(); ++i) {
            const auto& a = b.aggs[i];
            switch (a.kind) {
                case AggKind::Count: v[i] = 1; break;
                default: v[i] = row_get_i64(in, row, a.col);
            }
        }
    }
    void update(const BoundGroupSpec& b, const uint8_t* row, const Schema& in) {
        for (std::size_t i = 0; i < b.aggs.size(); ++i) {
            const auto& a = b.aggs[i];
            switch (a.kind) {
                case AggKind::Count: v[i] += 1; break;
                case AggKind::Sum: v[i] += row_get_i64(in, row, a.col); break;
                case AggKind::Min: v[i] = std::min(v[i], row_get_i64(in, row, a.col)); break;
                case AggKind::Max: v[i] = std::max(v[i], row_get_i64(in, row, a.col)); break;
            }
        }
    }
};

// Builds an output row from a packed key string plus aggregate values.
inline void emit_group_row(const BoundGroupSpec& b, const std::string& key,
                           const AggState& st, uint8_t* out) {
    std::memset(out, 0, b.out_schema.row_width());
    row_set_filler(out, false);
    std::size_t koff = 0;
    for (std::size_t i = 0; i < b.keys.size(); ++i) {
        const auto& k = b.keys[i];
        std::memcpy(out + b.out_schema.offset(i), key.data() + koff, k.out_width);
        koff += k.width;
    }
    for (std::size_t i = 0; i < b.aggs.size(); ++i) {
        int64_t v = st.v[i];
        std::memcpy(out + b.out_schema.offset(b.keys.size() + i), &v, 8);
    }
}

}  // namespace detail

// ---- FIFO buffer with privacy-failure conversion ----

// Capacity-2s FIFO in private memory. Exceeding capacity never crashes; the
// caller converts the would-be overflow into an immediate output write.
class FifoBuffer {
  public:
    FifoBuffer(EnclaveEnv& env, uint64_t capacity, uint64_t width)
        : capacity_(capacity), width_(width), reserve_(env, capacity * width) {}

    uint64_t size() const { return rows_.size(); }
    uint64_t capacity() const { return capacity_; }
    bool full() const { return rows_.size() >= capacity_; }

    void push(const uint8_t* row) { rows_.emplace_back(row, row + width_); }

    std::vector<uint8_t> pop() {
        auto r = std::move(rows_.front());
        rows_.pop_front();
        return r;
    }

    std::vector<uint8_t> pop_back() {
        auto r = std::move(rows_.back());
        rows_.pop_back();
        return r;
    }

  private:
    uint64_t capacity_, width_;
    PrivateReservation reserve_;
    std::deque<std::vector<uint8_t>> rows_;
};

// ---- shared operator plumbing ----

enum class EnclaveObliviousness : uint8_t {
    Standard,           // private-memory access pattern not hidden
    InEnclaveOblivious  // buffer is compacted with a bitonic pass per batch
};

struct OperatorOptions {
    EnclaveObliviousness mode = EnclaveObliviousness::Standard;
    BoundMode bound_mode = BoundMode::Analytic;
    bool noise_enabled = true;
    uint64_t s_override = 0;              // pinned buffer bound (rows)
    std::optional<double> gtilde_override;  // pinned DP distinct estimate
    const std::vector<int64_t>* pinned_targets = nullptr;  // data-free replay
    BucketSortOptions sort;
};

struct OperatorStats {
    uint64_t input_rows = 0;
    uint64_t output_rows = 0;
    uint64_t s = 0;
    uint64_t batches = 0;
    uint64_t conversions_overflow = 0;
    uint64_t conversions_underflow = 0;
    // grouping
    double gtilde = 0.0;
    uint64_t k = 0;
    uint64_t m_groups = 0;
    uint64_t groups_seen = 0;
    bool sketch_underfilled = false;
    // join
    uint64_t dangling_fk = 0;
    uint64_t real_matches = 0;
    // sort
    BucketSortStats bucket;
    bool used_bucket_sort = false;
};

struct OperatorResult {
    Table table;
    OperatorStats stats;
};

namespace detail {

// Streams batches of a table, pushes selected rows through the FIFO, and
// paces output writes with the DP prefix-sum oracle. Shared by filtering and
// sort-based grouping: `classify` turns each row into (stream bit, optional
// row to push).
class PacedEmitter {
  public:
    PacedEmitter(EnclaveEnv& env, Table& out, uint64_t s, uint64_t horizon,
                 const PrivacyParams& params, const OperatorOptions& opts, OperatorStats& stats)
        : env_(env),
          out_(out),
          writer_(env, out),
          width_(out.schema.row_width()),
          s_(s),
          oracle_(horizon, params, env.rng(), opts.noise_enabled),
          // oblivious mode pushes every row and truncates back to 2s at each
          // batch end, so the buffer peaks at 3s inside a batch
          fifo_(env, (opts.mode == EnclaveObliviousness::InEnclaveOblivious ? 3 : 2) * s,
                out.schema.row_width()),
          opts_(opts),
          stats_(stats),
          oblivious_(opts.mode == EnclaveObliviousness::InEnclaveOblivious) {
        stats_.s = s;
    }

    // bit: the prefix-sum stream value at this position.
    // push_row: row to push, or nullptr (pushes a filler in oblivious mode).
    void feed(bool bit, const uint8_t* push_row) {
        env_.tick();
        oracle_.feed(bit);
        if (push_row) {
            push_seq(push_row);
        } else if (oblivious_) {
            std::vector<uint8_t> f(width_, 0);
            row_set_filler(f.data(), true);
            push_seq(f.data());
        }
    }

    // End of a read batch at stream position c: write until |out| = Y~_c - s.
    void batch_boundary(uint64_t c) {
        ++stats_.batches;
        if (oblivious_) compact_and_truncate();
        int64_t target = pinned_target_available()
                             ? next_pinned_target()
                             : static_cast<int64_t>(std::floor(oracle_.query(c))) -
                                   static_cast<int64_t>(s_);
        drain_to(target);
        env_.rng().disclose(static_cast<double>(writer_.rows_written()));
    }

    // Final flush: write everything buffered plus fillers to |out| = Y~_N + s.
    void finish() {
        if (oblivious_) compact_and_truncate();
        int64_t target = pinned_target_available()
                             ? next_pinned_target()
                             : static_cast<int64_t>(std::floor(oracle_.query(oracle_.items_consumed()))) +
                                   static_cast<int64_t>(s_);
        // pop every remaining real row even if the target is too small
        while (fifo_.size() > 0) {
            if (static_cast<int64_t>(writer_.rows_written()) >= target) ++stats_.conversions_overflow;
            auto r = fifo_.pop();
            if (oblivious_ && row_is_filler(r.data())) continue;
            writer_.append_raw(r.data());
        }
        while (static_cast<int64_t>(writer_.rows_written()) < target) writer_.append_filler();
        writer_.finish();
        stats_.output_rows = out_.row_count;
        env_.rng().disclose(static_cast<double>(out_.row_count));
    }

    PrefixSumOracle& oracle() { return oracle_; }

  private:
    bool pinned_target_available() const {
        return opts_.pinned_targets && pinned_idx_ < opts_.pinned_targets->size();
    }
    int64_t next_pinned_target() { return (*opts_.pinned_targets)[pinned_idx_++]; }

    void push_seq(const uint8_t* row) {
        if (!oblivious_ && fifo_.full()) {
            // overflow conversion: the oldest buffered row goes out now
            auto r = fifo_.pop();
            ++stats_.conversions_overflow;
            writer_.append_raw(r.data());
        }
        fifo_.push(row);
        if (oblivious_) seqs_.push_back(next_seq_++);
    }

    void drain_to(int64_t target) {
        while (static_cast<int64_t>(writer_.rows_written()) < target) {
            if (fifo_.size() == 0) {
                ++stats_.conversions_underflow;
                writer_.append_filler();
                continue;
            }
            auto r = fifo_.pop();
            if (oblivious_) {
                seqs_.pop_front();
                if (row_is_filler(r.data())) {
                    // a filler surviving compaction means no real rows remain
                    ++stats_.conversions_underflow;
                }
            }
            writer_.append_raw(r.data());
        }
    }

    // In-enclave oblivious mode: bitonic-compact the buffer (real rows first,
    // stable via arrival sequence), then truncate the tail back to 2s.
    void compact_and_truncate() {
        uint64_t n = fifo_.size();
        if (n > 1) {
            std::vector<uint8_t> buf;
            const uint64_t rw = width_ + 8;
            buf.reserve(n * rw);
            for (uint64_t i = 0; i < n; ++i) {
                auto r = fifo_.pop();
                uint64_t sq = seqs_.front();
                seqs_.pop_front();
                buf.insert(buf.end(), r.begin(), r.end());
                const uint8_t* sp = reinterpret_cast<const uint8_t*>(&sq);
                buf.insert(buf.end(), sp, sp + 8);
            }
            std::vector<uint8_t> pad(rw, 0xff);
            row_set_filler(pad.data(), true);
            auto cmp = [&](const uint8_t* a, const uint8_t* b) {
                int fa = row_is_filler(a) ? 1 : 0, fb = row_is_filler(b) ? 1 : 0;
                if (fa != fb) return fa - fb;
                uint64_t sa, sb;
                std::memcpy(&sa, a + width_, 8);
                std::memcpy(&sb, b + width_, 8);
                return sa < sb ? -1 : sa > sb ? 1 : 0;
            };
            bitonic_sort_rows(env_, buf, n, rw, pad.data(), cmp);
            for (uint64_t i = 0; i < n; ++i) {
                fifo_.push(buf.data() + i * rw);
                uint64_t sq;
                std::memcpy(&sq, buf.data() + i * rw + width_, 8);
                seqs_.push_back(sq);
            }
        }
        while (fifo_.size() > 2 * s_) {
            auto r = fifo_.pop_back();
            seqs_.pop_back();
            if (!row_is_filler(r.data())) {
                // real row would be dropped by truncation: convert to a write
                ++stats_.conversions_overflow;
                writer_.append_raw(r.data());
            }
        }
    }

    EnclaveEnv& env_;
    Table& out_;
    TableWriter writer_;
    uint64_t width_, s_;
    PrefixSumOracle oracle_;
    FifoBuffer fifo_;
    const OperatorOptions& opts_;
    OperatorStats& stats_;
    bool oblivious_;
    std::deque<uint64_t> seqs_;
    uint64_t next_seq_ = 0;
    std::size_t pinned_idx_ = 0;
};

inline uint64_t effective_s(const EnclaveEnv& env, const Schema& schema,
                            const PrivacyParams& params, uint64_t horizon,
                            const OperatorOptions& opts) {
    uint64_t rpb = env.block_size() / schema.row_width();
    if (opts.s_override) {
        if (opts.s_override % rpb != 0) throw ParamError("s override must be block-aligned");
        return opts.s_override;
    }
    BufferBoundOptions bo;
    bo.mode = opts.bound_mode;
    bo.noise_enabled = opts.noise_enabled;
    return estimate_buffer_bound(params, std::max<uint64_t>(horizon, 2), rpb, bo).s;
}

}  // namespace detail

// ---- DoFilter ----

// Streams the input in s-row batches, buffers matches in a 2s FIFO, and lets
// the DP prefix-sum oracle decide how far the write pointer may advance.
// Buffer overflow/underflow become output writes instead of failures.
inline OperatorResult do_filter(EnclaveEnv& env, const Table& input, const Predicate& pred,
                                const std::vector<std::string>& projection,
                                const PrivacyParams& params, const OperatorOptions& opts = {}) {
    params.validate();
    const Schema& in_schema = input.schema;

    std::vector<std::size_t> proj_cols;
    std::vector<Column> out_cols;
    if (projection.empty()) {
        for (std::size_t c = 0; c < in_schema.num_columns(); ++c) {
            proj_cols.push_back(c);
            out_cols.push_back(in_schema.col(c));
        }
    } else {
        for (const auto& name : projection) {
            std::size_t c = in_schema.index_of(name);
            proj_cols.push_back(c);
            out_cols.push_back(in_schema.col(c));
        }
    }
    Schema out_schema(out_cols);

    OperatorStats stats;
    stats.input_rows = input.row_count;
    const uint64_t n = input.row_count;
    uint64_t s = detail::effective_s(env, in_schema, params, n, opts);

    Table out = make_table(env, out_schema);
    detail::PacedEmitter emitter(env, out, s, std::max<uint64_t>(n, 1), params, opts, stats);

    std::vector<uint8_t> proj_row(out_schema.row_width(), 0);
    auto project = [&](const uint8_t* row) {
        row_set_filler(proj_row.data(), false);
        for (std::size_t i = 0; i < proj_cols.size(); ++i)
            std::memcpy(proj_row.data() + out_schema.offset(i),
                        row + in_schema.offset(proj_cols[i]), in_schema.col(proj_cols[i]).width);
        return proj_row.data();
    };

    if (n > 0) {
        TableScanner sc(env, input, s);
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                const uint8_t* row = sc.raw(i);
                bool match = pred.eval(in_schema, row);
                emitter.feed(match, match ? project(row) : nullptr);
            }
            emitter.batch_boundary(sc.position());
        }
    }
    emitter.finish();
    return {out, stats};
}

// ---- DoGroup_h: hash-based grouping ----

struct GroupHashOptions {
    OperatorOptions op;
    uint64_t m_groups_override = 0;  // private hash-table capacity in groups
};

inline uint64_t m_groups_for(uint64_t private_capacity_bytes, uint64_t out_row_width) {
    // hash-table slot overhead on top of the stored group row, 0.7 load factor
    const uint64_t kFixedOverhead = 1 << 16;
    const uint64_t kSlotOverhead = 48;
    if (private_capacity_bytes <= kFixedOverhead) throw BudgetError("private memory too small");
    uint64_t per = out_row_width + kSlotOverhead;
    return static_cast<uint64_t>(0.7 * static_cast<double>((private_capacity_bytes - kFixedOverhead) / per));
}

// k passes over the input; pass i aggregates only the groups whose PRF value
// lands in [i/k, (i+1)/k) and pads its output to exactly m_groups rows, so the
// trace depends on the data only through the DP distinct-count estimate.
inline OperatorResult do_group_hash(EnclaveEnv& env, const Table& input, const GroupSpec& spec,
                                    const PrivacyParams& params, const GroupHashOptions& gopts = {}) {
    params.validate();
    const OperatorOptions& opts = gopts.op;
    const Schema& in_schema = input.schema;
    auto bound = detail::bind_group_spec(in_schema, spec);

    OperatorStats stats;
    stats.input_rows = input.row_count;
    const uint64_t n = input.row_count;
    const uint64_t scan_batch = input.rows_per_block(env) * 8;

    // pass 0: DP distinct count of the group keys (eta = 0.1, delta/2)
    const double eta = 0.1;
    double gtilde;
    uint64_t t = static_cast<uint64_t>(std::ceil(sketch_size_for(params.epsilon, eta, params.delta / 2)));
    {
        DistinctSketch sketch(t, derive_key128(env.seed(), 0xd15717c7));
        PrivateReservation rsv(env, t * 24);
        std::string keybuf;
        if (n > 0) {
            TableScanner sc(env, input, std::min<uint64_t>(scan_batch, round_up(n, input.rows_per_block(env))));
            uint64_t m;
            while ((m = sc.next_batch()) > 0) {
                for (uint64_t i = 0; i < m; ++i) {
                    const uint8_t* row = sc.raw(i);
                    if (row_is_filler(row)) continue;
                    env.tick();
                    detail::extract_group_key(bound, row, keybuf);
                    sketch.update(std::span<const uint8_t>(
                        reinterpret_cast<const uint8_t*>(keybuf.data()), keybuf.size()));
                }
            }
        }
        DistinctOptions dopts{opts.noise_enabled};
        auto est = distinct_estimate(sketch, params.epsilon, eta, params.delta / 2, env.rng(), dopts);
        stats.sketch_underfilled = est.underfilled;
        gtilde = std::max(1.0, est.g_tilde);
    }
    if (opts.gtilde_override) gtilde = *opts.gtilde_override;
    stats.gtilde = gtilde;
    env.rng().disclose(gtilde);

    uint64_t m_groups = gopts.m_groups_override
                            ? gopts.m_groups_override
                            : m_groups_for(env.private_capacity(), bound.out_schema.row_width());
    stats.m_groups = m_groups;

    uint64_t k = static_cast<uint64_t>(std::ceil(gtilde / (0.9 * static_cast<double>(m_groups))));
    if (k < 1) k = 1;
    stats.k = k;
    env.rng().disclose(static_cast<double>(k));

    // partition-size feasibility (binomial tail at delta over k passes)
    if (std::sqrt(0.5 * gtilde * std::log(2.0 * static_cast<double>(k) / params.delta)) >
        0.1 * static_cast<double>(m_groups))
        throw InfeasibleMemory("partition size check failed: grow private memory");

    SipHash part_prf(derive_key128(env.seed(), 0x9a271710));

    Table out = make_table(env, bound.out_schema);
    TableWriter writer(env, out);
    std::vector<uint8_t> out_row(bound.out_schema.row_width(), 0);

    for (uint64_t pass = 0; pass < k; ++pass) {
        std::unordered_map<std::string, detail::AggState> groups;
        groups.reserve(m_groups + 1);
        PrivateReservation rsv(env, m_groups * (bound.out_schema.row_width() + 48));
        std::string keybuf;
        if (n > 0) {
            TableScanner sc(env, input, std::min<uint64_t>(scan_batch, round_up(n, input.rows_per_block(env))));
            uint64_t m;
            while ((m = sc.next_batch()) > 0) {
                for (uint64_t i = 0; i < m; ++i) {
                    const uint8_t* row = sc.raw(i);
                    if (row_is_filler(row)) continue;
                    env.tick();
                    detail::extract_group_key(bound, row, keybuf);
                    double h = part_prf.hash01(std::span<const uint8_t>(
                        reinterpret_cast<const uint8_t*>(keybuf.data()), keybuf.size()));
                    uint64_t slot = static_cast<uint64_t>(h * static_cast<double>(k));
                    if (slot >= k) slot = k - 1;
                    if (slot != pass) continue;
                    auto it = groups.find(keybuf);
                    if (it == groups.end()) {
                        if (groups.size() >= m_groups) throw PartitionOverflow(pass);
                        groups[keybuf].init(bound, row, in_schema);
                    } else {
                        it->second.update(bound, row, in_schema);
                    }
                }
            }
        }
        stats.groups_seen += groups.size();
        for (const auto& [key, st] : groups) {
            detail::emit_group_row(bound, key, st, out_row.data());
            writer.append_raw(out_row.data());
        }
        for (uint64_t i = groups.size(); i < m_groups; ++i) writer.append_filler();
    }
    writer.finish();
    stats.output_rows = out.row_count;
    return {out, stats};
}

// ---- DoGroup_s: sort-based grouping ----

// Bucket-oblivious-sort by the grouping key, then one paced scan: group
// boundaries feed the prefix-sum oracle and completed groups go through the
// same FIFO/pacing as filtering. The boundary stream carries one virtual
// trailing 1 so its total equals the number of groups.
inline OperatorResult do_group_sort(EnclaveEnv& env, const Table& input, const GroupSpec& spec,
                                    const PrivacyParams& params, const OperatorOptions& opts = {}) {
    params.validate();
    const Schema& in_schema = input.schema;
    auto bound = detail::bind_group_spec(in_schema, spec);

    OperatorStats stats;
    stats.input_rows = input.row_count;

    SortKey key;
    for (const auto& k : bound.keys) key.cols.push_back(k.col);
    Table sorted = bucket_oblivious_sort(env, input, key, opts.sort, &stats.bucket);
    stats.used_bucket_sort = true;

    const uint64_t n = sorted.row_count;
    const uint64_t horizon = n + 1;
    uint64_t s = detail::effective_s(env, in_schema, params, horizon, opts);

    Table out = make_table(env, bound.out_schema);
    detail::PacedEmitter emitter(env, out, s, horizon, params, opts, stats);

    std::vector<uint8_t> group_row(bound.out_schema.row_width(), 0);
    std::string cur_key, row_key;
    detail::AggState cur{};
    bool open = false;

    if (n > 0) {
        TableScanner sc(env, sorted, round_up(s, sorted.rows_per_block(env)));
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                const uint8_t* row = sc.raw(i);
                if (row_is_filler(row)) {
                    if (open) {
                        detail::emit_group_row(bound, cur_key, cur, group_row.data());
                        emitter.feed(true, group_row.data());
                        open = false;
                    } else {
                        emitter.feed(false, nullptr);
                    }
                    continue;
                }
                detail::extract_group_key(bound, row, row_key);
                if (open && row_key == cur_key) {
                    cur.update(bound, row, in_schema);
                    emitter.feed(false, nullptr);
                } else {
                    if (open) {
                        detail::emit_group_row(bound, cur_key, cur, group_row.data());
                        emitter.feed(true, group_row.data());
                    } else {
                        emitter.feed(false, nullptr);
                    }
                    cur_key = row_key;
                    cur.init(bound, row, in_schema);
                    open = true;
                    ++stats.groups_seen;
                }
            }
            emitter.batch_boundary(sc.position());
        }
    }
    // virtual trailing position closes the last group
    if (open) {
        detail::emit_group_row(bound, cur_key, cur, group_row.data());
        emitter.feed(true, group_row.data());
    } else {
        emitter.feed(false, nullptr);
    }
    emitter.finish();
    stats.output_rows = out.row_count;
    return {out, stats};
}

// ---- DoJoin: foreign-key join ----

struct JoinResult {
    Table table;
    OperatorStats stats;
    OperatorStats filter_stats;
};

// Marks and pads both sides, bucket-oblivious-sorts the concatenation by
// (key, mark) so each primary row precedes its foreign rows, scans once
// emitting a filler per primary row and a joined row per foreign row, then
// removes fillers with do_filter.
inline JoinResult do_join(EnclaveEnv& env, const Table& pk_table, const Table& fk_table,
                          const std::string& pk_col, const std::string& fk_col,
                          const PrivacyParams& params, const OperatorOptions& opts = {}) {
    params.validate();
    const Schema& rs = pk_table.schema;
    const Schema& ss = fk_table.schema;
    std::size_t rk = rs.index_of(pk_col);
    std::size_t sk = ss.index_of(fk_col);
    if (rs.col(rk).type != ss.col(sk).type || rs.col(rk).width != ss.col(sk).width)
        throw SchemaError("join key columns must have identical type and width");

    OperatorStats stats;
    stats.input_rows = pk_table.row_count + fk_table.row_count;

    // marked row: common key k, mark, then both payloads padded to one width
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

    SortKey mkey;
    mkey.cols = {0, 1};  // key, then mark ('r' < 's')
    Table sorted = bucket_oblivious_sort(env, marked, mkey, opts.sort, &stats.bucket);
    stats.used_bucket_sort = true;

    // joined row: key, fk payload columns, pk payload columns (keys once)
    std::vector<Column> jcols;
    jcols.push_back(mcols[0]);
    std::vector<std::size_t> s_cols, r_cols;
    for (std::size_t c = 0; c < ss.num_columns(); ++c)
        if (c != sk) { jcols.push_back(ss.col(c)); s_cols.push_back(c); }
    for (std::size_t c = 0; c < rs.num_columns(); ++c)
        if (c != rk) { jcols.push_back(rs.col(c)); r_cols.push_back(c); }
    Schema jschema(jcols);

    Table intermediate = make_table(env, jschema);
    {
        TableWriter w(env, intermediate);
        std::vector<uint8_t> jrow(jschema.row_width(), 0);
        std::vector<uint8_t> working(rs.row_width(), 0);
        std::vector<uint8_t> wkey(key_w, 0);
        bool have_working = false;
        TableScanner sc(env, sorted, sorted.rows_per_block(env) * 8);
        uint64_t m;
        while ((m = sc.next_batch()) > 0) {
            for (uint64_t i = 0; i < m; ++i) {
                const uint8_t* row = sc.raw(i);
                env.tick();
                if (row_is_filler(row)) {
                    std::memset(jrow.data(), 0, jrow.size());
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
                    std::memset(jrow.data(), 0, jrow.size());
                    row_set_filler(jrow.data(), true);
                    w.append_raw(jrow.data());
                } else {
                    bool matched = have_working && std::memcmp(wkey.data(), key_bytes, key_w) == 0;
                    if (!matched) ++stats.dangling_fk;
                    ++stats.real_matches;
                    std::memset(jrow.data(), 0, jrow.size());
                    row_set_filler(jrow.data(), false);
                    std::memcpy(jrow.data() + jschema.offset(0), key_bytes, key_w);
                    std::size_t out_c = 1;
                    for (std::size_t c : s_cols) {
                        std::memcpy(jrow.data() + jschema.offset(out_c), payload + ss.offset(c),
                                    ss.col(c).width);
                        ++out_c;
                    }
                    for (std::size_t c : r_cols) {
                        if (matched)
                            std::memcpy(jrow.data() + jschema.offset(out_c),
                                        working.data() + rs.offset(c), rs.col(c).width);
                        ++out_c;
                    }
                    w.append_raw(jrow.data());
                }
            }
        }
        w.finish();
    }

    auto filtered = do_filter(env, intermediate, Predicate::all_rows(), {}, params, opts);
    JoinResult out;
    out.table = filtered.table;
    stats.output_rows = filtered.table.row_count;
    stats.s = filtered.stats.s;
    out.stats = stats;
    out.filter_stats = filtered.stats;
    return out;
}

}  // namespace dob
