#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "dob/memory.hpp"
#include "dob/prefix_sum.hpp"
#include "dob/table.hpp"

namespace dob {

// Content-only sort keys over fixed-width rows. Fillers sort last so padding
// never displaces real rows.
struct SortKey {
    std::vector<std::size_t> cols;
    bool filler_last = true;
};

inline int compare_i64(const uint8_t* a, const uint8_t* b) {
    int64_t x, y;
    std::memcpy(&x, a, 8);
    std::memcpy(&y, b, 8);
    return (x < y) ? -1 : (x > y) ? 1 : 0;
}

// Three-way row comparison under a SortKey.
inline int row_compare(const Schema& s, const SortKey& key, const uint8_t* a, const uint8_t* b) {
    if (key.filler_last) {
        int fa = row_is_filler(a) ? 1 : 0, fb = row_is_filler(b) ? 1 : 0;
        if (fa != fb) return fa - fb;
    }
    for (std::size_t c : key.cols) {
        const Column& col = s.col(c);
        int r;
        if (col.type == ColType::Int64)
            r = compare_i64(a + s.offset(c), b + s.offset(c));
        else
            r = std::memcmp(a + s.offset(c), b + s.offset(c), col.width);
        if (r != 0) return r;
    }
    return 0;
}

// In-private-memory bitonic network over count rows of the given width.
// count must be a power of two; the compare-exchange sequence depends only on
// count. Cmp is a three-way comparator on raw rows.
template <typename Cmp>
void bitonic_network(EnclaveEnv& env, uint8_t* base, uint64_t count, uint64_t width, Cmp&& cmp) {
    if (count <= 1) return;
    if (count & (count - 1)) throw ParamError("bitonic size must be a power of two");
    std::vector<uint8_t> tmp(width);
    for (uint64_t k = 2; k <= count; k <<= 1) {
        for (uint64_t j = k >> 1; j > 0; j >>= 1) {
            for (uint64_t i = 0; i < count; ++i) {
                uint64_t l = i ^ j;
                if (l <= i) continue;
                env.tick();
                bool up = (i & k) == 0;
                uint8_t* a = base + i * width;
                uint8_t* b = base + l * width;
                int r = cmp(a, b);
                if ((up && r > 0) || (!up && r < 0)) {
                    std::memcpy(tmp.data(), a, width);
                    std::memcpy(a, b, width);
                    std::memcpy(b, tmp.data(), width);
                }
            }
        }
    }
}

// Pads a row buffer to a power of two with copies of pad_row (which must sort
// last under cmp), runs the network, leaves the padding in place.
template <typename Cmp>
void bitonic_sort_rows(EnclaveEnv& env, std::vector<uint8_t>& buf, uint64_t count, uint64_t width,
                       const uint8_t* pad_row, Cmp&& cmp) {
    uint64_t n = 1;
    while (n < count) n <<= 1;
    buf.resize(n * width);
    for (uint64_t i = count; i < n; ++i) std::memcpy(buf.data() + i * width, pad_row, width);
    bitonic_network(env, buf.data(), n, width, cmp);
}

// Private-memory view of a row range of an untrusted region; rows are packed
// rows_per_block to a block and never straddle blocks, so a window touches
// exactly its covering blocks.
class RowWindow {
  public:
    RowWindow(EnclaveEnv& env, RegionId region, uint64_t width, uint64_t first, uint64_t count)
        : env_(env), region_(region), width_(width), first_(first), count_(count) {
        rpb_ = env.block_size() / width;
        first_block_ = first / rpb_;
        uint64_t last_block = (first + count - 1) / rpb_;
        nblocks_ = last_block - first_block_ + 1;
        reserve_ = PrivateReservation(env, nblocks_ * env.block_size());
        buf_.resize(nblocks_ * env.block_size());
        for (uint64_t b = 0; b < nblocks_; ++b) {
            auto blk = env.read_block({region, first_block_ + b});
            std::memcpy(buf_.data() + b * env.block_size(), blk.data(), blk.size());
        }
    }

    uint8_t* row(uint64_t i) {
        uint64_t r = first_ + i;
        return buf_.data() + (r / rpb_ - first_block_) * env_.block_size() + (r % rpb_) * width_;
    }

    uint64_t count() const { return count_; }

    void store() {
        for (uint64_t b = 0; b < nblocks_; ++b)
            env_.write_block({region_, first_block_ + b},
                             std::span<const uint8_t>(buf_.data() + b * env_.block_size(),
                                                      env_.block_size()));
    }

  private:
    EnclaveEnv& env_;
    RegionId region_;
    uint64_t width_, first_, count_, rpb_, first_block_, nblocks_;
    PrivateReservation reserve_;
    std::vector<uint8_t> buf_;
};

// Appends blocks of pad rows until the region holds at least `rows` rows.
inline void ensure_region_rows(EnclaveEnv& env, RegionId region, uint64_t width, uint64_t rows,
                               const uint8_t* pad_row) {
    uint64_t rpb = env.block_size() / width;
    uint64_t need = (rows + rpb - 1) / rpb;
    std::vector<uint8_t> blk(env.block_size(), 0);
    for (uint64_t i = 0; i < rpb; ++i) std::memcpy(blk.data() + i * width, pad_row, width);
    while (env.region_blocks(region) < need)
        env.write_block({region, env.region_blocks(region)}, blk);
}

// External bitonic sort over a region of fixed-width rows. slots must be a
// power of two and every slot must exist. Runs whole sub-networks in private
// memory once the compare distance fits in a window; the trace is a function
// of (slots, width, window size) only.
template <typename Cmp>
void external_bitonic(EnclaveEnv& env, RegionId region, uint64_t slots, uint64_t width,
                      uint64_t private_budget_bytes, Cmp&& cmp) {
    if (slots <= 1) return;
    if (slots & (slots - 1)) throw ParamError("external bitonic needs power-of-two slots");
    uint64_t run = 1;
    while (run * 2 * width * 2 <= private_budget_bytes && run < slots) run <<= 1;
    // run rows per window; a pairwise pass holds two windows.

    if (slots <= run) {
        RowWindow w(env, region, width, 0, slots);
        bitonic_network(env, w.row(0), slots, width, cmp);
        w.store();
        return;
    }

    std::vector<uint8_t> tmp(width);
    auto exchange = [&](uint8_t* a, uint8_t* b, bool up) {
        env.tick();
        int r = cmp(a, b);
        if ((up && r > 0) || (!up && r < 0)) {
            std::memcpy(tmp.data(), a, width);
            std::memcpy(a, b, width);
            std::memcpy(b, tmp.data(), width);
        }
    };

    // All phases k <= run stay inside aligned windows: one pass loads each
    // window and runs those phases locally with the global directions.
    for (uint64_t base = 0; base < slots; base += run) {
        RowWindow w(env, region, width, base, run);
        for (uint64_t k = 2; k <= run; k <<= 1) {
            for (uint64_t j = k >> 1; j > 0; j >>= 1) {
                for (uint64_t i = 0; i < run; ++i) {
                    uint64_t l = i ^ j;
                    if (l <= i) continue;
                    bool up = ((base + i) & k) == 0;
                    exchange(w.row(i), w.row(l), up);
                }
            }
        }
        w.store();
    }

    for (uint64_t k = run << 1; k <= slots; k <<= 1) {
        uint64_t j = k >> 1;
        // passes whose distance spans windows: load window pairs
        for (; j >= run; j >>= 1) {
            for (uint64_t base = 0; base < slots; base += run) {
                if (base & j) continue;  // handled as the low side
                RowWindow lo(env, region, width, base, run);
                RowWindow hi(env, region, width, base + j, run);
                for (uint64_t i = 0; i < run; ++i) {
                    bool up = ((base + i) & k) == 0;
                    exchange(lo.row(i), hi.row(i), up);
                }
                lo.store();
                hi.store();
            }
        }
        // remaining distances all fit inside one window
        if (j > 0) {
            for (uint64_t base = 0; base < slots; base += run) {
                RowWindow w(env, region, width, base, run);
                for (uint64_t jj = j; jj > 0; jj >>= 1) {
                    for (uint64_t i = 0; i < run; ++i) {
                        uint64_t l = i ^ jj;
                        if (l <= i) continue;
                        bool up = ((base + i) & k) == 0;
                        exchange(w.row(i), w.row(l), up);
                    }
                }
                w.store();
            }
        }
    }
}

// ---- bucket oblivious sort ----

struct BucketPlan {
    uint64_t z = 512;          // bucket capacity (power of two)
    uint64_t buckets = 0;      // power of two, >= 2 ceil(N/Z)
    uint64_t levels = 0;
    uint64_t chunk = 0;        // input rows seeded per bucket (<= Z/2)
    uint64_t slot_width = 0;   // 1 class byte + 8 tag bytes + payload
};

// Capacity needed so every bucket at every level stays within Z except with
// probability about delta_sort, via a multiplicative Chernoff bound on a
// half-full bucket.
inline uint64_t chernoff_bucket_capacity(uint64_t n, double delta_sort) {
    uint64_t z = 2;
    for (int iter = 0; iter < 4; ++iter) {
        uint64_t buckets = 2;
        while (buckets * z < 2 * n) buckets <<= 1;
        uint64_t levels = ceil_log2(buckets);
        double events = static_cast<double>(std::max<uint64_t>(buckets * std::max<uint64_t>(levels, 1), 2));
        double need = 6.0 * std::log(events / delta_sort);
        uint64_t znew = 2;
        while (static_cast<double>(znew) < need) znew <<= 1;
        if (znew == z) break;
        z = znew;
    }
    return z;
}

struct BucketSortOptions {
    uint64_t z = 512;
    double delta_sort = std::pow(2.0, -40);
    // Default finish is shuffle-then-sort: after the butterfly the layout is
    // a uniformly random permutation, so collecting the real slots and
    // sorting them leaks nothing about the keys (only the random tags).
    // strict = true instead bitonic-sorts every padded slot, making the whole
    // trace a fixed function of the shape; the trace-structure suites use it.
    bool strict = false;
    uint64_t private_budget = 0;  // 0: use half the env capacity
};

inline BucketPlan make_bucket_plan(const EnclaveEnv& env, uint64_t n, uint64_t payload_width,
                                   const BucketSortOptions& opts) {
    BucketPlan p;
    p.z = std::max<uint64_t>(opts.z, chernoff_bucket_capacity(n, opts.delta_sort));
    if (p.z & (p.z - 1)) throw ParamError("bucket capacity must be a power of two");
    p.buckets = 2;
    while (p.buckets * p.z < 2 * n) p.buckets <<= 1;
    p.levels = ceil_log2(p.buckets);
    p.chunk = (n + p.buckets - 1) / p.buckets;
    if (p.chunk > p.z / 2) throw ParamError("bucket plan would exceed half-full seeding");
    p.slot_width = 1 + 8 + payload_width;
    if (p.slot_width > env.block_size()) throw SchemaError("slot wider than a block");
    return p;
}

namespace detail {

constexpr uint8_t kSlotReal = 0;
constexpr uint8_t kSlotPad = 1;

inline uint64_t slot_tag(const uint8_t* slot) {
    uint64_t t;
    std::memcpy(&t, slot + 1, 8);
    return t;
}
inline void write_slot(uint8_t* dst, uint8_t cls, uint64_t tag, const uint8_t* payload,
                       uint64_t w) {
    dst[0] = cls;
    std::memcpy(dst + 1, &tag, 8);
    if (payload)
        std::memcpy(dst + 9, payload, w);
    else
        std::memset(dst + 9, 0, w);
}

}  // namespace detail

struct BucketSortStats {
    BucketPlan plan;
    uint64_t n = 0;
};

// Bucket oblivious sort: tag rows uniformly, route through a butterfly of
// 2-bucket merges with every bucket padded back to Z, then sort. Overflowing
// a bucket aborts rather than degrading the routing pattern.
inline Table bucket_oblivious_sort(EnclaveEnv& env, const Table& input, const SortKey& key,
                                   const BucketSortOptions& opts = {},
                                   BucketSortStats* stats_out = nullptr) {
    const Schema& schema = input.schema;
    const uint64_t w = schema.row_width();
    const uint64_t n = input.row_count;
    Table out = make_table(env, schema);

    auto payload_cmp = [&](const uint8_t* a, const uint8_t* b) {
        return row_compare(schema, key, a, b);
    };

    if (n == 0) return out;

    uint64_t budget = opts.private_budget ? opts.private_budget : env.private_capacity() / 2;

    // Small inputs: one private sort pass.
    if (n * w <= budget / 2) {
        uint64_t pow2 = 1;
        while (pow2 < n) pow2 <<= 1;
        PrivateReservation rsv(env, pow2 * w);
        std::vector<uint8_t> buf;
        buf.reserve(pow2 * w);
        {
            TableScanner sc(env, input, input.rows_per_block(env));
            uint64_t m;
            while ((m = sc.next_batch()) > 0)
                for (uint64_t i = 0; i < m; ++i)
                    buf.insert(buf.end(), sc.raw(i), sc.raw(i) + w);
        }
        std::vector<uint8_t> pad(w, 0);
        row_set_filler(pad.data(), true);
        bitonic_sort_rows(env, buf, n, w, pad.data(), payload_cmp);
        TableWriter tw(env, out);
        for (uint64_t i = 0; i < n; ++i) tw.append_raw(buf.data() + i * w);
        tw.finish();
        if (stats_out) *stats_out = {make_bucket_plan(env, n, w, opts), n};
        return out;
    }

    BucketPlan plan = make_bucket_plan(env, n, w, opts);
    if (stats_out) *stats_out = {plan, n};
    const uint64_t sw = plan.slot_width;
    const uint64_t slots = plan.buckets * plan.z;

    RegionId scratch = env.create_region();

    // Distribute: consecutive input chunks seed each bucket, padded to Z.
    {
        TableScanner sc(env, input, input.rows_per_block(env));
        uint64_t srpb = env.block_size() / sw;
        PrivateReservation rsv(env, env.block_size());
        std::vector<uint8_t> blk(env.block_size(), 0);
        uint64_t fill = 0, next_block = 0;
        auto flush = [&]() {
            env.write_block({scratch, next_block++}, blk);
            std::fill(blk.begin(), blk.end(), 0);
            fill = 0;
        };
        auto emit = [&](uint8_t cls, uint64_t tag, const uint8_t* payload) {
            detail::write_slot(blk.data() + fill * sw, cls, tag, payload, w);
            if (++fill == srpb) flush();
        };
        uint64_t in_batch = 0, batch_pos = 0, consumed = 0;
        for (uint64_t b = 0; b < plan.buckets; ++b) {
            uint64_t real = std::min(plan.chunk, n - std::min(n, consumed));
            for (uint64_t i = 0; i < real; ++i) {
                if (batch_pos == in_batch) {
                    in_batch = sc.next_batch();
                    batch_pos = 0;
                }
                uint64_t tag = env.rng().uniform_bits() % plan.buckets;
                emit(detail::kSlotReal, tag, sc.raw(batch_pos++));
            }
            consumed += real;
            for (uint64_t i = real; i < plan.z; ++i) emit(detail::kSlotPad, 0, nullptr);
        }
        if (fill > 0) flush();
    }

    // Butterfly: at level l, bucket pairs differing in bit l exchange rows by
    // that tag bit; each output bucket is padded back to exactly Z.
    {
        PrivateReservation rsv(env, 2 * plan.z * sw);
        std::vector<uint8_t> lo_out(plan.z * sw), hi_out(plan.z * sw);
        for (uint64_t level = 0; level < plan.levels; ++level) {
            uint64_t half = 1ull << level;
            for (uint64_t a = 0; a < plan.buckets; ++a) {
                if (a & half) continue;
                uint64_t b = a | half;
                RowWindow wa(env, scratch, sw, a * plan.z, plan.z);
                RowWindow wb(env, scratch, sw, b * plan.z, plan.z);
                uint64_t nlo = 0, nhi = 0;
                auto route = [&](const uint8_t* slot) {
                    if (slot[0] != detail::kSlotReal) return;
                    env.tick();
                    if (detail::slot_tag(slot) & half) {
                        if (nhi == plan.z) throw OverflowAbort(level);
                        std::memcpy(hi_out.data() + (nhi++) * sw, slot, sw);
                    } else {
                        if (nlo == plan.z) throw OverflowAbort(level);
                        std::memcpy(lo_out.data() + (nlo++) * sw, slot, sw);
                    }
                };
                for (uint64_t i = 0; i < plan.z; ++i) route(wa.row(i));
                for (uint64_t i = 0; i < plan.z; ++i) route(wb.row(i));
                while (nlo < plan.z) detail::write_slot(lo_out.data() + (nlo++) * sw,
                                                        detail::kSlotPad, 0, nullptr, w);
                while (nhi < plan.z) detail::write_slot(hi_out.data() + (nhi++) * sw,
                                                        detail::kSlotPad, 0, nullptr, w);
                for (uint64_t i = 0; i < plan.z; ++i) std::memcpy(wa.row(i), lo_out.data() + i * sw, sw);
                for (uint64_t i = 0; i < plan.z; ++i) std::memcpy(wb.row(i), hi_out.data() + i * sw, sw);
                wa.store();
                wb.store();
            }
        }
    }

    auto slot_cmp = [&](const uint8_t* a, const uint8_t* b) {
        if (a[0] != b[0]) return a[0] < b[0] ? -1 : 1;  // padding last
        if (a[0] == detail::kSlotPad) return 0;
        return payload_cmp(a + 9, b + 9);
    };

    if (opts.strict) {
        external_bitonic(env, scratch, slots, sw, budget, slot_cmp);
        // first n slots are the sorted rows (real plus any input fillers)
        TableWriter tw(env, out);
        uint64_t srpb = env.block_size() / sw;
        PrivateReservation rsv(env, env.block_size());
        uint64_t idx = 0;
        for (uint64_t bidx = 0; idx < n; ++bidx) {
            auto blk = env.read_block({scratch, bidx});
            for (uint64_t i = 0; i < srpb && idx < n; ++i, ++idx)
                tw.append_raw(blk.data() + i * sw + 9);
        }
        tw.finish();
        return out;
    }

    // Shuffle-then-sort finish: collect real slots (content-dependent reads
    // of a uniformly shuffled layout), then bitonic the collected rows.
    {
        TableWriter tw(env, out);
        uint64_t srpb = env.block_size() / sw;
        uint64_t nblocks = (slots + srpb - 1) / srpb;
        PrivateReservation rsv(env, env.block_size());
        for (uint64_t bidx = 0; bidx < nblocks; ++bidx) {
            auto blk = env.read_block({scratch, bidx});
            uint64_t here = std::min(srpb, slots - bidx * srpb);
            for (uint64_t i = 0; i < here; ++i) {
                const uint8_t* slot = blk.data() + i * sw;
                if (slot[0] == detail::kSlotReal) tw.append_raw(slot + 9);
            }
        }
        tw.finish();
    }
    if (out.row_count != n) throw IntegrityError("bucket sort lost rows");
    uint64_t pow2 = 1;
    while (pow2 < n) pow2 <<= 1;
    std::vector<uint8_t> pad(w, 0);
    row_set_filler(pad.data(), true);
    ensure_region_rows(env, out.region, w, pow2, pad.data());
    external_bitonic(env, out.region, pow2, w, budget, payload_cmp);
    return out;
}

}  // namespace dob
