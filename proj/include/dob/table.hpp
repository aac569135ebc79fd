#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dob/memory.hpp"

namespace dob {

enum class ColType : uint8_t { Int64, Ascii };

struct Column {
    std::string name;
    ColType type;
    uint32_t width;  // 8 for Int64, n for Ascii(n)

    static Column i64(std::string name) { return {std::move(name), ColType::Int64, 8}; }
    static Column ascii(std::string name, uint32_t n) { return {std::move(name), ColType::Ascii, n}; }
};

// Fixed-width rows: one filler-flag byte, then the column payloads. The flag
// travels inside the encrypted row, so fillers are invisible in the trace.
class Schema {
  public:
    Schema() = default;
    explicit Schema(std::vector<Column> cols) : cols_(std::move(cols)) {
        offsets_.resize(cols_.size());
        uint32_t off = 1;  // flag byte
        for (std::size_t i = 0; i < cols_.size(); ++i) {
            offsets_[i] = off;
            off += cols_[i].width;
        }
        row_width_ = off;
        if (row_width_ < 2) throw SchemaError("schema must have at least one column");
    }

    uint32_t row_width() const { return row_width_; }
    std::size_t num_columns() const { return cols_.size(); }
    const Column& col(std::size_t i) const { return cols_[i]; }
    uint32_t offset(std::size_t i) const { return offsets_[i]; }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < cols_.size(); ++i)
            if (cols_[i].name == name) return i;
        throw SchemaError("no column named " + name);
    }

    bool operator==(const Schema& o) const {
        if (cols_.size() != o.cols_.size()) return false;
        for (std::size_t i = 0; i < cols_.size(); ++i)
            if (cols_[i].type != o.cols_[i].type || cols_[i].width != o.cols_[i].width)
                return false;
        return true;
    }

  private:
    std::vector<Column> cols_;
    std::vector<uint32_t> offsets_;
    uint32_t row_width_ = 0;
};

constexpr uint8_t kRealFlag = 0x00;
constexpr uint8_t kFillerFlag = 0x01;

// Raw-row helpers; rows are byte spans of schema.row_width().
inline bool row_is_filler(const uint8_t* row) { return row[0] != kRealFlag; }
inline void row_set_filler(uint8_t* row, bool filler) { row[0] = filler ? kFillerFlag : kRealFlag; }

inline int64_t row_get_i64(const Schema& s, const uint8_t* row, std::size_t c) {
    int64_t v;
    std::memcpy(&v, row + s.offset(c), 8);
    return v;
}
inline void row_set_i64(const Schema& s, uint8_t* row, std::size_t c, int64_t v) {
    std::memcpy(row + s.offset(c), &v, 8);
}
inline std::string row_get_ascii(const Schema& s, const uint8_t* row, std::size_t c) {
    const char* p = reinterpret_cast<const char*>(row + s.offset(c));
    std::size_t n = strnlen(p, s.col(c).width);
    return std::string(p, n);
}
inline void row_set_ascii(const Schema& s, uint8_t* row, std::size_t c, const std::string& v) {
    uint32_t w = s.col(c).width;
    std::memset(row + s.offset(c), 0, w);
    std::memcpy(row + s.offset(c), v.data(), std::min<std::size_t>(v.size(), w));
}

// Owning tuple, convenient outside hot paths.
class Tuple {
  public:
    Tuple() = default;
    explicit Tuple(const Schema& s) : bytes_(s.row_width(), 0) {}
    Tuple(const Schema& s, const uint8_t* raw) : bytes_(raw, raw + s.row_width()) {}

    static Tuple filler(const Schema& s) {
        Tuple t(s);
        row_set_filler(t.data(), true);
        return t;
    }

    uint8_t* data() { return bytes_.data(); }
    const uint8_t* data() const { return bytes_.data(); }
    std::size_t size() const { return bytes_.size(); }
    bool is_filler() const { return row_is_filler(bytes_.data()); }

    bool operator==(const Tuple& o) const { return bytes_ == o.bytes_; }

  private:
    std::vector<uint8_t> bytes_;
};

struct Table {
    Schema schema;
    RegionId region = 0;
    uint64_t row_count = 0;

    uint64_t rows_per_block(const EnclaveEnv& env) const {
        uint64_t rpb = env.block_size() / schema.row_width();
        if (rpb == 0) throw SchemaError("row wider than a block");
        return rpb;
    }
    uint64_t block_count(const EnclaveEnv& env) const {
        uint64_t rpb = rows_per_block(env);
        return (row_count + rpb - 1) / rpb;
    }
};

inline Table make_table(EnclaveEnv& env, const Schema& schema) {
    return Table{schema, env.create_region(), 0};
}

// Appends rows whole blocks at a time; a partial final block is padded with
// filler rows when flushed so writes always move full blocks.
class TableWriter {
  public:
    TableWriter(EnclaveEnv& env, Table& table)
        : env_(env),
          table_(table),
          rpb_(table.rows_per_block(env)),
          width_(table.schema.row_width()),
          reserve_(env, env.block_size()),
          buf_(env.block_size(), 0) {
        if (table.row_count % rpb_ != 0 && table.row_count > 0)
            throw SchemaError("append requires block-aligned table tail");
        next_block_ = table.row_count / rpb_;
    }

    void append_raw(const uint8_t* row) {
        std::memcpy(buf_.data() + fill_ * width_, row, width_);
        ++fill_;
        ++table_.row_count;
        if (fill_ == rpb_) flush_block();
    }

    void append(const Tuple& t) { append_raw(t.data()); }

    void append_filler() {
        std::vector<uint8_t> f(width_, 0);
        row_set_filler(f.data(), true);
        append_raw(f.data());
    }

    uint64_t rows_written() const { return table_.row_count; }

    // Pads the trailing partial block with fillers (not counted as rows).
    void finish() {
        if (fill_ == 0) return;
        std::vector<uint8_t> f(width_, 0);
        row_set_filler(f.data(), true);
        while (fill_ < rpb_) {
            std::memcpy(buf_.data() + fill_ * width_, f.data(), width_);
            ++fill_;
        }
        flush_block();
    }

  private:
    void flush_block() {
        env_.write_block({table_.region, next_block_}, buf_);
        ++next_block_;
        fill_ = 0;
        std::fill(buf_.begin(), buf_.end(), 0);
    }

    EnclaveEnv& env_;
    Table& table_;
    uint64_t rpb_, width_;
    PrivateReservation reserve_;
    std::vector<uint8_t> buf_;
    uint64_t next_block_ = 0;
    uint64_t fill_ = 0;
};

// Sequential batched scan; batch_rows must be a whole number of blocks so the
// trace is exactly one sequential pass over the region.
class TableScanner {
  public:
    TableScanner(EnclaveEnv& env, const Table& table, uint64_t batch_rows)
        : env_(env),
          table_(table),
          rpb_(table.rows_per_block(env)),
          width_(table.schema.row_width()) {
        if (batch_rows < rpb_) throw ParamError("batch must cover at least one block");
        if (batch_rows % rpb_ != 0) throw ParamError("batch must be block-aligned");
        if (batch_rows * width_ > env.private_capacity())
            throw BudgetError("batch exceeds private memory");
        batch_rows_ = batch_rows;
        reserve_ = PrivateReservation(env, batch_rows * width_);
        buf_.resize(batch_rows * width_);
    }

    // Returns rows in this batch (0 at end). Row i at raw(i).
    uint64_t next_batch() {
        if (cursor_ >= table_.row_count) return 0;
        uint64_t want = std::min(batch_rows_, table_.row_count - cursor_);
        uint64_t first_block = cursor_ / rpb_;
        uint64_t last_block = (cursor_ + want - 1) / rpb_;
        uint64_t off = 0;
        for (uint64_t b = first_block; b <= last_block; ++b) {
            auto block = env_.read_block({table_.region, b});
            std::memcpy(buf_.data() + off, block.data(), block.size());
            off += block.size();
        }
        batch_size_ = want;
        cursor_ += want;
        return want;
    }

    const uint8_t* raw(uint64_t i) const { return buf_.data() + i * width_; }
    uint64_t position() const { return cursor_; }

  private:
    EnclaveEnv& env_;
    const Table& table_;
    uint64_t rpb_, width_;
    uint64_t batch_rows_ = 0;
    PrivateReservation reserve_;
    std::vector<uint8_t> buf_;
    uint64_t cursor_ = 0;
    uint64_t batch_size_ = 0;
};

inline void table_append_batched(EnclaveEnv& env, Table& table, const std::vector<Tuple>& rows) {
    if (rows.empty()) return;
    TableWriter w(env, table);
    for (const auto& t : rows) {
        if (t.size() != table.schema.row_width()) throw SchemaError("tuple width mismatch");
        w.append(t);
    }
    w.finish();
}

// All logical rows, in order (test/oracle convenience; not an oblivious path).
inline std::vector<Tuple> table_read_all(EnclaveEnv& env, const Table& table) {
    std::vector<Tuple> out;
    out.reserve(table.row_count);
    if (table.row_count == 0) return out;
    TableScanner sc(env, table, table.rows_per_block(env));
    uint64_t n;
    while ((n = sc.next_batch()) > 0)
        for (uint64_t i = 0; i < n; ++i) out.emplace_back(table.schema, sc.raw(i));
    return out;
}

inline Table table_from_tuples(EnclaveEnv& env, const Schema& schema,
                               const std::vector<Tuple>& rows) {
    Table t = make_table(env, schema);
    table_append_batched(env, t, rows);
    return t;
}

// Copy differing from the input in exactly one record.
inline Table make_neighbor(EnclaveEnv& env, const Table& table, uint64_t row_index,
                           const Tuple& replacement) {
    if (row_index >= table.row_count) throw AddressError("neighbor row out of range");
    if (replacement.size() != table.schema.row_width()) throw SchemaError("tuple width mismatch");
    auto rows = table_read_all(env, table);
    rows[row_index] = replacement;
    return table_from_tuples(env, table.schema, rows);
}

// ---- CSV ----

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline void table_export_csv(EnclaveEnv& env, const Table& table, std::ostream& os,
                             bool keep_fillers = false) {
    for (std::size_t c = 0; c < table.schema.num_columns(); ++c)
        os << (c ? "," : "") << csv_escape(table.schema.col(c).name);
    os << '\n';
    auto rows = table_read_all(env, table);
    for (const auto& t : rows) {
        if (t.is_filler() && !keep_fillers) continue;
        for (std::size_t c = 0; c < table.schema.num_columns(); ++c) {
            if (c) os << ',';
            if (table.schema.col(c).type == ColType::Int64)
                os << row_get_i64(table.schema, t.data(), c);
            else
                os << csv_escape(row_get_ascii(table.schema, t.data(), c));
        }
        os << '\n';
    }
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
            else if (c == '"') quoted = false;
            else cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline Table table_import_csv(EnclaveEnv& env, const Schema& schema, std::istream& is,
                              bool has_header = true) {
    std::vector<Tuple> rows;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && has_header) {
            first = false;
            continue;
        }
        first = false;
        if (line.empty()) continue;
        auto fields = csv_split(line);
        if (fields.size() != schema.num_columns()) throw SchemaError("csv column count mismatch");
        Tuple t(schema);
        for (std::size_t c = 0; c < schema.num_columns(); ++c) {
            if (schema.col(c).type == ColType::Int64)
                row_set_i64(schema, t.data(), c, std::stoll(fields[c]));
            else
                row_set_ascii(schema, t.data(), c, fields[c]);
        }
        rows.push_back(std::move(t));
    }
    return table_from_tuples(env, schema, rows);
}

}  // namespace dob
