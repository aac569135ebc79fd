#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dob {

struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct AddressError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct SizeError : std::length_error {
    using std::length_error::length_error;
};

struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Private-memory budget exceeded; aborts the run.
struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bucket oblivious sort: more than Z real elements routed into one bucket.
struct OverflowAbort : std::runtime_error {
    std::size_t level;
    explicit OverflowAbort(std::size_t lvl)
        : std::runtime_error("bucket overflow at butterfly level " + std::to_string(lvl)),
          level(lvl) {}
};

// Grouping: the partition-size check failed before any pass started.
struct InfeasibleMemory : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Grouping: a pass produced more groups than the private hash table holds.
struct PartitionOverflow : std::runtime_error {
    std::size_t pass;
    explicit PartitionOverflow(std::size_t p)
        : std::runtime_error("hash table overflow in pass " + std::to_string(p)), pass(p) {}
};

// Single-pass baseline fixture: distinct groups exceeded private capacity.
struct GroupCapacityExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dob
