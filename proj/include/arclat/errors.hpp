#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace arclat {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NegativeGap : Error {
    std::size_t control_point = 0;
    std::size_t leaf = 0;
    NegativeGap(std::size_t cp, std::size_t l, double value)
        : Error("negative gap " + std::to_string(value) + " at control point " +
                std::to_string(cp) + ", leaf " + std::to_string(l)),
          control_point(cp),
          leaf(l) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};

struct MalformedRecord : Error {
    std::size_t line = 0;
    MalformedRecord(std::size_t line_no, const std::string& msg)
        : Error("malformed record at line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

struct LeafOrderViolation : Error {
    LeafOrderViolation(std::ptrdiff_t l, std::ptrdiff_t r)
        : Error("leaf order violation: l=" + std::to_string(l) + " > r=" + std::to_string(r)) {}
};

struct EmptyDataset : Error {
    EmptyDataset() : Error("dataset is empty") {}
    explicit EmptyDataset(const std::string& msg) : Error("dataset is empty: " + msg) {}
};

struct InsufficientData : Error {
    explicit InsufficientData(const std::string& msg) : Error("insufficient data: " + msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& msg) : Error("non-finite loss: " + msg) {}
};

struct NonFiniteObjective : Error {
    explicit NonFiniteObjective(const std::string& msg) : Error("non-finite objective: " + msg) {}
};

struct NonFiniteValue : Error {
    explicit NonFiniteValue(const std::string& msg) : Error("non-finite value: " + msg) {}
};

struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& msg) : Error("index out of range: " + msg) {}
};

struct TooFewTrials : Error {
    explicit TooFewTrials(std::size_t n)
        : Error("too few trials for aggregation: " + std::to_string(n)) {}
};

struct UnsupportedLayer : Error {
    explicit UnsupportedLayer(const std::string& msg) : Error("unsupported layer: " + msg) {}
};

struct EmptyGrid : Error {
    explicit EmptyGrid(const std::string& msg) : Error("empty grid: " + msg) {}
};

// Always-on invariant check (independent of NDEBUG). Used for feasibility
// invariants that must hold in optimization loops.
#define ARCLAT_CHECK(cond, msg)                                        \
    do {                                                               \
        if (!(cond)) throw ::arclat::Error(std::string("check failed: ") + (msg)); \
    } while (0)

}  // namespace arclat
