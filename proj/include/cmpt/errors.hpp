#pragma once

#include <stdexcept>
#include <string>

namespace cmpt {

// Shape preconditions violated (matmul conformance, width mismatches, ...).
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A graph op produced NaN/Inf. Message names the offending op.
struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset, protocol or checkpoint problems (missing files, corruption, infeasible protocols).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN loss during an optimization run; carries the offending batch index.
struct TrainingDivergenceError : std::runtime_error {
    int batch_index;
    TrainingDivergenceError(const std::string& what, int batch)
        : std::runtime_error(what), batch_index(batch) {}
};

// Sample reached the fusion head with no modality present.
struct InvalidSampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cmpt
