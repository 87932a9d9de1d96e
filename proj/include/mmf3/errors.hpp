#pragma once

#include <stdexcept>
#include <string>

namespace mmf3 {

// Malformed input data: dataset records, AST interchange, vocab files.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss, fully masked attention row and the like.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Shape or wiring mistakes inside the pipeline; these indicate bugs.
class ShapeError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace mmf3
