#pragma once

#include <stdexcept>
#include <string>

namespace plural {

// Corpus / dataset problems (missing files, dangling refs, bad records).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

// Numeric failure during training (NaN/Inf loss).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace plural
