#pragma once
#include <stdexcept>
#include <string>

namespace itr {

// Error taxonomy maps onto CLI exit codes: 2 config, 3 data, 4 numerical, 5 io.
struct Error : std::runtime_error {
  int exit_code;
  Error(int code, const std::string& msg) : std::runtime_error(msg), exit_code(code) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(2, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(3, msg) {}
};

// singular fits, nonconvergence, degenerate denominators
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(4, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(5, msg) {}
};

}  // namespace itr
