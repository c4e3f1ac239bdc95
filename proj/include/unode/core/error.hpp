#pragma once

#include <stdexcept>
#include <string>

namespace unode {

// Error categories map onto CLI exit codes: usage/config 1, data 2, numeric 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw UsageError(msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw DataError(msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw NumericError(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail_usage(msg);
}

}  // namespace unode
