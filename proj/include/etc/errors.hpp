// Error taxonomy shared by the library and the CLI. Each class carries the
// process exit code the CLI maps it to (0 ok, 2 validation, 3 dependency,
// 4 numerical, 5 I/O).
#pragma once

#include <stdexcept>
#include <string>

namespace etc {

class error : public std::runtime_error {
 public:
  error(std::string msg, int exit_code)
      : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class validation_error : public error {
 public:
  explicit validation_error(std::string msg) : error(std::move(msg), 2) {}
};

class dependency_error : public error {
 public:
  explicit dependency_error(std::string msg) : error(std::move(msg), 3) {}
};

class numerical_error : public error {
 public:
  explicit numerical_error(std::string msg) : error(std::move(msg), 4) {}
};

class io_error : public error {
 public:
  explicit io_error(std::string msg) : error(std::move(msg), 5) {}
};

// File-level failures, all I/O class.
class format_error : public io_error {
 public:
  explicit format_error(std::string msg) : io_error(std::move(msg)) {}
};

class corruption_error : public io_error {
 public:
  explicit corruption_error(std::string msg) : io_error(std::move(msg)) {}
};

class persistence_error : public io_error {
 public:
  explicit persistence_error(std::string msg) : io_error(std::move(msg)) {}
};

// Data fails a statistical precondition (zero variance, too few samples...).
class degenerate_data_error : public validation_error {
 public:
  explicit degenerate_data_error(std::string msg)
      : validation_error(std::move(msg)) {}
};

class undefined_moment_error : public validation_error {
 public:
  explicit undefined_moment_error(std::string msg)
      : validation_error(std::move(msg)) {}
};

// Operation invoked in a state that does not support it (e.g. no corrupted
// projector yet).
class state_error : public validation_error {
 public:
  explicit state_error(std::string msg) : validation_error(std::move(msg)) {}
};

class sampling_starvation_error : public numerical_error {
 public:
  explicit sampling_starvation_error(std::string msg)
      : numerical_error(std::move(msg)) {}
};

class divergence_error : public numerical_error {
 public:
  explicit divergence_error(std::string msg)
      : numerical_error(std::move(msg)) {}
};

class infeasible_selection_error : public numerical_error {
 public:
  explicit infeasible_selection_error(std::string msg)
      : numerical_error(std::move(msg)) {}
};

}  // namespace etc
