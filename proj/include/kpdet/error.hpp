#ifndef KPDET_ERROR_HPP
#define KPDET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace kpdet {

// Categories map onto the CLI exit codes (bad input = 2, config = 3, internal = 1).
enum class ErrorKind { InvalidInput, Config, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& message) {
  return Error(ErrorKind::InvalidInput, message);
}

inline Error config_error(const std::string& message) {
  return Error(ErrorKind::Config, message);
}

inline Error internal_error(const std::string& message) {
  return Error(ErrorKind::Internal, message);
}

}  // namespace kpdet

#endif  // KPDET_ERROR_HPP
