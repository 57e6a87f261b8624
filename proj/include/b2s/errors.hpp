#ifndef B2S_ERRORS_HPP_
#define B2S_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace b2s {

// Error categories double as CLI exit codes.
enum class ErrorKind : int {
  kArgument = 2,
  kParse = 3,
  kIntegrity = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::kArgument, w) {}
};

// Parameter outside an evaluation domain.
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::kArgument, w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kArgument, w) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorKind::kParse, w) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorKind::kIntegrity, w) {}
};

struct MultiplicityError : Error {
  explicit MultiplicityError(const std::string& w) : Error(ErrorKind::kIntegrity, w) {}
};

struct TopologyError : Error {
  explicit TopologyError(const std::string& w) : Error(ErrorKind::kIntegrity, w) {}
};

// Rational weight sum collapsed to zero or below.
struct DegeneracyError : Error {
  explicit DegeneracyError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};

struct TrainingError : Error {
  TrainingError(const std::string& w, long step)
      : Error(ErrorKind::kNumeric, w), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace b2s

#endif  // B2S_ERRORS_HPP_
