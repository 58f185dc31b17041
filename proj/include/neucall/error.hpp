#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace neucall {

// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotElf : public Error {
 public:
  NotElf() : Error("not an ELF file (bad magic)") {}
};

class UnsupportedMachine : public Error {
 public:
  explicit UnsupportedMachine(std::uint16_t machine)
      : Error("unsupported ELF machine " + std::to_string(machine)), machine_(machine) {}
  std::uint16_t machine() const { return machine_; }

 private:
  std::uint16_t machine_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& reason)
      : Error("schema error at line " + std::to_string(line) + ": " + reason), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigViolation : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  VersionMismatch(unsigned found, unsigned expected)
      : Error("format version " + std::to_string(found) + " is not supported (expected " +
              std::to_string(expected) + ")") {}
};

class CorruptGraph : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidNode : public Error {
 public:
  explicit InvalidNode(std::size_t node) : Error("invalid node id " + std::to_string(node)) {}
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(std::size_t batch)
      : Error("non-finite loss in batch " + std::to_string(batch)), batch_(batch) {}
  std::size_t batch() const { return batch_; }

 private:
  std::size_t batch_;
};

class TooFewProjects : public Error {
 public:
  explicit TooFewProjects(std::size_t n)
      : Error("project split needs at least 3 projects, got " + std::to_string(n)) {}
};

class UnresolvedAddress : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("empty input") {}
};

class DegenerateClasses : public Error {
 public:
  DegenerateClasses() : Error("AUROC needs at least one positive and one negative") {}
};

class NoIcalls : public Error {
 public:
  NoIcalls() : Error("AICT needs at least one indirect call") {}
};

class MissingExternalVector : public Error {
 public:
  explicit MissingExternalVector(std::uint64_t block)
      : Error("no external embedding for block 0x" + to_hex(block)) {}

 private:
  static std::string to_hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
  }
};

class EigensolveFailure : public Error {
 public:
  explicit EigensolveFailure(std::size_t component)
      : Error("eigensolver did not converge on component " + std::to_string(component)) {}
};

// Non-fatal findings collected by operations whose policy is "warn and continue".
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace neucall
