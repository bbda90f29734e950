#ifndef OLDNASH_ERROR_HPP
#define OLDNASH_ERROR_HPP

#include <stdexcept>
#include <string>

namespace oldnash {

/// Machine-readable failure categories; the CLI maps them to exit codes.
enum class ErrorCode {
  invalid_argument,    // bad call-level input (grid too coarse, t<0, ...)
  grid_mismatch,       // fields from different grids combined
  region_violation,    // region outside domain, overlap, core !⊂ support
  non_dissipative,     // kernel constraint nu - k/lambda > 0 violated
  config_unknown_key,
  config_missing_key,
  config_bad_value,
  factorization_failed,
  solver_diverged,     // fixed point / Krylov non-contraction or stagnation
  solver_nan,
  io_failed,           // filesystem problems
  checkpoint_bad_magic,
  checkpoint_bad_version,
  checkpoint_truncated,
  checkpoint_grid_mismatch,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::grid_mismatch: return "grid_mismatch";
    case ErrorCode::region_violation: return "region_violation";
    case ErrorCode::non_dissipative: return "non_dissipative";
    case ErrorCode::config_unknown_key: return "config_unknown_key";
    case ErrorCode::config_missing_key: return "config_missing_key";
    case ErrorCode::config_bad_value: return "config_bad_value";
    case ErrorCode::factorization_failed: return "factorization_failed";
    case ErrorCode::solver_diverged: return "solver_diverged";
    case ErrorCode::solver_nan: return "solver_nan";
    case ErrorCode::io_failed: return "io_failed";
    case ErrorCode::checkpoint_bad_magic: return "checkpoint_bad_magic";
    case ErrorCode::checkpoint_bad_version: return "checkpoint_bad_version";
    case ErrorCode::checkpoint_truncated: return "checkpoint_truncated";
    case ErrorCode::checkpoint_grid_mismatch: return "checkpoint_grid_mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace oldnash

#endif
