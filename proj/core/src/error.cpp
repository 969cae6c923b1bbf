#include "induction/error.hpp"

namespace induction {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_too_small: return "dimension-too-small";
    case Errc::sequence_too_long: return "sequence-too-long";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::corrupt_file: return "corrupt-file";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace induction
