#include "lexfusion/types.hpp"

namespace lexfusion {

std::string to_string(const Span& span) {
  return "(" + std::to_string(span.start) + ", " + std::to_string(span.end) + ")";
}

}  // namespace lexfusion
