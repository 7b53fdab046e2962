#include "grapht5/error.hpp"

namespace grapht5 {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kContract: return "contract";
    case ErrorCategory::kLex: return "lex";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kUnsupportedElement: return "unsupported-element";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kVersion: return "version";
    case ErrorCategory::kEvaluation: return "evaluation";
    case ErrorCategory::kDivergence: return "divergence";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

}  // namespace grapht5
