#include "nvs/splits.hpp"

#include "nvs/errors.hpp"

namespace nvs {

Split categorize_split(double ratio) {
  if (ratio >= 0.2 && ratio < 0.4) return Split::kSmall;
  if (ratio >= 0.4 && ratio < 0.6) return Split::kMedium;
  if (ratio >= 0.6 && ratio <= 0.8) return Split::kLarge;
  return Split::kOutOfRange;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kSmall: return "small";
    case Split::kMedium: return "medium";
    case Split::kLarge: return "large";
    case Split::kOutOfRange: break;
  }
  return "out-of-range";
}

Split parse_split(std::string_view name) {
  if (name == "small") return Split::kSmall;
  if (name == "medium") return Split::kMedium;
  if (name == "large") return Split::kLarge;
  throw ValidationError("unknown bin '" + std::string(name) + "' (expected small, medium or large)");
}

}  // namespace nvs
