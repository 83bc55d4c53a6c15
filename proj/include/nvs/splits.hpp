#pragma once

// Out-of-view split labels: small [0.2,0.4), medium [0.4,0.6), large [0.6,0.8].

#include <string>
#include <string_view>

namespace nvs {

enum class Split { kSmall, kMedium, kLarge, kOutOfRange };

/// Boundary ratios go to the upper bin; 0.8 itself is still large.
Split categorize_split(double ratio);
std::string split_name(Split s);
/// Throws ValidationError for anything but small/medium/large.
Split parse_split(std::string_view name);

}  // namespace nvs
