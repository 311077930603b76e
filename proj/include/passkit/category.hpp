#pragma once

#include <optional>
#include <string_view>

namespace passkit {

// Numbering follows the listing order accuracy, compilation, runtime.
enum class ErrorCategory { none = 0, accuracy = 1, compilation = 2, runtime = 3 };

std::string_view category_name(ErrorCategory c);
std::optional<ErrorCategory> category_from_name(std::string_view s);

}  // namespace passkit
