#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexfusion {

/// Decodes UTF-8 into Unicode scalar values. Throws std::invalid_argument on
/// malformed input, naming the byte offset.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);
std::string utf8_encode(char32_t code_point);

}  // namespace lexfusion
