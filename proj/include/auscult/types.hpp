#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace auscult {

using Signal = std::vector<double>;
using Rows = std::vector<std::vector<double>>;

/// Binary task label; crackle is the positive class.
enum class Label : std::uint8_t { NoCrackle = 0, Crackle = 1 };

using Labels = std::vector<Label>;

inline std::string_view to_string(Label l) {
    return l == Label::Crackle ? "crackle" : "no-crackle";
}

Label parse_label(std::string_view s);

}  // namespace auscult
