#include "auscult/types.hpp"

#include <string>

#include "auscult/error.hpp"

namespace auscult {

Label parse_label(std::string_view s) {
    if (s == "crackle" || s == "1") return Label::Crackle;
    if (s == "no-crackle" || s == "0") return Label::NoCrackle;
    throw DataError("unknown label '" + std::string(s) + "'");
}

}  // namespace auscult
