#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace flowsentry::csv {

/// Quotes a field when it contains a separator, quote, or line break.
std::string escape(std::string_view field);

/// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> split(std::string_view line);

std::string format_double(double value);

}  // namespace flowsentry::csv
