#pragma once

#include <string>

namespace cha {

// Shortest text that parses back to the same double: "2.0", "1e-4", "0.25".
std::string format_double(double value);
double parse_double(const std::string& text);

}  // namespace cha
