#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace exprsaug::text {

std::vector<std::string_view> split_tabs(std::string_view line);

/// Parses a decimal real; returns false on trailing garbage or an empty field.
bool parse_real(std::string_view field, double& out);

/// Shortest decimal form that parses back to the identical double.
std::string format_real(double v);

std::string to_lower(std::string_view s);

}  // namespace exprsaug::text
