#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cotforge {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Non-fatal warnings (degenerate batches, skipped pairs). Default sink is
// stderr; tests may install their own handler.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

// Hex SHA-256, used for request hashing and config digests.
std::string sha256_hex(std::string_view data);

// {name} placeholder substitution. Unknown placeholders raise ParseError;
// literal braces are not supported in template assets.
std::string fill_placeholders(std::string_view text,
                              const std::vector<std::pair<std::string, std::string>>& values);

} // namespace cotforge
