#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

namespace isgr {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Stable 16-hex-digit key over `parts`, joined with the ASCII unit separator so
/// that ("ab","c") and ("a","bc") hash differently.
std::string stable_key(std::initializer_list<std::string_view> parts);

std::string base64_encode(std::string_view data);

}  // namespace isgr
