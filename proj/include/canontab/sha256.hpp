#pragma once

#include <string>
#include <string_view>

namespace canontab {

// SHA-256 digest as 64 lowercase hex characters.
std::string sha256_hex(std::string_view bytes);

}  // namespace canontab
