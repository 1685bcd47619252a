#pragma once

#include <iostream>
#include <string_view>

namespace ncanet {

inline void log_warning(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

}  // namespace ncanet
