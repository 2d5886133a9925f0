#include "selfrank/errors.hpp"

#include <cstdio>

namespace selfrank {

void log_warning(const std::string& message) {
  std::fprintf(stderr, "warning: %s\n", message.c_str());
}

}  // namespace selfrank
