#include "dsaqc/errors.hpp"

namespace dsaqc {

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const DegenerateDataError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 2;
  return 1;
}

}  // namespace dsaqc
