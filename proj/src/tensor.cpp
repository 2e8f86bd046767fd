// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/tensor.hpp"

namespace bilcnet {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace bilcnet
