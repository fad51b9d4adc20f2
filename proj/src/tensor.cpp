#include "shadownet/tensor.hpp"

#include <sstream>

namespace shadownet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < rank; ++i) {
    if (i) os << ",";
    os << d[i];
  }
  os << ")";
  return os.str();
}

}  // namespace shadownet
