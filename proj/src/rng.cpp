#include "dualflow/rng.hpp"

#include <sstream>

#include "dualflow/errors.hpp"

namespace dualflow {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw DataError("rng: cannot parse engine state");
}

}  // namespace dualflow
