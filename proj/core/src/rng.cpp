#include "tsforge/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tsforge/errors.hpp"

namespace tsforge {

double Rng::normal() {
  double u1 = uniform_open01();
  double u2 = uniform_open01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::load_state(const std::string& text) {
  std::istringstream is(text);
  std::mt19937_64 restored;
  is >> restored;
  if (is.fail()) throw DataError("rng state text is not a valid mt19937_64 state");
  engine_ = restored;
}

}  // namespace tsforge
