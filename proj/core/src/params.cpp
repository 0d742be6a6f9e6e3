#include "tsforge/params.hpp"

#include <algorithm>

#include "tsforge/errors.hpp"

namespace tsforge {

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) {
    throw ContractError("parameter '" + name + "' registered twice");
  }
  if (!tensor.defined()) {
    throw ContractError("parameter '" + name + "' is undefined");
  }
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

Tensor& ParameterSet::at(std::string_view name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParameterSet::at(std::string_view name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.first == name; });
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

}  // namespace tsforge
