#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsforge/tensor.hpp"

namespace tsforge {

// Named, ordered set of trainable tensors. Order is insertion order and is
// part of the contract: optimizers and checkpoints walk it positionally.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  Tensor& add(std::string name, Tensor tensor);

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  void zero_grad();

  std::vector<Entry>::iterator begin() { return entries_.begin(); }
  std::vector<Entry>::iterator end() { return entries_.end(); }
  std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Entry>::const_iterator end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

}  // namespace tsforge
