#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlerc/rng.hpp"
#include "tlerc/tensor.hpp"

namespace tlerc {

// Named, shaped parameter collection. Names are hierarchical
// ("context/W_z") and iteration order is lexicographic, which fixes the
// order of checkpoints, optimizer updates and gradient checks.
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  void set(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void erase(const std::string& name) { tensors_.erase(name); }

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.tensors_ == b.tensors_;
  }

 private:
  Map tensors_;
};

using GradientMap = std::map<std::string, Tensor>;

// Names excluded from optimizer updates.
using FreezeMask = std::set<std::string>;

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace tlerc
