#include "tlerc/params.hpp"

#include <cmath>

namespace tlerc {

void ParameterSet::add(const std::string& name, Tensor value) {
  if (tensors_.contains(name)) throw SchemaError("duplicate parameter name: " + name);
  tensors_.emplace(name, std::move(value));
}

void ParameterSet::set(const std::string& name, Tensor value) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LookupError("unknown parameter: " + name);
  if (it->second.shape() != value.shape())
    throw ShapeError("parameter " + name + " has shape " + shape_str(it->second.shape()) +
                     ", cannot assign " + shape_str(value.shape()));
  it->second = std::move(value);
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LookupError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LookupError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterSet::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = tensors_.lower_bound(prefix);
       it != tensors_.end() && it->first.starts_with(prefix); ++it)
    out.push_back(it->first);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = rng.uniform(-limit, limit);
  return Tensor::matrix(rows, cols, std::move(data));
}

}  // namespace tlerc
