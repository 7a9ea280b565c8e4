#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mscare/common.hpp"

namespace mscare {

/// Flat, ordered collection of named parameter tensors. Layers refer to
/// entries by index; optimizers, EMA and checkpoints walk the list.
template <typename T>
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<std::vector<T>> values;

  int add(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    names.push_back(std::move(name));
    shapes.push_back(std::move(shape));
    values.emplace_back(n, T(0));
    return static_cast<int>(values.size()) - 1;
  }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  std::size_t size() const { return values.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.size();
    return n;
  }

  ParameterSet zeros_like() const {
    ParameterSet out = *this;
    for (auto& v : out.values) std::fill(v.begin(), v.end(), T(0));
    return out;
  }

  void zero() {
    for (auto& v : values) std::fill(v.begin(), v.end(), T(0));
  }

  bool same_structure(const ParameterSet& o) const { return names == o.names && shapes == o.shapes; }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    out.names = names;
    out.shapes = shapes;
    for (const auto& v : values) out.values.emplace_back(v.begin(), v.end());
    return out;
  }

  bool operator==(const ParameterSet&) const = default;
};

}  // namespace mscare
