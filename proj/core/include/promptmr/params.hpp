#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptmr/autograd.hpp"

namespace promptmr {

enum class Init {
  zeros,
  fan_in_uniform,  ///< U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in = prod(shape[1:])
  unit_uniform,    ///< U(0, 1)
  ones,
};

/// Named, ordered collection of trainable tensors. Layers keep shared handles
/// to the same nodes, so in-place updates here are visible to the layers.
class ParamStore {
 public:
  ag::Var create(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, std::size_t fan_in = 0);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ag::Var& at(const std::string& name);
  const ag::Var& at(const std::string& name) const;

  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  std::vector<ag::Var> vars() const;
  std::size_t scalar_count() const;

  void zero_grad();
  /// Copy values from `other` for every name both stores share; returns the count copied.
  std::size_t copy_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace promptmr
