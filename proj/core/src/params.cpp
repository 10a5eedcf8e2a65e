#include "promptmr/params.hpp"

#include <cmath>

namespace promptmr {

ag::Var ParamStore::create(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, std::size_t fan_in) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  RealArray a(shape);
  switch (init) {
    case Init::zeros: break;
    case Init::ones: std::fill(a.vec().begin(), a.vec().end(), 1.0); break;
    case Init::unit_uniform: {
      std::uniform_real_distribution<double> U(0.0, 1.0);
      for (auto& v : a.vec()) v = U(rng);
      break;
    }
    case Init::fan_in_uniform: {
      if (fan_in == 0) fan_in = shape.size() > 1 ? shape_size(Shape(shape.begin() + 1, shape.end())) : shape_size(shape);
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
      std::uniform_real_distribution<double> U(-bound, bound);
      for (auto& v : a.vec()) v = U(rng);
      break;
    }
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, ag::Var::parameter(std::move(a)));
  return entries_.back().second;
}

ag::Var& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

const ag::Var& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::vector<ag::Var> ParamStore::vars() const {
  std::vector<ag::Var> out;
  out.reserve(entries_.size());
  for (const auto& [n, v] : entries_) out.push_back(v);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [n, v] : entries_) v.zero_grad();
}

std::size_t ParamStore::copy_from(const ParamStore& other) {
  std::size_t copied = 0;
  for (auto& [name, v] : entries_) {
    if (!other.contains(name)) continue;
    const ag::Var& src = other.at(name);
    if (src.shape() != v.shape()) throw ShapeError("copy_from: '" + name + "' shape " + shape_str(src.shape()) + " vs " + shape_str(v.shape()));
    std::copy(src.value().begin(), src.value().end(), v.mutable_value().begin());
    ++copied;
  }
  return copied;
}

}  // namespace promptmr
