#include "lrd/model/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace lrd {

Tensor kaiming_uniform(const Shape& shape, std::int64_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& e : v) e = static_cast<float>(dist(rng));
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor normal_param(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<float> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& e : v) e = static_cast<float>(dist(rng));
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor constant_param(const Shape& shape, float value) {
  Tensor t(shape, value);
  t.set_requires_grad(true);
  return t;
}

void set_trainable(const ParamList& params, bool on) {
  for (auto p : params) p.tensor.set_requires_grad(on);
}

void zero_grads(const ParamList& params) {
  for (auto p : params) p.tensor.zero_grad();
}

void clear_grads(const ParamList& params) {
  for (auto p : params) p.tensor.clear_grad();
}

void copy_values(const ParamList& src, const ParamList& dst) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& p : src) by_name[p.name] = &p.tensor;
  for (auto p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::invalid_argument("missing parameter '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw ShapeError("parameter '" + p.name + "' has shape " + shape_str(it->second->shape()) +
                       ", expected " + shape_str(p.tensor.shape()));
    }
    auto values = it->second->data();
    std::copy(values.begin(), values.end(), p.tensor.data_mut().begin());
  }
}

ParamList clone_params(const ParamList& params) {
  ParamList out;
  out.reserve(params.size());
  for (const auto& p : params) {
    Tensor t = p.tensor.detach();
    t.set_requires_grad(p.tensor.requires_grad());
    out.push_back({p.name, t});
  }
  return out;
}

bool values_equal(const ParamList& a, const ParamList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape() != b[i].tensor.shape()) return false;
    const auto x = a[i].tensor.data();
    const auto y = b[i].tensor.data();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

}  // namespace lrd
