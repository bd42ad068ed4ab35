#include "act/params.hpp"

#include <cmath>
#include <utility>

#include "act/errors.hpp"

namespace act {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  entries_.push_back({name, std::move(t)});
  return entries_.back().tensor;
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const auto n = shape_numel(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<float> values(n);
  for (auto& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
  return add(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor& ParamStore::add_constant(const std::string& name, Shape shape, float value) {
  return add(name, Tensor::full(std::move(shape), value));
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.detach());
  return out;
}

void ParamStore::copy_values_from(const std::vector<NamedTensor>& other) {
  if (other.size() != entries_.size()) {
    throw DimensionError("parameter set has " + std::to_string(other.size()) + " tensors, expected " +
                         std::to_string(entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw DimensionError("parameter '" + src.name + "' " + shape_str(src.tensor.shape()) + " does not match '" +
                           dst.name + "' " + shape_str(dst.tensor.shape()));
    }
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst.tensor.data().begin());
  }
}

void ParamStore::copy_values_from(const ParamStore& other) { copy_values_from(other.entries()); }

void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v,
                 const AdamConfig& cfg, std::uint64_t t) {
  if (t == 0) throw ConfigError("adam step count starts at 1");
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adam: moment buffers do not match parameter size");
  }
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(t));
  const float step = static_cast<float>(cfg.lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
    param[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + cfg.eps);
  }
}

Adam::Adam(ParamStore& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.tensor.numel(), 0.0f);
    v_.emplace_back(e.tensor.numel(), 0.0f);
  }
}

void Adam::step() {
  auto& entries = params_.entries();
  for (const auto& e : entries) {
    if (!e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + e.name + "'");
    }
  }
  ++t_;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].tensor;
    if (!t.has_grad()) {
      // No gradient reached this tensor: treat as zero gradient.
      std::vector<float> zeros(t.numel(), 0.0f);
      adam_update(t.data(), zeros, m_[i], v_[i], cfg_, t_);
      continue;
    }
    const auto g = std::as_const(t).grad();
    adam_update(t.data(), g, m_[i], v_[i], cfg_, t_);
  }
}

double grad_norm(const ParamStore& params) {
  double s = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

}  // namespace act
