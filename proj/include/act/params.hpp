#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "act/rng.hpp"
#include "act/tensor.hpp"

namespace act {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered collection of named learnable tensors. Names are unique.
class ParamStore {
 public:
  // Uniform fan-in init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor& add_constant(const std::string& name, Shape shape, float value);
  Tensor& add(const std::string& name, Tensor t);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }

  void zero_grad();
  // Deep copy (values only, fresh leaves with requires_grad preserved).
  ParamStore clone() const;
  // Overwrite values from `other`; names and shapes must match exactly.
  void copy_values_from(const ParamStore& other);
  void copy_values_from(const std::vector<NamedTensor>& other);

 private:
  std::vector<NamedTensor> entries_;
};

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// One bias-corrected Adam update of a single tensor; t is the 1-based step.
void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v,
                 const AdamConfig& cfg, std::uint64_t t);

class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg);

  // Applies one update from the parameters' current grads. Throws
  // NumericError naming the first parameter with a non-finite gradient,
  // before any parameter is modified.
  void step();
  std::uint64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::uint64_t t_ = 0;
};

// Global L2 norm over all gradients present.
double grad_norm(const ParamStore& params);

}  // namespace act
