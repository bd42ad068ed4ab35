#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "act/simulator.hpp"

namespace act {

// Anything that maps observations to a chunk of k absolute actions.
// predict() is batched; results must not depend on how observations are
// grouped into batches.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::size_t chunk_size() const = 0;
  virtual std::string method() const = 0;
  // Returns obs.size() × k × act_dim values in raw (unnormalized) units.
  virtual std::vector<float> predict(std::span<const sim::Observation> obs) const = 0;
};

}  // namespace act
