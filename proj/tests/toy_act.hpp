#pragma once

// A small ACT network (d = 16, k = 4) with fixed random inputs for gradient checks.

#include <memory>
#include <vector>

#include "act/model.hpp"
#include "gradcheck.hpp"

namespace act::testing {

struct Toy {
  ModelConfig cfg;
  std::unique_ptr<ActModel> model;
  Tensor proprio, joints, actions;
  std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 1, 1};
  std::vector<float> eps;

  explicit Toy(std::uint64_t seed) {
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.feedforward = 32;
    cfg.chunk = 4;
    cfg.z_dim = 4;
    cfg.obs_dim = 10;
    cfg.dropout = 0.0f;
    model = std::make_unique<ActModel>(cfg, seed);
    Rng rng(seed + 100);
    proprio = random_tensor({2, 10}, rng);
    joints = random_tensor({2, 8}, rng);
    actions = random_tensor({8, 8}, rng);
    for (std::size_t i = 0; i < 8; ++i) eps.push_back(static_cast<float>(rng.normal()));
  }
  std::vector<Tensor> outputs() const {
    const auto lat = model->encode(joints, actions, mask, 2, eps, {});
    return {model->decode(proprio, Tensor(), lat.sample, 2, {}), lat.mean, lat.logvar};
  }
  // The full training objective: L1 reconstruction plus beta times KL.
  Tensor loss(float beta = 10.0f) const {
    auto lat = model->encode(joints, actions, mask, 2, eps, {});
    const auto pred = model->decode(proprio, Tensor(), lat.sample, 2, {});
    return act_loss(pred, actions, mask, &lat, beta, LossKind::L1).total;
  }
};

}  // namespace act::testing
