#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "act/demonstrations.hpp"
#include "act/errors.hpp"
#include "act/model.hpp"

namespace act {

struct TrainConfig {
  float lr = 1e-4f;
  std::size_t batch = 8;
  std::size_t steps = 20000;
  double val_fraction = 0.1;
  std::size_t val_every = 500;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::L1;
  std::size_t val_stride = 4;  // validation uses every val_stride-th timestep

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct StepLoss {
  std::size_t step = 0;
  float total = 0.0f, reconst = 0.0f, kl = 0.0f;
};

struct ValPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<StepLoss> losses;
  std::vector<ValPoint> validation;
  std::size_t best_step = 0;
  double best_val = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::size_t> train_episodes, val_episodes;

  // step,total,reconst,kl,val; val is blank on steps without validation.
  std::string to_csv() const;
};

// Seeded shuffle of whole episodes into (train, val). Both parts are nonempty.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_episodes(std::size_t n, double val_fraction,
                                                                               std::uint64_t seed);

struct Sample {
  std::size_t episode = 0, t = 0;
};

// Uniform over episodes, then uniform over timesteps. A pure function of
// (seed, step).
std::vector<Sample> sample_batch(const demo::Dataset& ds, std::span<const std::size_t> episodes, std::size_t batch,
                                 std::uint64_t seed, std::size_t step);

// Normalized model inputs for a list of samples.
struct Batch {
  std::size_t size = 0;
  std::vector<float> proprio;  // B × proprio_dim
  std::vector<float> joints;   // B × act_dim (CVAE input)
  std::vector<float> images;   // B × H × W × 3 (pixel mode)
  std::vector<float> actions;  // B·k × act_dim
  std::vector<std::uint8_t> mask;
};

Batch make_batch(const demo::Dataset& ds, const Normalizer& norm, const ModelConfig& cfg,
                 std::span<const Sample> samples);

Normalizer normalizer_from_manifest(const demo::Manifest& m);

// One forward pass of the full objective. eps is the reparameterization noise.
LossTerms act_forward(const ActModel& model, const Batch& batch, std::span<const float> eps, LossKind loss,
                      const ForwardContext& ctx);

// Mean loss over the validation samples with dropout off; the latent is the
// posterior sample under a fixed per-example noise seed.
double validate(const ActModel& model, const Normalizer& norm, const demo::Dataset& ds,
                std::span<const std::size_t> val_episodes, LossKind loss, std::size_t stride = 4);

struct TrainResult {
  std::shared_ptr<ActModel> model;  // lowest validation loss
  Normalizer norm;
  TrainReport report;
};

// Thrown when a loss or gradient turns non-finite; carries the last model
// that passed validation.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::shared_ptr<ActModel> last_good, std::size_t step)
      : NumericError(what), last_good_(std::move(last_good)), step_(step) {}
  const std::shared_ptr<ActModel>& last_good() const { return last_good_; }
  std::size_t step() const { return step_; }

 private:
  std::shared_ptr<ActModel> last_good_;
  std::size_t step_;
};

using LogFn = std::function<void(const std::string&)>;

TrainResult train(const demo::Dataset& ds, ModelConfig model_cfg, const TrainConfig& train_cfg, LogFn log = {});

// Model config with dimensions taken from the dataset manifest.
ModelConfig model_config_for(const demo::Manifest& m, ModelConfig base = {});

}  // namespace act
