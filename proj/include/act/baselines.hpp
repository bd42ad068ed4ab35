#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "act/demonstrations.hpp"
#include "act/model.hpp"
#include "act/params.hpp"
#include "act/policy.hpp"
#include "act/training.hpp"

namespace act::baselines {

struct BcMlpConfig {
  std::vector<std::size_t> hidden{256, 256};
  std::size_t chunk = 1;
  float lr = 1e-4f;
  std::size_t steps = 20000;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  std::size_t val_every = 500;

  void validate() const;
};

nlohmann::json to_json(const BcMlpConfig& c);
BcMlpConfig bc_config_from_json(const nlohmann::json& j, BcMlpConfig base = {});

// Observation (normalized state vector) -> k normalized actions.
class BcMlp {
 public:
  BcMlp(std::size_t obs_dim, std::size_t act_dim, const BcMlpConfig& cfg);

  const BcMlpConfig& config() const { return cfg_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // x: [B × obs_dim] -> [B·k × act_dim]
  Tensor forward(const Tensor& x) const;

 private:
  BcMlpConfig cfg_;
  std::size_t obs_dim_, act_dim_;
  ParamStore params_;
  std::vector<Tensor> w_, b_;
};

struct BcTrainResult {
  std::shared_ptr<BcMlp> model;
  Normalizer norm;
  TrainReport report;
};

BcTrainResult bc_train(const demo::Dataset& ds, const BcMlpConfig& cfg, LogFn log = {});
double bc_validate(const BcMlp& model, const Normalizer& norm, const demo::Dataset& ds,
                   std::span<const std::size_t> episodes, std::size_t stride = 4);

class BcPolicy final : public Policy {
 public:
  BcPolicy(std::shared_ptr<const BcMlp> model, Normalizer norm);
  std::size_t chunk_size() const override { return model_->config().chunk; }
  std::string method() const override { return "bc"; }
  std::vector<float> predict(std::span<const sim::Observation> obs) const override;

 private:
  std::shared_ptr<const BcMlp> model_;
  Normalizer norm_;
};

void save_bc(const std::filesystem::path& ckpt, const BcMlp& model, const Normalizer& norm,
             const nlohmann::json& extra = {});
struct LoadedBc {
  std::shared_ptr<BcMlp> model;
  Normalizer norm;
};
LoadedBc load_bc(const std::filesystem::path& ckpt);

// ---------------------------------------------------------------------------

struct KdTree;

struct Neighbor {
  std::size_t index = 0;  // entry position (episode-major, then timestep)
  double distance = 0.0;
};

// Every demo timestep with its normalized observation and next-k actions
// (padded at episode ends like load_chunk).
class KnnIndex {
 public:
  KnnIndex(const demo::Dataset& ds, std::span<const std::size_t> episodes, Normalizer norm, std::size_t k,
           std::size_t n_neighbors);

  std::size_t size() const { return episode_.size(); }
  std::size_t chunk() const { return k_; }
  std::size_t feature_dim() const { return dim_; }
  std::size_t neighbors() const { return n_; }
  void set_neighbors(std::size_t n);
  const Normalizer& normalizer() const { return norm_; }

  std::span<const float> feature(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  std::span<const float> actions(std::size_t i) const {
    return {actions_.data() + i * k_ * sim::kActDim, k_ * sim::kActDim};
  }
  std::size_t episode_of(std::size_t i) const { return episode_[i]; }
  std::size_t timestep_of(std::size_t i) const { return timestep_[i]; }

  // n nearest by Euclidean distance; ties go to the lower episode index,
  // then the lower timestep.
  std::vector<Neighbor> nearest(std::span<const float> feature, std::size_t n) const;
  // Inverse-distance weighted mean of neighbours' next-k actions (raw units).
  std::vector<float> retrieve(std::span<const float> feature, std::size_t n) const;
  std::vector<float> retrieve(std::span<const float> feature) const { return retrieve(feature, n_); }

 private:
  Normalizer norm_;
  std::size_t k_, n_, dim_;
  std::vector<float> features_;
  std::vector<float> actions_;
  std::vector<std::size_t> episode_, timestep_;
  std::shared_ptr<const KdTree> tree_;
};

// Validation loss (mean L1 in normalized action units over valid slots) of an
// index on held-out episodes.
double knn_validation_loss(const KnnIndex& index, const demo::Dataset& ds, std::span<const std::size_t> episodes,
                           std::size_t n, std::size_t stride = 4);

// Builds the index on the training split and picks n from `candidates` by
// validation loss (ties to the smaller n).
struct KnnSelection {
  std::shared_ptr<KnnIndex> index;
  std::vector<std::pair<std::size_t, double>> losses;
};
KnnSelection knn_build(const demo::Dataset& ds, std::size_t k, std::uint64_t seed, double val_fraction = 0.1,
                       std::vector<std::size_t> candidates = {1, 3, 5, 9});

class KnnPolicy final : public Policy {
 public:
  explicit KnnPolicy(std::shared_ptr<const KnnIndex> index) : index_(std::move(index)) {}
  std::size_t chunk_size() const override { return index_->chunk(); }
  std::string method() const override { return "knn"; }
  std::vector<float> predict(std::span<const sim::Observation> obs) const override;

 private:
  std::shared_ptr<const KnnIndex> index_;
};

}  // namespace act::baselines
