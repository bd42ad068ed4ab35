#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "act/params.hpp"
#include "act/policy.hpp"
#include "act/rng.hpp"
#include "act/simulator.hpp"
#include "act/tensor.hpp"

namespace act {

enum class LossKind { L1, L2 };
std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& s);

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t heads = 4;
  std::size_t feedforward = 256;
  std::size_t chunk = 20;
  std::size_t z_dim = 16;
  float beta = 10.0f;
  float dropout = 0.1f;
  bool use_cvae = true;
  sim::ObsMode obs_mode = sim::ObsMode::State;
  std::size_t obs_dim = 0;  // full state vector width
  std::size_t act_dim = sim::kActDim;
  std::size_t image_h = 48, image_w = 64;

  void validate() const;
  // Width of the proprioceptive input of the policy: the full state vector in
  // state mode, the joints alone in pixel mode.
  std::size_t proprio_dim() const { return obs_mode == sim::ObsMode::State ? obs_dim : sim::kActDim; }
  std::size_t image_tokens() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

// Per-dimension standardization; std is floored so constant dimensions stay finite.
struct Normalizer {
  std::vector<float> obs_mean, obs_std, act_mean, act_std;
  static constexpr float kStdFloor = 1e-3f;

  static Normalizer from_stats(std::vector<float> obs_mean, std::vector<float> obs_std, std::vector<float> act_mean,
                               std::vector<float> act_std);
  float obs_scale(std::size_t d) const { return std::max(obs_std[d], kStdFloor); }
  float act_scale(std::size_t d) const { return std::max(act_std[d], kStdFloor); }
  void normalize_obs(std::span<const float> in, std::span<float> out) const;
  void normalize_actions(std::span<const float> in, std::span<float> out) const;  // rows of act_dim
  void denormalize_actions(std::span<const float> in, std::span<float> out) const;
};

nlohmann::json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);

// Fixed 1-D sinusoidal table [n × d].
std::vector<float> sinusoid_table(std::size_t n, std::size_t d);
// Fixed 2-D table [h·w × d]: first d/2 channels encode the row, the rest the column.
std::vector<float> sinusoid_table_2d(std::size_t h, std::size_t w, std::size_t d);

struct Latent {
  Tensor mean;    // [B × z]
  Tensor logvar;  // [B × z]
  Tensor sample;  // mean + exp(0.5·logvar)⊙eps
  std::vector<float> eps;
};

struct ForwardContext {
  bool training = false;
  Rng* dropout_rng = nullptr;
};

struct LossTerms {
  Tensor total, reconst, kl;
};

// reconst: mean |â − a| (or squared) over unmasked slots; kl: ½ Σ_j (μ² + e^logvar − logvar − 1)
// per example, averaged over the batch. mask has one entry per row of pred.
LossTerms act_loss(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask, const Latent* latent,
                   float beta, LossKind kind = LossKind::L1);

// Closed-form KL of N(μ, e^logvar) from N(0, I), summed over dimensions.
double kl_closed_form(std::span<const float> mean, std::span<const float> logvar);

class ActModel {
 public:
  ActModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // joints: [B × act_dim] normalized; actions: [B·k × act_dim] normalized;
  // mask: B·k entries (1 = valid). eps supplies the reparameterization noise (B·z).
  Latent encode(const Tensor& joints, const Tensor& actions, std::span<const std::uint8_t> mask, std::size_t batch,
                std::span<const float> eps, const ForwardContext& ctx) const;

  // proprio: [B × proprio_dim] normalized; images: [B, H, W, 3] or undefined; z: [B × z].
  // Returns [B·k × act_dim] normalized actions.
  Tensor decode(const Tensor& proprio, const Tensor& images, const Tensor& z, std::size_t batch,
                const ForwardContext& ctx) const;

  static std::size_t expected_parameter_count(const ModelConfig& c);

 private:
  struct Attn {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FF {
    Tensor w1, b1, w2, b2;
  };
  struct Norm {
    Tensor g, b;
  };
  struct EncLayer {
    Attn attn;
    FF ff;
    Norm n1, n2;
  };
  struct DecLayer {
    Attn self_attn, cross_attn;
    FF ff;
    Norm n1, n2, n3;
  };

  Attn make_attn(const std::string& prefix, Rng& rng);
  FF make_ff(const std::string& prefix, Rng& rng);
  Norm make_norm(const std::string& prefix);
  EncLayer make_enc(const std::string& prefix, Rng& rng);
  DecLayer make_dec(const std::string& prefix, Rng& rng);

  Tensor attention(const Attn& a, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, std::size_t batch,
                   std::span<const std::uint8_t> mask) const;
  Tensor feedforward(const FF& f, const Tensor& x, const ForwardContext& ctx) const;
  Tensor encoder_layer(const EncLayer& l, const Tensor& x, std::size_t batch, std::span<const std::uint8_t> mask,
                       const ForwardContext& ctx) const;
  Tensor decoder_layer(const DecLayer& l, const Tensor& x, const Tensor& query_pos, const Tensor& memory,
                       std::size_t batch, const ForwardContext& ctx) const;

  ModelConfig cfg_;
  ParamStore params_;

  // CVAE encoder
  Tensor cls_, cvae_joint_w_, cvae_joint_b_, cvae_act_w_, cvae_act_b_, mu_w_, mu_b_, logvar_w_, logvar_b_;
  std::vector<EncLayer> cvae_layers_;
  // Policy
  Tensor proprio_w_, proprio_b_, z_w_, z_b_, extra_pos_, head_w_, head_b_;
  std::array<Tensor, 3> conv_w_, conv_b_;
  std::vector<EncLayer> enc_layers_;
  std::vector<DecLayer> dec_layers_;
  Norm dec_norm_;
  Tensor cvae_pos_, query_pos_, image_pos_;  // fixed tables
};

// ACT as a Policy: z = 0, dropout off, outputs denormalized.
class ActPolicy final : public Policy {
 public:
  ActPolicy(std::shared_ptr<const ActModel> model, Normalizer norm);
  std::size_t chunk_size() const override { return model_->config().chunk; }
  std::string method() const override { return "act"; }
  std::vector<float> predict(std::span<const sim::Observation> obs) const override;
  const ActModel& model() const { return *model_; }
  const Normalizer& normalizer() const { return norm_; }

 private:
  std::shared_ptr<const ActModel> model_;
  Normalizer norm_;
};

// Checkpoint (ACTW) plus JSON sidecar with the model config, normalization
// stats and any extra metadata.
void save_act(const std::filesystem::path& ckpt, const ActModel& model, const Normalizer& norm,
              const nlohmann::json& extra = {});
struct LoadedAct {
  std::shared_ptr<ActModel> model;
  Normalizer norm;
  nlohmann::json sidecar;
};
LoadedAct load_act(const std::filesystem::path& ckpt);
std::filesystem::path sidecar_path(const std::filesystem::path& ckpt);

}  // namespace act
