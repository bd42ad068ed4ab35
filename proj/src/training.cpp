#include "act/training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "act/ops.hpp"

namespace act {

void TrainConfig::validate() const {
  if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  if (val_every == 0) throw ConfigError("val_every must be >= 1");
  if (val_stride == 0) throw ConfigError("val_stride must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch", c.batch},
          {"steps", c.steps},
          {"val_fraction", c.val_fraction},
          {"val_every", c.val_every},
          {"seed", c.seed},
          {"loss", to_string(c.loss)},
          {"val_stride", c.val_stride}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.steps = j.value("steps", c.steps);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.val_every = j.value("val_every", c.val_every);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss")) c.loss = loss_from_string(j.at("loss").get<std::string>());
    c.val_stride = j.value("val_stride", c.val_stride);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return c;
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os << "step,total,reconst,kl,val\n";
  os << std::setprecision(9);
  std::size_t v = 0;
  for (const auto& l : losses) {
    os << l.step << ',' << l.total << ',' << l.reconst << ',' << l.kl << ',';
    while (v < validation.size() && validation[v].step < l.step) ++v;
    if (v < validation.size() && validation[v].step == l.step) os << validation[v].loss;
    os << '\n';
  }
  return os.str();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_episodes(std::size_t n, double val_fraction,
                                                                               std::uint64_t seed) {
  if (n < 2) throw ConfigError("need at least 2 episodes to split into train and validation");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5917));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
  std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

std::vector<Sample> sample_batch(const demo::Dataset& ds, std::span<const std::size_t> episodes, std::size_t batch,
                                 std::uint64_t seed, std::size_t step) {
  if (episodes.empty()) throw ConfigError("no episodes to sample from");
  Rng rng(derive_seed(derive_seed(seed, 0xba7c), step));
  std::vector<Sample> out(batch);
  for (auto& s : out) {
    s.episode = episodes[rng.below(episodes.size())];
    const std::size_t T = ds.episodes.at(s.episode).length();
    if (T < 2) throw ConfigError("episodes must be longer than one step");
    s.t = rng.below(T);
  }
  return out;
}

Batch make_batch(const demo::Dataset& ds, const Normalizer& norm, const ModelConfig& cfg,
                 std::span<const Sample> samples) {
  Batch b;
  b.size = samples.size();
  const std::size_t p = cfg.proprio_dim(), k = cfg.chunk, a = cfg.act_dim;
  b.proprio.reserve(b.size * p);
  b.joints.reserve(b.size * sim::kActDim);
  b.actions.resize(b.size * k * a);
  b.mask.reserve(b.size * k);
  std::vector<float> nobs(cfg.obs_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto c = demo::load_chunk(ds, samples[i].episode, samples[i].t, k);
    norm.normalize_obs(c.obs, nobs);
    b.proprio.insert(b.proprio.end(), nobs.begin(), nobs.begin() + static_cast<std::ptrdiff_t>(p));
    b.joints.insert(b.joints.end(), nobs.begin(), nobs.begin() + static_cast<std::ptrdiff_t>(sim::kActDim));
    if (cfg.obs_mode == sim::ObsMode::Pixels) {
      if (c.image.empty()) throw ConfigError("pixel model needs a dataset recorded with images");
      b.images.insert(b.images.end(), c.image.begin(), c.image.end());
    }
    norm.normalize_actions(c.actions, std::span<float>(b.actions).subspan(i * k * a, k * a));
    b.mask.insert(b.mask.end(), c.mask.begin(), c.mask.end());
  }
  return b;
}

Normalizer normalizer_from_manifest(const demo::Manifest& m) {
  return Normalizer::from_stats(m.obs_mean, m.obs_std, m.action_mean, m.action_std);
}

ModelConfig model_config_for(const demo::Manifest& m, ModelConfig c) {
  c.obs_dim = m.obs_dim;
  c.act_dim = m.act_dim;
  if (m.obs_mode == "pixels") {
    c.obs_mode = sim::ObsMode::Pixels;
    c.image_h = m.image_hw[0];
    c.image_w = m.image_hw[1];
  } else {
    c.obs_mode = sim::ObsMode::State;
  }
  return c;
}

LossTerms act_forward(const ActModel& model, const Batch& batch, std::span<const float> eps, LossKind loss,
                      const ForwardContext& ctx) {
  const auto& c = model.config();
  const std::size_t B = batch.size;
  const Tensor actions = Tensor::from({B * c.chunk, c.act_dim}, batch.actions);
  Tensor images;
  if (c.obs_mode == sim::ObsMode::Pixels) images = Tensor::from({B, c.image_h, c.image_w, 3}, batch.images);
  Latent latent;
  Tensor z;
  if (c.use_cvae) {
    latent = model.encode(Tensor::from({B, sim::kActDim}, batch.joints), actions, batch.mask, B, eps, ctx);
    z = latent.sample;
  } else {
    z = Tensor::zeros({B, c.z_dim});
  }
  const Tensor pred = model.decode(Tensor::from({B, c.proprio_dim()}, batch.proprio), images, z, B, ctx);
  return act_loss(pred, actions, batch.mask, c.use_cvae ? &latent : nullptr, c.beta, loss);
}

double validate(const ActModel& model, const Normalizer& norm, const demo::Dataset& ds,
                std::span<const std::size_t> val_episodes, LossKind loss, std::size_t stride) {
  if (val_episodes.empty()) throw ConfigError("validation set is empty");
  if (stride == 0) throw ConfigError("validation stride must be >= 1");
  NoGradGuard guard;
  const auto& c = model.config();
  std::vector<Sample> all;
  for (std::size_t e : val_episodes)
    for (std::size_t t = 0; t < ds.episodes.at(e).length(); t += stride) all.push_back({e, t});
  constexpr std::size_t kChunk = 64;
  double weighted = 0.0;
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, all.size() - start);
    const std::span<const Sample> part(all.data() + start, n);
    const Batch b = make_batch(ds, norm, c, part);
    std::vector<float> eps(n * c.z_dim);
    for (std::size_t i = 0; i < n; ++i) {
      Rng r(derive_seed(derive_seed(0x7a1, part[i].episode), part[i].t));
      for (std::size_t j = 0; j < c.z_dim; ++j) eps[i * c.z_dim + j] = static_cast<float>(r.normal());
    }
    const auto terms = act_forward(model, b, eps, loss, ForwardContext{});
    weighted += static_cast<double>(terms.total.item()) * static_cast<double>(n);
  }
  return weighted / static_cast<double>(all.size());
}

namespace {

std::shared_ptr<ActModel> snapshot(const ActModel& model) {
  auto copy = std::make_shared<ActModel>(model.config(), 0);
  copy->params().copy_values_from(model.params());
  return copy;
}

}  // namespace

TrainResult train(const demo::Dataset& ds, ModelConfig model_cfg, const TrainConfig& cfg, LogFn log) {
  cfg.validate();
  if (ds.size() == 0) throw ConfigError("dataset is empty");
  model_cfg.obs_dim = ds.manifest.obs_dim;
  model_cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.norm = normalizer_from_manifest(ds.manifest);
  auto [tr, val] = split_episodes(ds.size(), cfg.val_fraction, cfg.seed);
  result.report.train_episodes = tr;
  result.report.val_episodes = val;

  auto model = std::make_shared<ActModel>(model_cfg, cfg.seed);
  Adam adam(model->params(), AdamConfig{cfg.lr, 0.9f, 0.999f, 1e-8f});
  Rng dropout_rng(derive_seed(cfg.seed, 0xd40));
  std::shared_ptr<ActModel> best;
  double best_val = std::numeric_limits<double>::infinity();

  auto run_validation = [&](std::size_t step) {
    double v = 0.0;
    try {
      v = validate(*model, result.norm, ds, val, cfg.loss, cfg.val_stride);
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string(e.what()) + " during validation at step " + std::to_string(step), best, step);
    }
    result.report.validation.push_back({step, v});
    if (std::isfinite(v) && v < best_val) {
      best_val = v;
      best = snapshot(*model);
      result.report.best_step = step;
    }
    if (log) {
      std::ostringstream os;
      os << "step " << step << " val " << v;
      if (!result.report.losses.empty()) {
        const auto& l = result.report.losses.back();
        os << " train total " << l.total << " reconst " << l.reconst << " kl " << l.kl;
      }
      log(os.str());
    }
  };

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto samples = sample_batch(ds, tr, cfg.batch, cfg.seed, step);
    const Batch b = make_batch(ds, result.norm, model_cfg, samples);
    std::vector<float> eps(cfg.batch * model_cfg.z_dim);
    Rng noise(derive_seed(derive_seed(cfg.seed, 0xe95), step));
    for (auto& e : eps) e = static_cast<float>(noise.normal());
    model->params().zero_grad();
    ForwardContext ctx{true, &dropout_rng};
    LossTerms terms;
    try {
      terms = act_forward(*model, b, eps, cfg.loss, ctx);
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), best, step);
    }
    const StepLoss sl{step, terms.total.item(), terms.reconst.item(), terms.kl.item()};
    if (!std::isfinite(sl.total)) {
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step) + " (reconst " +
                                 std::to_string(sl.reconst) + ", kl " + std::to_string(sl.kl) + ")",
                             best, step);
    }
    result.report.losses.push_back(sl);
    terms.total.backward();
    try {
      adam.step();
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), best, step);
    }
    if (step % cfg.val_every == 0 || step == cfg.steps) run_validation(step);
  }
  if (cfg.steps == 0) run_validation(0);
  if (!best) throw TrainingDiverged("validation loss was never finite", nullptr, cfg.steps);
  result.model = best;
  result.report.best_val = best_val;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace act
