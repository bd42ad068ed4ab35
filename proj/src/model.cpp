#include "act/model.hpp"

#include <algorithm>
#include <cmath>

#include "act/errors.hpp"
#include "act/ops.hpp"
#include "act/serialize.hpp"

namespace act {

std::string to_string(LossKind k) { return k == LossKind::L1 ? "l1" : "l2"; }

LossKind loss_from_string(const std::string& s) {
  if (s == "l1") return LossKind::L1;
  if (s == "l2") return LossKind::L2;
  throw ConfigError("unknown loss '" + s + "' (expected l1 or l2)");
}

namespace {

constexpr std::array<std::size_t, 3> kConvChannels{16, 32, 0};  // last = hidden
constexpr std::size_t kConvKernel = 3;

std::size_t conv_out(std::size_t in) { return (in + 2 - kConvKernel) / 2 + 1; }

}  // namespace

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("hidden=" + std::to_string(hidden) + " must be a positive multiple of heads=" +
                      std::to_string(heads));
  }
  if (hidden % 4 != 0) throw ConfigError("hidden must be divisible by 4 for the 2-D position table");
  if (chunk == 0) throw ConfigError("chunk size k must be >= 1");
  if (z_dim == 0) throw ConfigError("z_dim must be >= 1");
  if (!(beta >= 0.0f)) throw ConfigError("beta must be >= 0");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw ConfigError("dropout must lie in [0, 1)");
  if (enc_layers == 0 || dec_layers == 0) throw ConfigError("need at least one encoder and one decoder layer");
  if (feedforward == 0) throw ConfigError("feedforward width must be positive");
  if (act_dim == 0) throw ConfigError("act_dim must be positive");
  if (obs_dim < sim::kActDim) throw ConfigError("obs_dim must include the " + std::to_string(sim::kActDim) + " joints");
  if (obs_mode == sim::ObsMode::Pixels && (image_h < 8 || image_w < 8)) throw ConfigError("image too small");
}

std::size_t ModelConfig::image_tokens() const {
  if (obs_mode != sim::ObsMode::Pixels) return 0;
  std::size_t h = image_h, w = image_w;
  for (int i = 0; i < 3; ++i) {
    h = conv_out(h);
    w = conv_out(w);
  }
  return h * w;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},         {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
          {"heads", c.heads},           {"feedforward", c.feedforward}, {"chunk", c.chunk},
          {"z_dim", c.z_dim},           {"beta", c.beta},             {"dropout", c.dropout},
          {"use_cvae", c.use_cvae},     {"obs_mode", sim::to_string(c.obs_mode)},
          {"obs_dim", c.obs_dim},       {"act_dim", c.act_dim},       {"image_hw", {c.image_h, c.image_w}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  try {
    c.hidden = j.value("hidden", c.hidden);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.heads = j.value("heads", c.heads);
    c.feedforward = j.value("feedforward", c.feedforward);
    c.chunk = j.value("chunk", c.chunk);
    c.z_dim = j.value("z_dim", c.z_dim);
    c.beta = j.value("beta", c.beta);
    c.dropout = j.value("dropout", c.dropout);
    c.use_cvae = j.value("use_cvae", c.use_cvae);
    if (j.contains("obs_mode")) c.obs_mode = sim::obs_mode_from_string(j.at("obs_mode").get<std::string>());
    c.obs_dim = j.value("obs_dim", c.obs_dim);
    c.act_dim = j.value("act_dim", c.act_dim);
    if (j.contains("image_hw")) {
      c.image_h = j.at("image_hw").at(0).get<std::size_t>();
      c.image_w = j.at("image_hw").at(1).get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return c;
}

Normalizer Normalizer::from_stats(std::vector<float> om, std::vector<float> os, std::vector<float> am,
                                  std::vector<float> as) {
  if (om.size() != os.size() || am.size() != as.size()) throw DimensionError("normalizer mean/std sizes differ");
  Normalizer n;
  n.obs_mean = std::move(om);
  n.obs_std = std::move(os);
  n.act_mean = std::move(am);
  n.act_std = std::move(as);
  return n;
}

void Normalizer::normalize_obs(std::span<const float> in, std::span<float> out) const {
  const std::size_t d = obs_mean.size();
  if (in.size() % d != 0 || out.size() != in.size()) throw DimensionError("normalize_obs: width mismatch");
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - obs_mean[i % d]) / obs_scale(i % d);
}

void Normalizer::normalize_actions(std::span<const float> in, std::span<float> out) const {
  const std::size_t d = act_mean.size();
  if (in.size() % d != 0 || out.size() != in.size()) throw DimensionError("normalize_actions: width mismatch");
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - act_mean[i % d]) / act_scale(i % d);
}

void Normalizer::denormalize_actions(std::span<const float> in, std::span<float> out) const {
  const std::size_t d = act_mean.size();
  if (in.size() % d != 0 || out.size() != in.size()) throw DimensionError("denormalize_actions: width mismatch");
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * act_scale(i % d) + act_mean[i % d];
}

nlohmann::json to_json(const Normalizer& n) {
  return {{"obs_mean", n.obs_mean}, {"obs_std", n.obs_std}, {"action_mean", n.act_mean}, {"action_std", n.act_std}};
}

Normalizer normalizer_from_json(const nlohmann::json& j) {
  auto floats = [&](const char* key) {
    std::vector<float> out;
    for (double v : j.at(key).get<std::vector<double>>()) out.push_back(static_cast<float>(v));
    return out;
  };
  return Normalizer::from_stats(floats("obs_mean"), floats("obs_std"), floats("action_mean"), floats("action_std"));
}

std::vector<float> sinusoid_table(std::size_t n, std::size_t d) {
  std::vector<float> t(n * d);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      t[pos * d + i] = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return t;
}

std::vector<float> sinusoid_table_2d(std::size_t h, std::size_t w, std::size_t d) {
  const std::size_t half = d / 2;
  const auto rows = sinusoid_table(h, half);
  const auto cols = sinusoid_table(w, half);
  std::vector<float> t(h * w * d);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      float* dst = t.data() + (y * w + x) * d;
      std::copy_n(rows.data() + y * half, half, dst);
      std::copy_n(cols.data() + x * half, half, dst + half);
    }
  return t;
}

double kl_closed_form(std::span<const float> mean, std::span<const float> logvar) {
  if (mean.size() != logvar.size()) throw DimensionError("kl_closed_form: mean/logvar sizes differ");
  double s = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double m = mean[j], lv = logvar[j];
    s += m * m + std::exp(lv) - lv - 1.0;
  }
  return 0.5 * s;
}

LossTerms act_loss(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask, const Latent* latent,
                   float beta, LossKind kind) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("act_loss: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  }
  const std::size_t rows = pred.rows(), cols = pred.cols();
  if (mask.size() != rows) {
    throw DimensionError("act_loss: mask has " + std::to_string(mask.size()) + " entries for " + std::to_string(rows) +
                         " rows");
  }
  std::vector<float> m(rows * cols);
  std::size_t valid = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    ++valid;
    std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, 1.0f);
  }
  if (valid == 0) throw ConfigError("act_loss: every step is masked (zero valid steps)");
  const Tensor diff = ops::sub(pred, target);
  const Tensor elem = kind == LossKind::L1 ? ops::abs(diff) : ops::square(diff);
  const Tensor masked = ops::mul(elem, Tensor::from(pred.shape(), std::move(m)));
  LossTerms out;
  out.reconst = ops::scale(ops::sum(masked), 1.0f / static_cast<float>(valid * cols));
  if (latent && latent->mean.defined()) {
    const std::size_t batch = latent->mean.rows();
    const Tensor& mu = latent->mean;
    const Tensor& lv = latent->logvar;
    const Tensor terms = ops::add_scalar(ops::sub(ops::add(ops::square(mu), ops::exp(lv)), lv), -1.0f);
    out.kl = ops::scale(ops::sum(terms), 0.5f / static_cast<float>(batch));
    out.total = beta == 0.0f ? out.reconst : ops::add(out.reconst, ops::scale(out.kl, beta));
  } else {
    out.kl = Tensor::scalar(0.0f);
    out.total = out.reconst;
  }
  return out;
}

// ---------------------------------------------------------------------------

ActModel::Attn ActModel::make_attn(const std::string& p, Rng& rng) {
  const std::size_t d = cfg_.hidden;
  Attn a;
  a.wq = params_.add_uniform(p + ".wq", {d, d}, d, rng);
  a.bq = params_.add_uniform(p + ".bq", {d}, d, rng);
  a.wk = params_.add_uniform(p + ".wk", {d, d}, d, rng);
  a.bk = params_.add_uniform(p + ".bk", {d}, d, rng);
  a.wv = params_.add_uniform(p + ".wv", {d, d}, d, rng);
  a.bv = params_.add_uniform(p + ".bv", {d}, d, rng);
  a.wo = params_.add_uniform(p + ".wo", {d, d}, d, rng);
  a.bo = params_.add_uniform(p + ".bo", {d}, d, rng);
  return a;
}

ActModel::FF ActModel::make_ff(const std::string& p, Rng& rng) {
  const std::size_t d = cfg_.hidden, f = cfg_.feedforward;
  FF ff;
  ff.w1 = params_.add_uniform(p + ".w1", {d, f}, d, rng);
  ff.b1 = params_.add_uniform(p + ".b1", {f}, d, rng);
  ff.w2 = params_.add_uniform(p + ".w2", {f, d}, f, rng);
  ff.b2 = params_.add_uniform(p + ".b2", {d}, f, rng);
  return ff;
}

ActModel::Norm ActModel::make_norm(const std::string& p) {
  Norm n;
  n.g = params_.add_constant(p + ".gain", {cfg_.hidden}, 1.0f);
  n.b = params_.add_constant(p + ".bias", {cfg_.hidden}, 0.0f);
  return n;
}

ActModel::EncLayer ActModel::make_enc(const std::string& p, Rng& rng) {
  EncLayer l;
  l.attn = make_attn(p + ".self_attn", rng);
  l.ff = make_ff(p + ".ff", rng);
  l.n1 = make_norm(p + ".norm1");
  l.n2 = make_norm(p + ".norm2");
  return l;
}

ActModel::DecLayer ActModel::make_dec(const std::string& p, Rng& rng) {
  DecLayer l;
  l.self_attn = make_attn(p + ".self_attn", rng);
  l.cross_attn = make_attn(p + ".cross_attn", rng);
  l.ff = make_ff(p + ".ff", rng);
  l.n1 = make_norm(p + ".norm1");
  l.n2 = make_norm(p + ".norm2");
  l.n3 = make_norm(p + ".norm3");
  return l;
}

ActModel::ActModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0xac7));
  const std::size_t d = cfg_.hidden, a = cfg_.act_dim, z = cfg_.z_dim;
  if (cfg_.use_cvae) {
    cls_ = params_.add_uniform("cvae.cls", {1, d}, 1, rng);
    cvae_joint_w_ = params_.add_uniform("cvae.joint_proj.w", {sim::kActDim, d}, sim::kActDim, rng);
    cvae_joint_b_ = params_.add_uniform("cvae.joint_proj.b", {d}, sim::kActDim, rng);
    cvae_act_w_ = params_.add_uniform("cvae.action_proj.w", {a, d}, a, rng);
    cvae_act_b_ = params_.add_uniform("cvae.action_proj.b", {d}, a, rng);
    for (std::size_t i = 0; i < cfg_.enc_layers; ++i) cvae_layers_.push_back(make_enc("cvae.enc." + std::to_string(i), rng));
    mu_w_ = params_.add_uniform("cvae.mean.w", {d, z}, d, rng);
    mu_b_ = params_.add_uniform("cvae.mean.b", {z}, d, rng);
    logvar_w_ = params_.add_uniform("cvae.logvar.w", {d, z}, d, rng);
    logvar_b_ = params_.add_uniform("cvae.logvar.b", {z}, d, rng);
  }
  if (cfg_.obs_mode == sim::ObsMode::Pixels) {
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t cout = i == 2 ? d : kConvChannels[i];
      const std::size_t fan = kConvKernel * kConvKernel * cin;
      conv_w_[i] = params_.add_uniform("policy.conv" + std::to_string(i) + ".w", {fan, cout}, fan, rng);
      conv_b_[i] = params_.add_uniform("policy.conv" + std::to_string(i) + ".b", {cout}, fan, rng);
      cin = cout;
    }
  }
  const std::size_t p = cfg_.proprio_dim();
  proprio_w_ = params_.add_uniform("policy.proprio_proj.w", {p, d}, p, rng);
  proprio_b_ = params_.add_uniform("policy.proprio_proj.b", {d}, p, rng);
  z_w_ = params_.add_uniform("policy.latent_proj.w", {z, d}, z, rng);
  z_b_ = params_.add_uniform("policy.latent_proj.b", {d}, z, rng);
  extra_pos_ = params_.add_uniform("policy.extra_pos", {2, d}, 1, rng);
  for (std::size_t i = 0; i < cfg_.enc_layers; ++i) enc_layers_.push_back(make_enc("policy.enc." + std::to_string(i), rng));
  for (std::size_t i = 0; i < cfg_.dec_layers; ++i) dec_layers_.push_back(make_dec("policy.dec." + std::to_string(i), rng));
  dec_norm_ = make_norm("policy.dec_norm");
  head_w_ = params_.add_uniform("policy.head.w", {d, a}, d, rng);
  head_b_ = params_.add_uniform("policy.head.b", {a}, d, rng);

  cvae_pos_ = Tensor::from({cfg_.chunk + 2, d}, sinusoid_table(cfg_.chunk + 2, d));
  query_pos_ = Tensor::from({cfg_.chunk, d}, sinusoid_table(cfg_.chunk, d));
  if (cfg_.obs_mode == sim::ObsMode::Pixels) {
    std::size_t h = cfg_.image_h, w = cfg_.image_w;
    for (int i = 0; i < 3; ++i) {
      h = conv_out(h);
      w = conv_out(w);
    }
    image_pos_ = Tensor::from({h * w, d}, sinusoid_table_2d(h, w, d));
  }
}

std::size_t ActModel::expected_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.hidden, f = c.feedforward, a = c.act_dim, z = c.z_dim, j = sim::kActDim;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ff = d * f + f + f * d + d;
  const std::size_t ln = 2 * d;
  const std::size_t enc = attn + ff + 2 * ln;
  const std::size_t dec = 2 * attn + ff + 3 * ln;
  std::size_t n = 0;
  if (c.use_cvae) n += d + (j * d + d) + (a * d + d) + c.enc_layers * enc + 2 * (d * z + z);
  if (c.obs_mode == sim::ObsMode::Pixels) {
    const std::size_t k2 = kConvKernel * kConvKernel;
    n += (k2 * 3 * 16 + 16) + (k2 * 16 * 32 + 32) + (k2 * 32 * d + d);
  }
  n += (c.proprio_dim() * d + d) + (z * d + d) + 2 * d;
  n += c.enc_layers * enc + c.dec_layers * dec + ln + (d * a + a);
  return n;
}

Tensor ActModel::attention(const Attn& a, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                           std::size_t batch, std::span<const std::uint8_t> mask) const {
  const Tensor q = ops::linear(q_in, a.wq, a.bq);
  const Tensor k = ops::linear(k_in, a.wk, a.bk);
  const Tensor v = ops::linear(v_in, a.wv, a.bv);
  return ops::linear(ops::softmax_attention(q, k, v, cfg_.heads, batch, mask), a.wo, a.bo);
}

Tensor ActModel::feedforward(const FF& f, const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = ops::relu(ops::linear(x, f.w1, f.b1));
  if (ctx.training) h = ops::dropout(h, cfg_.dropout, *ctx.dropout_rng, true);
  return ops::linear(h, f.w2, f.b2);
}

namespace {

Tensor maybe_dropout(const Tensor& x, float p, const ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0f) return x;
  if (!ctx.dropout_rng) throw ConfigError("training forward needs a dropout stream");
  return ops::dropout(x, p, *ctx.dropout_rng, true);
}

}  // namespace

Tensor ActModel::encoder_layer(const EncLayer& l, const Tensor& x, std::size_t batch,
                               std::span<const std::uint8_t> mask, const ForwardContext& ctx) const {
  const Tensor a = attention(l.attn, x, x, x, batch, mask);
  const Tensor h = ops::layer_norm(ops::add(x, maybe_dropout(a, cfg_.dropout, ctx)), l.n1.g, l.n1.b);
  const Tensor f = feedforward(l.ff, h, ctx);
  return ops::layer_norm(ops::add(h, maybe_dropout(f, cfg_.dropout, ctx)), l.n2.g, l.n2.b);
}

Tensor ActModel::decoder_layer(const DecLayer& l, const Tensor& x, const Tensor& query_pos, const Tensor& memory,
                               std::size_t batch, const ForwardContext& ctx) const {
  const Tensor qk = ops::add(x, query_pos);
  const Tensor sa = attention(l.self_attn, qk, qk, x, batch, {});
  const Tensor h1 = ops::layer_norm(ops::add(x, maybe_dropout(sa, cfg_.dropout, ctx)), l.n1.g, l.n1.b);
  const Tensor ca = attention(l.cross_attn, ops::add(h1, query_pos), memory, memory, batch, {});
  const Tensor h2 = ops::layer_norm(ops::add(h1, maybe_dropout(ca, cfg_.dropout, ctx)), l.n2.g, l.n2.b);
  const Tensor f = feedforward(l.ff, h2, ctx);
  return ops::layer_norm(ops::add(h2, maybe_dropout(f, cfg_.dropout, ctx)), l.n3.g, l.n3.b);
}

Latent ActModel::encode(const Tensor& joints, const Tensor& actions, std::span<const std::uint8_t> mask,
                        std::size_t batch, std::span<const float> eps, const ForwardContext& ctx) const {
  if (!cfg_.use_cvae) throw ConfigError("encode called on a model built without the CVAE encoder");
  const std::size_t k = cfg_.chunk, z = cfg_.z_dim;
  if (joints.rows() != batch || joints.cols() != sim::kActDim) {
    throw DimensionError("encode: joints " + shape_str(joints.shape()) + " for batch " + std::to_string(batch));
  }
  if (actions.rows() != batch * k || actions.cols() != cfg_.act_dim) {
    throw DimensionError("encode: actions " + shape_str(actions.shape()) + ", expected [" + std::to_string(batch * k) +
                         " x " + std::to_string(cfg_.act_dim) + "]");
  }
  if (mask.size() != batch * k) throw DimensionError("encode: mask needs batch*k entries");
  if (eps.size() != batch * z) throw DimensionError("encode: eps needs batch*z_dim entries");

  const Tensor cls = ops::tile_rows(cls_, batch);
  const Tensor jt = ops::linear(joints, cvae_joint_w_, cvae_joint_b_);
  const Tensor at = ops::linear(actions, cvae_act_w_, cvae_act_b_);
  const std::array<Tensor, 3> pieces{cls, jt, at};
  Tensor x = ops::add(ops::interleave_sequences(pieces, batch), ops::tile_rows(cvae_pos_, batch));
  std::vector<std::uint8_t> key_mask(batch * (k + 2), 1);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < k; ++i) key_mask[b * (k + 2) + 2 + i] = mask[b * k + i];
  for (const auto& l : cvae_layers_) x = encoder_layer(l, x, batch, key_mask, ctx);
  std::vector<std::size_t> cls_rows(batch);
  for (std::size_t b = 0; b < batch; ++b) cls_rows[b] = b * (k + 2);
  const Tensor h = ops::select_rows(x, cls_rows);
  Latent out;
  out.mean = ops::linear(h, mu_w_, mu_b_);
  out.logvar = ops::linear(h, logvar_w_, logvar_b_);
  out.eps.assign(eps.begin(), eps.end());
  const Tensor std_dev = ops::exp(ops::scale(out.logvar, 0.5f));
  out.sample = ops::add(out.mean, ops::mul(std_dev, Tensor::from({batch, z}, out.eps)));
  return out;
}

Tensor ActModel::decode(const Tensor& proprio, const Tensor& images, const Tensor& z, std::size_t batch,
                        const ForwardContext& ctx) const {
  const std::size_t d = cfg_.hidden, k = cfg_.chunk;
  if (proprio.rows() != batch || proprio.cols() != cfg_.proprio_dim()) {
    throw DimensionError("decode: proprio " + shape_str(proprio.shape()) + ", expected [" + std::to_string(batch) +
                         " x " + std::to_string(cfg_.proprio_dim()) + "]");
  }
  if (z.rows() != batch || z.cols() != cfg_.z_dim) throw DimensionError("decode: latent " + shape_str(z.shape()));
  for (float v : z.data()) {
    if (!std::isfinite(v)) throw NumericError("decode: non-finite latent");
  }
  const bool pixels = cfg_.obs_mode == sim::ObsMode::Pixels;
  if (pixels != images.defined()) {
    throw ConfigError(std::string("decode: observation mode mismatch, model expects ") +
                      (pixels ? "pixel observations" : "state observations"));
  }
  const Tensor pt = ops::linear(proprio, proprio_w_, proprio_b_);
  const Tensor zt = ops::linear(z, z_w_, z_b_);
  const std::array<Tensor, 2> extra{pt, zt};
  const Tensor extra_tokens = ops::add(ops::interleave_sequences(extra, batch), ops::tile_rows(extra_pos_, batch));
  Tensor memory;
  if (pixels) {
    if (images.ndim() != 4 || images.dim(0) != batch || images.dim(1) != cfg_.image_h ||
        images.dim(2) != cfg_.image_w || images.dim(3) != 3) {
      throw DimensionError("decode: images " + shape_str(images.shape()));
    }
    Tensor f = images;
    for (std::size_t i = 0; i < 3; ++i) f = ops::relu(ops::conv2d(f, conv_w_[i], conv_b_[i], kConvKernel, 2, 1));
    const std::size_t n = f.dim(1) * f.dim(2);
    const Tensor feats = ops::add(ops::reshape(f, {batch * n, d}), ops::tile_rows(image_pos_, batch));
    const std::array<Tensor, 2> seq{feats, extra_tokens};
    memory = ops::interleave_sequences(seq, batch);
  } else {
    memory = extra_tokens;
  }
  for (const auto& l : enc_layers_) memory = encoder_layer(l, memory, batch, {}, ctx);
  const Tensor qpos = ops::tile_rows(query_pos_, batch);
  Tensor x = Tensor::zeros({batch * k, d});
  for (const auto& l : dec_layers_) x = decoder_layer(l, x, qpos, memory, batch, ctx);
  x = ops::layer_norm(x, dec_norm_.g, dec_norm_.b);
  return ops::linear(x, head_w_, head_b_);
}

// ---------------------------------------------------------------------------

ActPolicy::ActPolicy(std::shared_ptr<const ActModel> model, Normalizer norm)
    : model_(std::move(model)), norm_(std::move(norm)) {
  if (norm_.obs_mean.size() != model_->config().obs_dim || norm_.act_mean.size() != model_->config().act_dim) {
    throw DimensionError("ActPolicy: normalizer does not match model dimensions");
  }
}

std::vector<float> ActPolicy::predict(std::span<const sim::Observation> obs) const {
  NoGradGuard guard;
  const auto& c = model_->config();
  const std::size_t B = obs.size();
  const std::size_t p = c.proprio_dim();
  std::vector<float> proprio(B * p);
  std::vector<float> images;
  for (std::size_t b = 0; b < B; ++b) {
    const auto sv = obs[b].state_vector();
    if (sv.size() != c.obs_dim) throw DimensionError("ActPolicy: observation width " + std::to_string(sv.size()));
    std::vector<float> nv(sv.size());
    norm_.normalize_obs(sv, nv);
    std::copy_n(nv.begin(), p, proprio.begin() + static_cast<std::ptrdiff_t>(b * p));
    if (c.obs_mode == sim::ObsMode::Pixels) {
      if (obs[b].image.size() != c.image_h * c.image_w * 3) throw ConfigError("ActPolicy: pixel model needs images");
      images.insert(images.end(), obs[b].image.begin(), obs[b].image.end());
    }
  }
  Tensor img;
  if (c.obs_mode == sim::ObsMode::Pixels) img = Tensor::from({B, c.image_h, c.image_w, 3}, std::move(images));
  const Tensor out = model_->decode(Tensor::from({B, p}, std::move(proprio)), img, Tensor::zeros({B, c.z_dim}), B,
                                    ForwardContext{});
  std::vector<float> actions(out.numel());
  norm_.denormalize_actions(out.data(), actions);
  return actions;
}

std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) {
  auto p = ckpt;
  p += ".json";
  return p;
}

void save_act(const std::filesystem::path& ckpt, const ActModel& model, const Normalizer& norm,
              const nlohmann::json& extra) {
  io::save_checkpoint(ckpt, model.params());
  nlohmann::json j = {{"method", "act"}, {"model", to_json(model.config())}, {"normalizer", to_json(norm)}};
  if (extra.is_object()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  }
  io::write_text(sidecar_path(ckpt), j.dump(2) + "\n");
}

LoadedAct load_act(const std::filesystem::path& ckpt) {
  LoadedAct out;
  try {
    out.sidecar = nlohmann::json::parse(io::read_text(sidecar_path(ckpt)));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse " + sidecar_path(ckpt).string() + ": " + e.what());
  }
  if (out.sidecar.value("method", std::string()) != "act") {
    throw IoError(sidecar_path(ckpt).string() + " does not describe an ACT checkpoint");
  }
  const auto cfg = model_config_from_json(out.sidecar.at("model"));
  out.model = std::make_shared<ActModel>(cfg, 0);
  out.model->params().copy_values_from(io::load_checkpoint(ckpt));
  out.norm = normalizer_from_json(out.sidecar.at("normalizer"));
  return out;
}

}  // namespace act
