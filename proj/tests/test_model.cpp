#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "act/errors.hpp"
#include "act/model.hpp"
#include "act/serialize.hpp"
#include "gradcheck.hpp"

using namespace act;
using namespace act::testing;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 2;
  c.feedforward = 32;
  c.chunk = 5;
  c.z_dim = 4;
  c.obs_dim = 12;
  c.dropout = 0.1f;
  return c;
}

Normalizer identity_normalizer(std::size_t obs_dim) {
  return Normalizer::from_stats(std::vector<float>(obs_dim, 0.0f), std::vector<float>(obs_dim, 1.0f),
                                std::vector<float>(sim::kActDim, 0.0f), std::vector<float>(sim::kActDim, 1.0f));
}

Tensor rows_of(const Tensor& t, std::size_t first, std::size_t n) {
  const std::size_t c = t.cols();
  return Tensor::from({n, c}, std::vector<float>(t.data().begin() + static_cast<std::ptrdiff_t>(first * c),
                                                 t.data().begin() + static_cast<std::ptrdiff_t>((first + n) * c)));
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("config validation names the offending field") {
  auto c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(ActModel(c, 0), ConfigError);
  c = small_config();
  c.chunk = 0;
  CHECK_THROWS_AS(ActModel(c, 0), ConfigError);
  c = small_config();
  c.obs_dim = 4;
  CHECK_THROWS_AS(ActModel(c, 0), ConfigError);
  c = small_config();
  c.dropout = 1.0f;
  CHECK_THROWS_AS(ActModel(c, 0), ConfigError);
}

TEST_CASE("config JSON round-trips") {
  auto c = small_config();
  c.use_cvae = false;
  c.obs_mode = sim::ObsMode::Pixels;
  c.beta = 3.5f;
  const auto back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"heads", "four"}}), ConfigError);
}

TEST_CASE("parameter count matches the closed form") {
  for (bool cvae : {true, false}) {
    for (auto mode : {sim::ObsMode::State, sim::ObsMode::Pixels}) {
      auto c = small_config();
      c.use_cvae = cvae;
      c.obs_mode = mode;
      c.image_h = 16;
      c.image_w = 16;
      const ActModel m(c, 1);
      CHECK(m.params().parameter_count() == ActModel::expected_parameter_count(c));
    }
  }
}

TEST_CASE("initialization is a pure function of the seed") {
  const ActModel a(small_config(), 9), b(small_config(), 9), c(small_config(), 10);
  CHECK(values(a.params().entries()[3].tensor) == values(b.params().entries()[3].tensor));
  CHECK(values(a.params().entries()[3].tensor) != values(c.params().entries()[3].tensor));
}

TEST_CASE("decode and encode output shapes") {
  const auto c = small_config();
  const ActModel m(c, 2);
  Rng rng(2);
  const std::size_t B = 3;
  const auto out = m.decode(random_tensor({B, c.obs_dim}, rng), Tensor(), random_tensor({B, c.z_dim}, rng), B, {});
  CHECK(out.shape() == Shape{B * c.chunk, sim::kActDim});
  const std::vector<std::uint8_t> mask(B * c.chunk, 1);
  const std::vector<float> eps(B * c.z_dim, 0.0f);
  const auto lat = m.encode(random_tensor({B, 8}, rng), random_tensor({B * c.chunk, 8}, rng), mask, B, eps, {});
  CHECK(lat.mean.shape() == Shape{B, c.z_dim});
  CHECK(lat.logvar.shape() == Shape{B, c.z_dim});
  CHECK(values(lat.sample) == values(lat.mean));  // eps = 0
  CHECK_THROWS_AS(m.decode(random_tensor({B, 7}, rng), Tensor(), random_tensor({B, c.z_dim}, rng), B, {}),
                  DimensionError);
  CHECK_THROWS_AS(m.encode(random_tensor({B, 8}, rng), random_tensor({B, 8}, rng), mask, B, eps, {}), DimensionError);
}

TEST_CASE("masked action slots do not influence the latent") {
  const auto c = small_config();
  const ActModel m(c, 3);
  Rng rng(3);
  const std::size_t B = 2;
  const auto joints = random_tensor({B, 8}, rng);
  auto actions = random_tensor({B * c.chunk, 8}, rng);
  const std::vector<std::uint8_t> mask{1, 1, 1, 0, 0, 1, 1, 1, 1, 1};
  const std::vector<float> eps(B * c.z_dim, 0.5f);
  const auto before = m.encode(joints, actions, mask, B, eps, {});
  for (std::size_t r : {3, 4})
    for (std::size_t j = 0; j < 8; ++j) actions.data()[r * 8 + j] = 100.0f;
  const auto after = m.encode(joints, actions, mask, B, eps, {});
  CHECK(values(before.mean) == values(after.mean));
  CHECK(values(before.logvar) == values(after.logvar));
  // An unmasked slot does matter.
  actions.data()[0] += 1.0f;
  CHECK(values(m.encode(joints, actions, mask, B, eps, {}).mean) != values(before.mean));
}

TEST_CASE("the decoder depends on z") {
  const auto c = small_config();
  const ActModel m(c, 4);
  Rng rng(4);
  const auto p = random_tensor({1, c.obs_dim}, rng);
  const auto a = m.decode(p, Tensor(), Tensor::zeros({1, c.z_dim}), 1, {});
  const auto b = m.decode(p, Tensor(), random_tensor({1, c.z_dim}, rng), 1, {});
  CHECK(values(a) != values(b));
  auto bad = Tensor::zeros({1, c.z_dim});
  bad.data()[0] = std::nanf("");
  CHECK_THROWS_AS(m.decode(p, Tensor(), bad, 1, {}), NumericError);
}

TEST_CASE("batched decoding equals per-example decoding, in any order") {
  const auto c = small_config();
  const ActModel m(c, 5);
  Rng rng(5);
  const std::size_t B = 4;
  const auto p = random_tensor({B, c.obs_dim}, rng), z = random_tensor({B, c.z_dim}, rng);
  const auto all = m.decode(p, Tensor(), z, B, {});
  for (std::size_t b = 0; b < B; ++b) {
    const auto one = m.decode(rows_of(p, b, 1), Tensor(), rows_of(z, b, 1), 1, {});
    CHECK(values(one) == values(rows_of(all, b * c.chunk, c.chunk)));
  }
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<float> pp, zp;
  for (auto b : perm) {
    const auto pr = values(rows_of(p, b, 1)), zr = values(rows_of(z, b, 1));
    pp.insert(pp.end(), pr.begin(), pr.end());
    zp.insert(zp.end(), zr.begin(), zr.end());
  }
  const auto permuted = m.decode(Tensor::from({B, c.obs_dim}, pp), Tensor(), Tensor::from({B, c.z_dim}, zp), B, {});
  for (std::size_t i = 0; i < B; ++i)
    CHECK(values(rows_of(permuted, i * c.chunk, c.chunk)) == values(rows_of(all, perm[i] * c.chunk, c.chunk)));
}

TEST_CASE("dropout is active only in training forwards") {
  const auto c = small_config();
  const ActModel m(c, 6);
  Rng rng(6);
  const auto p = random_tensor({2, c.obs_dim}, rng), z = random_tensor({2, c.z_dim}, rng);
  const auto eval1 = m.decode(p, Tensor(), z, 2, {}), eval2 = m.decode(p, Tensor(), z, 2, {});
  CHECK(values(eval1) == values(eval2));
  Rng d1(1), d2(1);
  const auto t1 = m.decode(p, Tensor(), z, 2, {true, &d1}), t2 = m.decode(p, Tensor(), z, 2, {true, &d2});
  CHECK(values(t1) == values(t2));
  CHECK(values(t1) != values(eval1));
  CHECK_THROWS_AS(m.decode(p, Tensor(), z, 2, {true, nullptr}), ConfigError);
}

TEST_CASE("a model without the CVAE has no encoder") {
  auto c = small_config();
  c.use_cvae = false;
  const ActModel m(c, 7);
  const std::vector<std::uint8_t> mask(c.chunk, 1);
  const std::vector<float> eps(c.z_dim);
  CHECK_THROWS_AS(m.encode(Tensor::zeros({1, 8}), Tensor::zeros({c.chunk, 8}), mask, 1, eps, {}), ConfigError);
  CHECK(ActModel::expected_parameter_count(c) < ActModel::expected_parameter_count(small_config()));
}

TEST_CASE("closed-form KL is zero at the prior and matches the formula") {
  const std::vector<float> zero(6, 0.0f);
  CHECK(kl_closed_form(zero, zero) == 0.0);
  const std::vector<float> mu{1.0f, -2.0f}, lv{0.0f, std::log(4.0f)};
  // ½[(1 + 1 - 0 - 1) + (4 + 4 - ln 4 - 1)]
  CHECK(kl_closed_form(mu, lv) == doctest::Approx(0.5 * (1.0 + 7.0 - std::log(4.0))));
  Latent lat{Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), Tensor(), {}};
  const auto l = act_loss(Tensor::zeros({1, 8}), Tensor::zeros({1, 8}), std::vector<std::uint8_t>{1}, &lat, 10.0f);
  CHECK(l.kl.item() == 0.0f);
}

TEST_CASE("closed-form KL agrees with a Monte-Carlo estimate") {
  Rng rng(8);
  for (int g = 0; g < 5; ++g) {
    const std::size_t d = 4;
    std::vector<float> mu(d), lv(d);
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] = static_cast<float>(rng.uniform(-1.5, 1.5));
      lv[j] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    // E_q[log q(x) − log p(x)] with x = μ + σ·ε.
    const std::size_t n = 1000000;
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double lr = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double eps = rng.normal();
        const double x = mu[j] + std::exp(0.5 * lv[j]) * eps;
        lr += -0.5 * eps * eps - 0.5 * lv[j] + 0.5 * x * x;
      }
      acc += lr;
    }
    const double mc = acc / static_cast<double>(n), exact = kl_closed_form(mu, lv);
    INFO("gaussian " << g << " exact " << exact << " mc " << mc);
    CHECK(std::fabs(mc - exact) <= 0.02 * exact);
  }
}

TEST_CASE("position tables") {
  const auto t = sinusoid_table(10, 8);
  REQUIRE(t.size() == 80);
  for (std::size_t j = 0; j < 8; j += 2) {
    CHECK(t[j] == 0.0f);
    CHECK(t[j + 1] == 1.0f);
  }
  for (float v : t) CHECK(std::fabs(v) <= 1.0f);
  CHECK(t[8] == doctest::Approx(std::sin(1.0)));
  const auto t2 = sinusoid_table_2d(3, 4, 8);
  REQUIRE(t2.size() == 12 * 8);
  // Cells in the same row share the first half of the channels.
  for (std::size_t j = 0; j < 4; ++j) CHECK(t2[1 * 8 + j] == t2[2 * 8 + j]);
  CHECK(t2[1 * 8 + 4] != t2[2 * 8 + 4]);
}

TEST_CASE("normalizer round-trips and floors tiny deviations") {
  const auto n = Normalizer::from_stats({1.0f, 2.0f}, {2.0f, 0.0f}, std::vector<float>(8, 0.5f),
                                        std::vector<float>(8, 4.0f));
  std::vector<float> out(2);
  const std::vector<float> in{3.0f, 2.5f};
  n.normalize_obs(in, out);
  CHECK(out[0] == 1.0f);
  CHECK(out[1] == doctest::Approx(0.5f / Normalizer::kStdFloor));
  std::vector<float> a(8, 2.5f), na(8), back(8);
  n.normalize_actions(a, na);
  CHECK(na[0] == 0.5f);
  n.denormalize_actions(na, back);
  CHECK(back == a);
  CHECK(to_json(normalizer_from_json(to_json(n))) == to_json(n));
}

TEST_CASE("the policy predicts raw chunks independent of batch grouping") {
  const auto c = small_config();
  auto model = std::make_shared<ActModel>(c, 11);
  auto norm = identity_normalizer(c.obs_dim);
  norm.act_mean.assign(8, 3.0f);
  const ActPolicy policy(model, norm);
  CHECK(policy.chunk_size() == c.chunk);
  CHECK(policy.method() == "act");
  std::vector<sim::Observation> obs(3);
  Rng rng(11);
  for (auto& o : obs) {
    for (auto& j : o.joints) j = static_cast<float>(rng.uniform(-1, 1));
    o.objects = {0.1f, 0.2f, -0.1f, 0.0f};
  }
  const auto all = policy.predict(obs);
  REQUIRE(all.size() == 3 * c.chunk * 8);
  const std::size_t per = c.chunk * 8;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto one = policy.predict(std::span(obs).subspan(b, 1));
    CHECK(std::vector<float>(all.begin() + static_cast<std::ptrdiff_t>(b * per),
                             all.begin() + static_cast<std::ptrdiff_t>((b + 1) * per)) == one);
  }
  // Outputs are denormalized with the action statistics.
  const auto raw = model->decode(Tensor::from({1, c.obs_dim}, obs[0].state_vector()), Tensor(),
                                 Tensor::zeros({1, c.z_dim}), 1, {});
  CHECK(all[0] == raw.data()[0] + 3.0f);
  CHECK_THROWS_AS(ActPolicy(model, identity_normalizer(5)), DimensionError);
}

TEST_CASE("checkpoints with sidecars reload to identical predictions") {
  const auto dir = std::filesystem::temp_directory_path() / "act_test_model";
  std::filesystem::create_directories(dir);
  const auto c = small_config();
  const ActModel m(c, 12);
  const auto norm = identity_normalizer(c.obs_dim);
  save_act(dir / "m.ckpt", m, norm, {{"note", "x"}});
  const auto loaded = load_act(dir / "m.ckpt");
  CHECK(loaded.sidecar.at("note") == "x");
  CHECK(to_json(loaded.model->config()) == to_json(c));
  for (std::size_t i = 0; i < m.params().size(); ++i)
    CHECK(values(m.params().entries()[i].tensor) == values(loaded.model->params().entries()[i].tensor));
  io::write_text(sidecar_path(dir / "m.ckpt"), "{\"method\": \"bc\"}");
  CHECK_THROWS_AS(load_act(dir / "m.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
