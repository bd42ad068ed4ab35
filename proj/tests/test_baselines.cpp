#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "act/baselines.hpp"
#include "act/errors.hpp"

using namespace act;
using namespace act::baselines;

namespace {

const demo::Dataset& tiny_dataset() {
  static const demo::Dataset ds =
      demo::generate_dataset(sim::TaskSpec::transfer_cube(), 6, demo::DemoStyle::stochastic(), 2);
  return ds;
}

std::vector<std::size_t> all_episodes(const demo::Dataset& ds) {
  std::vector<std::size_t> e(ds.size());
  std::iota(e.begin(), e.end(), 0);
  return e;
}

std::vector<Neighbor> brute_force(const KnnIndex& index, std::span<const float> q, std::size_t n) {
  std::vector<Neighbor> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    double d2 = 0.0;
    const auto f = index.feature(i);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double d = static_cast<double>(f[j]) - static_cast<double>(q[j]);
      d2 += d * d;
    }
    all[i] = {i, d2};
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  all.resize(n);
  for (auto& x : all) x.distance = std::sqrt(x.distance);
  return all;
}

// A two-episode dataset with hand-placed observations.
demo::Dataset hand_dataset() {
  demo::Dataset ds = demo::generate_dataset(sim::TaskSpec::transfer_cube(), 2, demo::DemoStyle::deterministic(), 5);
  for (auto& e : ds.episodes) {
    e.observations.resize(3 * e.obs_dim);
    e.actions.resize(3 * sim::kActDim);
  }
  const std::size_t D = ds.manifest.obs_dim;
  auto set_obs = [&](std::size_t ep, std::size_t t, float x) {
    std::fill_n(ds.episodes[ep].observations.begin() + static_cast<std::ptrdiff_t>(t * D), D, 0.0f);
    ds.episodes[ep].observations[t * D] = x;
  };
  auto set_act = [&](std::size_t ep, std::size_t t, float v) {
    std::fill_n(ds.episodes[ep].actions.begin() + static_cast<std::ptrdiff_t>(t * sim::kActDim), sim::kActDim, v);
  };
  // Entries 0..2 from episode 0, 3..5 from episode 1.
  const float xs[2][3] = {{0.0f, 1.0f, 2.0f}, {-1.0f, 4.0f, 1.0f}};
  for (std::size_t ep = 0; ep < 2; ++ep)
    for (std::size_t t = 0; t < 3; ++t) {
      set_obs(ep, t, xs[ep][t]);
      set_act(ep, t, static_cast<float>(10 * ep + t));
    }
  return ds;
}

Normalizer identity(std::size_t obs_dim) {
  return Normalizer::from_stats(std::vector<float>(obs_dim, 0.0f), std::vector<float>(obs_dim, 1.0f),
                                std::vector<float>(sim::kActDim, 0.0f), std::vector<float>(sim::kActDim, 1.0f));
}

}  // namespace

TEST_CASE("k-d tree search agrees with a brute-force scan") {
  const auto& ds = tiny_dataset();
  const KnnIndex index(ds, all_episodes(ds), normalizer_from_manifest(ds.manifest), 5, 3);
  Rng rng(1);
  for (int q = 0; q < 1000; ++q) {
    // Half the queries sit on data points, half are perturbed.
    const auto base = index.feature(rng.below(index.size()));
    std::vector<float> query(base.begin(), base.end());
    if (q % 2)
      for (auto& v : query) v += static_cast<float>(rng.normal() * 0.3);
    const std::size_t n = 1 + rng.below(9);
    const auto got = index.nearest(query, n), want = brute_force(index, query, n);
    REQUIRE(got.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(got[i].index == want[i].index);
      CHECK(got[i].distance == doctest::Approx(want[i].distance).epsilon(1e-12));
    }
  }
}

TEST_CASE("ties break toward the earlier episode, then the earlier timestep") {
  const auto ds = hand_dataset();
  const KnnIndex index(ds, all_episodes(ds), identity(ds.manifest.obs_dim), 1, 1);
  REQUIRE(index.size() == 6);
  CHECK(index.episode_of(4) == 1);
  CHECK(index.timestep_of(4) == 1);
  // x = 1 exists at entry 1 (ep 0, t 1) and entry 5 (ep 1, t 2).
  const std::vector<float> q(ds.manifest.obs_dim, 0.0f);
  auto at = [&](float x) {
    auto v = q;
    v[0] = x;
    return v;
  };
  CHECK(index.nearest(at(1.0f), 1)[0].index == 1);
  CHECK(index.nearest(at(1.0f), 2)[1].index == 5);
  // x = 0.5 is equidistant from entries 0 and 1 (and 5).
  const auto nb = index.nearest(at(0.5f), 3);
  CHECK(nb[0].index == 0);
  CHECK(nb[1].index == 1);
  CHECK(nb[2].index == 5);
}

TEST_CASE("an exact match with one neighbour returns its stored chunk") {
  const auto& ds = tiny_dataset();
  const auto norm = normalizer_from_manifest(ds.manifest);
  const KnnIndex index(ds, all_episodes(ds), norm, 4, 1);
  for (std::size_t i : {0ul, 137ul, index.size() - 1}) {
    const auto f = index.feature(i);
    const auto out = index.retrieve(f);
    const auto want = index.actions(i);
    CHECK(std::equal(out.begin(), out.end(), want.begin()));
    // The stored chunk is the demo's next-k actions, padded at the end.
    const auto c = demo::load_chunk(ds, index.episode_of(i), index.timestep_of(i), 4);
    CHECK(std::equal(want.begin(), want.end(), c.actions.begin()));
  }
}

TEST_CASE("equidistant neighbours give the plain mean; nearer ones weigh more") {
  const auto ds = hand_dataset();
  const KnnIndex index(ds, all_episodes(ds), identity(ds.manifest.obs_dim), 1, 2);
  std::vector<float> q(ds.manifest.obs_dim, 0.0f);
  q[0] = 0.5f;  // entries 0 (action 0) and 1 (action 1)
  CHECK(index.retrieve(q)[0] == doctest::Approx(0.5f));
  q[0] = 0.25f;  // distances 0.25 and 0.75: weights 3:1
  CHECK(index.retrieve(q)[0] == doctest::Approx(0.25f));
}

TEST_CASE("retrieved actions stay inside the neighbours' hull") {
  const auto& ds = tiny_dataset();
  const KnnIndex index(ds, all_episodes(ds), normalizer_from_manifest(ds.manifest), 3, 5);
  Rng rng(2);
  for (int q = 0; q < 200; ++q) {
    std::vector<float> query(index.feature_dim());
    for (auto& v : query) v = static_cast<float>(rng.normal());
    const auto nb = index.nearest(query, 5);
    const auto out = index.retrieve(query);
    for (std::size_t j = 0; j < out.size(); ++j) {
      float lo = 1e30f, hi = -1e30f;
      for (const auto& x : nb) {
        lo = std::min(lo, index.actions(x.index)[j]);
        hi = std::max(hi, index.actions(x.index)[j]);
      }
      CHECK(out[j] >= lo);
      CHECK(out[j] <= hi);
    }
  }
}

TEST_CASE("neighbour selection uses validation loss") {
  const auto& ds = tiny_dataset();
  const auto sel = knn_build(ds, 5, 0, 0.34, {1, 3, 5});
  REQUIRE(sel.losses.size() == 3);
  const auto best = std::min_element(sel.losses.begin(), sel.losses.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  CHECK(sel.index->neighbors() == best->first);
  for (const auto& [n, loss] : sel.losses) CHECK(std::isfinite(loss));
  CHECK_THROWS_AS(knn_build(ds, 5, 0, 0.34, {}), ConfigError);
  CHECK_THROWS_AS(KnnIndex(ds, all_episodes(ds), normalizer_from_manifest(ds.manifest), 0, 1), ConfigError);
}

TEST_CASE("the kNN policy returns raw chunks independent of batching") {
  const auto& ds = tiny_dataset();
  auto index = std::make_shared<KnnIndex>(ds, all_episodes(ds), normalizer_from_manifest(ds.manifest), 4, 3);
  const KnnPolicy policy(index);
  CHECK(policy.chunk_size() == 4);
  const sim::Simulator sim(sim::TaskSpec::transfer_cube());
  std::vector<sim::Observation> obs{sim.observe(sim.reset(1)), sim.observe(sim.reset(2))};
  const auto both = policy.predict(obs);
  REQUIRE(both.size() == 2 * 4 * 8);
  const auto second = policy.predict(std::span(obs).subspan(1, 1));
  CHECK(std::equal(second.begin(), second.end(), both.begin() + 32));
}

TEST_CASE("BC-MLP shapes, determinism and config") {
  BcMlpConfig cfg;
  cfg.hidden = {32, 16};
  cfg.chunk = 3;
  const BcMlp a(12, 8, cfg), b(12, 8, cfg);
  Rng rng(3);
  std::vector<float> x(2 * 12);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  const auto ya = a.forward(Tensor::from({2, 12}, x)), yb = b.forward(Tensor::from({2, 12}, x));
  CHECK(ya.shape() == Shape{6, 8});
  CHECK(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
  CHECK(a.params().parameter_count() == (12 * 32 + 32) + (32 * 16 + 16) + (16 * 24 + 24));
  CHECK(to_json(bc_config_from_json(to_json(cfg))) == to_json(cfg));
  cfg.chunk = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("BC-MLP fits its training data and round-trips through a checkpoint") {
  const auto& ds = tiny_dataset();
  BcMlpConfig cfg;
  cfg.hidden = {64, 64};
  cfg.lr = 1e-3f;
  cfg.steps = 1500;
  cfg.batch = 16;
  cfg.val_every = 500;
  cfg.val_fraction = 0.34;
  const auto r = bc_train(ds, cfg);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    first += r.report.losses[i].total;
    last += r.report.losses[r.report.losses.size() - 1 - i].total;
  }
  CHECK(last < 0.3 * first);
  CHECK(r.report.validation.size() == 3);
  const auto again = bc_train(ds, cfg);
  CHECK(again.report.to_csv() == r.report.to_csv());

  const auto dir = std::filesystem::temp_directory_path() / "act_test_bc";
  std::filesystem::create_directories(dir);
  save_bc(dir / "bc.ckpt", *r.model, r.norm);
  const auto loaded = load_bc(dir / "bc.ckpt");
  const BcPolicy p1(r.model, r.norm), p2(loaded.model, loaded.norm);
  const sim::Simulator sim(sim::TaskSpec::transfer_cube());
  const std::vector<sim::Observation> obs{sim.observe(sim.reset(4))};
  CHECK(p1.predict(obs) == p2.predict(obs));
  std::filesystem::remove_all(dir);
}
