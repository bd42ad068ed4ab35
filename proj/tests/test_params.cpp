#include <doctest.h>

#include <cmath>
#include <limits>

#include "act/errors.hpp"
#include "act/ops.hpp"
#include "act/params.hpp"

using namespace act;

TEST_CASE("one Adam step on a hand-computed example") {
  // t = 1: m = 0.1 g, v = 0.001 g², bias correction leaves m̂ = g, v̂ = g²,
  // so the step is lr · g / (|g| + eps).
  std::vector<float> p{1.0f, -2.0f, 0.5f}, g{0.5f, -4.0f, 0.0f}, m(3, 0.0f), v(3, 0.0f);
  AdamConfig cfg;
  cfg.lr = 0.1f;
  adam_update(p, g, m, v, cfg, 1);
  CHECK(p[0] == doctest::Approx(1.0f - 0.1f * 0.5f / (0.5f + 1e-8f)));
  CHECK(p[1] == doctest::Approx(-2.0f + 0.1f));
  CHECK(p[2] == 0.5f);
  CHECK(m[0] == doctest::Approx(0.05f));
  CHECK(v[1] == doctest::Approx(0.016f));

  // t = 2 with the same gradient keeps m̂ = g and v̂ = g².
  adam_update(p, g, m, v, cfg, 2);
  CHECK(p[0] == doctest::Approx(1.0f - 0.2f).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(-2.0f + 0.2f).epsilon(1e-5));
}

TEST_CASE("Adam against a double-precision reference over many steps") {
  AdamConfig cfg;
  cfg.lr = 1e-2f;
  std::vector<float> p{0.3f}, m(1, 0.0f), v(1, 0.0f);
  double pd = 0.3, md = 0.0, vd = 0.0;
  for (std::uint64_t t = 1; t <= 100; ++t) {
    const float g = std::sin(static_cast<float>(t));
    std::vector<float> gv{g};
    adam_update(p, gv, m, v, cfg, t);
    md = 0.9 * md + 0.1 * g;
    vd = 0.999 * vd + 0.001 * g * g;
    const double mh = md / (1.0 - std::pow(0.9, t)), vh = vd / (1.0 - std::pow(0.999, t));
    pd -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(p[0] == doctest::Approx(pd).epsilon(1e-4));
}

TEST_CASE("Adam minimizes a quadratic") {
  ParamStore ps;
  auto& x = ps.add("x", Tensor::from({1, 2}, {3.0f, -4.0f}));
  AdamConfig cfg;
  cfg.lr = 0.05f;
  Adam opt(ps, cfg);
  for (int i = 0; i < 500; ++i) {
    ps.zero_grad();
    ops::sum(ops::square(x)).backward();
    opt.step();
  }
  CHECK(std::fabs(x.data()[0]) < 0.05f);
  CHECK(std::fabs(x.data()[1]) < 0.05f);
  CHECK(opt.steps_taken() == 500);
}

TEST_CASE("non-finite gradients are rejected before any update") {
  ParamStore ps;
  auto a = ps.add("a", Tensor::from({1, 2}, {1.0f, 2.0f}));
  auto b = ps.add("b", Tensor::from({1, 1}, {3.0f}));
  ops::add(ops::sum(a), ops::sum(ops::scale(b, std::numeric_limits<float>::infinity()))).backward();
  CHECK(std::isinf(b.grad()[0]));
  Adam opt(ps, {});
  try {
    opt.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(a.data()[0] == 1.0f);
  CHECK(a.data()[1] == 2.0f);
  CHECK(opt.steps_taken() == 0);
}

TEST_CASE("adam_update validates its arguments") {
  std::vector<float> p(2), g(2), m(2), v(1);
  CHECK_THROWS_AS(adam_update(p, g, m, v, {}, 1), DimensionError);
  v.resize(2);
  CHECK_THROWS_AS(adam_update(p, g, m, v, {}, 0), ConfigError);
}

TEST_CASE("parameter stores: unique names, clone and copy") {
  Rng rng(1);
  ParamStore ps;
  ps.add_uniform("w", {4, 3}, 4, rng);
  ps.add_constant("b", {3}, 0.25f);
  CHECK_THROWS_AS(ps.add_constant("b", {1}, 0.0f), ConfigError);
  CHECK(ps.parameter_count() == 15);
  for (float w : ps.get("w").data()) CHECK(std::fabs(w) <= 0.5f);
  CHECK_THROWS_AS(ps.get("missing"), ConfigError);

  auto copy = ps.clone();
  copy.entries()[0].tensor.data()[0] = 42.0f;
  CHECK(ps.get("w").data()[0] != 42.0f);
  CHECK(copy.get("w").requires_grad());
  ps.copy_values_from(copy);
  CHECK(ps.get("w").data()[0] == 42.0f);

  ParamStore other;
  other.add_constant("w", {4, 3}, 0.0f);
  CHECK_THROWS_AS(ps.copy_values_from(other), DimensionError);
  other.add_constant("c", {3}, 0.0f);
  CHECK_THROWS_AS(ps.copy_values_from(other), DimensionError);
}

TEST_CASE("grad_norm is the global L2 norm") {
  ParamStore ps;
  auto a = ps.add("a", Tensor::from({1, 2}, {3.0f, 0.0f}));
  auto b = ps.add("b", Tensor::from({1, 1}, {0.0f}));
  ops::add(ops::sum(ops::scale(a, 1.0f)), ops::scale(ops::sum(b), 2.0f)).backward();
  CHECK(grad_norm(ps) == doctest::Approx(std::sqrt(1.0 + 1.0 + 4.0)));
}
