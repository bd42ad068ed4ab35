#pragma once

// One randomized gradient-check case per differentiable op.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace act::testing {

struct OpCase {
  std::string name;
  // Builds inputs for a seed and returns the function under test.
  std::function<std::pair<std::function<Tensor()>, std::vector<GradInput>>(std::uint64_t)> make;
};

inline std::vector<OpCase> op_cases() {
  using R = std::pair<std::function<Tensor()>, std::vector<GradInput>>;
  std::vector<OpCase> c;
  c.push_back({"matmul", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
                 return {[=] { return ops::matmul(a, b); }, {{"a", a}, {"b", b}}};
               }});
  c.push_back({"linear", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({5, 3}, rng), w = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
                 return {[=] { return ops::linear(x, w, b); }, {{"x", x}, {"w", w}, {"b", b}}};
               }});
  c.push_back({"add", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
                 return {[=] { return ops::add(a, b); }, {{"a", a}, {"b", b}}};
               }});
  c.push_back({"sub", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
                 return {[=] { return ops::sub(a, b); }, {{"a", a}, {"b", b}}};
               }});
  c.push_back({"mul", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
                 return {[=] { return ops::mul(a, b); }, {{"a", a}, {"b", b}}};
               }});
  c.push_back({"mul_shared", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({2, 3}, rng);
                 return {[=] { return ops::mul(a, a); }, {{"a", a}}};
               }});
  c.push_back({"add_row", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({4, 3}, rng), r = random_tensor({3}, rng);
                 return {[=] { return ops::add_row(x, r); }, {{"x", x}, {"row", r}}};
               }});
  c.push_back({"scale", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 3}, rng);
                 return {[=] { return ops::scale(x, -1.7f); }, {{"x", x}}};
               }});
  c.push_back({"add_scalar", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 3}, rng);
                 return {[=] { return ops::add_scalar(x, 0.3f); }, {{"x", x}}};
               }});
  c.push_back({"relu", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_away_from_zero({4, 5}, rng);
                 return {[=] { return ops::relu(x); }, {{"x", x}}};
               }});
  c.push_back({"exp", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 4}, rng);
                 return {[=] { return ops::exp(x); }, {{"x", x}}};
               }});
  c.push_back({"abs", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_away_from_zero({4, 5}, rng);
                 return {[=] { return ops::abs(x); }, {{"x", x}}};
               }});
  c.push_back({"square", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 4}, rng);
                 return {[=] { return ops::square(x); }, {{"x", x}}};
               }});
  c.push_back({"sum", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 4}, rng);
                 return {[=] { return ops::sum(x); }, {{"x", x}}};
               }});
  c.push_back({"mean", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 4}, rng);
                 return {[=] { return ops::mean(x); }, {{"x", x}}};
               }});
  c.push_back({"layer_norm", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng, 0.5, 1.5), b = random_tensor({6}, rng);
                 return {[=] { return ops::layer_norm(x, g, b); }, {{"x", x}, {"gain", g}, {"bias", b}}};
               }});
  c.push_back({"softmax_attention", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto q = random_tensor({4, 8}, rng), k = random_tensor({4, 8}, rng), v = random_tensor({4, 8}, rng);
                 return {[=] { return ops::softmax_attention(q, k, v, 2); }, {{"q", q}, {"k", k}, {"v", v}}};
               }});
  c.push_back({"softmax_attention_masked", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto q = random_tensor({2 * 3, 8}, rng), k = random_tensor({2 * 5, 8}, rng),
                      v = random_tensor({2 * 5, 8}, rng);
                 auto mask = std::make_shared<std::vector<std::uint8_t>>(
                     std::vector<std::uint8_t>{1, 1, 0, 1, 0, 1, 1, 1, 1, 0});
                 return {[=] { return ops::softmax_attention(q, k, v, 2, 2, *mask); }, {{"q", q}, {"k", k}, {"v", v}}};
               }});
  c.push_back({"dropout", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({4, 5}, rng);
                 return {[=] {
                           Rng d(s + 17);
                           return ops::dropout(x, 0.3f, d, true);
                         },
                         {{"x", x}}};
               }});
  c.push_back({"reshape", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({3, 4}, rng);
                 return {[=] { return ops::reshape(x, {2, 6}); }, {{"x", x}}};
               }});
  c.push_back({"concat_rows", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({2, 3}, rng), b = random_tensor({3, 3}, rng);
                 return {[=] {
                           const Tensor parts[] = {a, b};
                           return ops::concat_rows(parts);
                         },
                         {{"a", a}, {"b", b}}};
               }});
  c.push_back({"interleave_sequences", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto a = random_tensor({2 * 1, 3}, rng), b = random_tensor({2 * 3, 3}, rng);
                 return {[=] {
                           const Tensor parts[] = {a, b};
                           return ops::interleave_sequences(parts, 2);
                         },
                         {{"a", a}, {"b", b}}};
               }});
  c.push_back({"tile_rows", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({2, 3}, rng);
                 return {[=] { return ops::tile_rows(x, 3); }, {{"x", x}}};
               }});
  c.push_back({"select_rows", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({4, 3}, rng);
                 auto rows = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{2, 0, 2, 3});
                 return {[=] { return ops::select_rows(x, *rows); }, {{"x", x}}};
               }});
  c.push_back({"mean_rows_grouped", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({2 * 4, 3}, rng);
                 return {[=] { return ops::mean_rows_grouped(x, 2); }, {{"x", x}}};
               }});
  c.push_back({"conv2d", [](std::uint64_t s) -> R {
                 Rng rng(s);
                 auto x = random_tensor({2, 5, 6, 2}, rng), w = random_tensor({3 * 3 * 2, 3}, rng),
                      b = random_tensor({3}, rng);
                 return {[=] { return ops::conv2d(x, w, b, 3, 2, 1); }, {{"x", x}, {"w", w}, {"b", b}}};
               }});
  return c;
}

}  // namespace act::testing
