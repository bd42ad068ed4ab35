#include "act/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "act/errors.hpp"
#include "act/ops.hpp"
#include "act/serialize.hpp"

namespace act::baselines {

void BcMlpConfig::validate() const {
  if (chunk == 0) throw ConfigError("BC-MLP chunk size k must be >= 1");
  if (hidden.empty()) throw ConfigError("BC-MLP needs at least one hidden layer");
  for (auto h : hidden)
    if (h == 0) throw ConfigError("BC-MLP hidden sizes must be positive");
  if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  if (val_every == 0) throw ConfigError("val_every must be >= 1");
}

nlohmann::json to_json(const BcMlpConfig& c) {
  return {{"hidden", c.hidden}, {"chunk", c.chunk}, {"lr", c.lr},   {"steps", c.steps},
          {"batch", c.batch},   {"seed", c.seed},   {"val_fraction", c.val_fraction}, {"val_every", c.val_every}};
}

BcMlpConfig bc_config_from_json(const nlohmann::json& j, BcMlpConfig c) {
  try {
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.chunk = j.value("chunk", c.chunk);
    c.lr = j.value("lr", c.lr);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.val_every = j.value("val_every", c.val_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad BC-MLP config: ") + e.what());
  }
  return c;
}

BcMlp::BcMlp(std::size_t obs_dim, std::size_t act_dim, const BcMlpConfig& cfg)
    : cfg_(cfg), obs_dim_(obs_dim), act_dim_(act_dim) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, 0xbc));
  std::size_t in = obs_dim;
  std::vector<std::size_t> widths = cfg_.hidden;
  widths.push_back(cfg_.chunk * act_dim);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "bc.layer" + std::to_string(i);
    w_.push_back(params_.add_uniform(p + ".w", {in, widths[i]}, in, rng));
    b_.push_back(params_.add_uniform(p + ".b", {widths[i]}, in, rng));
    in = widths[i];
  }
}

Tensor BcMlp::forward(const Tensor& x) const {
  if (x.cols() != obs_dim_) throw DimensionError("BC-MLP input " + shape_str(x.shape()));
  Tensor h = x;
  for (std::size_t i = 0; i < w_.size(); ++i) {
    h = ops::linear(h, w_[i], b_[i]);
    if (i + 1 < w_.size()) h = ops::relu(h);
  }
  return ops::reshape(h, {x.rows() * cfg_.chunk, act_dim_});
}

namespace {

ModelConfig batch_layout(std::size_t obs_dim, std::size_t k) {
  ModelConfig c;
  c.obs_dim = obs_dim;
  c.chunk = k;
  c.obs_mode = sim::ObsMode::State;
  return c;
}

LossTerms bc_loss(const BcMlp& model, const Batch& b) {
  const Tensor pred = model.forward(Tensor::from({b.size, model.obs_dim()}, b.proprio));
  const Tensor target = Tensor::from({b.size * model.config().chunk, model.act_dim()}, b.actions);
  return act_loss(pred, target, b.mask, nullptr, 0.0f, LossKind::L1);
}

void require_state_mode(const demo::Dataset& ds) {
  if (ds.manifest.obs_mode != "state") throw ConfigError("baselines support state observations only");
}

}  // namespace

double bc_validate(const BcMlp& model, const Normalizer& norm, const demo::Dataset& ds,
                   std::span<const std::size_t> episodes, std::size_t stride) {
  if (episodes.empty()) throw ConfigError("validation set is empty");
  NoGradGuard guard;
  const auto layout = batch_layout(model.obs_dim(), model.config().chunk);
  std::vector<Sample> all;
  for (std::size_t e : episodes)
    for (std::size_t t = 0; t < ds.episodes.at(e).length(); t += stride) all.push_back({e, t});
  double weighted = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, all.size() - start);
    const Batch b = make_batch(ds, norm, layout, std::span<const Sample>(all.data() + start, n));
    weighted += static_cast<double>(bc_loss(model, b).total.item()) * static_cast<double>(n);
  }
  return weighted / static_cast<double>(all.size());
}

BcTrainResult bc_train(const demo::Dataset& ds, const BcMlpConfig& cfg, LogFn log) {
  cfg.validate();
  require_state_mode(ds);
  const auto t0 = std::chrono::steady_clock::now();
  BcTrainResult result;
  result.norm = normalizer_from_manifest(ds.manifest);
  auto [tr, val] = split_episodes(ds.size(), cfg.val_fraction, cfg.seed);
  result.report.train_episodes = tr;
  result.report.val_episodes = val;
  const std::size_t obs_dim = ds.manifest.obs_dim;
  auto model = std::make_shared<BcMlp>(obs_dim, ds.manifest.act_dim, cfg);
  Adam adam(model->params(), AdamConfig{cfg.lr, 0.9f, 0.999f, 1e-8f});
  const auto layout = batch_layout(obs_dim, cfg.chunk);
  std::shared_ptr<BcMlp> best;
  double best_val = std::numeric_limits<double>::infinity();
  auto run_validation = [&](std::size_t step) {
    const double v = bc_validate(*model, result.norm, ds, val);
    result.report.validation.push_back({step, v});
    if (std::isfinite(v) && v < best_val) {
      best_val = v;
      best = std::make_shared<BcMlp>(obs_dim, ds.manifest.act_dim, cfg);
      best->params().copy_values_from(model->params());
      result.report.best_step = step;
    }
    if (log) log("bc step " + std::to_string(step) + " val " + std::to_string(v));
  };
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto samples = sample_batch(ds, tr, cfg.batch, cfg.seed, step);
    const Batch b = make_batch(ds, result.norm, layout, samples);
    model->params().zero_grad();
    auto terms = bc_loss(*model, b);
    const float loss = terms.total.item();
    if (!std::isfinite(loss)) throw NumericError("BC-MLP: non-finite loss at step " + std::to_string(step));
    result.report.losses.push_back({step, loss, loss, 0.0f});
    terms.total.backward();
    adam.step();
    if (step % cfg.val_every == 0 || step == cfg.steps) run_validation(step);
  }
  if (cfg.steps == 0) run_validation(0);
  if (!best) throw NumericError("BC-MLP: validation loss was never finite");
  result.model = best;
  result.report.best_val = best_val;
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

BcPolicy::BcPolicy(std::shared_ptr<const BcMlp> model, Normalizer norm) : model_(std::move(model)), norm_(std::move(norm)) {
  if (norm_.obs_mean.size() != model_->obs_dim()) throw DimensionError("BcPolicy: normalizer width mismatch");
}

std::vector<float> BcPolicy::predict(std::span<const sim::Observation> obs) const {
  NoGradGuard guard;
  const std::size_t B = obs.size(), d = model_->obs_dim();
  std::vector<float> x(B * d);
  for (std::size_t b = 0; b < B; ++b) {
    const auto sv = obs[b].state_vector();
    if (sv.size() != d) throw DimensionError("BcPolicy: observation width " + std::to_string(sv.size()));
    norm_.normalize_obs(sv, std::span<float>(x).subspan(b * d, d));
  }
  const Tensor out = model_->forward(Tensor::from({B, d}, std::move(x)));
  std::vector<float> actions(out.numel());
  norm_.denormalize_actions(out.data(), actions);
  return actions;
}

void save_bc(const std::filesystem::path& ckpt, const BcMlp& model, const Normalizer& norm, const nlohmann::json& extra) {
  io::save_checkpoint(ckpt, model.params());
  nlohmann::json j = {{"method", "bc"},
                      {"bc", to_json(model.config())},
                      {"obs_dim", model.obs_dim()},
                      {"act_dim", model.act_dim()},
                      {"normalizer", to_json(norm)}};
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  io::write_text(sidecar_path(ckpt), j.dump(2) + "\n");
}

LoadedBc load_bc(const std::filesystem::path& ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(sidecar_path(ckpt)));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse " + sidecar_path(ckpt).string() + ": " + e.what());
  }
  if (j.value("method", std::string()) != "bc") throw IoError(sidecar_path(ckpt).string() + " is not a BC-MLP sidecar");
  LoadedBc out;
  out.model = std::make_shared<BcMlp>(j.at("obs_dim").get<std::size_t>(), j.at("act_dim").get<std::size_t>(),
                                      bc_config_from_json(j.at("bc")));
  out.model->params().copy_values_from(io::load_checkpoint(ckpt));
  out.norm = normalizer_from_json(j.at("normalizer"));
  return out;
}

// ---------------------------------------------------------------------------

// Exact nearest-neighbour search over a k-d tree. Candidates are ordered by
// (distance², entry index); entry index order is (episode, timestep) order.
struct KdTree {
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order
    int split_dim = -1;              // -1 for leaves
    float split = 0.0f;
    int left = -1, right = -1;
    std::vector<float> lo, hi;  // bounding box
  };
  const float* data = nullptr;  // only during build
  std::size_t dim = 0;
  std::vector<std::size_t> order;
  std::vector<Node> nodes;
  static constexpr std::size_t kLeaf = 16;

  void build(const float* d, std::size_t n, std::size_t dm) {
    data = d;
    dim = dm;
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    nodes.clear();
    if (n) make(0, n);
  }

  int make(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.assign(dim, std::numeric_limits<float>::infinity());
    node.hi.assign(dim, -std::numeric_limits<float>::infinity());
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t c = 0; c < dim; ++c) {
        node.lo[c] = std::min(node.lo[c], data[order[i] * dim + c]);
        node.hi[c] = std::max(node.hi[c], data[order[i] * dim + c]);
      }
    if (end - begin > kLeaf) {
      std::size_t best = 0;
      float spread = -1.0f;
      for (std::size_t c = 0; c < dim; ++c) {
        if (node.hi[c] - node.lo[c] > spread) {
          spread = node.hi[c] - node.lo[c];
          best = c;
        }
      }
      if (spread > 0.0f) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(mid),
                         order.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                           const float va = data[a * dim + best], vb = data[b * dim + best];
                           return va < vb || (va == vb && a < b);
                         });
        node.split_dim = static_cast<int>(best);
        node.split = data[order[mid] * dim + best];
        nodes[static_cast<std::size_t>(id)] = node;
        const int l = make(begin, mid);
        const int r = make(mid, end);
        nodes[static_cast<std::size_t>(id)].left = l;
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
      }
    }
    nodes[static_cast<std::size_t>(id)] = node;
    return id;
  }

  double box_dist2(const Node& n, std::span<const float> q) const {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      double d = 0.0;
      if (q[c] < n.lo[c]) d = static_cast<double>(n.lo[c]) - q[c];
      else if (q[c] > n.hi[c]) d = static_cast<double>(q[c]) - n.hi[c];
      s += d * d;
    }
    return s;
  }

  double dist2(const float* pts, std::size_t i, std::span<const float> q) const {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = static_cast<double>(pts[i * dim + c]) - static_cast<double>(q[c]);
      s += d * d;
    }
    return s;
  }

  using Cand = std::pair<double, std::size_t>;

  void search(const float* pts, int id, std::span<const float> q, std::size_t n, std::vector<Cand>& best) const {
    const Node& node = nodes[static_cast<std::size_t>(id)];
    // Equal distances must still be visited for the index tie-break.
    if (best.size() == n && box_dist2(node, q) > best.back().first) return;
    if (node.split_dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const Cand c{dist2(pts, order[i], q), order[i]};
        if (best.size() < n || c < best.back()) {
          best.insert(std::upper_bound(best.begin(), best.end(), c), c);
          if (best.size() > n) best.pop_back();
        }
      }
      return;
    }
    const bool go_left = q[static_cast<std::size_t>(node.split_dim)] <= node.split;
    search(pts, go_left ? node.left : node.right, q, n, best);
    search(pts, go_left ? node.right : node.left, q, n, best);
  }
};

KnnIndex::KnnIndex(const demo::Dataset& ds, std::span<const std::size_t> episodes, Normalizer norm, std::size_t k,
                   std::size_t n_neighbors)
    : norm_(std::move(norm)), k_(k), n_(n_neighbors), dim_(0) {
  require_state_mode(ds);
  if (k == 0) throw ConfigError("kNN chunk size k must be >= 1");
  if (n_neighbors == 0) throw ConfigError("kNN neighbour count must be >= 1");
  if (episodes.empty()) throw ConfigError("kNN index needs at least one episode");
  dim_ = ds.manifest.obs_dim;
  for (std::size_t e : episodes) {
    const auto& ep = ds.episodes.at(e);
    for (std::size_t t = 0; t < ep.length(); ++t) {
      const auto c = demo::load_chunk(ds, e, t, k);
      std::vector<float> f(dim_);
      norm_.normalize_obs(c.obs, f);
      features_.insert(features_.end(), f.begin(), f.end());
      actions_.insert(actions_.end(), c.actions.begin(), c.actions.end());
      episode_.push_back(e);
      timestep_.push_back(t);
    }
  }
  auto tree = std::make_shared<KdTree>();
  tree->build(features_.data(), size(), dim_);
  tree_ = std::move(tree);
}

void KnnIndex::set_neighbors(std::size_t n) {
  if (n == 0) throw ConfigError("kNN neighbour count must be >= 1");
  n_ = n;
}

std::vector<Neighbor> KnnIndex::nearest(std::span<const float> feature, std::size_t n) const {
  if (feature.size() != dim_) throw DimensionError("kNN query width " + std::to_string(feature.size()));
  if (n == 0) throw ConfigError("kNN neighbour count must be >= 1");
  std::vector<KdTree::Cand> best;
  best.reserve(n + 1);
  tree_->search(features_.data(), 0, feature, std::min(n, size()), best);
  std::vector<Neighbor> out;
  for (const auto& c : best) out.push_back({c.second, std::sqrt(c.first)});
  return out;
}

std::vector<float> KnnIndex::retrieve(std::span<const float> feature, std::size_t n) const {
  const auto nb = nearest(feature, n);
  const std::size_t width = k_ * sim::kActDim;
  double wsum = 0.0;
  for (const auto& x : nb) wsum += 1.0 / (x.distance + 1e-8);
  std::vector<double> acc(width, 0.0);
  for (const auto& x : nb) {
    const double w = (1.0 / (x.distance + 1e-8)) / wsum;
    const auto a = actions(x.index);
    for (std::size_t i = 0; i < width; ++i) acc[i] += w * a[i];
  }
  std::vector<float> out(width);
  for (std::size_t i = 0; i < width; ++i) {
    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (const auto& x : nb) {
      lo = std::min(lo, actions(x.index)[i]);
      hi = std::max(hi, actions(x.index)[i]);
    }
    out[i] = std::clamp(static_cast<float>(acc[i]), lo, hi);
  }
  return out;
}

double knn_validation_loss(const KnnIndex& index, const demo::Dataset& ds, std::span<const std::size_t> episodes,
                           std::size_t n, std::size_t stride) {
  if (episodes.empty()) throw ConfigError("validation set is empty");
  const auto& norm = index.normalizer();
  const std::size_t k = index.chunk();
  double total = 0.0;
  std::size_t count = 0;
  std::vector<float> f(index.feature_dim());
  for (std::size_t e : episodes) {
    for (std::size_t t = 0; t < ds.episodes.at(e).length(); t += stride) {
      const auto c = demo::load_chunk(ds, e, t, k);
      norm.normalize_obs(c.obs, f);
      const auto pred = index.retrieve(f, n);
      for (std::size_t i = 0; i < k; ++i) {
        if (!c.mask[i]) continue;
        for (std::size_t d = 0; d < sim::kActDim; ++d) {
          const std::size_t j = i * sim::kActDim + d;
          total += std::fabs(pred[j] - c.actions[j]) / norm.act_scale(d);
          ++count;
        }
      }
    }
  }
  return total / static_cast<double>(count);
}

KnnSelection knn_build(const demo::Dataset& ds, std::size_t k, std::uint64_t seed, double val_fraction,
                       std::vector<std::size_t> candidates) {
  if (candidates.empty()) throw ConfigError("kNN needs at least one candidate neighbour count");
  auto [tr, val] = split_episodes(ds.size(), val_fraction, seed);
  KnnSelection sel;
  sel.index = std::make_shared<KnnIndex>(ds, tr, normalizer_from_manifest(ds.manifest), k, candidates.front());
  std::sort(candidates.begin(), candidates.end());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_n = candidates.front();
  for (std::size_t n : candidates) {
    const double loss = knn_validation_loss(*sel.index, ds, val, n);
    sel.losses.push_back({n, loss});
    if (loss < best) {
      best = loss;
      best_n = n;
    }
  }
  sel.index->set_neighbors(best_n);
  return sel;
}

std::vector<float> KnnPolicy::predict(std::span<const sim::Observation> obs) const {
  std::vector<float> out;
  out.reserve(obs.size() * index_->chunk() * sim::kActDim);
  std::vector<float> f(index_->feature_dim());
  for (const auto& o : obs) {
    const auto sv = o.state_vector();
    if (sv.size() != f.size()) throw DimensionError("KnnPolicy: observation width " + std::to_string(sv.size()));
    index_->normalizer().normalize_obs(sv, f);
    const auto a = index_->retrieve(f);
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

}  // namespace act::baselines
