#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "act/baselines.hpp"
#include "act/demonstrations.hpp"
#include "act/inference.hpp"
#include "act/model.hpp"
#include "act/policy.hpp"
#include "act/training.hpp"

namespace act::harness {

enum class Axis { ChunkSize, TemporalEnsemble, Cvae, LossFn, MValue };
std::string to_string(Axis a);
Axis axis_from_string(const std::string& s);

// Base configuration of one policy cell before the swept value is applied.
struct CellConfig {
  std::string method = "act";  // act | bc | knn
  std::size_t chunk = 20;      // k for every method; overrides model.chunk and bc.chunk
  ModelConfig model;
  TrainConfig train;
  baselines::BcMlpConfig bc;
  std::vector<std::size_t> knn_candidates{1, 3, 5, 9};
  infer::RolloutConfig rollout;
  std::size_t episodes = 50;
};

nlohmann::json to_json(const CellConfig& c);
CellConfig cell_config_from_json(const nlohmann::json& j, CellConfig base = {});

struct SweepSpec {
  Axis axis = Axis::ChunkSize;
  std::vector<std::string> values;
  std::vector<std::string> methods{"act"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  CellConfig base;  // base.method is ignored; rows use `methods`

  void validate() const;
};

// The exact configuration of a cell: base settings with the axis value applied.
CellConfig apply_axis(const CellConfig& base, const std::string& method, Axis axis, const std::string& value,
                      std::uint64_t seed);

struct ResultRow {
  std::string method, axis, value;
  std::uint64_t seed = 0;
  std::array<double, 3> success{};  // per-milestone success %
  double jerk = 0.0;
  std::string error;  // nonempty when the cell failed and was recorded as 0%

  bool operator==(const ResultRow&) const = default;
};

struct AggregateRow {
  std::string method, axis, value;
  std::size_t seeds = 0;
  std::array<double, 3> success{};  // arithmetic mean over seeds
  double jerk = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  // Success in [0, 100] and later milestones never above earlier ones.
  void check() const;
  // Mean over seeds per (method, axis, value), in first-appearance order.
  std::vector<AggregateRow> aggregate() const;
  bool operator==(const ResultTable&) const = default;
};

// results.csv: method,axis,value,seed,milestone_1,milestone_2,milestone_3,jerk
std::string results_csv(const ResultTable& t);
ResultTable parse_results_csv(const std::string& text);
std::string aggregate_csv(const ResultTable& t);
std::string errors_csv(const ResultTable& t);
std::string summary_markdown(const ResultTable& t);
std::string plot_svg(const ResultTable& t);

// Writes results.csv, aggregate.csv, errors.csv, summary.md and plot.svg.
// Refuses (InvariantError) tables that fail check().
void emit_report(const ResultTable& t, const std::filesystem::path& out_dir);
// Reads results.csv and errors.csv back from a report directory.
ResultTable read_report(const std::filesystem::path& dir);

// Task spec matching a dataset (name, observation mode, image size).
sim::TaskSpec task_for_dataset(const demo::Manifest& m);

// Trains (or builds) the policy described by a cell config.
struct TrainedPolicy {
  std::shared_ptr<Policy> policy;
  TrainReport report;
  // Persists the policy under dir (checkpoint + sidecar); no-op for kNN.
  std::function<void(const std::filesystem::path&)> save;
};
TrainedPolicy train_policy(const demo::Dataset& ds, const CellConfig& cfg, LogFn log = {});

// Executes only the first k actions of every chunk predicted by `inner`.
class TruncatedPolicy final : public Policy {
 public:
  TruncatedPolicy(std::shared_ptr<const Policy> inner, std::size_t k);
  std::size_t chunk_size() const override { return k_; }
  std::string method() const override { return inner_->method(); }
  std::vector<float> predict(std::span<const sim::Observation> obs) const override;

 private:
  std::shared_ptr<const Policy> inner_;
  std::size_t k_;
};

struct SweepOptions {
  std::size_t threads = 1;
  bool save_checkpoints = false;
  LogFn log;
};

// One trained policy per (method, value, seed) cell, evaluated on
// base.episodes episodes. Cells whose policy settings coincide (temporal
// ensembling, m) share one trained policy. Per-cell outputs go to
// workspace/cells/<cell>/ and the merged report to workspace/.
ResultTable run_sweep(const SweepSpec& spec, const demo::Dataset& ds, const std::filesystem::path& workspace,
                      const SweepOptions& opts = {});

}  // namespace act::harness
