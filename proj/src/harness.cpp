#include "act/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "act/errors.hpp"
#include "act/serialize.hpp"

namespace act::harness {

namespace fs = std::filesystem;

std::string to_string(Axis a) {
  switch (a) {
    case Axis::ChunkSize: return "chunk_size";
    case Axis::TemporalEnsemble: return "temporal_ensemble";
    case Axis::Cvae: return "cvae";
    case Axis::LossFn: return "loss_fn";
    case Axis::MValue: return "m_value";
  }
  return "?";
}

Axis axis_from_string(const std::string& s) {
  for (Axis a : {Axis::ChunkSize, Axis::TemporalEnsemble, Axis::Cvae, Axis::LossFn, Axis::MValue})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown axis '" + s + "' (expected chunk_size, temporal_ensemble, cvae, loss_fn or m_value)");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvariantError("cannot format number");
  return std::string(buf, end);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw IoError("bad number '" + s + "' in results.csv");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw IoError("bad integer '" + s + "' in results.csv");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

nlohmann::json rollout_to_json(const infer::RolloutConfig& r) {
  return {{"mode", infer::to_string(r.mode)}, {"m", r.m}, {"episode_length", r.episode_length}, {"seed", r.seed}};
}

infer::RolloutConfig rollout_from_json(const nlohmann::json& j, infer::RolloutConfig r) {
  if (j.contains("mode")) r.mode = infer::mode_from_string(j.at("mode").get<std::string>());
  r.m = j.value("m", r.m);
  r.episode_length = j.value("episode_length", r.episode_length);
  r.seed = j.value("seed", r.seed);
  return r;
}

void check_method(const std::string& m) {
  if (m != "act" && m != "bc" && m != "knn") throw ConfigError("unknown method '" + m + "' (expected act, bc or knn)");
}

bool parse_switch(const std::string& v, Axis axis) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ConfigError("axis " + to_string(axis) + " takes on/off, got '" + v + "'");
}

}  // namespace

nlohmann::json to_json(const CellConfig& c) {
  nlohmann::json knn = c.knn_candidates;
  return {{"method", c.method},   {"chunk", c.chunk},       {"model", to_json(c.model)},
          {"train", to_json(c.train)}, {"bc", baselines::to_json(c.bc)}, {"knn_candidates", knn},
          {"rollout", rollout_to_json(c.rollout)}, {"episodes", c.episodes}};
}

CellConfig cell_config_from_json(const nlohmann::json& j, CellConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    c.method = j.value("method", c.method);
    c.chunk = j.value("chunk", c.chunk);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    if (j.contains("bc")) c.bc = baselines::bc_config_from_json(j.at("bc"), c.bc);
    if (j.contains("knn_candidates")) c.knn_candidates = j.at("knn_candidates").get<std::vector<std::size_t>>();
    if (j.contains("rollout")) c.rollout = rollout_from_json(j.at("rollout"), c.rollout);
    c.episodes = j.value("episodes", c.episodes);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  check_method(c.method);
  return c;
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (methods.empty()) throw ConfigError("sweep needs at least one method");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (base.episodes == 0) throw ConfigError("episodes per cell must be >= 1");
  for (const auto& v : values)
    if (v.empty() || v.find_first_of(",\n\r\"") != std::string::npos) throw ConfigError("bad axis value '" + v + "'");
  for (const auto& m : methods) {
    check_method(m);
    for (const auto& v : values) apply_axis(base, m, axis, v, seeds.front());
  }
}

CellConfig apply_axis(const CellConfig& base, const std::string& method, Axis axis, const std::string& value,
                      std::uint64_t seed) {
  check_method(method);
  CellConfig c = base;
  c.method = method;
  c.train.seed = seed;
  c.bc.seed = seed;
  switch (axis) {
    case Axis::ChunkSize: {
      std::size_t k = 0;
      auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), k);
      if (ec != std::errc() || end != value.data() + value.size() || k == 0)
        throw ConfigError("chunk_size values must be positive integers, got '" + value + "'");
      c.chunk = k;
      break;
    }
    case Axis::TemporalEnsemble:
      c.rollout.mode = parse_switch(value, axis) ? infer::Mode::Ensembled : infer::Mode::Chunked;
      break;
    case Axis::Cvae:
      if (method != "act") throw ConfigError("axis cvae applies to act only");
      c.model.use_cvae = parse_switch(value, axis);
      break;
    case Axis::LossFn:
      if (method != "act") throw ConfigError("axis loss_fn applies to act only");
      c.train.loss = loss_from_string(value);
      break;
    case Axis::MValue: {
      double m = 0.0;
      auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), m);
      if (ec != std::errc() || end != value.data() + value.size() || !(m > 0.0))
        throw ConfigError("m_value values must be positive numbers, got '" + value + "'");
      c.rollout.mode = infer::Mode::Ensembled;
      c.rollout.m = m;
      break;
    }
  }
  if (c.chunk == 0) throw ConfigError("chunk size k must be >= 1");
  c.rollout.validate();
  return c;
}

// ---------------------------------------------------------------------------

void ResultTable::check() const {
  for (const auto& r : rows) {
    for (double s : r.success)
      if (!(s >= 0.0 && s <= 100.0))
        throw InvariantError("success " + fmt(s) + " outside [0, 100] in row " + r.method + "/" + r.value);
    if (r.success[1] > r.success[0] || r.success[2] > r.success[1])
      throw InvariantError("milestone monotonicity violated in row " + r.method + "/" + r.axis + "=" + r.value +
                           " seed " + std::to_string(r.seed) + " (" + fmt(r.success[0]) + ", " + fmt(r.success[1]) +
                           ", " + fmt(r.success[2]) + ")");
    if (!std::isfinite(r.jerk) || r.jerk < 0.0) throw InvariantError("bad jerk in row " + r.method + "/" + r.value);
  }
}

std::vector<AggregateRow> ResultTable::aggregate() const {
  std::vector<AggregateRow> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AggregateRow& a) {
      return a.method == r.method && a.axis == r.axis && a.value == r.value;
    });
    if (it == out.end()) {
      out.push_back({r.method, r.axis, r.value, 0, {}, 0.0});
      it = out.end() - 1;
    }
    ++it->seeds;
    for (std::size_t i = 0; i < 3; ++i) it->success[i] += r.success[i];
    it->jerk += r.jerk;
  }
  for (auto& a : out) {
    for (auto& s : a.success) s /= static_cast<double>(a.seeds);
    a.jerk /= static_cast<double>(a.seeds);
  }
  return out;
}

std::string results_csv(const ResultTable& t) {
  std::string s = "method,axis,value,seed,milestone_1,milestone_2,milestone_3,jerk\n";
  for (const auto& r : t.rows) {
    s += r.method + ',' + r.axis + ',' + r.value + ',' + std::to_string(r.seed);
    for (double v : r.success) s += ',' + fmt(v);
    s += ',' + fmt(r.jerk) + '\n';
  }
  return s;
}

ResultTable parse_results_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "method,axis,value,seed,milestone_1,milestone_2,milestone_3,jerk")
    throw IoError("results.csv: unexpected header");
  ResultTable t;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 8) throw IoError("results.csv: line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
    ResultRow r;
    r.method = f[0];
    r.axis = f[1];
    r.value = f[2];
    r.seed = parse_u64(f[3]);
    for (std::size_t m = 0; m < 3; ++m) r.success[m] = parse_double(f[4 + m]);
    r.jerk = parse_double(f[7]);
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::string aggregate_csv(const ResultTable& t) {
  std::string s =
      "method,axis,value,n_seeds,mean_over_seeds_milestone_1,mean_over_seeds_milestone_2,mean_over_seeds_milestone_3,"
      "mean_over_seeds_jerk\n";
  for (const auto& a : t.aggregate()) {
    s += a.method + ',' + a.axis + ',' + a.value + ',' + std::to_string(a.seeds);
    for (double v : a.success) s += ',' + fmt(v);
    s += ',' + fmt(a.jerk) + '\n';
  }
  return s;
}

std::string errors_csv(const ResultTable& t) {
  std::string s = "method,axis,value,seed,error\n";
  for (const auto& r : t.rows) {
    if (r.error.empty()) continue;
    std::string e = r.error;
    std::replace_if(e.begin(), e.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ';');
    s += r.method + ',' + r.axis + ',' + r.value + ',' + std::to_string(r.seed) + ',' + e + '\n';
  }
  return s;
}

std::string summary_markdown(const ResultTable& t) {
  const auto agg = t.aggregate();
  std::ostringstream os;
  os << "# Sweep summary\n\n";
  const std::string axis = t.rows.empty() ? "" : t.rows.front().axis;
  os << "Axis: `" << axis << "`. Success rates are the arithmetic mean over seeds, in percent.\n\n";
  os << "| method | value | seeds | milestone 1 | milestone 2 | milestone 3 | jerk |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& a : agg)
    os << "| " << a.method << " | " << a.value << " | " << a.seeds << " | " << fixed(a.success[0], 1) << " | "
       << fixed(a.success[1], 1) << " | " << fixed(a.success[2], 1) << " | " << fixed(a.jerk, 4) << " |\n";

  std::vector<std::string> methods;
  for (const auto& a : agg)
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
  auto find = [&](const std::string& m, const std::string& v) -> const AggregateRow* {
    for (const auto& a : agg)
      if (a.method == m && a.value == v) return &a;
    return nullptr;
  };

  if (axis == "temporal_ensemble") {
    os << "\n## Temporal ensembling\n\n";
    for (const auto& m : methods) {
      const auto* on = find(m, "on");
      const auto* off = find(m, "off");
      if (!on || !off) continue;
      const double ds = on->success[2] - off->success[2];
      os << "- " << m << ": final-milestone success " << (ds >= 0 ? "+" : "") << fixed(ds, 1)
         << " points with ensembling (" << (ds < 0 ? "degraded" : "not degraded") << "), jerk "
         << fixed(off->jerk, 4) << " -> " << fixed(on->jerk, 4) << "\n";
    }
  }
  if (axis == "m_value") {
    os << "\n## Best m\n\nRule: highest mean final-milestone success, then lower jerk, then smaller m.\n\n";
    for (const auto& m : methods) {
      const AggregateRow* best = nullptr;
      for (const auto& a : agg) {
        if (a.method != m) continue;
        if (!best || a.success[2] > best->success[2] ||
            (a.success[2] == best->success[2] &&
             (a.jerk < best->jerk || (a.jerk == best->jerk && std::stod(a.value) < std::stod(best->value)))))
          best = &a;
      }
      if (best)
        os << "- " << m << ": m = " << best->value << " (" << fixed(best->success[2], 1) << "%, jerk "
           << fixed(best->jerk, 4) << ")\n";
    }
  }
  bool any_error = false;
  for (const auto& r : t.rows) any_error = any_error || !r.error.empty();
  if (any_error) {
    os << "\n## Failed cells\n\nThese cells are recorded as 0% success.\n\n";
    for (const auto& r : t.rows)
      if (!r.error.empty())
        os << "- " << r.method << " " << r.axis << "=" << r.value << " seed " << r.seed << ": " << r.error << "\n";
  }
  return os.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string plot_svg(const ResultTable& t) {
  const auto agg = t.aggregate();
  std::vector<std::string> values, methods;
  for (const auto& a : agg) {
    if (std::find(values.begin(), values.end(), a.value) == values.end()) values.push_back(a.value);
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
  }
  const double W = 640, H = 400, left = 60, right = 140, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto xpos = [&](std::size_t i) {
    return values.size() == 1 ? left + pw / 2 : left + pw * static_cast<double>(i) / static_cast<double>(values.size() - 1);
  };
  auto ypos = [&](double s) { return top + ph * (1.0 - s / 100.0); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  for (int g = 0; g <= 100; g += 25) {
    const std::string y = fixed(ypos(g), 2);
    os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">" << g
       << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    os << "<text x=\"" << fixed(xpos(i), 2) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
       << xml_escape(values[i]) << "</text>\n";
  const std::string axis = agg.empty() ? "" : agg.front().axis;
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xml_escape(axis)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">success (%)</text>\n";
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const char* color = colors[mi % 6];
    std::string points;
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
      for (const auto& a : agg) {
        if (a.method != methods[mi] || a.value != values[vi]) continue;
        if (!points.empty()) points += ' ';
        points += fixed(xpos(vi), 2) + ',' + fixed(ypos(a.success[2]), 2);
        os << "<circle cx=\"" << fixed(xpos(vi), 2) << "\" cy=\"" << fixed(ypos(a.success[2]), 2)
           << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    os << "<polyline points=\"" << points << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(mi);
    os << "<line x1=\"" << left + pw + 16 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly << "\" dominant-baseline=\"middle\">"
       << xml_escape(methods[mi]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(const ResultTable& t, const fs::path& out_dir) {
  if (t.rows.empty()) throw InvariantError("emit_report: result table is empty");
  t.check();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  io::write_text(out_dir / "results.csv", results_csv(t));
  io::write_text(out_dir / "aggregate.csv", aggregate_csv(t));
  io::write_text(out_dir / "errors.csv", errors_csv(t));
  io::write_text(out_dir / "summary.md", summary_markdown(t));
  io::write_text(out_dir / "plot.svg", plot_svg(t));
}

ResultTable read_report(const fs::path& dir) {
  ResultTable t = parse_results_csv(io::read_text(dir / "results.csv"));
  if (fs::exists(dir / "errors.csv")) {
    const auto lines = lines_of(io::read_text(dir / "errors.csv"));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split(lines[i], ',');
      if (f.size() < 5) throw IoError("errors.csv: malformed line " + std::to_string(i + 1));
      const std::uint64_t seed = parse_u64(f[3]);
      for (auto& r : t.rows)
        if (r.method == f[0] && r.axis == f[1] && r.value == f[2] && r.seed == seed) r.error = f[4];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

TruncatedPolicy::TruncatedPolicy(std::shared_ptr<const Policy> inner, std::size_t k) : inner_(std::move(inner)), k_(k) {
  if (k == 0 || k > inner_->chunk_size())
    throw ConfigError("k must lie in [1, " + std::to_string(inner_->chunk_size()) + "] for this policy");
}

std::vector<float> TruncatedPolicy::predict(std::span<const sim::Observation> obs) const {
  const auto full = inner_->predict(obs);
  const std::size_t K = inner_->chunk_size(), d = sim::kActDim;
  std::vector<float> out;
  out.reserve(obs.size() * k_ * d);
  for (std::size_t b = 0; b < obs.size(); ++b)
    out.insert(out.end(), full.begin() + static_cast<std::ptrdiff_t>(b * K * d),
               full.begin() + static_cast<std::ptrdiff_t>((b * K + k_) * d));
  return out;
}

sim::TaskSpec task_for_dataset(const demo::Manifest& m) {
  sim::TaskSpec task = sim::TaskSpec::by_name(sim::task_from_string(m.task));
  task.obs_mode = sim::obs_mode_from_string(m.obs_mode);
  if (task.obs_mode == sim::ObsMode::Pixels) {
    task.image_h = m.image_hw[0];
    task.image_w = m.image_hw[1];
  }
  return task;
}

TrainedPolicy train_policy(const demo::Dataset& ds, const CellConfig& cfg, LogFn log) {
  check_method(cfg.method);
  TrainedPolicy out;
  if (cfg.method == "act") {
    ModelConfig mc = model_config_for(ds.manifest, cfg.model);
    mc.chunk = cfg.chunk;
    auto r = train(ds, mc, cfg.train, log);
    std::shared_ptr<const ActModel> model = r.model;
    const Normalizer norm = r.norm;
    out.policy = std::make_shared<ActPolicy>(model, norm);
    out.report = std::move(r.report);
    const nlohmann::json extras = {{"train", to_json(cfg.train)}};
    out.save = [model, norm, extras](const fs::path& dir) { save_act(dir / "model.ckpt", *model, norm, extras); };
  } else if (cfg.method == "bc") {
    baselines::BcMlpConfig bc = cfg.bc;
    bc.chunk = cfg.chunk;
    auto r = baselines::bc_train(ds, bc, log);
    std::shared_ptr<const baselines::BcMlp> model = r.model;
    const Normalizer norm = r.norm;
    out.policy = std::make_shared<baselines::BcPolicy>(model, norm);
    out.report = std::move(r.report);
    out.save = [model, norm](const fs::path& dir) { baselines::save_bc(dir / "model.ckpt", *model, norm); };
  } else {
    auto sel = baselines::knn_build(ds, cfg.chunk, cfg.train.seed, cfg.train.val_fraction, cfg.knn_candidates);
    for (const auto& [n, loss] : sel.losses) {
      out.report.validation.push_back({n, loss});
      if (log) log("knn n=" + std::to_string(n) + " val " + fmt(loss));
    }
    out.report.best_step = sel.index->neighbors();
    out.policy = std::make_shared<baselines::KnnPolicy>(sel.index);
    out.save = [](const fs::path&) {};
  }
  return out;
}

ResultTable run_sweep(const SweepSpec& spec, const demo::Dataset& ds, const fs::path& workspace,
                      const SweepOptions& opts) {
  spec.validate();
  const sim::TaskSpec task = task_for_dataset(ds.manifest);
  const std::string axis = to_string(spec.axis);
  std::map<std::string, std::pair<TrainedPolicy, std::string>> cache;  // policy settings -> (policy, error)
  ResultTable table;
  for (const auto& method : spec.methods) {
    for (const auto& value : spec.values) {
      for (std::uint64_t seed : spec.seeds) {
        const CellConfig cell = apply_axis(spec.base, method, spec.axis, value, seed);
        std::string name = method + "-" + axis + "-" + value + "-s" + std::to_string(seed);
        std::replace_if(name.begin(), name.end(), [](char c) { return c == '/' || c == ' '; }, '_');
        const fs::path cell_dir = workspace / "cells" / name;
        fs::create_directories(cell_dir);
        io::write_text(cell_dir / "cell.json", to_json(cell).dump(2) + "\n");

        nlohmann::json key = to_json(cell);
        key.erase("rollout");
        key.erase("episodes");
        auto it = cache.find(key.dump());
        if (it == cache.end()) {
          if (opts.log) opts.log("training " + name);
          std::pair<TrainedPolicy, std::string> entry;
          try {
            entry.first = train_policy(ds, cell, opts.log);
          } catch (const NumericError& e) {
            entry.second = e.what();
          } catch (const InvariantError& e) {
            entry.second = e.what();
          }
          it = cache.emplace(key.dump(), std::move(entry)).first;
        }
        const auto& [trained, error] = it->second;

        ResultRow row{method, axis, value, seed, {}, 0.0, error};
        if (error.empty()) {
          io::write_text(cell_dir / "report.csv", trained.report.to_csv());
          if (opts.save_checkpoints) trained.save(cell_dir);
          const auto results = infer::evaluate(*trained.policy, task, cell.rollout, cell.episodes, opts.threads);
          io::write_text(cell_dir / "results.csv", infer::results_csv(results));
          const auto s = infer::summarize(results);
          row.success = s.success_pct;
          row.jerk = s.jerk;
        } else if (opts.log) {
          opts.log("cell " + name + " failed: " + error);
        }
        ResultTable one;
        one.rows.push_back(row);
        io::write_text(cell_dir / "row.csv", results_csv(one));
        if (!error.empty()) io::write_text(cell_dir / "error.txt", error + "\n");
        table.rows.push_back(std::move(row));
      }
    }
  }
  emit_report(table, workspace);
  return table;
}

}  // namespace act::harness
