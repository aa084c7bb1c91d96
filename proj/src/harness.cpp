#include "turnpoint/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "turnpoint/analytic.hpp"
#include "turnpoint/errors.hpp"
#include "turnpoint/neural.hpp"
#include "turnpoint/random.hpp"
#include "turnpoint/report.hpp"
#include "turnpoint/suite.hpp"

namespace turnpoint {

using nlohmann::json;

std::string_view to_string(SweepMode m) {
  switch (m) {
    case SweepMode::step_switch: return "step_switch";
    case SweepMode::block_split: return "block_split";
    case SweepMode::qualitative: return "qualitative";
  }
  return "?";
}

std::optional<SweepMode> parse_sweep_mode(std::string_view s) {
  if (s == "step_switch" || s == "step") return SweepMode::step_switch;
  if (s == "block_split" || s == "block") return SweepMode::block_split;
  if (s == "qualitative") return SweepMode::qualitative;
  return std::nullopt;
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

void SweepConfig::validate() const {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ConfigError("grid values must lie in [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("grid values must be strictly increasing");
  }
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (max_prompts < 0) throw ConfigError("max_prompts must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (mode == SweepMode::block_split && uses_analytic_backend()) {
    throw ConfigError("block_split mode requires the neural backend (a checkpoint path)");
  }
  if (!(turning_threshold > 0.0 && turning_threshold <= 1.0)) throw ConfigError("turning_threshold must lie in (0, 1]");
  if (sampler.n_steps < 1) throw ConfigError("sampler n_steps must be >= 1");
  world.validate();
}

namespace {

template <typename T>
T take(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError(std::string("unknown ") + where + " key '" + it.key() + "'");
    }
  }
}

SamplerConfig sampler_from_json(const json& j) {
  reject_unknown(j, {"n_steps", "kind", "guidance_scale", "beta_min", "beta_max"}, "sampler");
  SamplerConfig s;
  s.n_steps = take(j, "n_steps", s.n_steps);
  const std::string kind = take<std::string>(j, "kind", "ancestral");
  if (kind == "ancestral") {
    s.kind = SamplerKind::ancestral;
  } else if (kind == "deterministic") {
    s.kind = SamplerKind::deterministic;
  } else {
    throw ConfigError("sampler kind must be 'ancestral' or 'deterministic'");
  }
  s.guidance_scale = take(j, "guidance_scale", s.guidance_scale);
  s.beta_min = take(j, "beta_min", s.beta_min);
  s.beta_max = take(j, "beta_max", s.beta_max);
  return s;
}

WorldConfig world_from_json(const json& j) {
  reject_unknown(j, {"frames", "feature_dim", "sigma_model", "w_mix"}, "world");
  WorldConfig w;
  w.frames = take(j, "frames", w.frames);
  w.feature_dim = take(j, "feature_dim", w.feature_dim);
  w.sigma_model = take(j, "sigma_model", w.sigma_model);
  w.w_mix = take(j, "w_mix", w.w_mix);
  return w;
}

}  // namespace

SweepConfig sweep_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep config must be a key-value object");
  reject_unknown(j,
                 {"mode", "grid", "backend", "suite", "suite_seed", "categories", "min_event_angle", "max_prompts",
                  "repeats", "base_seed", "sampler", "world", "out_dir", "workers", "turning_threshold",
                  "write_report"},
                 "sweep config");
  SweepConfig c;
  const std::string mode = take<std::string>(j, "mode", "step_switch");
  const auto parsed = parse_sweep_mode(mode);
  if (!parsed) throw ConfigError("unknown sweep mode '" + mode + "'");
  c.mode = *parsed;
  c.grid = take(j, "grid", c.grid);
  c.backend = take(j, "backend", c.backend);
  if (auto s = take<std::string>(j, "suite", ""); !s.empty()) c.suite_path = s;
  c.suite_seed = take(j, "suite_seed", c.suite_seed);
  for (const auto& name : take<std::vector<std::string>>(j, "categories", {})) {
    const auto cat = parse_category(name);
    if (!cat) throw ConfigError("unknown category '" + name + "'");
    c.categories.push_back(*cat);
  }
  if (j.contains("min_event_angle") && !j["min_event_angle"].is_null()) {
    c.min_event_angle = take(j, "min_event_angle", 0.0);
  }
  c.max_prompts = take(j, "max_prompts", c.max_prompts);
  c.repeats = take(j, "repeats", c.repeats);
  c.base_seed = take(j, "base_seed", c.base_seed);
  if (j.contains("sampler")) c.sampler = sampler_from_json(j["sampler"]);
  if (j.contains("world")) c.world = world_from_json(j["world"]);
  c.out_dir = take<std::string>(j, "out_dir", "");
  c.workers = take(j, "workers", c.workers);
  c.turning_threshold = take(j, "turning_threshold", c.turning_threshold);
  c.write_report = take(j, "write_report", c.write_report);
  c.validate();
  return c;
}

json to_json(const SweepConfig& c) {
  json cats = json::array();
  for (Category cat : c.categories) cats.push_back(std::string(to_string(cat)));
  json j = {{"mode", std::string(to_string(c.mode))},
            {"grid", c.grid},
            {"backend", c.backend},
            {"suite", c.suite_path ? c.suite_path->string() : ""},
            {"suite_seed", c.suite_seed},
            {"categories", cats},
            {"min_event_angle", c.min_event_angle ? json(*c.min_event_angle) : json(nullptr)},
            {"max_prompts", c.max_prompts},
            {"repeats", c.repeats},
            {"base_seed", c.base_seed},
            {"sampler",
             {{"n_steps", c.sampler.n_steps},
              {"kind", c.sampler.kind == SamplerKind::ancestral ? "ancestral" : "deterministic"},
              {"guidance_scale", c.sampler.guidance_scale},
              {"beta_min", c.sampler.beta_min},
              {"beta_max", c.sampler.beta_max}}},
            {"world",
             {{"frames", c.world.frames},
              {"feature_dim", c.world.feature_dim},
              {"sigma_model", c.world.sigma_model},
              {"w_mix", c.world.w_mix}}},
            {"out_dir", c.out_dir.string()},
            {"workers", c.workers},
            {"turning_threshold", c.turning_threshold},
            {"write_report", c.write_report}};
  return j;
}

std::uint64_t run_seed(std::uint64_t base_seed, std::string_view prompt_id, int x_index, int repeat_index,
                       int setting_index) {
  std::string key = std::to_string(base_seed);
  key += ':';
  key += prompt_id;
  key += ':' + std::to_string(x_index) + ':' + std::to_string(repeat_index) + ':' + std::to_string(setting_index);
  return fnv1a64(key);
}

std::vector<PromptRecord> select_prompts(const SweepConfig& cfg) {
  std::vector<PromptRecord> suite =
      cfg.suite_path ? read_suite(*cfg.suite_path) : generate_suite(cfg.suite_seed, cfg.world.feature_dim);
  std::vector<PromptRecord> out;
  for (auto& r : suite) {
    if (r.events.size() != 2) throw InputError("record " + r.id + " does not hold exactly two events");
    if (!cfg.categories.empty() &&
        std::find(cfg.categories.begin(), cfg.categories.end(), r.category) == cfg.categories.end()) {
      continue;
    }
    if (cfg.min_event_angle && event_angle(r) < *cfg.min_event_angle) continue;
    out.push_back(std::move(r));
    if (cfg.max_prompts > 0 && static_cast<int>(out.size()) == cfg.max_prompts) break;
  }
  return out;
}

SingleRun run_single(const PromptRecord& rec, SweepMode mode, double x, int setting, const DenoiserBackend& backend,
                     const SamplerConfig& sampler) {
  const ConditionEmbedding p1 = condition_of(rec, Which::event1);
  const ConditionEmbedding p2 = condition_of(rec, Which::event2);
  const int n = sampler.n_steps;
  Trajectory traj;
  switch (mode) {
    case SweepMode::step_switch:
      traj = sample(backend, step_switch(x, n, p1, p2), std::nullopt, sampler);
      break;
    case SweepMode::block_split: {
      const auto* model = dynamic_cast<const DenoiserModel*>(&backend);
      if (!model) throw UnsupportedError("block_split mode requires the neural backend");
      traj = sample(backend, StepSchedule::constant(n, p1), block_split(x, model->shape().n_blocks, p1, p2), sampler);
      break;
    }
    case SweepMode::qualitative: {
      if (setting < 1 || setting > 4) throw RangeError("qualitative setting must be 1-4");
      const auto settings = qualitative_settings(x, embed_event(rec.event1()), embed_event(rec.event2()), n);
      traj = sample(backend, settings[static_cast<std::size_t>(setting - 1)], std::nullopt, sampler);
      break;
    }
  }
  const Trajectory measured = rec.view == View::first ? to_third_view(traj, rec.event1(), rec.event2()) : traj;
  return {std::move(traj), compute_metrics(measured, rec.event1(), rec.event2())};
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s, const char* column) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InputError(std::string("runs.csv: bad number '") + s + "' in column " + column);
  }
  return v;
}

std::array<double, kMetricCount> metric_values(const MetricsRecord& m) {
  return {m.ta1,
          m.ta2,
          m.ta_mean,
          m.ic,
          m.bc,
          m.turning_frame ? static_cast<double>(*m.turning_frame) : std::numeric_limits<double>::quiet_NaN(),
          m.occupancy2};
}

}  // namespace

std::string runs_csv_row(const RunRecord& r) {
  const MetricsRecord& m = r.metrics;
  std::string row;
  row += csv_field(r.run_id) + ',' + std::string(to_string(r.mode)) + ',' + std::string(to_string(r.category)) + ',' +
         csv_field(r.prompt_id) + ',' + std::string(to_string(r.view)) + ',' + format_double(r.x) + ',' +
         std::to_string(r.setting) + ',' + std::to_string(r.seed) + ',';
  row += format_double(m.ta1) + ',' + format_double(m.ta2) + ',' + format_double(m.ta_mean) + ',' +
         format_double(m.ic) + ',' + format_double(m.bc) + ',' +
         (m.turning_frame ? std::to_string(*m.turning_frame) : std::string()) + ',' + format_double(m.occupancy2) +
         ',' + format_double(r.wall_time_ms);
  return row;
}

void write_runs_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kRunsHeader << '\n';
  for (const auto& r : records) out << runs_csv_row(r) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunsHeader) throw InputError(path.string() + ": unexpected header");
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 16) throw InputError(path.string() + ": row has " + std::to_string(f.size()) + " columns");
    RunRecord r;
    r.run_id = f[0];
    const auto mode = parse_sweep_mode(f[1]);
    const auto cat = parse_category(f[2]);
    const auto view = parse_view(f[4]);
    if (!mode || !cat || !view) throw InputError(path.string() + ": bad mode/category/view in row " + f[0]);
    r.mode = *mode;
    r.category = *cat;
    r.prompt_id = f[3];
    r.view = *view;
    r.x = parse_double(f[5], "x");
    r.setting = static_cast<int>(parse_double(f[6], "setting"));
    r.seed = std::stoull(f[7]);
    r.metrics.ta1 = parse_double(f[8], "ta1");
    r.metrics.ta2 = parse_double(f[9], "ta2");
    r.metrics.ta_mean = parse_double(f[10], "ta_mean");
    r.metrics.ic = parse_double(f[11], "ic");
    r.metrics.bc = parse_double(f[12], "bc");
    if (!f[13].empty()) r.metrics.turning_frame = static_cast<int>(parse_double(f[13], "turning_frame"));
    r.metrics.occupancy2 = parse_double(f[14], "occupancy2");
    r.wall_time_ms = parse_double(f[15], "wall_time_ms");
    if (std::isnan(r.metrics.ta_mean)) r.error = "failed run";
    out.push_back(std::move(r));
  }
  return out;
}

const MetricStat& AggregateRow::stat(std::string_view metric) const {
  for (std::size_t k = 0; k < kMetricCount; ++k) {
    if (metric == kMetricNames[k]) return stats[k];
  }
  throw ConfigError("unknown metric '" + std::string(metric) + "'");
}

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
  using Key = std::tuple<int, int, double, int>;
  std::map<Key, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    groups[{static_cast<int>(r.mode), static_cast<int>(r.category), r.x, r.setting}].push_back(&r);
  }
  std::vector<AggregateRow> rows;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [](const RunRecord* a, const RunRecord* b) {
      return std::tie(a->run_id, a->seed) < std::tie(b->run_id, b->seed);
    });
    AggregateRow row;
    row.mode = static_cast<SweepMode>(std::get<0>(key));
    row.category = static_cast<Category>(std::get<1>(key));
    row.x = std::get<2>(key);
    row.setting = std::get<3>(key);
    row.n = static_cast<int>(members.size());
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      double sum = 0.0;
      int n = 0;
      for (const auto* r : members) {
        const double v = metric_values(r->metrics)[k];
        if (std::isnan(v)) continue;
        sum += v;
        ++n;
      }
      MetricStat& s = row.stats[k];
      s.n = n;
      if (n == 0) {
        s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      s.mean = sum / n;
      double ss = 0.0;
      for (const auto* r : members) {
        const double v = metric_values(r->metrics)[k];
        if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
      }
      s.std = std::sqrt(ss / n);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_aggregates_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "mode,category,x,setting,n";
  for (const char* m : kMetricNames) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << to_string(r.category) << ',' << format_double(r.x) << ',' << r.setting << ','
        << r.n;
    for (const auto& s : r.stats) out << ',' << format_double(s.mean) << ',' << format_double(s.std);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

struct Task {
  std::size_t prompt;
  int x_index;
  int repeat;
  int setting;
};

// Keeps runs.csv in enumeration order while runs finish out of order.
class OrderedCsvSink {
 public:
  OrderedCsvSink(const std::filesystem::path& dir, std::size_t total) : done_(total, false) {
    runs_.open(dir / "runs.csv", std::ios::binary);
    errors_.open(dir / "errors.csv", std::ios::binary);
    if (!runs_ || !errors_) throw IoError("cannot write run files into " + dir.string());
    runs_ << kRunsHeader << '\n';
    errors_ << "run_id,error\n";
  }

  void complete(std::size_t index, const std::vector<RunRecord>& records) {
    std::lock_guard lock(mu_);
    done_[index] = true;
    while (next_ < done_.size() && done_[next_]) {
      const RunRecord& r = records[next_];
      runs_ << runs_csv_row(r) << '\n';
      if (!r.ok()) errors_ << csv_field(r.run_id) << ',' << csv_field(r.error) << '\n';
      ++next_;
    }
    runs_.flush();
  }

 private:
  std::mutex mu_;
  std::vector<bool> done_;
  std::size_t next_ = 0;
  std::ofstream runs_;
  std::ofstream errors_;
};

std::string make_run_id(SweepMode mode, const std::string& prompt, int xi, int ri, int si) {
  return std::string(to_string(mode)) + "-" + prompt + "-x" + std::to_string(xi) + "-r" + std::to_string(ri) + "-s" +
         std::to_string(si);
}

}  // namespace

std::vector<RunRecord> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::vector<PromptRecord> prompts = select_prompts(cfg);

  std::optional<DenoiserModel> neural;
  std::optional<AnalyticDenoiser> analytic_first, analytic_third;
  if (cfg.uses_analytic_backend()) {
    analytic_first.emplace(make_analytic_denoiser(cfg.world, View::first));
    analytic_third.emplace(make_analytic_denoiser(cfg.world, View::third));
  } else {
    if (!std::filesystem::exists(cfg.backend)) throw ConfigError("checkpoint not found: " + cfg.backend);
    neural.emplace(load_checkpoint(cfg.backend));
    if (neural->frames() != cfg.world.frames || neural->shape().slot_dim != cfg.world.slot_dim()) {
      throw ConfigError("checkpoint shape does not match the world config");
    }
  }
  auto backend_for = [&](View v) -> const DenoiserBackend& {
    if (neural) return *neural;
    return v == View::first ? *analytic_first : *analytic_third;
  };

  std::vector<Task> tasks;
  const int settings = cfg.mode == SweepMode::qualitative ? 4 : 1;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (int xi = 0; xi < static_cast<int>(cfg.grid.size()); ++xi) {
      for (int ri = 0; ri < cfg.repeats; ++ri) {
        for (int s = 0; s < settings; ++s) {
          tasks.push_back({p, xi, ri, cfg.mode == SweepMode::qualitative ? s + 1 : 0});
        }
      }
    }
  }

  std::vector<RunRecord> records(tasks.size());
  std::optional<OrderedCsvSink> sink;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    sink.emplace(cfg.out_dir, tasks.size());
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& task = tasks[i];
      const PromptRecord& rec = prompts[task.prompt];
      RunRecord& r = records[i];
      r.mode = cfg.mode;
      r.category = rec.category;
      r.prompt_id = rec.id;
      r.view = rec.view;
      r.x = cfg.grid[static_cast<std::size_t>(task.x_index)];
      r.setting = task.setting;
      r.run_id = make_run_id(cfg.mode, rec.id, task.x_index, task.repeat, task.setting);
      r.seed = run_seed(cfg.base_seed, rec.id, task.x_index, task.repeat, task.setting);
      const auto start = std::chrono::steady_clock::now();
      try {
        SamplerConfig sc = cfg.sampler;
        sc.seed = r.seed;
        r.metrics = run_single(rec, cfg.mode, r.x, task.setting, backend_for(rec.view), sc).metrics;
      } catch (const std::exception& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.metrics = MetricsRecord{nan, nan, nan, nan, nan, std::nullopt, nan};
        r.error = e.what();
      }
      r.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (sink) sink->complete(i, records);
    }
  };

  const int n_workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(tasks.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  if (!cfg.out_dir.empty()) {
    std::ofstream(cfg.out_dir / "config.json") << to_json(cfg).dump(2) << '\n';
    if (cfg.write_report) emit_report(aggregate(records), cfg.out_dir, cfg.turning_threshold);
  }
  return records;
}

}  // namespace turnpoint
