#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "turnpoint/errors.hpp"
#include "turnpoint/harness.hpp"
#include "turnpoint/neural.hpp"
#include "turnpoint/report.hpp"
#include "turnpoint/suite.hpp"
#include "turnpoint/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace turnpoint;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj) {
  std::string text = "frame";
  for (Eigen::Index f = 0; f < traj.cols(); ++f) text += ",f" + std::to_string(f);
  text += '\n';
  for (Eigen::Index t = 0; t < traj.rows(); ++t) {
    text += std::to_string(t);
    for (Eigen::Index f = 0; f < traj.cols(); ++f) text += ',' + format_double(traj(t, f));
    text += '\n';
  }
  write_text(path, text);
}

int cmd_suite_gen(std::uint64_t seed, int feature_dim, const fs::path& out, bool strict) {
  const auto records = generate_suite(seed, feature_dim);
  const auto violations = validate_suite(records, strict);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << v.record_id << ": " << v.message << '\n';
    throw InternalError("generated suite failed validation");
  }
  write_suite(out, records);
  std::cout << "wrote " << records.size() << " records to " << out.string() << '\n';
  return 0;
}

int cmd_suite_validate(const fs::path& file, bool strict) {
  const auto violations = validate_suite_file(file, strict);
  for (const auto& v : violations) {
    std::cout << (v.record_id.empty() ? "<suite>" : v.record_id) << ": " << v.message << '\n';
  }
  if (violations.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  std::cout << violations.size() << " violation(s)\n";
  return 2;
}

int cmd_train(const fs::path& config, const fs::path& out) {
  const TrainJob job = train_job_from_json(read_json_file(config));
  const NoiseSchedule sched = job.schedule();
  std::cout << "training D=" << job.shape.latent_dim << " H=" << job.shape.hidden << " B=" << job.shape.n_blocks
            << " for " << job.train.steps << " steps\n";
  const auto start = std::chrono::steady_clock::now();
  TrainResult result = train(DenoiserModel::create(job.shape, job.train.seed), job.data(), job.train, sched);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& p : result.trace) std::cout << "step " << p.step << " loss " << format_double(p.loss) << '\n';
  save_checkpoint(result.model, out);
  std::printf("saved %s after %.1f s\n", out.string().c_str(), secs);
  return 0;
}

struct SampleArgs {
  std::string prompt_id;
  fs::path suite;
  std::string mode = "step";
  double x = 0.0;
  std::string backend = "analytic";
  std::uint64_t seed = 0;
  fs::path out;
  int n_steps = 100;
  std::string sampler = "ancestral";
  double guidance = 1.0;
  WorldConfig world;
};

int cmd_sample(const SampleArgs& a) {
  const auto records = read_suite(a.suite);
  const PromptRecord& rec = find_record(records, a.prompt_id);
  const auto mode = parse_sweep_mode(a.mode);
  if (!mode || *mode == SweepMode::qualitative) throw ConfigError("mode must be step or block");
  if (!(a.x >= 0.0 && a.x <= 1.0)) throw RangeError("x must lie in [0, 1]");

  SamplerConfig sc;
  sc.n_steps = a.n_steps;
  sc.seed = a.seed;
  sc.guidance_scale = a.guidance;
  if (a.sampler == "deterministic") {
    sc.kind = SamplerKind::deterministic;
  } else if (a.sampler != "ancestral") {
    throw ConfigError("sampler must be ancestral or deterministic");
  }

  std::optional<DenoiserModel> neural;
  std::optional<AnalyticDenoiser> analytic;
  const DenoiserBackend* backend = nullptr;
  if (a.backend == "analytic") {
    if (*mode == SweepMode::block_split) throw ConfigError("block mode requires a checkpoint backend");
    analytic.emplace(make_analytic_denoiser(a.world, rec.view));
    backend = &*analytic;
  } else {
    if (!fs::exists(a.backend)) throw ConfigError("checkpoint not found: " + a.backend);
    neural.emplace(load_checkpoint(a.backend));
    backend = &*neural;
  }

  const SingleRun run = run_single(rec, *mode, a.x, 0, *backend, sc);
  fs::create_directories(a.out);
  write_trajectory_csv(a.out / "trajectory.csv", run.trajectory);
  write_text(a.out / "metrics.json", to_json(run.metrics).dump(2) + "\n");

  const ConditionEmbedding p1 = condition_of(rec, Which::event1);
  const ConditionEmbedding p2 = condition_of(rec, Which::event2);
  json schedule;
  if (*mode == SweepMode::step_switch) {
    schedule = to_json(step_switch(a.x, a.n_steps, p1, p2));
  } else {
    schedule = to_json(block_split(a.x, neural->shape().n_blocks, p1, p2));
  }
  write_text(a.out / "schedule.json", schedule.dump(2) + "\n");
  std::cout << to_json(run.metrics).dump() << '\n';
  return 0;
}

struct SweepOverrides {
  std::optional<std::string> mode, backend, suite;
  std::optional<int> repeats, workers, max_prompts, n_steps;
  std::optional<std::uint64_t> base_seed, suite_seed;
  std::optional<fs::path> out;
  std::vector<std::string> categories;
  std::optional<double> min_angle_deg;
};

int cmd_sweep(const fs::path& config, const SweepOverrides& o) {
  json j = read_json_file(config);
  if (!j.is_object()) throw ConfigError("sweep config must be a key-value object");
  if (o.mode) j["mode"] = *o.mode;
  if (o.backend) j["backend"] = *o.backend;
  if (o.suite) j["suite"] = *o.suite;
  if (o.suite_seed) j["suite_seed"] = *o.suite_seed;
  if (o.repeats) j["repeats"] = *o.repeats;
  if (o.workers) j["workers"] = *o.workers;
  if (o.max_prompts) j["max_prompts"] = *o.max_prompts;
  if (o.base_seed) j["base_seed"] = *o.base_seed;
  if (o.out) j["out_dir"] = o.out->string();
  if (!o.categories.empty()) j["categories"] = o.categories;
  if (o.min_angle_deg) j["min_event_angle"] = *o.min_angle_deg * M_PI / 180.0;
  if (o.n_steps) j["sampler"]["n_steps"] = *o.n_steps;
  SweepConfig cfg = sweep_config_from_json(j);
  if (const char* env = std::getenv("TURNPOINT_WORKERS"); env && *env && !o.workers) {
    try {
      cfg.workers = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError("TURNPOINT_WORKERS must be an integer");
    }
    cfg.validate();
  }
  if (cfg.out_dir.empty()) throw ConfigError("sweep needs an output directory (out_dir or --out)");

  const auto start = std::chrono::steady_clock::now();
  const auto records = run_sweep(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.ok() ? 0 : 1;
  std::printf("%zu runs (%zu failed) in %.1f s -> %s\n", records.size(), failed, secs, cfg.out_dir.string().c_str());
  return 0;
}

int cmd_report(const fs::path& runs, const fs::path& out, double threshold) {
  const auto records = read_runs_csv(runs);
  emit_report(aggregate(records), out, threshold);
  std::cout << "report written to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy dual-event diffusion: conditioning-switch sweeps and metrics"};
  app.require_subcommand(1);

  auto* suite = app.add_subcommand("suite", "Generate or validate a prompt suite");
  suite->require_subcommand(1);
  std::uint64_t gen_seed = 0;
  int gen_d = 2;
  fs::path gen_out;
  bool gen_strict = false;
  auto* gen = suite->add_subcommand("gen", "Generate the synthetic suite as JSONL");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--feature-dim", gen_d, "Identity/background width")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output file")->required();
  gen->add_flag("--strict-table1", gen_strict, "Require the reference category counts");

  fs::path val_file;
  bool val_strict = false;
  auto* val = suite->add_subcommand("validate", "Validate a suite file");
  val->add_option("file", val_file, "Suite JSONL file")->required();
  val->add_flag("--strict-table1", val_strict, "Require the reference category counts");

  fs::path train_config, train_out;
  auto* train_cmd = app.add_subcommand("train", "Train the neural denoiser");
  train_cmd->add_option("--config", train_config, "Training config (JSON)")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Generate one trajectory for a prompt");
  sample_cmd->add_option("--prompt-id", sa.prompt_id)->required();
  sample_cmd->add_option("--suite", sa.suite)->required();
  sample_cmd->add_option("--mode", sa.mode, "step or block")->check(CLI::IsMember({"step", "block"}));
  sample_cmd->add_option("--x", sa.x, "Switch fraction in [0, 1]");
  sample_cmd->add_option("--backend", sa.backend, "analytic or a checkpoint path");
  sample_cmd->add_option("--seed", sa.seed);
  sample_cmd->add_option("--out", sa.out, "Output directory")->required();
  sample_cmd->add_option("--n-steps", sa.n_steps, "Denoising steps")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--sampler", sa.sampler, "ancestral or deterministic");
  sample_cmd->add_option("--guidance", sa.guidance, "Classifier-free guidance scale");
  sample_cmd->add_option("--sigma-model", sa.world.sigma_model, "Analytic backend data std");

  fs::path sweep_config;
  SweepOverrides so;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep_cmd->add_option("--config", sweep_config, "Sweep config (JSON)")->required();
  sweep_cmd->add_option("--mode", so.mode, "step_switch, block_split or qualitative");
  sweep_cmd->add_option("--backend", so.backend, "analytic or a checkpoint path");
  sweep_cmd->add_option("--suite", so.suite, "Suite JSONL file");
  sweep_cmd->add_option("--suite-seed", so.suite_seed, "Seed of the generated suite when no file is given");
  sweep_cmd->add_option("--repeats", so.repeats);
  sweep_cmd->add_option("--workers", so.workers);
  sweep_cmd->add_option("--max-prompts", so.max_prompts);
  sweep_cmd->add_option("--base-seed", so.base_seed);
  sweep_cmd->add_option("--n-steps", so.n_steps);
  sweep_cmd->add_option("--category", so.categories, "Category filter (repeatable)");
  sweep_cmd->add_option("--min-angle-deg", so.min_angle_deg, "Minimum angle between event directions");
  sweep_cmd->add_option("--out", so.out, "Output directory");

  fs::path report_runs, report_out;
  double report_threshold = 0.9;
  auto* report_cmd = app.add_subcommand("report", "Aggregate runs.csv into tables and charts");
  report_cmd->add_option("--runs", report_runs)->required();
  report_cmd->add_option("--out", report_out)->required();
  report_cmd->add_option("--threshold", report_threshold, "Turning-point fraction of max mean ta2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_suite_gen(gen_seed, gen_d, gen_out, gen_strict);
    if (val->parsed()) return cmd_suite_validate(val_file, val_strict);
    if (train_cmd->parsed()) return cmd_train(train_config, train_out);
    if (sample_cmd->parsed()) return cmd_sample(sa);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_config, so);
    if (report_cmd->parsed()) return cmd_report(report_runs, report_out, report_threshold);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
