// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "turnpoint/analytic.hpp"
#include "turnpoint/harness.hpp"
#include "turnpoint/neural.hpp"
#include "turnpoint/suite.hpp"
#include "turnpoint/training.hpp"

using namespace turnpoint;

namespace {

// Pinned tolerances and workloads.
constexpr int kEndpointPrompts = 20;
constexpr int kEndpointSteps = 50;
constexpr int kBlockInputs = 100;
constexpr int kScoreTriples = 200;
constexpr double kScoreRelTol = 1e-5;
constexpr double kScoreStep = 1e-4;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-3;
constexpr int kTrendPrompts = 50;
constexpr int kTrendRepeats = 4;
constexpr int kTrendSteps = 100;
constexpr double kTrendSpearmanMax = -0.9;
constexpr double kTrendDropMin = 0.3;
constexpr int kFidelitySteps = 500;
constexpr int kFidelitySamples = 10000;
constexpr double kFidelityMeanTol = 0.05;
constexpr double kFidelityVarRelTol = 0.10;
constexpr double kTrainRatioMax = 1.1;
constexpr int kTrainSteps = 20000;
constexpr int kHeldOut = 4000;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Every 17th third-view record, which spreads the picks over all categories.
std::vector<PromptRecord> third_view_prompts(std::uint64_t seed, int n) {
  std::vector<PromptRecord> spread;
  const auto all = generate_suite(seed);
  for (std::size_t i = 0; spread.size() < static_cast<std::size_t>(n); i += 17) {
    const auto& r = all[i % all.size()];
    if (r.view == View::third) spread.push_back(r);
  }
  return spread;
}

Outcome endpoint_rq1() {
  const auto prompts = third_view_prompts(101, kEndpointPrompts);
  const WorldConfig world;
  const auto analytic = make_analytic_denoiser(world, View::third);
  const auto neural = support::random_model(ModelShape{}, 77, 0.05);
  Rng seeds(5);
  int checked = 0, mismatched = 0;
  for (const auto& rec : prompts) {
    SamplerConfig sc;
    sc.n_steps = kEndpointSteps;
    sc.seed = seeds.next_u64();
    const auto p1 = condition_of(rec, Which::event1);
    const auto p2 = condition_of(rec, Which::event2);
    for (const DenoiserBackend* b : {static_cast<const DenoiserBackend*>(&analytic),
                                     static_cast<const DenoiserBackend*>(&neural)}) {
      const Trajectory s0 = sample(*b, step_switch(0.0, sc.n_steps, p1, p2), std::nullopt, sc);
      const Trajectory c2 = sample(*b, StepSchedule::constant(sc.n_steps, p2), std::nullopt, sc);
      const Trajectory s1 = sample(*b, step_switch(1.0, sc.n_steps, p1, p2), std::nullopt, sc);
      const Trajectory c1 = sample(*b, StepSchedule::constant(sc.n_steps, p1), std::nullopt, sc);
      mismatched += (s0 != c2) + (s1 != c1);
      checked += 2;
    }
  }
  return {mismatched == 0, std::to_string(checked - mismatched) + "/" + std::to_string(checked) +
                               " endpoint samples bit-identical (analytic + neural)"};
}

Outcome endpoint_rq2() {
  const auto model = support::random_model(ModelShape{}, 78, 0.05);
  Rng rng(6);
  int mismatched = 0;
  for (int i = 0; i < kBlockInputs; ++i) {
    const Eigen::VectorXd z = rng.normal_vector(96);
    const int t = static_cast<int>(rng.below(100));
    const auto p1 = support::random_condition(rng), p2 = support::random_condition(rng);
    const int n = model.shape().n_blocks;
    mismatched += model.forward(z, t, block_split(0.0, n, p1, p2)) != model.forward(z, t, uniform_assignment(n, p2));
    mismatched += model.forward(z, t, block_split(1.0, n, p1, p2)) != model.forward(z, t, uniform_assignment(n, p1));
  }
  return {mismatched == 0, std::to_string(2 * kBlockInputs - mismatched) + "/" + std::to_string(2 * kBlockInputs) +
                               " block-split forwards bit-identical"};
}

Outcome switch_tables() {
  const std::vector<int> k_expected = {0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  const std::vector<int> b_expected = {0, 0, 1, 2, 3, 4, 4, 5, 6, 7, 8};
  const auto a = ConditionEmbedding::null(), c = compose_single(Eigen::VectorXd::Ones(7));
  std::vector<int> k, b;
  bool ok = true;
  for (int g = 0; g <= 10; ++g) {
    const double x = default_grid()[static_cast<std::size_t>(g)];
    k.push_back(*step_switch(x, 50, a, c).switch_index());
    b.push_back(block_split(x, 8, a, c).split_index);
    ok = ok && k.back() == oracle::grid_floor(g, 10, 50) && b.back() == oracle::grid_floor(g, 10, 8);
  }
  ok = ok && k == k_expected && b == b_expected;
  std::string detail = "k =";
  for (int v : k) detail += " " + std::to_string(v);
  detail += "; b =";
  for (int v : b) detail += " " + std::to_string(v);
  return {ok, detail};
}

Outcome score_oracle() {
  const auto sched = build_schedule(100);
  Rng rng(2025);
  double worst = 0.0;
  for (int trial = 0; trial < kScoreTriples; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(8));
    const int k = 1 + static_cast<int>(rng.below(3));
    std::vector<double> w;
    std::vector<Eigen::VectorXd> mean, var;
    GaussianMixture m;
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      GaussianMixture::Component comp;
      comp.weight = rng.uniform(0.2, 1.0);
      total += comp.weight;
      comp.mean = 1.5 * rng.normal_vector(d);
      comp.var.resize(d);
      for (Eigen::Index j = 0; j < d; ++j) comp.var[j] = rng.uniform(0.05, 1.5);
      m.components.push_back(comp);
    }
    for (auto& comp : m.components) comp.weight /= total;
    const int t = static_cast<int>(rng.below(100));
    const double ab = sched.alpha_bar()[t];
    for (const auto& comp : m.components) {
      w.push_back(comp.weight);
      mean.push_back(std::sqrt(ab) * comp.mean);
      var.push_back((ab * comp.var.array() + (1.0 - ab)).matrix());
    }
    const Eigen::VectorXd z = rng.normal_vector(d);
    const Eigen::VectorXd grad = oracle::numerical_gradient(
        [&](const Eigen::VectorXd& y) { return oracle::mixture_log_density(y, w, mean, var); }, z, kScoreStep);
    const Eigen::VectorXd expect = -std::sqrt(1.0 - ab) * grad;
    const Eigen::VectorXd got = predict_eps(z, t, m, sched);
    worst = std::max(worst, (got - expect).norm() / std::max(expect.norm(), 1e-12));
  }
  return {worst < kScoreRelTol, "max relative error " + fmt("%.3g", worst) + " over " +
                                    std::to_string(kScoreTriples) + " triples (tol " + fmt("%.0e", kScoreRelTol) + ")"};
}

Outcome gradient_check() {
  ModelShape shape;
  shape.latent_dim = 6;
  shape.hidden = 8;
  shape.n_blocks = 2;
  shape.time_dim = 4;
  const auto sched = build_schedule(50);
  const auto model = support::random_model(shape, 12);
  Rng rng(13);
  std::vector<TrainingExample> batch;
  for (int i = 0; i < 8; ++i) {
    TrainingExample ex;
    ex.z0 = rng.normal_vector(6);
    ex.eps = rng.normal_vector(6);
    ex.t = static_cast<int>(rng.below(50));
    ex.assign.n_blocks = 2;
    for (int j = 0; j < 2; ++j) ex.assign.per_block.push_back(support::random_condition(rng));
    batch.push_back(ex);
  }
  const auto analytic = loss_and_grads(model, batch, sched);
  std::vector<std::vector<double>> grads;
  analytic.grads.for_each(
      [&](const std::string&, std::span<const double> s) { grads.emplace_back(s.begin(), s.end()); });

  DenoiserParams probe = model.params();
  std::size_t tensor = 0;
  double worst = 0.0;
  std::string worst_name;
  probe.for_each([&](const std::string& name, std::span<double> s) {
    double diff2 = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double keep = s[i];
      s[i] = keep + kGradStep;
      const double up = loss_and_grads(DenoiserModel(shape, probe), batch, sched).loss;
      s[i] = keep - kGradStep;
      const double down = loss_and_grads(DenoiserModel(shape, probe), batch, sched).loss;
      s[i] = keep;
      const double num = (up - down) / (2.0 * kGradStep);
      const double ana = grads[tensor][i];
      diff2 += (num - ana) * (num - ana);
      na += ana * ana;
      nn += num * num;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    if (rel >= worst) {
      worst = rel;
      worst_name = name;
    }
    ++tensor;
  });
  return {worst < kGradRelTol, std::to_string(tensor) + " tensors, worst relative error " + fmt("%.3g", worst) +
                                   " (" + worst_name + ")"};
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Outcome event2_trend() {
  SweepConfig cfg;
  cfg.categories = {Category::General};
  cfg.min_event_angle = M_PI / 2;
  cfg.max_prompts = kTrendPrompts;
  cfg.repeats = kTrendRepeats;
  cfg.sampler.n_steps = kTrendSteps;
  cfg.base_seed = 2024;
  cfg.write_report = false;
  const auto prompts = select_prompts(cfg);
  const auto records = run_sweep(cfg);
  std::map<double, std::pair<double, int>> by_x;
  for (const auto& r : records) {
    auto& [sum, n] = by_x[r.x];
    sum += r.metrics.ta2;
    ++n;
  }
  std::vector<double> xs, ta2;
  for (const auto& [x, acc] : by_x) {
    xs.push_back(x);
    ta2.push_back(acc.first / acc.second);
  }
  const double rho = spearman(xs, ta2);
  const double drop = ta2.front() - ta2.back();
  std::string curve;
  for (double v : ta2) curve += fmt(" %.3f", v);
  const bool ok = static_cast<int>(prompts.size()) == kTrendPrompts && rho <= kTrendSpearmanMax && drop >= kTrendDropMin;
  return {ok, std::to_string(prompts.size()) + " prompts; spearman " + fmt("%.3f", rho) + ", ta2(0)-ta2(1) " +
                  fmt("%.3f", drop) + "; mean ta2:" + curve};
}

Outcome sampling_fidelity() {
  const WorldConfig world;
  const auto rec = generate_suite(9).front();
  const auto cond = condition_of(rec, Which::event1);
  const auto target = gaussian_of(rec, Which::event1, world);
  const auto backend = make_analytic_denoiser(world, View::third);
  const auto schedule = StepSchedule::constant(kFidelitySteps, cond);
  const Eigen::Index d = world.latent_dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sum2 = Eigen::VectorXd::Zero(d);
  SamplerConfig sc;
  sc.n_steps = kFidelitySteps;
  for (int i = 0; i < kFidelitySamples; ++i) {
    sc.seed = static_cast<std::uint64_t>(i) + 1;
    const Eigen::VectorXd z = flatten(sample(backend, schedule, std::nullopt, sc));
    sum += z;
    sum2 += z.cwiseProduct(z);
  }
  const Eigen::VectorXd mean = sum / kFidelitySamples;
  const Eigen::VectorXd var = sum2 / kFidelitySamples - mean.cwiseProduct(mean);
  const auto& comp = target.components.front();
  const double mean_err = (mean - comp.mean).cwiseAbs().maxCoeff();
  const double var_err = ((var - comp.var).array() / comp.var.array()).abs().maxCoeff();
  return {mean_err <= kFidelityMeanTol && var_err <= kFidelityVarRelTol,
          "max |mean error| " + fmt("%.4f", mean_err) + ", max relative variance error " + fmt("%.2f%%", 100 * var_err)};
}

Outcome training_sanity() {
  const WorldConfig world;
  const EventParams event{0.7, 1.0, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  const auto data = fixed_event_sampler(event, world);
  const auto sched = build_schedule(100);
  ModelShape shape;
  TrainConfig tc;
  tc.steps = kTrainSteps;
  tc.seed = 3;
  tc.log_every = 1000;
  const auto result = train(DenoiserModel::create(shape, tc.seed), data, tc, sched);
  const auto held_out = make_examples(data, kHeldOut, shape.n_blocks, sched, 4242);
  const double neural = denoising_mse(result.model, held_out, sched);
  const double oracle = denoising_mse(make_analytic_denoiser(world, View::third), held_out, sched);
  const double ratio = neural / oracle;
  return {ratio <= kTrainRatioMax, "held-out MSE neural " + fmt("%.4f", neural) + " vs analytic " + fmt("%.4f", oracle) +
                                       " (ratio " + fmt("%.3f", ratio) + ", " + std::to_string(kTrainSteps) +
                                       " steps, H=" + std::to_string(shape.hidden) + ", B=" +
                                       std::to_string(shape.n_blocks) + ")"};
}

Outcome suite_fidelity() {
  const auto dir = support::scratch_dir("acceptance_suite");
  write_suite(dir / "suite.jsonl", generate_suite(0));
  const auto suite = read_suite(dir / "suite.jsonl");
  std::map<Category, int> counts;
  for (const auto& r : suite) ++counts[r.category];
  std::map<std::string, std::vector<const PromptRecord*>> pairs;
  for (const auto& r : suite) {
    if (r.pair_id) pairs[*r.pair_id].push_back(&r);
  }
  bool pairing = pairs.size() == 50;
  for (const auto& [id, m] : pairs) {
    pairing = pairing && m.size() == 2 && m[0]->events == m[1]->events && m[0]->view != m[1]->view;
  }
  const auto violations = validate_suite_file(dir / "suite.jsonl", true);
  int expected_total = 0;
  bool counts_ok = true;
  for (const auto& [cat, n] : table1_counts()) {
    expected_total += n;
    counts_ok = counts_ok && counts[cat] == n;
  }
  const std::vector<int> want = {60, 98, 32, 60, 100};
  std::vector<int> got;
  for (Category c : kAllCategories) got.push_back(counts[c]);
  counts_ok = counts_ok && got == want && static_cast<int>(suite.size()) == expected_total;
  std::string detail = "counts";
  for (int v : got) detail += " " + std::to_string(v);
  detail += ", total " + std::to_string(suite.size()) + ", " + std::to_string(violations.size()) +
            " violations, pairing " + (pairing ? "ok" : "broken") +
            " (the per-category counts sum to 350, not the 310 stated alongside them)";
  return {counts_ok && violations.empty() && pairing, detail};
}

std::string strip_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  SweepConfig cfg;
  cfg.max_prompts = 12;
  cfg.repeats = 2;
  cfg.sampler.n_steps = 50;
  cfg.base_seed = 31;
  cfg.workers = 2;
  cfg.out_dir = support::scratch_dir("acceptance_det_a");
  run_sweep(cfg);
  cfg.out_dir = support::scratch_dir("acceptance_det_b");
  run_sweep(cfg);
  const auto root = std::filesystem::path(TURNPOINT_TEST_TMP);
  const std::string ra = slurp(root / "acceptance_det_a" / "runs.csv");
  const std::string rb = slurp(root / "acceptance_det_b" / "runs.csv");
  const std::string header = ra.substr(0, ra.find('\n'));
  const bool header_ok =
      header ==
      "run_id,mode,category,prompt_id,view,x,setting,seed,ta1,ta2,ta_mean,ic,bc,turning_frame,occupancy2,wall_time_ms";
  const bool same = !ra.empty() && strip_timing(ra) == strip_timing(rb);
  const auto rows = std::count(ra.begin(), ra.end(), '\n') - 1;
  return {header_ok && same, std::to_string(rows) + " rows; timing-stripped runs.csv " +
                                 (same ? "identical" : "differs") + "; header " + (header_ok ? "exact" : "wrong")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"endpoint equivalence, step switch", endpoint_rq1},
      {"endpoint equivalence, block split", endpoint_rq2},
      {"switch-index and block-split tables", switch_tables},
      {"analytic score oracle", score_oracle},
      {"gradient exactness", gradient_check},
      {"monotone event-2 exposure", event2_trend},
      {"sampling fidelity", sampling_fidelity},
      {"training sanity", training_sanity},
      {"suite fidelity", suite_fidelity},
      {"determinism and schema", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
