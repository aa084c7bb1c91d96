#include "turnpoint/neural.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "turnpoint/errors.hpp"

namespace turnpoint {

void ModelShape::validate() const {
  if (latent_dim < 1 || hidden < 1 || n_blocks < 1) throw ConfigError("model dimensions must be positive");
  if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("time embedding width must be even and >= 2");
  if (slot_dim < 5 || (slot_dim - 3) % 2 != 0) throw ConfigError("slot width must be 3 + 2d with d >= 1");
  if (latent_dim % features() != 0) throw ConfigError("latent dimension is not a whole number of frames");
}

DenoiserParams DenoiserParams::zeros(const ModelShape& shape) {
  DenoiserParams p;
  p.w_in = Eigen::MatrixXd::Zero(shape.hidden, shape.latent_dim);
  p.b_in = Eigen::VectorXd::Zero(shape.hidden);
  p.blocks.resize(static_cast<std::size_t>(shape.n_blocks));
  for (auto& b : p.blocks) {
    b.w1 = Eigen::MatrixXd::Zero(shape.hidden, shape.block_input_dim());
    b.b1 = Eigen::VectorXd::Zero(shape.hidden);
    b.w2 = Eigen::MatrixXd::Zero(shape.hidden, shape.hidden);
    b.b2 = Eigen::VectorXd::Zero(shape.hidden);
  }
  p.w_out = Eigen::MatrixXd::Zero(shape.latent_dim, shape.hidden);
  p.b_out = Eigen::VectorXd::Zero(shape.latent_dim);
  return p;
}

std::size_t DenoiserParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, std::span<const double> s) { n += s.size(); });
  return n;
}

bool DenoiserParams::all_finite() const {
  bool ok = true;
  for_each([&ok](const std::string&, std::span<const double> s) {
    for (double v : s) ok = ok && std::isfinite(v);
  });
  return ok;
}

Eigen::VectorXd timestep_embedding(int t, Eigen::Index dim) {
  Eigen::VectorXd e(dim);
  const Eigen::Index half = dim / 2;
  for (Eigen::Index k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    e[2 * k] = std::sin(t * freq);
    e[2 * k + 1] = std::cos(t * freq);
  }
  return e;
}

DenoiserModel DenoiserModel::create(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  DenoiserParams p = DenoiserParams::zeros(shape);
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  };
  fill(p.w_in, 1.0 / std::sqrt(static_cast<double>(shape.latent_dim)));
  for (auto& b : p.blocks) {
    fill(b.w1, 1.0 / std::sqrt(static_cast<double>(shape.block_input_dim())));
    // Small residual branches keep the initial stack close to identity.
    fill(b.w2, 0.1 / std::sqrt(static_cast<double>(shape.hidden)));
  }
  return DenoiserModel(shape, std::move(p));
}

DenoiserModel::DenoiserModel(ModelShape shape, DenoiserParams params)
    : shape_(shape), params_(std::move(params)) {
  shape_.validate();
  if (params_.blocks.size() != static_cast<std::size_t>(shape_.n_blocks)) {
    throw ConfigError("parameter block count does not match the model shape");
  }
  if (!params_.all_finite()) throw ConfigError("model parameters must be finite");
}

namespace {

Eigen::MatrixXd time_matrix(std::span<const int> t, Eigen::Index dim) {
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = timestep_embedding(t[i], dim);
  return m;
}

// Activations kept for the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;  // block inputs [h_j; temb; c_j]
  std::vector<Eigen::MatrixXd> gates;   // tanh outputs
  Eigen::MatrixXd h_last;
  Eigen::MatrixXd out;
};

void check_batch(const ModelShape& shape, const Eigen::MatrixXd& z, std::span<const int> t,
                 std::span<const Eigen::MatrixXd> block_cond) {
  if (z.rows() != shape.latent_dim) throw ShapeError("latent dimension does not match the model");
  if (static_cast<Eigen::Index>(t.size()) != z.cols()) throw ShapeError("one timestep per example required");
  if (block_cond.size() != static_cast<std::size_t>(shape.n_blocks)) {
    throw ConfigError("block assignment covers " + std::to_string(block_cond.size()) + " blocks, model has " +
                      std::to_string(shape.n_blocks));
  }
  for (const auto& c : block_cond) {
    if (c.rows() != shape.cond_dim() || c.cols() != z.cols()) throw ShapeError("condition batch has the wrong shape");
  }
}

ForwardTrace run_forward(const ModelShape& shape, const DenoiserParams& p, const Eigen::MatrixXd& z,
                         std::span<const int> t, std::span<const Eigen::MatrixXd> block_cond, bool keep) {
  check_batch(shape, z, t, block_cond);
  const Eigen::Index n = z.cols();
  const Eigen::Index hdim = shape.hidden;
  const Eigen::Index tdim = shape.time_dim;
  const Eigen::MatrixXd temb = time_matrix(t, tdim);

  ForwardTrace tr;
  Eigen::MatrixXd h = (p.w_in * z).colwise() + p.b_in;
  Eigen::MatrixXd u(shape.block_input_dim(), n);
  u.middleRows(hdim, tdim) = temb;
  for (int j = 0; j < shape.n_blocks; ++j) {
    const auto& b = p.blocks[static_cast<std::size_t>(j)];
    u.topRows(hdim) = h;
    u.bottomRows(shape.cond_dim()) = block_cond[static_cast<std::size_t>(j)];
    Eigen::MatrixXd g = ((b.w1 * u).colwise() + b.b1).array().tanh().matrix();
    h += (b.w2 * g).colwise() + b.b2;
    if (keep) {
      tr.inputs.push_back(u);
      tr.gates.push_back(std::move(g));
    }
  }
  tr.out = (p.w_out * h).colwise() + p.b_out;
  if (keep) tr.h_last = std::move(h);
  return tr;
}

std::vector<Eigen::MatrixXd> condition_batch(const ModelShape& shape, std::span<const TrainingExample> batch) {
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  std::vector<Eigen::MatrixXd> cond(static_cast<std::size_t>(shape.n_blocks), Eigen::MatrixXd(shape.cond_dim(), n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& assign = batch[static_cast<std::size_t>(i)].assign;
    if (assign.n_blocks != shape.n_blocks || assign.per_block.size() != static_cast<std::size_t>(shape.n_blocks)) {
      throw ConfigError("block assignment does not match the model's block count");
    }
    for (int j = 0; j < shape.n_blocks; ++j) {
      const auto& c = assign.per_block[static_cast<std::size_t>(j)];
      if (c.dim() != shape.cond_dim()) throw ShapeError("condition width does not match the model");
      c.write_to(cond[static_cast<std::size_t>(j)].col(i));
    }
  }
  return cond;
}

std::vector<Eigen::MatrixXd> assignment_columns(const ModelShape& shape, const BlockAssignment& assign) {
  if (assign.n_blocks != shape.n_blocks || assign.per_block.size() != static_cast<std::size_t>(shape.n_blocks)) {
    throw ConfigError("block assignment covers " + std::to_string(assign.n_blocks) + " blocks, model has " +
                      std::to_string(shape.n_blocks));
  }
  std::vector<Eigen::MatrixXd> cond;
  cond.reserve(assign.per_block.size());
  for (const auto& c : assign.per_block) {
    if (c.dim() != shape.cond_dim()) throw ShapeError("condition width does not match the model");
    cond.push_back(c.vector());
  }
  return cond;
}

}  // namespace

Eigen::MatrixXd DenoiserModel::forward_batch(const Eigen::MatrixXd& z_t, std::span<const int> t,
                                             std::span<const Eigen::MatrixXd> block_cond) const {
  return run_forward(shape_, params_, z_t, t, block_cond, false).out;
}

Eigen::VectorXd DenoiserModel::forward(const Eigen::VectorXd& z_t, int t, const BlockAssignment& assign) const {
  const std::vector<Eigen::MatrixXd> cond = assignment_columns(shape_, assign);
  const std::array<int, 1> ts{t};
  return run_forward(shape_, params_, z_t, ts, cond, false).out.col(0);
}

Eigen::VectorXd DenoiserModel::predict_eps(const Eigen::VectorXd& z, int t, const ConditionEmbedding& cond,
                                           const NoiseSchedule& sched) const {
  sched.check_step(t);
  return forward(z, t, uniform_assignment(shape_.n_blocks, cond));
}

Eigen::VectorXd DenoiserModel::predict_eps(const Eigen::VectorXd& z, int t, const BlockAssignment& assign,
                                           const NoiseSchedule& sched) const {
  sched.check_step(t);
  return forward(z, t, assign);
}

LossAndGrads loss_and_grads(const DenoiserModel& model, std::span<const TrainingExample> batch,
                            const NoiseSchedule& sched) {
  if (batch.empty()) throw ConfigError("loss needs a non-empty batch");
  const ModelShape& shape = model.shape();
  const DenoiserParams& p = model.params();
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index dim = shape.latent_dim;

  Eigen::MatrixXd z(dim, n);
  Eigen::MatrixXd eps(dim, n);
  std::vector<int> ts(batch.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = batch[static_cast<std::size_t>(i)];
    if (ex.z0.size() != dim || ex.eps.size() != dim) throw ShapeError("training example has the wrong dimension");
    z.col(i) = forward_noise(ex.z0, ex.t, ex.eps, sched);
    eps.col(i) = ex.eps;
    ts[static_cast<std::size_t>(i)] = ex.t;
  }
  const std::vector<Eigen::MatrixXd> cond = condition_batch(shape, batch);
  const ForwardTrace tr = run_forward(shape, p, z, ts, cond, true);

  const Eigen::MatrixXd resid = tr.out - eps;
  LossAndGrads out;
  out.loss = resid.squaredNorm() / static_cast<double>(n * dim);
  if (!std::isfinite(out.loss)) throw TrainingError("loss is not finite");

  DenoiserParams& g = out.grads;
  g = DenoiserParams::zeros(shape);
  const Eigen::MatrixXd d_out = resid * (2.0 / static_cast<double>(n * dim));
  g.w_out.noalias() = d_out * tr.h_last.transpose();
  g.b_out = d_out.rowwise().sum();
  Eigen::MatrixXd d_h = p.w_out.transpose() * d_out;

  const Eigen::Index hdim = shape.hidden;
  for (int j = shape.n_blocks - 1; j >= 0; --j) {
    const auto js = static_cast<std::size_t>(j);
    const auto& b = p.blocks[js];
    auto& gb = g.blocks[js];
    const Eigen::MatrixXd& gate = tr.gates[js];
    gb.w2.noalias() = d_h * gate.transpose();
    gb.b2 = d_h.rowwise().sum();
    const Eigen::MatrixXd d_a = ((b.w2.transpose() * d_h).array() * (1.0 - gate.array().square())).matrix();
    gb.w1.noalias() = d_a * tr.inputs[js].transpose();
    gb.b1 = d_a.rowwise().sum();
    d_h.noalias() += b.w1.leftCols(hdim).transpose() * d_a;
  }
  g.w_in.noalias() = d_h * z.transpose();
  g.b_in = d_h.rowwise().sum();
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (steps < 0) throw ConfigError("step count must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
    throw ConfigError("Adam hyper-parameters out of range");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
  if (log_every < 1) throw ConfigError("log interval must be positive");
}

namespace {

class Adam {
 public:
  Adam(const DenoiserParams& like, const TrainConfig& cfg) : cfg_(cfg), m_(zero_like(like)), v_(zero_like(like)) {}

  void step(DenoiserParams& params, const DenoiserParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    std::vector<std::span<double>> ps, ms, vs;
    std::vector<std::span<const double>> gs;
    params.for_each([&](const std::string&, std::span<double> s) { ps.push_back(s); });
    m_.for_each([&](const std::string&, std::span<double> s) { ms.push_back(s); });
    v_.for_each([&](const std::string&, std::span<double> s) { vs.push_back(s); });
    grads.for_each([&](const std::string&, std::span<const double> s) { gs.push_back(s); });
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Eigen::Map<Eigen::ArrayXd> p(ps[k].data(), static_cast<Eigen::Index>(ps[k].size()));
      Eigen::Map<Eigen::ArrayXd> m(ms[k].data(), p.size());
      Eigen::Map<Eigen::ArrayXd> v(vs[k].data(), p.size());
      Eigen::Map<const Eigen::ArrayXd> g(gs[k].data(), p.size());
      m = cfg_.adam_beta1 * m + (1.0 - cfg_.adam_beta1) * g;
      v = cfg_.adam_beta2 * v + (1.0 - cfg_.adam_beta2) * g.square();
      p -= cfg_.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg_.adam_eps);
    }
  }

 private:
  static DenoiserParams zero_like(const DenoiserParams& like) {
    DenoiserParams z = like;
    z.for_each([](const std::string&, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
    return z;
  }

  TrainConfig cfg_;
  DenoiserParams m_, v_;
  int t_ = 0;
};

void ema_update(DenoiserParams& ema, const DenoiserParams& current, double decay) {
  std::vector<std::span<const double>> cur;
  current.for_each([&](const std::string&, std::span<const double> s) { cur.push_back(s); });
  std::size_t k = 0;
  ema.for_each([&](const std::string&, std::span<double> s) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = decay * s[i] + (1.0 - decay) * cur[k][i];
    ++k;
  });
}

}  // namespace

TrainResult train(DenoiserModel model, const DataSampler& sampler, const TrainConfig& cfg,
                  const NoiseSchedule& sched) {
  cfg.validate();
  if (!sampler) throw ConfigError("training needs a data sampler");
  const ModelShape shape = model.shape();
  Rng rng(cfg.seed);
  Adam adam(model.params(), cfg);
  DenoiserParams ema = model.params();
  std::vector<LossPoint> trace;
  std::vector<TrainingExample> batch(static_cast<std::size_t>(cfg.batch_size));
  double window = 0.0;
  int window_count = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& ex : batch) {
      TrainingPair pair = sampler(rng);
      if (pair.z0.size() != shape.latent_dim) throw ShapeError("sampled latent has the wrong dimension");
      ex.z0 = std::move(pair.z0);
      ex.t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.n_steps())));
      ex.eps = rng.normal_vector(shape.latent_dim);
      ex.assign = uniform_assignment(shape.n_blocks, pair.cond);
    }
    LossAndGrads lg;
    try {
      lg = loss_and_grads(model, batch, sched);
    } catch (const TrainingError& e) {
      throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (lg.loss > 1e6) {
      throw TrainingError("training diverged at step " + std::to_string(step) + ": loss " + std::to_string(lg.loss));
    }
    adam.step(model.mutable_params(), lg.grads);
    if (cfg.ema_decay > 0.0) ema_update(ema, model.params(), cfg.ema_decay);
    window += lg.loss;
    ++window_count;
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      trace.push_back({step + 1, window / window_count});
      window = 0.0;
      window_count = 0;
    }
  }
  if (!model.params().all_finite()) throw TrainingError("training produced non-finite parameters");
  if (cfg.ema_decay > 0.0 && cfg.steps > 0) return {DenoiserModel(shape, std::move(ema)), std::move(trace)};
  return {std::move(model), std::move(trace)};
}

double denoising_mse(const DenoiserBackend& backend, std::span<const TrainingExample> examples,
                     const NoiseSchedule& sched) {
  if (examples.empty()) throw ConfigError("denoising_mse needs examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    const Eigen::VectorXd z = forward_noise(ex.z0, ex.t, ex.eps, sched);
    const Eigen::VectorXd eps_hat = backend.supports_block_assignment()
                                        ? backend.predict_eps(z, ex.t, ex.assign, sched)
                                        : backend.predict_eps(z, ex.t, ex.assign.per_block.at(0), sched);
    total += (eps_hat - ex.eps).squaredNorm() / static_cast<double>(z.size());
  }
  return total / static_cast<double>(examples.size());
}

namespace {

constexpr char kMagic[6] = {'T', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* field) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw LoadError(std::string("checkpoint truncated while reading ") + field);
  }
  return v;
}

}  // namespace

void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const ModelShape& s = model.shape();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.latent_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.hidden));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.n_blocks));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.time_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.slot_dim));
  put<std::uint64_t>(out, model.params().parameter_count());
  model.params().for_each([&out](const std::string&, std::span<const double> data) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  });
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

DenoiserModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic)) throw LoadError("checkpoint truncated while reading magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw LoadError("bad magic: not a TPCKPT checkpoint");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));

  ModelShape s;
  s.latent_dim = get<std::uint32_t>(in, "D");
  s.hidden = get<std::uint32_t>(in, "H");
  s.n_blocks = static_cast<int>(get<std::uint32_t>(in, "B"));
  s.time_dim = get<std::uint32_t>(in, "T_emb");
  s.slot_dim = get<std::uint32_t>(in, "E");
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid header dimensions: ") + e.what());
  }
  DenoiserParams p = DenoiserParams::zeros(s);
  const auto count = get<std::uint64_t>(in, "parameter count");
  if (count != p.parameter_count()) {
    throw LoadError("parameter count " + std::to_string(count) + " does not match header dimensions (expected " +
                    std::to_string(p.parameter_count()) + ")");
  }
  p.for_each([&in](const std::string& name, std::span<double> data) {
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()))) {
      throw LoadError("checkpoint truncated while reading " + name);
    }
  });
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError("trailing bytes after parameter data");
  try {
    return DenoiserModel(s, std::move(p));
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid parameters: ") + e.what());
  }
}

}  // namespace turnpoint
