#include "svbnn/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

namespace svbnn {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kTagTrainData = 11;
constexpr std::uint64_t kTagTestData = 12;
constexpr std::uint64_t kTagTraining = 13;
constexpr std::uint64_t kTagPosterior = 14;
constexpr std::uint64_t kTagCoverage = 15;
constexpr std::uint64_t kTagHellinger = 16;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  return RngStream(seed).derived(tag).seed();
}

// Locale-independent numeric cell; NaN renders as an empty cell.
std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::string(buf);
}

std::string seeds_csv(const ExperimentConfig& config) {
  std::string s;
  for (int i = 0; i < config.replications; ++i) {
    if (i) s += ',';
    s += std::to_string(config.seed + static_cast<std::uint64_t>(i));
  }
  return s;
}

// Strict section reader: tracks consumed keys and rejects leftovers.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object())
      throw std::invalid_argument("config error: section '" + name_ +
                                  "' must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    if (!j_.contains(key))
      throw std::invalid_argument("config error: missing field '" + key + "' in section '" +
                                  name_ + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key))
      throw std::invalid_argument("config error: missing field '" + key + "' in section '" +
                                  name_ + "'");
    return fetch<T>(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return fetch<T>(key);
  }

  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw std::invalid_argument("config error: unknown key '" + it.key() +
                                    "' in section '" + name_ + "'");
  }

 private:
  template <typename T>
  T fetch(const std::string& key) {
    seen_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config error: field '" + key + "' in section '" + name_ +
                                  "': " + e.what());
    }
  }

  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void write_provenance_line(std::ofstream& out, const std::string& hash,
                           const std::string& seeds) {
  out << "# config_hash=" << hash << " seeds=" << seeds << '\n';
}

void write_trace_csv(const fs::path& path, const ReplicationResult& row,
                     const std::string& hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_provenance_line(out, hash, std::to_string(row.seed));
  out << "epoch,elbo,recon,kl,sparsity\n";
  for (const EpochRecord& r : row.trace)
    out << r.epoch << ',' << fmt(r.elbo) << ',' << fmt(r.recon) << ',' << fmt(r.kl) << ','
        << fmt(r.sparsity) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

nlohmann::json row_to_json(const ResultTable& table, const ReplicationResult& row) {
  nlohmann::json j;
  j["rep"] = row.rep;
  j["seed"] = row.seed;
  j["status"] = row.status;
  if (!row.error.empty()) j["error"] = row.error;
  for (const std::string& name : table.metric_columns()) {
    const double v = table.metric(row, name);
    if (std::isnan(v))
      j[name] = nullptr;
    else
      j[name] = v;
  }
  return j;
}

// Runs all replications over a small worker pool; per_row (if set) is called
// from the worker that finished the row, with distinct rows never sharing a
// call.
ResultTable run_replications(const ExperimentConfig& config, int jobs,
                             const std::function<void(const ReplicationResult&)>& per_row) {
  ResultTable table;
  table.rows.resize(static_cast<std::size_t>(config.replications));
  if (config.metrics.coverage) table.coverage_coords = config.coverage.coords;
  table.has_hellinger = config.metrics.hellinger;

  std::atomic<int> next{0};
  auto work = [&]() {
    for (int i = next.fetch_add(1); i < config.replications; i = next.fetch_add(1)) {
      ReplicationResult row;
      try {
        row = run_replication(config, i);
      } catch (const std::exception& e) {
        row = ReplicationResult{};
        row.rep = i;
        row.seed = config.seed + static_cast<std::uint64_t>(i);
        row.status = "failed";
        row.error = e.what();
      }
      if (per_row) per_row(row);
      table.rows[static_cast<std::size_t>(i)] = std::move(row);
    }
  };

  const int workers = std::max(1, std::min(jobs, config.replications));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  return table;
}

void write_results_csv(const fs::path& path, const ResultTable& table, const std::string& hash,
                       const std::string& seeds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_provenance_line(out, hash, seeds);
  const std::vector<std::string> metrics = table.metric_columns();
  out << "rep,seed,status";
  for (const std::string& m : metrics) out << ',' << m;
  out << '\n';
  for (const ReplicationResult& row : table.rows) {
    out << row.rep << ',' << row.seed << ',' << row.status;
    for (const std::string& m : metrics) out << ',' << fmt(table.metric(row, m));
    out << '\n';
  }
  out << "mean,,";
  for (const std::string& m : metrics) out << ',' << fmt(table.mean_of(m));
  out << '\n';
  out << "sd,,";
  for (const std::string& m : metrics) out << ',' << fmt(table.sd_of(m));
  out << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_results_json(const fs::path& path, const ResultTable& table, const std::string& hash,
                        const ExperimentConfig& config) {
  nlohmann::json j;
  j["config_hash"] = hash;
  nlohmann::json seeds = nlohmann::json::array();
  for (int i = 0; i < config.replications; ++i)
    seeds.push_back(config.seed + static_cast<std::uint64_t>(i));
  j["seeds"] = seeds;
  nlohmann::json columns = nlohmann::json::array({"rep", "seed", "status"});
  for (const std::string& m : table.metric_columns()) columns.push_back(m);
  j["columns"] = columns;
  nlohmann::json rows = nlohmann::json::array();
  for (const ReplicationResult& row : table.rows) rows.push_back(row_to_json(table, row));
  j["rows"] = rows;
  nlohmann::json mean, sd;
  for (const std::string& m : table.metric_columns()) {
    const double mv = table.mean_of(m), sv = table.sd_of(m);
    mean[m] = std::isnan(mv) ? nlohmann::json(nullptr) : nlohmann::json(mv);
    sd[m] = std::isnan(sv) ? nlohmann::json(nullptr) : nlohmann::json(sv);
  }
  j["aggregate"] = {{"mean", mean}, {"sd", sd}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::TeacherDense: return "teacher_dense";
    case GeneratorKind::TeacherSparse: return "teacher_sparse";
    case GeneratorKind::SparseNonlinear: return "sparse_nonlinear";
    case GeneratorKind::ToyLinear: return "toy_linear";
  }
  return "teacher_sparse";
}

GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "teacher_dense") return GeneratorKind::TeacherDense;
  if (s == "teacher_sparse") return GeneratorKind::TeacherSparse;
  if (s == "sparse_nonlinear") return GeneratorKind::SparseNonlinear;
  if (s == "toy_linear") return GeneratorKind::ToyLinear;
  throw std::invalid_argument("config error: unknown generator kind '" + s + "'");
}

int default_input_dim(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::TeacherDense: return 20;
    case GeneratorKind::TeacherSparse: return 100;
    case GeneratorKind::SparseNonlinear: return 200;
    case GeneratorKind::ToyLinear: return 200;
  }
  return 0;
}

void GeneratorSettings::validate() const {
  if (n < 1) throw std::invalid_argument("config error: generator.n must be positive");
  if (test_n < 0) throw std::invalid_argument("config error: generator.test_n must be >= 0");
  if (!(noise_std >= 0.0))
    throw std::invalid_argument("config error: generator.noise_std must be >= 0");
  if (p > 0 && kind != GeneratorKind::ToyLinear && p != default_input_dim(kind))
    throw std::invalid_argument("config error: generator.p is fixed at " +
                                std::to_string(default_input_dim(kind)) + " for " +
                                to_string(kind));
  if (p < 0) throw std::invalid_argument("config error: generator.p must be positive");
}

void PriorSettings::validate() const {
  if (!(sigma0_sq > 0.0))
    throw std::invalid_argument("config error: prior.sigma0_sq must be positive");
  if (!lambda_is_opt && !(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("config error: prior.lambda must lie strictly in (0,1)");
  if (!(delta > 0.0)) throw std::invalid_argument("config error: prior.delta must be positive");
}

void ExperimentConfig::validate() const {
  generator.validate();
  fit.validate();
  prior.validate();
  if (fit.input_dim != generator.input_dim())
    throw std::invalid_argument("config error: fit.input_dim " + std::to_string(fit.input_dim) +
                                " does not match the generator dimension " +
                                std::to_string(generator.input_dim()));
  training.validate(generator.n);
  if (replications < 1)
    throw std::invalid_argument("config error: replications must be >= 1");
  if (posterior_samples < 1)
    throw std::invalid_argument("config error: posterior_samples must be >= 1");
  if (metrics.hellinger_n < 1)
    throw std::invalid_argument("config error: metrics.hellinger_n must be >= 1");
  if (coverage.grid < 2) throw std::invalid_argument("config error: coverage.grid must be >= 2");
  if (coverage.repeats < 1)
    throw std::invalid_argument("config error: coverage.repeats must be >= 1");
  if (coverage.n_mc < 2) throw std::invalid_argument("config error: coverage.n_mc must be >= 2");
  if (!(coverage.level > 0.0 && coverage.level < 1.0))
    throw std::invalid_argument("config error: coverage.level must lie strictly in (0,1)");
  for (int c : coverage.coords)
    if (c < 1 || c > generator.input_dim())
      throw std::invalid_argument("config error: coverage coordinate " + std::to_string(c) +
                                  " outside 1.." + std::to_string(generator.input_dim()));
  if (!coverage.base_point.empty() &&
      static_cast<int>(coverage.base_point.size()) != generator.input_dim())
    throw std::invalid_argument("config error: coverage.base_point must have " +
                                std::to_string(generator.input_dim()) + " entries");
  resolve_lambda(generator.n);  // surfaces lambda_opt shape errors early
}

double ExperimentConfig::resolve_lambda(Eigen::Index n_train) const {
  if (!prior.lambda_is_opt) return prior.lambda;
  try {
    return lambda_opt(fit, n_train, prior.delta);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config error: prior.lambda=\"opt\": ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  Section top(j, "top-level");
  cfg.name = top.get<std::string>("name", cfg.name);
  {
    Section g(top.raw("generator"), "generator");
    cfg.generator.kind = generator_kind_from_string(g.require<std::string>("kind"));
    cfg.generator.n = g.require<std::int64_t>("n");
    cfg.generator.test_n = g.get<std::int64_t>("test_n", 0);
    cfg.generator.noise_std = g.get<double>("noise_std", 1.0);
    cfg.generator.p = g.get<int>("p", 0);
    cfg.generator.frozen_teacher = g.get<bool>("frozen_teacher", false);
    cfg.generator.teacher_seed = g.get<std::uint64_t>("teacher_seed", 0);
    g.finish();
  }
  {
    Section f(top.raw("fit"), "fit");
    cfg.fit.hidden = f.require<std::vector<int>>("hidden");
    cfg.fit.activation = activation_from_string(f.require<std::string>("activation"));
    cfg.fit.input_dim = f.get<int>("input_dim", cfg.generator.input_dim());
    f.finish();
  }
  if (top.has("prior")) {
    Section p(top.raw("prior"), "prior");
    cfg.prior.sigma0_sq = p.get<double>("sigma0_sq", cfg.prior.sigma0_sq);
    if (p.has("lambda")) {
      const nlohmann::json& lv = p.raw("lambda");
      if (lv.is_string() && lv.get<std::string>() == "opt") {
        cfg.prior.lambda_is_opt = true;
      } else if (lv.is_number()) {
        cfg.prior.lambda_is_opt = false;
        cfg.prior.lambda = lv.get<double>();
      } else {
        throw std::invalid_argument(
            "config error: field 'lambda' in section 'prior' must be a number in (0,1) or the "
            "string \"opt\"");
      }
    }
    cfg.prior.delta = p.get<double>("delta", cfg.prior.delta);
    p.finish();
  }
  if (top.has("training")) {
    Section t(top.raw("training"), "training");
    TrainingConfig& tc = cfg.training;
    tc.minibatch = t.get<int>("minibatch", tc.minibatch);
    tc.mc_samples = t.get<int>("mc_samples", tc.mc_samples);
    tc.tau.tau = t.get<double>("tau", tc.tau.tau);
    tc.learning_rate = t.get<double>("learning_rate", tc.learning_rate);
    tc.epochs = t.get<int>("epochs", tc.epochs);
    if (t.has("optimizer")) tc.optimizer = optimizer_from_string(t.require<std::string>("optimizer"));
    tc.sigma_eps = t.get<double>("sigma_eps", tc.sigma_eps);
    tc.init_phi = t.get<double>("init_phi", tc.init_phi);
    tc.init_sigma_raw = t.get<double>("init_sigma_raw", tc.init_sigma_raw);
    if (t.has("reparam")) tc.reparam = reparam_from_string(t.require<std::string>("reparam"));
    tc.grad_clip = t.get<double>("grad_clip", tc.grad_clip);
    t.finish();
  }
  cfg.replications = top.get<int>("replications", cfg.replications);
  cfg.seed = top.get<std::uint64_t>("seed", cfg.seed);
  cfg.posterior_samples = top.get<int>("posterior_samples", cfg.posterior_samples);
  if (top.has("metrics")) {
    Section m(top.raw("metrics"), "metrics");
    cfg.metrics.selection = m.get<bool>("selection", cfg.metrics.selection);
    cfg.metrics.coverage = m.get<bool>("coverage", cfg.metrics.coverage);
    cfg.metrics.hellinger = m.get<bool>("hellinger", cfg.metrics.hellinger);
    cfg.metrics.hellinger_n = m.get<int>("hellinger_n", cfg.metrics.hellinger_n);
    m.finish();
  }
  if (top.has("coverage")) {
    Section c(top.raw("coverage"), "coverage");
    cfg.coverage.coords = c.get<std::vector<int>>("coords", cfg.coverage.coords);
    cfg.coverage.grid = c.get<int>("grid", cfg.coverage.grid);
    cfg.coverage.repeats = c.get<int>("repeats", cfg.coverage.repeats);
    cfg.coverage.n_mc = c.get<int>("n_mc", cfg.coverage.n_mc);
    cfg.coverage.level = c.get<double>("level", cfg.coverage.level);
    cfg.coverage.base_point =
        c.get<std::vector<double>>("base_point", cfg.coverage.base_point);
    c.finish();
  }
  cfg.output_dir = top.get<std::string>("output_dir", cfg.output_dir);
  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config error: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config error: " + path.string() + " is not valid JSON: " +
                                e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json(bool resolved) const {
  nlohmann::json j;
  j["name"] = name;
  j["generator"] = {{"kind", to_string(generator.kind)},
                    {"n", generator.n},
                    {"test_n", resolved ? generator.resolved_test_n() : generator.test_n},
                    {"noise_std", generator.noise_std},
                    {"p", resolved ? generator.input_dim() : generator.p},
                    {"frozen_teacher", generator.frozen_teacher},
                    {"teacher_seed", generator.teacher_seed}};
  j["fit"] = {{"input_dim", fit.input_dim},
              {"hidden", fit.hidden},
              {"activation", to_string(fit.activation)}};
  j["prior"] = {{"sigma0_sq", prior.sigma0_sq},
                {"delta", prior.delta},
                {"lambda", prior.lambda_is_opt ? nlohmann::json("opt")
                                               : nlohmann::json(prior.lambda)}};
  if (resolved) j["prior"]["lambda_resolved"] = resolve_lambda(generator.n);
  j["training"] = {{"minibatch", training.minibatch},
                   {"mc_samples", training.mc_samples},
                   {"tau", training.tau.tau},
                   {"learning_rate", training.learning_rate},
                   {"epochs", training.epochs},
                   {"optimizer", to_string(training.optimizer)},
                   {"sigma_eps", training.sigma_eps},
                   {"init_phi", training.init_phi},
                   {"init_sigma_raw", training.init_sigma_raw},
                   {"reparam", to_string(training.reparam)},
                   {"grad_clip", training.grad_clip}};
  j["replications"] = replications;
  j["seed"] = seed;
  j["posterior_samples"] = posterior_samples;
  j["metrics"] = {{"selection", metrics.selection},
                  {"coverage", metrics.coverage},
                  {"hellinger", metrics.hellinger},
                  {"hellinger_n", metrics.hellinger_n}};
  j["coverage"] = {{"coords", coverage.coords},
                   {"grid", coverage.grid},
                   {"repeats", coverage.repeats},
                   {"n_mc", coverage.n_mc},
                   {"level", coverage.level},
                   {"base_point", coverage.base_point}};
  j["output_dir"] = output_dir;
  if (resolved) {
    nlohmann::json seeds = nlohmann::json::array();
    for (int i = 0; i < replications; ++i)
      seeds.push_back(seed + static_cast<std::uint64_t>(i));
    j["seeds"] = seeds;
  }
  return j;
}

std::vector<std::string> ResultTable::metric_columns() const {
  std::vector<std::string> cols{"train_rmse", "test_rmse", "sparsity", "fpr", "fnr"};
  for (int c : coverage_coords) cols.push_back("coverage_x" + std::to_string(c));
  if (has_hellinger) cols.push_back("hellinger");
  cols.push_back("wall_time_s");
  return cols;
}

double ResultTable::metric(const ReplicationResult& row, const std::string& name) const {
  if (name == "train_rmse") return row.train_rmse;
  if (name == "test_rmse") return row.test_rmse;
  if (name == "sparsity") return row.sparsity;
  if (name == "fpr") return row.fpr;
  if (name == "fnr") return row.fnr;
  if (name == "hellinger") return row.hellinger;
  if (name == "wall_time_s") return row.wall_time_s;
  for (std::size_t i = 0; i < coverage_coords.size(); ++i) {
    if (name == "coverage_x" + std::to_string(coverage_coords[i]))
      return i < row.coverage.size() ? row.coverage[i]
                                     : std::numeric_limits<double>::quiet_NaN();
  }
  throw std::invalid_argument("unknown metric '" + name + "'");
}

double ResultTable::mean_of(const std::string& name) const {
  double sum = 0.0;
  long count = 0;
  for (const ReplicationResult& row : rows) {
    if (row.status != "ok") continue;
    const double v = metric(row, name);
    if (std::isnan(v)) continue;
    sum += v;
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count)
                   : std::numeric_limits<double>::quiet_NaN();
}

double ResultTable::sd_of(const std::string& name) const {
  const double m = mean_of(name);
  if (std::isnan(m)) return m;
  double ss = 0.0;
  long count = 0;
  for (const ReplicationResult& row : rows) {
    if (row.status != "ok") continue;
    const double v = metric(row, name);
    if (std::isnan(v)) continue;
    ss += (v - m) * (v - m);
    ++count;
  }
  return count > 1 ? std::sqrt(ss / static_cast<double>(count - 1))
                   : std::numeric_limits<double>::quiet_NaN();
}

std::uint64_t fnv1a_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash_hex(const ExperimentConfig& config) {
  const std::uint64_t h = fnv1a_hash(config.to_json(true).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

ReplicationResult run_replication(const ExperimentConfig& config, int rep) {
  const auto t0 = std::chrono::steady_clock::now();
  ReplicationResult row;
  row.rep = rep;
  row.seed = config.seed + static_cast<std::uint64_t>(rep);

  const GeneratorSettings& gen = config.generator;
  const std::uint64_t train_seed = sub_seed(row.seed, kTagTrainData);
  const std::uint64_t test_seed = sub_seed(row.seed, kTagTestData);
  Dataset train_data, test_data;
  switch (gen.kind) {
    case GeneratorKind::TeacherDense: {
      // Train and test must share one teacher, so the teacher draw is pinned
      // to the train seed unless the config froze it explicitly.
      const std::uint64_t teacher = gen.frozen_teacher ? gen.teacher_seed : train_seed;
      train_data = gen_teacher_dense(gen.n, train_seed, gen.noise_std, teacher, true).data;
      test_data =
          gen_teacher_dense(gen.resolved_test_n(), test_seed, gen.noise_std, teacher, true).data;
      break;
    }
    case GeneratorKind::TeacherSparse:
      train_data = gen_teacher_sparse(gen.n, train_seed, gen.noise_std).data;
      test_data = gen_teacher_sparse(gen.resolved_test_n(), test_seed, gen.noise_std).data;
      break;
    case GeneratorKind::SparseNonlinear:
      train_data = gen_sparse_nonlinear(gen.n, train_seed, gen.noise_std);
      test_data = gen_sparse_nonlinear(gen.resolved_test_n(), test_seed, gen.noise_std);
      break;
    case GeneratorKind::ToyLinear:
      train_data = gen_toy_linear(gen.n, gen.input_dim(), train_seed, gen.noise_std).data;
      test_data =
          gen_toy_linear(gen.resolved_test_n(), gen.input_dim(), test_seed, gen.noise_std).data;
      break;
  }

  const SpikeSlabPrior prior{config.prior.sigma0_sq, config.resolve_lambda(train_data.n())};
  TrainingConfig tc = config.training;
  tc.seed = sub_seed(row.seed, kTagTraining);
  FitResult fitted = train(train_data, config.fit, prior, tc);
  row.trace = std::move(fitted.trace);

  RngStream post_rng(sub_seed(row.seed, kTagPosterior));
  const int H = config.posterior_samples;
  row.train_rmse = rmse(train_data.y, posterior_mean_predict(fitted.params, config.fit,
                                                             train_data.X, H, post_rng));
  row.test_rmse =
      rmse(test_data.y, posterior_mean_predict(fitted.params, config.fit, test_data.X, H,
                                               post_rng));
  row.sparsity = sparsity_hat(fitted.params);

  if (config.metrics.selection && !train_data.true_support.empty()) {
    const SelectionReport sel = fpr_fnr(select_inputs(fitted.params, config.fit),
                                        train_data.true_support, train_data.p());
    row.fpr = sel.fpr;
    row.fnr = sel.fnr;
  }
  if (config.metrics.coverage) {
    Eigen::VectorXd base = Eigen::VectorXd::Zero(train_data.p());
    for (std::size_t i = 0; i < config.coverage.base_point.size(); ++i)
      base[static_cast<Eigen::Index>(i)] = config.coverage.base_point[i];
    RngStream cov_rng(sub_seed(row.seed, kTagCoverage));
    row.coverage = coverage_experiment(fitted.params, config.fit, train_data.f0,
                                       config.coverage.coords, base, config.coverage.grid,
                                       config.coverage.level, config.coverage.n_mc,
                                       config.coverage.repeats, cov_rng);
  }
  if (config.metrics.hellinger) {
    RngStream h_rng(sub_seed(row.seed, kTagHellinger));
    row.hellinger =
        hellinger_sq_estimate(fitted.params, config.fit, train_data.f0, config.training.sigma_eps,
                              config.metrics.hellinger_n, train_data.law, h_rng);
  }

  row.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

ResultTable run_experiment(const ExperimentConfig& config,
                           const std::filesystem::path& out_dir, int jobs) {
  config.validate();
  fs::create_directories(out_dir);
  const std::string hash = config_hash_hex(config);
  const std::string seeds = seeds_csv(config);

  {
    nlohmann::json rj = config.to_json(true);
    rj["config_hash"] = hash;
    std::ofstream out(out_dir / "resolved.json");
    if (!out) throw std::runtime_error("cannot open " + (out_dir / "resolved.json").string());
    out << rj.dump(2) << '\n';
  }

  const fs::path staging = out_dir / ".staging";
  fs::create_directories(staging);

  // Trace and staging writes target per-replication files, so workers never
  // share a file. The merged table is written once by the orchestrator.
  ResultTable skeleton;
  if (config.metrics.coverage) skeleton.coverage_coords = config.coverage.coords;
  skeleton.has_hellinger = config.metrics.hellinger;
  auto per_row = [&](const ReplicationResult& row) {
    write_trace_csv(out_dir / ("trace_" + std::to_string(row.rep) + ".csv"), row, hash);
    std::ofstream out(staging / ("rep_" + std::to_string(row.rep) + ".json"));
    if (out) out << row_to_json(skeleton, row).dump(2) << '\n';
  };

  ResultTable table = run_replications(config, jobs, per_row);
  write_results_csv(out_dir / "results.csv", table, hash, seeds);
  write_results_json(out_dir / "results.json", table, hash, config);
  fs::remove_all(staging);
  return table;
}

std::vector<SweepPoint> sweep_lambda(const ExperimentConfig& config,
                                     std::vector<double> lambdas,
                                     const std::filesystem::path& out_dir, int jobs) {
  config.validate();
  if (lambdas.empty()) throw std::invalid_argument("sweep_lambda: empty lambda list");
  for (double l : lambdas)
    if (!(l > 0.0 && l < 1.0))
      throw std::invalid_argument("sweep_lambda: lambda " + fmt(l) +
                                  " outside the open interval (0,1)");
  std::sort(lambdas.begin(), lambdas.end());

  fs::create_directories(out_dir);
  const std::string hash = config_hash_hex(config);
  const std::string seeds = seeds_csv(config);
  {
    nlohmann::json rj = config.to_json(true);
    rj["config_hash"] = hash;
    rj["sweep_lambdas"] = lambdas;
    std::ofstream out(out_dir / "resolved.json");
    if (!out) throw std::runtime_error("cannot open " + (out_dir / "resolved.json").string());
    out << rj.dump(2) << '\n';
  }

  std::vector<SweepPoint> points;
  points.reserve(lambdas.size());
  for (double l : lambdas) {
    ExperimentConfig point_cfg = config;
    point_cfg.prior.lambda_is_opt = false;
    point_cfg.prior.lambda = l;
    const ResultTable table = run_replications(point_cfg, jobs, nullptr);
    SweepPoint p;
    p.lambda = l;
    p.train_rmse_mean = table.mean_of("train_rmse");
    p.train_rmse_sd = table.sd_of("train_rmse");
    p.test_rmse_mean = table.mean_of("test_rmse");
    p.test_rmse_sd = table.sd_of("test_rmse");
    p.sparsity_mean = table.mean_of("sparsity");
    points.push_back(p);
  }

  std::ofstream out(out_dir / "sweep.csv");
  if (!out) throw std::runtime_error("cannot open " + (out_dir / "sweep.csv").string());
  write_provenance_line(out, hash, seeds);
  out << "lambda,train_rmse_mean,train_rmse_sd,test_rmse_mean,test_rmse_sd,sparsity_mean\n";
  for (const SweepPoint& p : points)
    out << fmt(p.lambda) << ',' << fmt(p.train_rmse_mean) << ',' << fmt(p.train_rmse_sd) << ','
        << fmt(p.test_rmse_mean) << ',' << fmt(p.test_rmse_sd) << ',' << fmt(p.sparsity_mean)
        << '\n';
  if (!out) throw std::runtime_error("write failed for " + (out_dir / "sweep.csv").string());
  return points;
}

}  // namespace svbnn
