// Experiment harness: dataset generation, training runs, lambda sweeps, and
// the coverage study, all driven by a JSON config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svbnn/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "JSON experiment config")->required();
  cmd->add_option("--out", opts.out, "output directory (overrides the config's output_dir)");
  cmd->add_option("--seed", opts.seed, "base seed (overrides the config)");
  cmd->add_option("--replications", opts.replications,
                  "replication count (overrides the config)");
  cmd->add_option("--jobs", opts.jobs, "worker threads for replications");
}

int effective_jobs(int flag_jobs) {
  // SVBNN_JOBS wins over --jobs when set.
  if (const char* env = std::getenv("SVBNN_JOBS")) {
    try {
      const int j = std::stoi(env);
      if (j >= 1) return j;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid SVBNN_JOBS='" << env << "'\n";
  }
  return flag_jobs;
}

svbnn::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  svbnn::ExperimentConfig cfg = svbnn::ExperimentConfig::load(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.replications) cfg.replications = *opts.replications;
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  cfg.validate();
  return cfg;
}

void print_summary(const svbnn::ResultTable& table, const fs::path& out_dir) {
  int ok = 0, failed = 0;
  for (const auto& row : table.rows) (row.status == "ok" ? ok : failed)++;
  std::cout << "wrote " << (out_dir / "results.csv").string() << " (" << ok << " ok";
  if (failed) std::cout << ", " << failed << " failed";
  std::cout << ")\n";
  for (const std::string& m : table.metric_columns()) {
    if (m == "wall_time_s") continue;
    const double mean = table.mean_of(m);
    if (std::isnan(mean)) continue;
    std::cout << "  " << m << ": mean=" << mean;
    const double sd = table.sd_of(m);
    if (!std::isnan(sd)) std::cout << " sd=" << sd;
    std::cout << '\n';
  }
  for (const auto& row : table.rows)
    if (row.status != "ok")
      std::cout << "  replication " << row.rep << " failed: " << row.error << '\n';
}

int cmd_generate(const CommonOpts& opts) {
  const svbnn::ExperimentConfig cfg = load_with_overrides(opts);
  const auto& gen = cfg.generator;
  svbnn::Dataset data;
  switch (gen.kind) {
    case svbnn::GeneratorKind::TeacherDense:
      data = svbnn::gen_teacher_dense(gen.n, cfg.seed, gen.noise_std,
                                      gen.frozen_teacher ? gen.teacher_seed : cfg.seed, true)
                 .data;
      break;
    case svbnn::GeneratorKind::TeacherSparse:
      data = svbnn::gen_teacher_sparse(gen.n, cfg.seed, gen.noise_std).data;
      break;
    case svbnn::GeneratorKind::SparseNonlinear:
      data = svbnn::gen_sparse_nonlinear(gen.n, cfg.seed, gen.noise_std);
      break;
    case svbnn::GeneratorKind::ToyLinear:
      data = svbnn::gen_toy_linear(gen.n, gen.input_dim(), cfg.seed, gen.noise_std).data;
      break;
  }
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  svbnn::write_csv(data, out_dir / "dataset.csv");

  nlohmann::json prov;
  prov["config_hash"] = svbnn::config_hash_hex(cfg);
  prov["seeds"] = {cfg.seed};
  prov["kind"] = to_string(gen.kind);
  prov["n"] = data.n();
  prov["p"] = data.p();
  prov["noise_std"] = gen.noise_std;
  std::ofstream pj(out_dir / "dataset.json");
  pj << prov.dump(2) << '\n';

  std::cout << "wrote " << (out_dir / "dataset.csv").string() << " (" << data.n() << " x "
            << data.p() << ")\n";
  return 0;
}

int cmd_run(const CommonOpts& opts, bool single, bool force_coverage) {
  svbnn::ExperimentConfig cfg = load_with_overrides(opts);
  if (single) cfg.replications = 1;
  if (force_coverage) cfg.metrics.coverage = true;
  cfg.validate();
  const fs::path out_dir(cfg.output_dir);
  const svbnn::ResultTable table =
      svbnn::run_experiment(cfg, out_dir, effective_jobs(opts.jobs));
  print_summary(table, out_dir);
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& lambdas_arg) {
  const svbnn::ExperimentConfig cfg = load_with_overrides(opts);
  std::vector<double> lambdas;
  std::stringstream ss(lambdas_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "opt") {
      lambdas.push_back(cfg.resolve_lambda(cfg.generator.n));
    } else {
      try {
        lambdas.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw std::invalid_argument("sweep-lambda: cannot parse lambda '" + item + "'");
      }
    }
  }
  const fs::path out_dir(cfg.output_dir);
  const auto points = svbnn::sweep_lambda(cfg, lambdas, out_dir, effective_jobs(opts.jobs));
  std::cout << "wrote " << (out_dir / "sweep.csv").string() << " (" << points.size()
            << " lambda values)\n";
  for (const auto& p : points)
    std::cout << "  lambda=" << p.lambda << " train_rmse=" << p.train_rmse_mean
              << " test_rmse=" << p.test_rmse_mean << " sparsity=" << p.sparsity_mean << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse variational Bayesian neural network experiment harness"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, exp_opts, sweep_opts, cov_opts;
  std::string lambdas_arg;

  CLI::App* generate = app.add_subcommand("generate", "emit a dataset CSV");
  add_common(generate, gen_opts);
  CLI::App* train = app.add_subcommand("train", "single training run");
  add_common(train, train_opts);
  CLI::App* experiment = app.add_subcommand("experiment", "replicated run with metrics");
  add_common(experiment, exp_opts);
  CLI::App* sweep = app.add_subcommand("sweep-lambda", "replicated runs over a lambda list");
  add_common(sweep, sweep_opts);
  sweep
      ->add_option("--lambdas", lambdas_arg,
                   "comma-separated lambda values; the token 'opt' resolves the rule")
      ->required();
  CLI::App* coverage = app.add_subcommand("coverage", "replicated run with coverage enabled");
  add_common(coverage, cov_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(gen_opts);
    if (train->parsed()) return cmd_run(train_opts, true, false);
    if (experiment->parsed()) return cmd_run(exp_opts, false, false);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, lambdas_arg);
    if (coverage->parsed()) return cmd_run(cov_opts, false, true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
