// duelrank command-line interface: instance generation, single runs of both
// algorithms, budget sweeps, alpha calibration, and CSV summaries.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "duelrank/pipelines.hpp"
#include "duelrank/serialize.hpp"
#include "duelrank/summary.hpp"
#include "duelrank/sweep.hpp"

namespace {

using namespace duelrank;

std::vector<int> parse_grid(const std::string& csv) {
  std::vector<int> grid;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) grid.push_back(std::stoi(tok));
  return grid;
}

struct CommonRunFlags {
  std::string instance_path;
  std::string output_path;
  std::uint64_t seed = 0;
  double epsilon = 0.5;
  double alpha = 1.0;
  std::string allocation = "active";

  void attach(CLI::App* cmd) {
    cmd->add_option("--instance", instance_path, "instance JSON path")
        ->required();
    cmd->add_option("-o,--output", output_path, "report JSON path")->required();
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--epsilon", epsilon, "target optimality scale");
    cmd->add_option("--alpha", alpha, "confidence radius multiplier");
    cmd->add_option("--allocation", allocation, "active|uniform")
        ->check(CLI::IsMember({"active", "uniform"}));
  }

  void apply(AlgorithmParams* params) const {
    params->seed = seed;
    params->epsilon = epsilon;
    params->alpha = alpha;
    params->allocation = allocation == "active" ? AllocationMode::kActive
                                                : AllocationMode::kUniform;
  }
};

int dispatch(int argc, char** argv) {
  CLI::App app{"multi-task dueling-bandit preference learning harness"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic instance");
  InstanceConfig cfg;
  std::string gen_out, profile = "geometric";
  gen->add_option("--d", cfg.d, "ambient dimension");
  gen->add_option("--k", cfg.k, "latent dimension");
  gen->add_option("--M", cfg.M, "source task count");
  gen->add_option("--contexts", cfg.n_contexts, "context count");
  gen->add_option("--actions", cfg.n_actions, "action count");
  gen->add_option("--B-x", cfg.B_x, "feature-difference norm bound");
  gen->add_option("--B-theta", cfg.B_theta, "parameter norm bound");
  gen->add_option("--profile", profile, "uniform|geometric|sparse")
      ->check(CLI::IsMember({"uniform", "geometric", "sparse"}));
  gen->add_option("--ratio", cfg.relevance.ratio, "geometric decay ratio");
  gen->add_option("--sparsity", cfg.relevance.sparsity,
                  "nonzero count for the sparse profile");
  gen->add_option("--seed", cfg.seed, "generator seed");
  gen->add_option("-o,--output", gen_out, "output JSON path")->required();

  // run-known
  auto* run_k = app.add_subcommand("run-known", "run the known-relevance algorithm");
  CommonRunFlags known_flags;
  known_flags.attach(run_k);
  int known_N = 4000;
  run_k->add_option("--N", known_N, "total source budget");

  // run-active
  auto* run_a =
      app.add_subcommand("run-active", "run the unknown-relevance algorithm");
  CommonRunFlags active_flags;
  active_flags.attach(run_a);
  Budgets active_budgets;
  double beta = -1.0, R = -1.0;
  bool oracle_beta = false, oracle_R = false;
  std::string lambda_from = "all";
  run_a->add_option("--N-pre-s", active_budgets.N_pre_s, "phase-1 source budget");
  run_a->add_option("--n-pre", active_budgets.n_pre, "phase-1 target samples");
  run_a->add_option("--N-s", active_budgets.N_s, "phase-2 source budget");
  run_a->add_option("--n", active_budgets.n, "phase-2 target samples");
  run_a->add_option("--beta", beta, "lasso l1 penalty override");
  run_a->add_option("--R", R, "lasso ellipsoid bound override");
  run_a->add_flag("--oracle-beta", oracle_beta,
                  "oracle-tuned beta from ground truth");
  run_a->add_flag("--oracle-R", oracle_R, "oracle-tuned R from ground truth");
  run_a->add_option("--lambda-from", lambda_from, "phase1|all")
      ->check(CLI::IsMember({"phase1", "all"}));

  // sweep
  auto* sweep = app.add_subcommand("sweep", "budget grid x reps x allocation");
  std::string sweep_instance, sweep_out, grid = "1000,4000,16000",
                              sweep_algo = "known";
  int reps = 20, threads = 0;
  std::uint64_t sweep_seed = 0;
  double sweep_epsilon = 0.0, sweep_alpha = 1.0;
  sweep->add_option("--instance", sweep_instance, "instance JSON path")
      ->required();
  sweep->add_option("--N-grid", grid, "comma-separated budgets");
  sweep->add_option("--reps", reps, "replications per cell");
  sweep->add_option("--algo", sweep_algo, "known|active")
      ->check(CLI::IsMember({"known", "active"}));
  sweep->add_option("--seed", sweep_seed, "master seed");
  sweep->add_option("--epsilon", sweep_epsilon,
                    "target optimality scale; <= 0 derives (d/N)^0.25 per cell");
  sweep->add_option("--alpha", sweep_alpha, "confidence radius multiplier");
  sweep->add_option("--threads", threads,
                    "worker count (overrides DUELRANK_THREADS)");
  sweep->add_option("-o,--output", sweep_out, "output CSV path")->required();

  // calibrate-alpha
  auto* cal = app.add_subcommand("calibrate-alpha",
                                 "empirical confidence-radius calibration");
  InstanceConfig cal_cfg;
  std::string cal_profile = "geometric";
  int cal_reps = 100, cal_N = 4000;
  std::uint64_t cal_seed = 0;
  double cal_epsilon = 0.5, cal_delta = 0.1;
  cal->add_option("--d", cal_cfg.d, "ambient dimension");
  cal->add_option("--k", cal_cfg.k, "latent dimension");
  cal->add_option("--M", cal_cfg.M, "source task count");
  cal->add_option("--contexts", cal_cfg.n_contexts, "context count");
  cal->add_option("--actions", cal_cfg.n_actions, "action count");
  cal->add_option("--profile", cal_profile, "uniform|geometric|sparse")
      ->check(CLI::IsMember({"uniform", "geometric", "sparse"}));
  cal->add_option("--N", cal_N, "source budget per run");
  cal->add_option("--reps", cal_reps, "calibration runs");
  cal->add_option("--epsilon", cal_epsilon, "target optimality scale");
  cal->add_option("--delta", cal_delta, "failure probability");
  cal->add_option("--seed", cal_seed, "master seed");

  // summarize
  auto* summ = app.add_subcommand("summarize", "summarize a sweep CSV");
  std::string summ_csv;
  summ->add_option("csv", summ_csv, "sweep CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    cfg.relevance.kind = detail::relevance_kind_from(profile);
    const MultiTaskInstance inst = generate_instance(cfg);
    write_json_file(gen_out, to_json(inst));
    std::cout << "wrote " << gen_out << "\n";
    return 0;
  }
  if (run_k->parsed()) {
    const MultiTaskInstance inst =
        instance_from_json(read_json_file(known_flags.instance_path));
    AlgorithmParams params;
    known_flags.apply(&params);
    params.budgets.N = known_N;
    const RunReport rep = run_known(inst, params);
    write_json_file(known_flags.output_path, to_json(rep));
    std::cout << "subopt=" << rep.subopt << " err_h=" << rep.err_h << "\n";
    return 0;
  }
  if (run_a->parsed()) {
    const MultiTaskInstance inst =
        instance_from_json(read_json_file(active_flags.instance_path));
    AlgorithmParams params;
    active_flags.apply(&params);
    params.budgets = active_budgets;
    params.beta = beta;
    params.R = R;
    params.oracle_beta = oracle_beta;
    params.oracle_R = oracle_R;
    params.lambda_from = lambda_from == "phase1" ? LambdaSource::kPhase1
                                                 : LambdaSource::kAll;
    const RunReport rep = run_active(inst, params);
    write_json_file(active_flags.output_path, to_json(rep));
    std::cout << "subopt=" << rep.subopt << " err_h=" << rep.err_h
              << " nu_l1=" << rep.nu_l1 << "\n";
    return 0;
  }
  if (sweep->parsed()) {
    const MultiTaskInstance inst =
        instance_from_json(read_json_file(sweep_instance));
    SweepSpec spec;
    spec.budget_grid = parse_grid(grid);
    spec.reps = reps;
    spec.algo = sweep_algo == "known" ? SweepAlgo::kKnown : SweepAlgo::kActive;
    spec.master_seed = sweep_seed;
    spec.threads = threads;
    spec.params.epsilon = sweep_epsilon;
    spec.params.alpha = sweep_alpha;
    std::ofstream out(sweep_out);
    if (!out) throw std::runtime_error("cannot open " + sweep_out);
    out << kCsvHeader << "\n";
    out.flush();
    run_sweep(inst, spec, &out);
    std::cout << "wrote " << sweep_out << "\n";
    return 0;
  }
  if (cal->parsed()) {
    cal_cfg.relevance.kind = detail::relevance_kind_from(cal_profile);
    AlgorithmParams params;
    params.seed = cal_seed;
    params.epsilon = cal_epsilon;
    params.delta = cal_delta;
    params.budgets.N = cal_N;
    const double alpha = calibrate_alpha(cal_cfg, params, cal_reps).alpha;
    std::cout << "alpha=" << alpha << "\n";
    return 0;
  }
  if (summ->parsed()) {
    const SummaryTable table = summarize(parse_csv_file(summ_csv));
    std::cout << "algo,N,count,subopt_median,subopt_iqr,err_h_median,err_h_iqr\n";
    for (const auto& cell : table.cells)
      std::cout << cell.algo << ',' << cell.N << ',' << cell.count << ','
                << cell.subopt_median << ',' << cell.subopt_iqr << ','
                << cell.err_h_median << ',' << cell.err_h_iqr << "\n";
    for (const auto& [algo, slope] : table.slope)
      std::cout << "slope[" << algo << "]=" << slope << "\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
