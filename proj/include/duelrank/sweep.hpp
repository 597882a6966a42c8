#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "duelrank/pipelines.hpp"
#include "duelrank/summary.hpp"

namespace duelrank {

enum class SweepAlgo { kKnown, kActive };

struct SweepSpec {
  std::vector<int> budget_grid;  // total source budget per cell
  int reps = 1;
  SweepAlgo algo = SweepAlgo::kKnown;
  AlgorithmParams params;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0: DUELRANK_THREADS or hardware default
};

inline int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DUELRANK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline CsvRow report_to_row(const RunReport& rep, int N, int N_pre,
                            int n_target, int rep_index) {
  CsvRow row;
  row.algo = rep.algo;
  row.N = N;
  row.N_pre = N_pre;
  row.n_target = n_target;
  row.rep = rep_index;
  row.seed = rep.seed;
  row.subopt = rep.subopt;
  row.err_h = rep.err_h;
  row.err_2 = rep.err_2;
  row.nu_l1 = rep.nu_l1;
  row.policy_mode = policy_mode_name(rep.policy.method_tag);
  row.wall_ms = rep.wall_ms;
  return row;
}

// Budget grid x replications x {active, uniform}. Replications run on a
// worker pool; rows are written in deterministic (cell, rep, allocation)
// order and flushed per row so an interrupted sweep leaves a parseable
// prefix.
inline std::vector<CsvRow> run_sweep(const MultiTaskInstance& inst,
                                     const SweepSpec& spec,
                                     std::ostream* csv_out) {
  if (spec.budget_grid.empty()) throw std::invalid_argument("empty budget grid");
  if (spec.reps < 1) throw std::invalid_argument("reps must be >= 1");
  const int threads = resolve_thread_count(spec.threads);

  struct Job {
    int N, rep;
    AllocationMode allocation;
  };
  std::vector<Job> jobs;
  for (int N : spec.budget_grid)
    for (int rep = 0; rep < spec.reps; ++rep)
      for (AllocationMode mode :
           {AllocationMode::kActive, AllocationMode::kUniform})
        jobs.push_back({N, rep, mode});

  auto run_job = [&](const Job& job) {
    AlgorithmParams p = spec.params;
    p.allocation = job.allocation;
    // epsilon <= 0 requests a budget-matched accuracy scale so the
    // confidence-set radius shrinks as the grid grows instead of holding a
    // fixed degree of pessimism. With finitely many actions the realized
    // suboptimality responds superlinearly to the radius (a pessimism flip
    // only happens when the reward gap is already below radius-scale, so the
    // cost per flip shrinks with the radius too); a radius of (d/N)^(1/4)
    // makes the realized suboptimality track the N^(-1/2) estimation rate.
    if (p.epsilon <= 0.0)
      p.epsilon = std::pow(static_cast<double>(inst.config.d) / job.N, 0.25);
    // The child seed depends on (N, rep) only, so active and uniform see
    // identical data streams per cell and pair cleanly.
    p.seed = derive_seed(spec.master_seed,
                         static_cast<std::uint64_t>(job.N) * 1000003ULL +
                             static_cast<std::uint64_t>(job.rep));
    if (spec.algo == SweepAlgo::kKnown) {
      p.budgets.N = job.N;
      const RunReport rep = run_known(inst, p);
      return report_to_row(rep, job.N, 0, 0, job.rep);
    }
    p.budgets.N_s = job.N;
    const RunReport rep = run_active(inst, p);
    return report_to_row(rep, job.N, p.budgets.N_pre_s, p.budgets.n, job.rep);
  };

  std::vector<CsvRow> rows(jobs.size());
  if (threads <= 1) {
    for (size_t i = 0; i < jobs.size(); ++i) {
      rows[i] = run_job(jobs[i]);
      if (csv_out) {
        (*csv_out) << csv_line(rows[i]) << "\n";
        csv_out->flush();
      }
    }
    return rows;
  }

  // Chunks of `threads` jobs; the single writer flushes each finished chunk
  // in job order, so output order is independent of scheduling.
  for (size_t base = 0; base < jobs.size(); base += threads) {
    const size_t end = std::min(jobs.size(), base + threads);
    std::vector<std::future<CsvRow>> chunk;
    for (size_t i = base; i < end; ++i)
      chunk.push_back(std::async(std::launch::async, run_job, jobs[i]));
    for (size_t i = base; i < end; ++i) {
      rows[i] = chunk[i - base].get();
      if (csv_out) {
        (*csv_out) << csv_line(rows[i]) << "\n";
        csv_out->flush();
      }
    }
  }
  return rows;
}

}  // namespace duelrank
