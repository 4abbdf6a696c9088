#pragma once

// Monte Carlo replication study.
//
// Manifest format (key = value, '#' comments, first line "cllmix-manifest 1"):
//
//   cllmix-manifest 1
//   designs = A, B          # cross product designs x n x pi
//   n = 500, 1000, 3000
//   pi = 0.1, 0.3, 0.5
//   reps = 100
//   n_items = 25
//   k_fit = 1
//   path_m = 30
//   master_seed = 2024
//   output_dir = study
//   starts = 5
//   max_iter = 500
//   tol = 1e-7
//   step_init = 0.1
//   grid_points = 61
//
// Output layout under output_dir:
//   reps/<cell>/rep_0001.json    one ReplicationRecord per replication
//   reps/<cell>/rep_0001.failed  error text when a replication threw
//   summary.json                 AggregateReport per cell
//   table2.csv table3.csv itemgrid.csv roc_<cell>.csv

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cllmix/em.hpp"
#include "cllmix/io.hpp"
#include "cllmix/metrics.hpp"
#include "cllmix/quadrature.hpp"
#include "cllmix/simulate.hpp"

namespace cllmix {

inline constexpr int kManifestVersion = 1;

struct StudyManifest {
  std::vector<SimDesign> cells;  // seeds are assigned per replication
  int n_replications = 100;
  int k_fit = 1;
  int path_m = 30;
  std::uint64_t master_seed = 0;
  std::string output_dir = "study";
  FitOptions fit;
  int grid_points = kDefaultGridPoints;
};

StudyManifest parse_manifest(std::istream& in, const std::string& source = "<stream>");
StudyManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const StudyManifest& m);

// "A_N1000_pi0.3"
std::string cell_label(const SimDesign& cell);

// Depends on the cell's contents and the replication index only, so adding
// or reordering cells leaves existing replications unchanged.
std::uint64_t replication_seed(std::uint64_t master, const SimDesign& cell, int rep);
inline constexpr const char* kSeedRule =
    "derive_seed(derive_seed(master, cell_key), rep); cell_key hashes design, N, J, pi";

// Simulates, runs the two-stage path at K = k_fit and records the selected
// refit with posterior classifications. `rep` is 1-based.
ReplicationRecord run_replication(const SimDesign& cell, int rep, const StudyManifest& m,
                                  const QuadratureGrid& grid);

struct StudyOptions {
  int threads = 1;
  bool resume = true;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct StudySummary {
  std::vector<AggregateReport> reports;  // manifest cell order
  int n_run = 0;
  int n_skipped = 0;
  int n_failed = 0;
};

StudySummary run_study(const StudyManifest& m, const StudyOptions& opts);

// Rebuilds the reports from the replication files of a finished study.
std::vector<AggregateReport> summarize_study(const StudyManifest& m);

// Writes summary.json and the table exports for `reports` into `dir`.
// Exports that do not apply (e.g. table2 without focal classes) are skipped
// and their reasons returned.
std::vector<std::string> write_study_outputs(const std::vector<AggregateReport>& reports,
                                             const std::filesystem::path& dir,
                                             const std::optional<RunInfo>& info = std::nullopt);

int default_thread_count();

}  // namespace cllmix
