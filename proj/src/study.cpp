#include "cllmix/study.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "cllmix/error.hpp"
#include "cllmix/io.hpp"
#include "cllmix/regpath.hpp"
#include "cllmix/rng.hpp"

namespace cllmix {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& where) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(where + ": '" + s + "' is not a valid number");
  }
  return v;
}

}  // namespace

StudyManifest parse_manifest(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  bool header = false;
  std::vector<Design> designs;
  std::vector<int> ns;
  std::vector<double> pis;
  int n_items = 25;
  StudyManifest m;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (!header) {
      if (line != "cllmix-manifest " + std::to_string(kManifestVersion)) {
        throw ConfigError(where + ": expected header 'cllmix-manifest " + std::to_string(kManifestVersion) + "'");
      }
      header = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.emplace(key, line_no).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    if (key == "designs") {
      for (const auto& d : split_list(value)) designs.push_back(parse_design(d));
    } else if (key == "n") {
      for (const auto& v : split_list(value)) ns.push_back(parse_number<int>(v, where));
    } else if (key == "pi") {
      for (const auto& v : split_list(value)) pis.push_back(parse_number<double>(v, where));
    } else if (key == "reps") {
      m.n_replications = parse_number<int>(value, where);
    } else if (key == "n_items") {
      n_items = parse_number<int>(value, where);
    } else if (key == "k_fit") {
      m.k_fit = parse_number<int>(value, where);
    } else if (key == "path_m") {
      m.path_m = parse_number<int>(value, where);
    } else if (key == "master_seed") {
      m.master_seed = parse_number<std::uint64_t>(value, where);
    } else if (key == "output_dir") {
      m.output_dir = value;
    } else if (key == "starts") {
      m.fit.n_starts = parse_number<int>(value, where);
    } else if (key == "max_iter") {
      m.fit.max_outer_iter = parse_number<int>(value, where);
    } else if (key == "tol") {
      m.fit.tol = parse_number<double>(value, where);
    } else if (key == "step_init") {
      m.fit.step_init = parse_number<double>(value, where);
    } else if (key == "grid_points") {
      m.grid_points = parse_number<int>(value, where);
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
  if (!header) throw ConfigError(source + ": empty manifest");
  if (designs.empty()) throw ConfigError(source + ": 'designs' is required");
  if (ns.empty()) throw ConfigError(source + ": 'n' is required");
  if (pis.empty()) throw ConfigError(source + ": 'pi' is required");
  if (m.n_replications < 1) throw ConfigError(source + ": reps must be at least 1");
  if (m.k_fit < 0) throw ConfigError(source + ": k_fit must be non-negative");
  if (m.path_m < 2) throw ConfigError(source + ": path_m must be at least 2");
  if (m.grid_points < 3) throw ConfigError(source + ": grid_points must be at least 3");
  validate(m.fit);
  if (m.fit.n_starts < 1) throw ConfigError(source + ": starts must be at least 1");
  for (const Design d : designs) {
    if (d == Design::kCustom) throw ConfigError(source + ": custom designs cannot be used in a study");
    for (const int n : ns) {
      for (const double pi : pis) {
        SimDesign cell = d == Design::kA ? SimDesign::design_a(n, pi, 0) : SimDesign::design_b(n, pi, 0);
        cell.n_items = n_items;
        if (d == Design::kA) cell.n_dif_items = std::min(cell.n_dif_items, n_items);
        validate(cell);
        m.cells.push_back(cell);
      }
    }
  }
  return m;
}

StudyManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.string());
}

std::string format_manifest(const StudyManifest& m) {
  std::vector<std::string> designs;
  std::vector<int> ns;
  std::vector<double> pis;
  const auto add = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& c : m.cells) {
    add(designs, to_string(c.design));
    add(ns, c.n);
    add(pis, c.pi_focal);
  }
  std::ostringstream out;
  const auto join = [&](const auto& v, auto fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s;
  };
  out << "cllmix-manifest " << kManifestVersion << '\n';
  out << "designs = " << join(designs, [](const std::string& s) { return s; }) << '\n';
  out << "n = " << join(ns, [](int n) { return std::to_string(n); }) << '\n';
  out << "pi = " << join(pis, [](double p) { return format_real(p); }) << '\n';
  out << "reps = " << m.n_replications << '\n';
  out << "n_items = " << (m.cells.empty() ? 25 : m.cells.front().n_items) << '\n';
  out << "k_fit = " << m.k_fit << '\n';
  out << "path_m = " << m.path_m << '\n';
  out << "master_seed = " << m.master_seed << '\n';
  out << "output_dir = " << m.output_dir << '\n';
  out << "starts = " << m.fit.n_starts << '\n';
  out << "max_iter = " << m.fit.max_outer_iter << '\n';
  out << "tol = " << format_real(m.fit.tol) << '\n';
  out << "step_init = " << format_real(m.fit.step_init) << '\n';
  out << "grid_points = " << m.grid_points << '\n';
  return out.str();
}

std::string cell_label(const SimDesign& cell) {
  return to_string(cell.design) + "_N" + std::to_string(cell.n) + "_pi" + format_real(cell.pi_focal);
}

std::uint64_t replication_seed(std::uint64_t master, const SimDesign& cell, int rep) {
  std::uint64_t key = mix64(static_cast<std::uint64_t>(cell.design));
  key = mix64(key ^ static_cast<std::uint64_t>(cell.n));
  key = mix64(key ^ static_cast<std::uint64_t>(cell.n_items));
  key = mix64(key ^ std::bit_cast<std::uint64_t>(cell.pi_focal));
  return derive_seed(derive_seed(master, key), static_cast<std::uint64_t>(rep));
}

// ---------------------------------------------------------------------------
// Runner

ReplicationRecord run_replication(const SimDesign& cell, int rep, const StudyManifest& m,
                                  const QuadratureGrid& grid) {
  const std::uint64_t seed = replication_seed(m.master_seed, cell, rep);
  SimDesign design = cell;
  design.seed = seed;
  SimData data = generate(design);

  FitOptions opts = m.fit;
  opts.seed = seed;
  PathOptions po;
  po.n_lambdas = m.path_m;
  const PathResult path = two_stage_path(data.responses, m.k_fit, grid, opts, po);
  const PathPoint& sel = path.selected();

  const Eigen::MatrixXd post = class_posterior(sel.refit.params, data.responses, grid);
  Eigen::VectorXd focal_score = Eigen::VectorXd::Ones(post.rows()) - post.col(0);
  return ReplicationRecord{design,          rep,     seed,        std::move(data.truth), sel.refit,
                           sel.lambda,      sel.bic, focal_score, map_labels(post)};
}

namespace {

fs::path rep_dir(const StudyManifest& m, const SimDesign& cell) {
  return fs::path(m.output_dir) / "reps" / cell_label(cell);
}

std::string rep_stem(int rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%04d", rep);
  return buf;
}

std::optional<ReplicationRecord> load_record(const fs::path& file) {
  if (!fs::exists(file)) return std::nullopt;
  try {
    return record_from_json(open_envelope(read_json(file), "replication"));
  } catch (const std::exception&) {
    return std::nullopt;  // partial or foreign file: rerun
  }
}

struct Task {
  std::size_t cell;
  int rep;
};

}  // namespace

int default_thread_count() {
  if (const char* env = std::getenv("CLLMIX_THREADS")) {
    int v = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && v >= 1) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

StudySummary run_study(const StudyManifest& m, const StudyOptions& opts) {
  if (opts.threads < 1) throw UsageError("--threads must be at least 1");
  const QuadratureGrid grid = build_grid(m.grid_points);
  fs::create_directories(m.output_dir);
  {
    std::ofstream out(fs::path(m.output_dir) / "manifest.txt", std::ios::binary);
    out << format_manifest(m);
  }

  StudySummary summary;
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < m.cells.size(); ++c) {
    fs::create_directories(rep_dir(m, m.cells[c]));
    for (int r = 1; r <= m.n_replications; ++r) {
      const fs::path file = rep_dir(m, m.cells[c]) / (rep_stem(r) + ".json");
      if (opts.resume && load_record(file)) {
        ++summary.n_skipped;
        continue;
      }
      tasks.push_back({c, r});
    }
  }

  std::mutex log_mutex;
  const auto log = [&](const std::string& s) {
    if (!opts.log) return;
    std::lock_guard lock(log_mutex);
    opts.log(s);
  };
  if (summary.n_skipped > 0) log("resuming: " + std::to_string(summary.n_skipped) + " replications already done");

  std::atomic<std::size_t> next{0};
  std::atomic<int> done{0}, failed{0};
  const auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const SimDesign& cell = m.cells[tasks[t].cell];
      const int rep = tasks[t].rep;
      const fs::path dir = rep_dir(m, cell);
      const auto start = std::chrono::steady_clock::now();
      try {
        const ReplicationRecord rec = run_replication(cell, rep, m, grid);
        RunInfo info{m.grid_points, m.master_seed, kSeedRule};
        write_json(envelope("replication", to_json(rec), info), dir / (rep_stem(rep) + ".json"));
        fs::remove(dir / (rep_stem(rep) + ".failed"));
      } catch (const std::exception& e) {
        ++failed;
        std::ofstream(dir / (rep_stem(rep) + ".failed")) << e.what() << '\n';
        log(cell_label(cell) + " rep " + std::to_string(rep) + " failed: " + e.what());
        continue;
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[64];
      std::snprintf(buf, sizeof buf, " (%.1f s)", secs);
      log("[" + std::to_string(++done) + "/" + std::to_string(tasks.size()) + "] " + cell_label(cell) + " rep " +
          std::to_string(rep) + buf);
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::min<int>(opts.threads, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
    for (int i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
  }
  summary.n_run = done;
  summary.n_failed = failed;

  summary.reports = summarize_study(m);
  for (const auto& w : write_study_outputs(summary.reports, m.output_dir, RunInfo{m.grid_points, m.master_seed, kSeedRule})) log("note: " + w);
  return summary;
}

std::vector<AggregateReport> summarize_study(const StudyManifest& m) {
  std::vector<AggregateReport> reports;
  for (const auto& cell : m.cells) {
    std::vector<ReplicationRecord> records;
    for (int r = 1; r <= m.n_replications; ++r) {
      if (auto rec = load_record(rep_dir(m, cell) / (rep_stem(r) + ".json"))) records.push_back(std::move(*rec));
    }
    if (!records.empty()) reports.push_back(aggregate(records));
  }
  return reports;
}

std::vector<std::string> write_study_outputs(const std::vector<AggregateReport>& reports, const fs::path& dir,
                                             const std::optional<RunInfo>& info) {
  std::vector<std::string> skipped;
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_json(envelope("summary", arr, info), dir / "summary.json");
  if (reports.empty()) return {"no completed replications; tables not written"};
  for (const auto style : {ExportStyle::kTable2, ExportStyle::kTable3, ExportStyle::kItemGrid}) {
    try {
      export_tables(reports, style, dir / (to_string(style) + ".csv"));
    } catch (const UsageError& e) {
      skipped.push_back(to_string(style) + ": " + e.what());
    }
  }
  for (const auto& r : reports) {
    if (r.roc.empty()) continue;
    SimDesign cell;
    cell.design = r.design;
    cell.n = r.n;
    cell.pi_focal = r.pi;
    export_tables({r}, ExportStyle::kRoc, dir / ("roc_" + cell_label(cell) + ".csv"));
  }
  return skipped;
}

}  // namespace cllmix
