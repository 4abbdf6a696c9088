#include "cllmix/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "cllmix/error.hpp"

namespace cllmix {

namespace fs = std::filesystem;

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

ResponseMatrix parse_responses(std::istream& in, const std::string& source) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) {
      // Blank lines are skipped.
      continue;
    }
    const auto cells = split_row(line);
    if (first) {
      first = false;
      width = cells.size();
      bool header = false;
      for (const auto& c : cells) header = header || !is_number(c);
      if (header) {
        std::set<std::string> seen;
        for (std::size_t c = 0; c < cells.size(); ++c) {
          if (cells[c].empty()) {
            throw DataError(source + ": header column " + std::to_string(c + 1) + " has an empty item name");
          }
          if (!seen.insert(cells[c]).second) {
            throw DataError(source + ": duplicate item name '" + cells[c] + "' in header");
          }
        }
        names = cells;
        continue;
      }
    }
    const int row = static_cast<int>(rows.size()) + 1;
    if (cells.size() != width) {
      throw DataError(source + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ") has " +
                      std::to_string(cells.size()) + " columns, expected " + std::to_string(width));
    }
    std::vector<double> values(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (cells[c] == "0") {
        values[c] = 0.0;
      } else if (cells[c] == "1") {
        values[c] = 1.0;
      } else {
        throw DataError(source + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                        ": value '" + cells[c] + "' is not 0 or 1");
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError(source + ": no response rows");
  Eigen::MatrixXd data(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < width; ++c) data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  }
  return ResponseMatrix(std::move(data), std::move(names));
}

ResponseMatrix read_responses(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("response file '" + path.string() + "' does not exist");
  auto in = open_input(path);
  return parse_responses(in, path.string());
}

void write_responses(const ResponseMatrix& responses, std::ostream& out) {
  const auto& names = responses.item_names();
  if (!names.empty()) {
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
    out << '\n';
  }
  const auto& y = responses.data();
  std::string row;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (j) row += ',';
      row += y(i, j) != 0.0 ? '1' : '0';
    }
    out << row << '\n';
  }
}

void write_responses(const ResponseMatrix& responses, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_responses(responses, out);
}

Support parse_support(std::istream& in, const std::vector<std::string>& item_names, int n_items,
                      const std::string& source) {
  Support out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto cells = split_row(line);
    const std::string where = source + ": line " + std::to_string(line_no);
    if (cells.size() != 2) throw DataError(where + ": expected 'item,class'");
    int item = -1;
    if (is_number(cells[0])) {
      item = std::stoi(cells[0]) - 1;
    } else {
      for (std::size_t j = 0; j < item_names.size(); ++j) {
        if (item_names[j] == cells[0]) item = static_cast<int>(j);
      }
      if (item < 0) throw DataError(where + ": unknown item '" + cells[0] + "'");
    }
    if (!is_number(cells[1])) throw DataError(where + ": class '" + cells[1] + "' is not a number");
    const int focal = std::stoi(cells[1]);
    if (item < 0 || item >= n_items) throw DataError(where + ": item index out of range");
    if (focal < 1) throw DataError(where + ": class must be a focal class (>= 1)");
    out.push_back({item, focal});
  }
  return normalize(std::move(out));
}

Support read_support(const fs::path& path, const std::vector<std::string>& item_names, int n_items) {
  auto in = open_input(path);
  return parse_support(in, item_names, n_items, path.string());
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

Json real(double x) {
  if (std::isfinite(x)) return x;
  return format_real(x);
}

double get_real(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw DataError("expected a real number, got " + j.dump());
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw DataError(std::string("expected an object holding '") + key + "'");
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("field '") + key + "': " + e.what());
  }
}

double get_real(const Json& j, const char* key) { return get_real(field(j, key)); }

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(real(v(i)));
  return a;
}

Json ivec(const Eigen::VectorXi& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json mat(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::VectorXd get_vec(const Json& j) {
  if (!j.is_array()) throw DataError("expected an array, got " + j.dump().substr(0, 40));
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_real(j[i]);
  return v;
}

Eigen::VectorXi get_ivec(const Json& j) {
  if (!j.is_array()) throw DataError("expected an array");
  Eigen::VectorXi v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<int>();
  return v;
}

Eigen::MatrixXd get_mat(const Json& j) {
  const auto rows = get<Eigen::Index>(j, "rows");
  const auto cols = get<Eigen::Index>(j, "cols");
  const Json& data = field(j, "data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows) throw DataError("matrix row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd r = get_vec(data[static_cast<std::size_t>(i)]);
    if (r.size() != cols) throw DataError("matrix column count mismatch");
    m.row(i) = r.transpose();
  }
  return m;
}

Json support_json(const Support& s) {
  Json a = Json::array();
  for (const auto& c : s) a.push_back(Json::array({c.item, c.focal}));
  return a;
}

Support get_support(const Json& j) {
  if (!j.is_array()) throw DataError("support must be an array");
  Support s;
  for (const auto& c : j) {
    if (!c.is_array() || c.size() != 2) throw DataError("support entries must be [item, class]");
    s.push_back({c[0].get<int>(), c[1].get<int>()});
  }
  return s;
}

Json reals(const std::vector<double>& v) {
  Json a = Json::array();
  for (const double x : v) a.push_back(real(x));
  return a;
}

std::vector<double> get_reals(const Json& j) {
  if (!j.is_array()) throw DataError("expected an array of reals");
  std::vector<double> v;
  for (const auto& x : j) v.push_back(get_real(x));
  return v;
}

Json opt_real(const std::optional<double>& x) { return x ? real(*x) : Json(nullptr); }

std::optional<double> get_opt_real(const Json& j, const char* key) {
  const Json& f = field(j, key);
  if (f.is_null()) return std::nullopt;
  return get_real(f);
}

Json param_error(const ParamError& e) { return {{"bias", real(e.bias)}, {"rmse", real(e.rmse)}, {"n", e.n}}; }

ParamError get_param_error(const Json& j) {
  return {get_real(j, "bias"), get_real(j, "rmse"), get<int>(j, "n")};
}

Json param_errors(const std::vector<ParamError>& v) {
  Json a = Json::array();
  for (const auto& e : v) a.push_back(param_error(e));
  return a;
}

std::vector<ParamError> get_param_errors(const Json& j) {
  if (!j.is_array()) throw DataError("expected an array of error summaries");
  std::vector<ParamError> v;
  for (const auto& e : j) v.push_back(get_param_error(e));
  return v;
}

}  // namespace

Json to_json(const ModelParams& p) {
  return {{"d", vec(p.d())}, {"delta", mat(p.delta())}, {"nu", vec(p.nu())}, {"mu", vec(p.mu())},
          {"sigma", vec(p.sigma())}};
}

ModelParams params_from_json(const Json& j) {
  try {
    return ModelParams(get_vec(field(j, "d")), get_mat(field(j, "delta")), get_vec(field(j, "nu")),
                       get_vec(field(j, "mu")), get_vec(field(j, "sigma")));
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid parameters: ") + e.what());
  }
}

Json to_json(const FitResult& r) {
  return {{"params", to_json(r.params)},
          {"lambda", real(r.lambda)},
          {"loglik", real(r.loglik)},
          {"penalized_objective", real(r.penalized_objective)},
          {"support", support_json(r.support)},
          {"n_outer_iters", r.n_outer_iters},
          {"converged", r.converged},
          {"trace", reals(r.trace)},
          {"loglik_trace", reals(r.loglik_trace)},
          {"exhausted_iterations", r.exhausted_iterations},
          {"start_index", r.start_index},
          {"class_collapse", r.class_collapse},
          {"n_respondents", r.n_respondents},
          {"item_names", r.item_names}};
}

FitResult fit_from_json(const Json& j) {
  FitResult r{.params = params_from_json(field(j, "params"))};
  r.lambda = get_real(j, "lambda");
  r.loglik = get_real(j, "loglik");
  r.penalized_objective = get_real(j, "penalized_objective");
  r.support = get_support(field(j, "support"));
  r.n_outer_iters = get<int>(j, "n_outer_iters");
  r.converged = get<bool>(j, "converged");
  r.trace = get_reals(field(j, "trace"));
  r.loglik_trace = get_reals(field(j, "loglik_trace"));
  r.exhausted_iterations = get<std::vector<int>>(j, "exhausted_iterations");
  r.start_index = get<int>(j, "start_index");
  r.class_collapse = get<bool>(j, "class_collapse");
  r.n_respondents = get<int>(j, "n_respondents");
  r.item_names = get<std::vector<std::string>>(j, "item_names");
  return r;
}

Json to_json(const PathResult& r) {
  Json points = Json::array();
  for (const auto& p : r.points) {
    points.push_back({{"lambda", real(p.lambda)},
                      {"penalized_fit", to_json(p.penalized)},
                      {"support", support_json(p.support)},
                      {"refit", to_json(p.refit)},
                      {"bic", real(p.bic)},
                      {"refit_ok", p.refit_ok}});
  }
  return {{"n_focal", r.n_focal}, {"lambdas", reals(r.lambdas)}, {"per_lambda", points},
          {"selected_index", r.selected_index}};
}

PathResult path_from_json(const Json& j) {
  PathResult r;
  r.n_focal = get<int>(j, "n_focal");
  r.lambdas = get_reals(field(j, "lambdas"));
  for (const auto& p : field(j, "per_lambda")) {
    r.points.push_back(PathPoint{get_real(p, "lambda"), fit_from_json(field(p, "penalized_fit")),
                                 get_support(field(p, "support")), fit_from_json(field(p, "refit")),
                                 get_real(p, "bic"), get<bool>(p, "refit_ok")});
  }
  r.selected_index = get<int>(j, "selected_index");
  if (r.points.empty() || r.selected_index < 0 || r.selected_index >= static_cast<int>(r.points.size())) {
    throw DataError("path result: selected_index out of range");
  }
  return r;
}

Json to_json(const SelectKResult& r) {
  Json paths = Json::array();
  for (const auto& p : r.paths) paths.push_back(to_json(p));
  return {{"candidates", r.candidates}, {"paths", paths}, {"best", r.best}};
}

SelectKResult select_k_from_json(const Json& j) {
  SelectKResult r;
  r.candidates = get<std::vector<int>>(j, "candidates");
  for (const auto& p : field(j, "paths")) r.paths.push_back(path_from_json(p));
  r.best = get<int>(j, "best");
  if (r.paths.size() != r.candidates.size() || r.best < 0 || r.best >= static_cast<int>(r.paths.size())) {
    throw DataError("select-k result: inconsistent candidate list");
  }
  return r;
}

Json to_json(const SimDesign& d) {
  return {{"design", to_string(d.design)},
          {"n", d.n},
          {"n_items", d.n_items},
          {"pi", real(d.pi_focal)},
          {"n_dif_items", d.n_dif_items},
          {"dif_range", {real(d.dif_range.lo), real(d.dif_range.hi)}},
          {"d_range", {real(d.d_range.lo), real(d.d_range.hi)}},
          {"focal_mu", real(d.focal_mu)},
          {"focal_sigma", real(d.focal_sigma)},
          {"seed", d.seed}};
}

SimDesign design_from_json(const Json& j) {
  SimDesign d;
  try {
    d.design = parse_design(get<std::string>(j, "design"));
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  d.n = get<int>(j, "n");
  d.n_items = get<int>(j, "n_items");
  d.pi_focal = get_real(j, "pi");
  d.n_dif_items = get<int>(j, "n_dif_items");
  const Json& dr = field(j, "dif_range");
  const Json& br = field(j, "d_range");
  d.dif_range = {get_real(dr.at(0)), get_real(dr.at(1))};
  d.d_range = {get_real(br.at(0)), get_real(br.at(1))};
  d.focal_mu = get_real(j, "focal_mu");
  d.focal_sigma = get_real(j, "focal_sigma");
  d.seed = get<std::uint64_t>(j, "seed");
  return d;
}

Json to_json(const SimTruth& t) {
  return {{"params", to_json(t.params)}, {"class_labels", ivec(t.class_labels)}, {"thetas", vec(t.thetas)}};
}

SimTruth truth_from_json(const Json& j) {
  return SimTruth{params_from_json(field(j, "params")), get_ivec(field(j, "class_labels")),
                  get_vec(field(j, "thetas"))};
}

Json to_json(const ReplicationRecord& r) {
  return {{"design", to_json(r.design)},
          {"replication_index", r.replication_index},
          {"seed", r.seed},
          {"truth", to_json(r.truth)},
          {"estimate", to_json(r.estimate)},
          {"selected_lambda", real(r.selected_lambda)},
          {"bic", real(r.bic)},
          {"focal_score", vec(r.focal_score)},
          {"map_class", ivec(r.map_class)}};
}

ReplicationRecord record_from_json(const Json& j) {
  return ReplicationRecord{design_from_json(field(j, "design")),
                           get<int>(j, "replication_index"),
                           get<std::uint64_t>(j, "seed"),
                           truth_from_json(field(j, "truth")),
                           fit_from_json(field(j, "estimate")),
                           get_real(j, "selected_lambda"),
                           get_real(j, "bic"),
                           get_vec(field(j, "focal_score")),
                           get_ivec(field(j, "map_class"))};
}

Json to_json(const AggregateReport& r) {
  Json roc = Json::array();
  for (const auto& p : r.roc) roc.push_back({real(p.fpr), real(p.tpr)});
  return {{"design", to_string(r.design)},
          {"n", r.n},
          {"pi", real(r.pi)},
          {"n_reps", r.n_reps},
          {"d", param_errors(r.errors.d)},
          {"delta", param_errors(r.errors.delta)},
          {"pi_hat", param_error(r.errors.pi)},
          {"mu1", param_error(r.errors.mu1)},
          {"sigma1", param_error(r.errors.sigma1)},
          {"tpr", opt_real(r.tpr)},
          {"fpr", real(r.fpr)},
          {"classification_error", real(r.classification_error)},
          {"auc", opt_real(r.auc)},
          {"naive_error", real(r.naive_error)},
          {"roc", roc}};
}

AggregateReport report_from_json(const Json& j) {
  AggregateReport r;
  try {
    r.design = parse_design(get<std::string>(j, "design"));
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  r.n = get<int>(j, "n");
  r.pi = get_real(j, "pi");
  r.n_reps = get<int>(j, "n_reps");
  r.errors.d = get_param_errors(field(j, "d"));
  r.errors.delta = get_param_errors(field(j, "delta"));
  r.errors.pi = get_param_error(field(j, "pi_hat"));
  r.errors.mu1 = get_param_error(field(j, "mu1"));
  r.errors.sigma1 = get_param_error(field(j, "sigma1"));
  r.tpr = get_opt_real(j, "tpr");
  r.fpr = get_real(j, "fpr");
  r.classification_error = get_real(j, "classification_error");
  r.auc = get_opt_real(j, "auc");
  r.naive_error = get_real(j, "naive_error");
  for (const auto& p : field(j, "roc")) r.roc.push_back({get_real(p.at(0)), get_real(p.at(1))});
  return r;
}

Json to_json(const RunInfo& r) {
  return {{"grid_points", r.grid_points}, {"seed", r.seed}, {"seed_rule", r.seed_rule}};
}

RunInfo run_info_from_json(const Json& j) {
  return {get<int>(j, "grid_points"), get<std::uint64_t>(j, "seed"), get<std::string>(j, "seed_rule")};
}

Json envelope(const std::string& format, Json payload, const std::optional<RunInfo>& info) {
  Json doc = {{"format", format}, {"schema_version", kSchemaVersion}};
  if (info) doc["run"] = to_json(*info);
  doc["result"] = std::move(payload);
  return doc;
}

const Json& open_envelope(const Json& doc, const std::string& format) {
  if (!doc.is_object() || !doc.contains("format") || !doc.contains("schema_version")) {
    throw SchemaError("not a cllmix result file (missing format or schema_version)");
  }
  const auto found = doc["format"].get<std::string>();
  if (found != format) throw SchemaError("expected a '" + format + "' file, found '" + found + "'");
  const auto version = doc["schema_version"].get<int>();
  if (version != kSchemaVersion) {
    throw SchemaError("schema version " + std::to_string(version) + " is not supported (this build reads version " +
                      std::to_string(kSchemaVersion) + ")");
  }
  return field(doc, "result");
}

Json read_json(const fs::path& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string dump(const Json& doc) { return doc.dump(1) + "\n"; }

void write_json(const Json& doc, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << dump(doc);
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

namespace {

template <typename F>
auto read_payload(const fs::path& path, const std::string& format, F&& parse) {
  const Json doc = read_json(path);
  try {
    return parse(open_envelope(doc, format));
  } catch (const SchemaError&) {
    throw;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_fit(const FitResult& r, const fs::path& path, const std::optional<RunInfo>& info) {
  write_json(envelope("fit", to_json(r), info), path);
}

FitResult read_fit(const fs::path& path) { return read_payload(path, "fit", fit_from_json); }

void write_path(const PathResult& r, const fs::path& path, const std::optional<RunInfo>& info) {
  write_json(envelope("path", to_json(r), info), path);
}

PathResult read_path(const fs::path& path) { return read_payload(path, "path", path_from_json); }

void write_truth(const SimTruth& t, const SimDesign& design, const fs::path& path) {
  Json payload = to_json(t);
  payload["design"] = to_json(design);
  write_json(envelope("truth", payload), path);
}

SimTruth read_truth(const fs::path& path) { return read_payload(path, "truth", truth_from_json); }

// ---------------------------------------------------------------------------
// Exports

ExportStyle parse_export_style(const std::string& s) {
  if (s == "table2") return ExportStyle::kTable2;
  if (s == "table3") return ExportStyle::kTable3;
  if (s == "itemgrid") return ExportStyle::kItemGrid;
  if (s == "roc") return ExportStyle::kRoc;
  throw UsageError("unknown export style '" + s + "' (expected table2, table3, itemgrid or roc)");
}

std::string to_string(ExportStyle s) {
  switch (s) {
    case ExportStyle::kTable2: return "table2";
    case ExportStyle::kTable3: return "table3";
    case ExportStyle::kItemGrid: return "itemgrid";
    case ExportStyle::kRoc: return "roc";
  }
  return "?";
}

namespace {

using CellKey = std::tuple<Design, int, double>;

std::string cell_name(Design d, int n, double pi) {
  return to_string(d) + "/N=" + std::to_string(n) + "/pi=" + format_real(pi);
}

// Reports indexed by (design, N, pi), checked to cover the N x pi grid of
// every design present.
std::map<CellKey, const AggregateReport*> index_grid(const std::vector<AggregateReport>& reports,
                                                     std::map<Design, std::pair<std::set<int>, std::set<double>>>& axes) {
  if (reports.empty()) throw UsageError("export: no reports");
  std::map<CellKey, const AggregateReport*> cells;
  for (const auto& r : reports) {
    if (!cells.emplace(CellKey{r.design, r.n, r.pi}, &r).second) {
      throw UsageError("export: duplicate report for cell " + cell_name(r.design, r.n, r.pi));
    }
    axes[r.design].first.insert(r.n);
    axes[r.design].second.insert(r.pi);
  }
  // Every design is exported against the union of pi values so that rows of
  // different designs share one header.
  std::set<double> all_pi;
  for (const auto& [design, ax] : axes) all_pi.insert(ax.second.begin(), ax.second.end());
  for (auto& [design, ax] : axes) ax.second = all_pi;
  std::string missing;
  for (const auto& [design, ax] : axes) {
    for (const int n : ax.first) {
      for (const double pi : ax.second) {
        if (!cells.count({design, n, pi})) missing += (missing.empty() ? "" : ", ") + cell_name(design, n, pi);
      }
    }
  }
  if (!missing.empty()) throw UsageError("export: report grid is incomplete; missing " + missing);
  return cells;
}

std::string opt_cell(const std::optional<double>& x) { return x ? format_real(*x) : "NA"; }

}  // namespace

void export_tables(const std::vector<AggregateReport>& reports, ExportStyle style, std::ostream& out) {
  if (style == ExportStyle::kRoc) {
    if (reports.size() != 1) throw UsageError("export: roc style takes exactly one report");
    const auto& r = reports.front();
    if (r.roc.empty()) throw UsageError("export: report " + cell_name(r.design, r.n, r.pi) + " has no ROC points");
    out << "fpr,tpr\n";
    for (const auto& p : r.roc) out << format_real(p.fpr) << ',' << format_real(p.tpr) << '\n';
    return;
  }

  std::map<Design, std::pair<std::set<int>, std::set<double>>> axes;
  const auto cells = index_grid(reports, axes);

  if (style == ExportStyle::kItemGrid) {
    std::string missing;
    for (const auto& [key, r] : cells) {
      if (r->errors.d.empty() || r->errors.delta.size() != r->errors.d.size()) {
        missing += (missing.empty() ? "" : ", ") + cell_name(r->design, r->n, r->pi);
      }
    }
    if (!missing.empty()) throw UsageError("export: item errors missing for " + missing);
    out << "design,N,pi,parameter,item,bias,rmse\n";
    for (const auto& [key, r] : cells) {
      for (const auto* name : {"d", "delta"}) {
        const auto& v = std::string(name) == "d" ? r->errors.d : r->errors.delta;
        for (std::size_t j = 0; j < v.size(); ++j) {
          out << to_string(r->design) << ',' << r->n << ',' << format_real(r->pi) << ',' << name << ',' << j + 1
              << ',' << format_real(v[j].bias) << ',' << format_real(v[j].rmse) << '\n';
        }
      }
    }
    return;
  }

  for (const auto& [design, ax] : axes) {
    if (style == ExportStyle::kTable2) {
      std::string missing;
      for (const auto& [key, r] : cells) {
        if (std::get<0>(key) == design && (r->errors.mu1.n == 0 || r->errors.sigma1.n == 0)) {
          missing += (missing.empty() ? "" : ", ") + cell_name(r->design, r->n, r->pi);
        }
      }
      if (!missing.empty()) throw UsageError("export: structural estimates missing for " + missing);
    }
  }

  const bool t2 = style == ExportStyle::kTable2;
  bool header_done = false;
  for (const auto& [design, ax] : axes) {
    if (!header_done) {
      out << "design,N," << (t2 ? "parameter" : "metric");
      for (const double pi : ax.second) {
        if (t2) {
          out << ",bias_pi=" << format_real(pi) << ",rmse_pi=" << format_real(pi);
        } else {
          out << ",pi=" << format_real(pi);
        }
      }
      out << '\n';
      header_done = true;
    }
    for (const int n : ax.first) {
      if (t2) {
        for (const auto* param : {"pi", "mu1", "sigma1"}) {
          out << to_string(design) << ',' << n << ',' << param;
          for (const double pi : ax.second) {
            const AggregateReport& r = *cells.at({design, n, pi});
            const ParamError& e = std::string(param) == "pi" ? r.errors.pi
                                  : std::string(param) == "mu1" ? r.errors.mu1
                                                                : r.errors.sigma1;
            out << ',' << format_real(e.bias) << ',' << format_real(e.rmse);
          }
          out << '\n';
        }
      } else {
        for (const auto* metric : {"error", "naive", "auc", "tpr", "fpr"}) {
          out << to_string(design) << ',' << n << ',' << metric;
          const std::string m = metric;
          for (const double pi : ax.second) {
            const AggregateReport& r = *cells.at({design, n, pi});
            std::string v;
            if (m == "error") v = format_real(r.classification_error);
            else if (m == "naive") v = format_real(r.naive_error);
            else if (m == "auc") v = opt_cell(r.auc);
            else if (m == "tpr") v = opt_cell(r.tpr);
            else v = format_real(r.fpr);
            out << ',' << v;
          }
          out << '\n';
        }
      }
    }
  }
}

void export_tables(const std::vector<AggregateReport>& reports, ExportStyle style, const fs::path& path) {
  std::ostringstream buf;
  export_tables(reports, style, buf);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << buf.str();
}

}  // namespace cllmix
