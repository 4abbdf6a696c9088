#pragma once

// File formats.
//
// Responses: UTF-8 CSV, comma separated, LF or CRLF. An optional first row
// of item names is recognised when any of its cells is not a number. Every
// data cell must be 0 or 1.
//
// Results: JSON objects tagged {"format": <kind>, "schema_version": 1}.
// Reals are written as shortest round-trip decimals; non-finite reals as the
// strings "inf", "-inf" and "nan". Matrices are arrays of rows.
//
// Support files: one "item,class" pair per line, both 1-based. The item may
// also be given by name. Blank lines and lines starting with '#' are skipped.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cllmix/em.hpp"
#include "cllmix/metrics.hpp"
#include "cllmix/params.hpp"
#include "cllmix/regpath.hpp"
#include "cllmix/simulate.hpp"

namespace cllmix {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

ResponseMatrix parse_responses(std::istream& in, const std::string& source = "<stream>");
ResponseMatrix read_responses(const std::filesystem::path& path);
void write_responses(const ResponseMatrix& responses, std::ostream& out);
void write_responses(const ResponseMatrix& responses, const std::filesystem::path& path);

Support parse_support(std::istream& in, const std::vector<std::string>& item_names, int n_items,
                      const std::string& source = "<stream>");
Support read_support(const std::filesystem::path& path, const std::vector<std::string>& item_names,
                     int n_items);

// Reproducibility details stored next to every result.
struct RunInfo {
  int grid_points = 0;
  std::uint64_t seed = 0;
  std::string seed_rule;
  friend bool operator==(const RunInfo&, const RunInfo&) = default;
};

Json to_json(const ModelParams& p);
ModelParams params_from_json(const Json& j);
Json to_json(const FitResult& r);
FitResult fit_from_json(const Json& j);
Json to_json(const PathResult& r);
PathResult path_from_json(const Json& j);
Json to_json(const SelectKResult& r);
SelectKResult select_k_from_json(const Json& j);
Json to_json(const SimDesign& d);
SimDesign design_from_json(const Json& j);
Json to_json(const SimTruth& t);
SimTruth truth_from_json(const Json& j);
Json to_json(const ReplicationRecord& r);
ReplicationRecord record_from_json(const Json& j);
Json to_json(const AggregateReport& r);
AggregateReport report_from_json(const Json& j);
Json to_json(const RunInfo& r);
RunInfo run_info_from_json(const Json& j);

// Wraps a payload with the format tag and schema version.
Json envelope(const std::string& format, Json payload, const std::optional<RunInfo>& info = std::nullopt);
// Checks tag and version; returns the payload. Throws SchemaError.
const Json& open_envelope(const Json& doc, const std::string& format);

Json read_json(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_json(const Json& doc, const std::filesystem::path& path);
std::string dump(const Json& doc);

void write_fit(const FitResult& r, const std::filesystem::path& path, const std::optional<RunInfo>& info = {});
FitResult read_fit(const std::filesystem::path& path);
void write_path(const PathResult& r, const std::filesystem::path& path, const std::optional<RunInfo>& info = {});
PathResult read_path(const std::filesystem::path& path);
void write_truth(const SimTruth& t, const SimDesign& design, const std::filesystem::path& path);
SimTruth read_truth(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Table exports

enum class ExportStyle { kTable2, kTable3, kItemGrid, kRoc };

ExportStyle parse_export_style(const std::string& s);
std::string to_string(ExportStyle s);

// table2: design,N,parameter then bias_pi=<p>,rmse_pi=<p> per pi.
// table3: design,N,metric then one value column per pi.
// itemgrid: design,N,pi,parameter,item,bias,rmse (long format).
// roc: fpr,tpr for a single report.
// Throws UsageError naming the missing cells when the reports do not cover
// the full N x pi grid of each design.
void export_tables(const std::vector<AggregateReport>& reports, ExportStyle style, std::ostream& out);
void export_tables(const std::vector<AggregateReport>& reports, ExportStyle style,
                   const std::filesystem::path& path);

// Shortest round-trip decimal for a real.
std::string format_real(double x);

}  // namespace cllmix
