#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cllmix/em.hpp"
#include "cllmix/params.hpp"
#include "cllmix/simulate.hpp"

namespace cllmix {

struct ParamError {
  double bias = 0.0;
  double rmse = 0.0;
  int n = 0;
  friend bool operator==(const ParamError&, const ParamError&) = default;
};

// bias = mean(e), rmse = sqrt(mean(e^2)).
ParamError summarize_errors(const std::vector<double>& errors);

struct DifRates {
  std::optional<double> tpr;  // absent when there is no true DIF
  double fpr = 0.0;
  friend bool operator==(const DifRates&, const DifRates&) = default;
};

DifRates dif_confusion(const Support& estimated, const Support& truth, const Support& all_pairs);

// Item-level detection: an item counts as flagged when any focal class
// carries a nonzero shift. Identical to dif_confusion when K = 1.
DifRates item_dif_rates(const Eigen::MatrixXd& estimated_delta, const Eigen::MatrixXd& true_delta);

// Row-wise argmax, ties to the lower class.
Eigen::VectorXi map_labels(const Eigen::MatrixXd& posterior);

// MAP error against 0-based true labels. With more than one focal class the
// estimated focal labels are matched to the truth by the error-minimising
// permutation; the reference label is never permuted.
double map_classify(const Eigen::MatrixXd& posterior, const Eigen::VectorXi& true_labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocCurve {
  double auc = 0.0;
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last, one step per distinct score
};

// Mann-Whitney AUC with midranks. Throws UsageError unless both labels occur.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& positive);
RocCurve roc(const Eigen::VectorXd& scores, const Eigen::VectorXi& positive);

// One fitted replication. `focal_score` is 1 - P(reference | y) and
// `map_class` the MAP label at the estimate, both per respondent.
struct ReplicationRecord {
  SimDesign design;
  int replication_index = 0;
  std::uint64_t seed = 0;
  SimTruth truth;
  FitResult estimate;
  double selected_lambda = 0.0;
  double bic = 0.0;
  Eigen::VectorXd focal_score;
  Eigen::VectorXi map_class;

  friend bool operator==(const ReplicationRecord& a, const ReplicationRecord& b) {
    return a.design == b.design && a.replication_index == b.replication_index && a.seed == b.seed &&
           a.truth == b.truth && a.estimate == b.estimate && a.selected_lambda == b.selected_lambda &&
           a.bic == b.bic && same_values(a.focal_score, b.focal_score) &&
           same_values(a.map_class, b.map_class);
  }
};

struct ReplicationMetrics {
  DifRates dif;
  double classification_error = 0.0;
  std::optional<double> auc;  // absent when the sample holds a single true class
  double naive_error = 0.0;   // min(pi_hat, 1 - pi_hat)
};

ReplicationMetrics replication_metrics(const ReplicationRecord& r);

// Per-item errors use the first focal column; an estimate without focal
// classes contributes pi_hat = 0 and delta_hat = 0 and is left out of the
// mu and sigma summaries.
struct BiasRmse {
  std::vector<ParamError> d;      // by item
  std::vector<ParamError> delta;  // by item
  ParamError pi;
  ParamError mu1;
  ParamError sigma1;
};

BiasRmse bias_rmse(const std::vector<ReplicationRecord>& records);

struct AggregateReport {
  Design design = Design::kA;
  int n = 0;
  double pi = 0.0;
  int n_reps = 0;
  BiasRmse errors;
  std::optional<double> tpr;
  double fpr = 0.0;
  double classification_error = 0.0;
  std::optional<double> auc;
  double naive_error = 0.0;
  std::vector<RocPoint> roc;  // pooled over replications
};

// Averages per-replication rates. All records must share one design cell.
AggregateReport aggregate(const std::vector<ReplicationRecord>& records);

}  // namespace cllmix
