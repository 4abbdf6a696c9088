#include "cllmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "cllmix/error.hpp"

namespace cllmix {

ParamError summarize_errors(const std::vector<double>& errors) {
  ParamError out;
  out.n = static_cast<int>(errors.size());
  if (errors.empty()) return out;
  double sum = 0.0, sq = 0.0;
  for (const double e : errors) {
    sum += e;
    sq += e * e;
  }
  out.bias = sum / out.n;
  out.rmse = std::sqrt(sq / out.n);
  return out;
}

DifRates dif_confusion(const Support& estimated, const Support& truth, const Support& all_pairs) {
  const std::set<DifCell> all(all_pairs.begin(), all_pairs.end());
  const std::set<DifCell> est(estimated.begin(), estimated.end());
  const std::set<DifCell> tru(truth.begin(), truth.end());
  for (const auto& c : est) {
    if (!all.count(c)) throw UsageError("estimated support holds a cell outside the item grid");
  }
  for (const auto& c : tru) {
    if (!all.count(c)) throw UsageError("true support holds a cell outside the item grid");
  }
  int hit = 0, false_pos = 0;
  for (const auto& c : est) (tru.count(c) ? hit : false_pos) += 1;
  DifRates out;
  if (!tru.empty()) out.tpr = static_cast<double>(hit) / static_cast<double>(tru.size());
  const auto nulls = all.size() - tru.size();
  out.fpr = nulls == 0 ? 0.0 : static_cast<double>(false_pos) / static_cast<double>(nulls);
  return out;
}

DifRates item_dif_rates(const Eigen::MatrixXd& estimated_delta, const Eigen::MatrixXd& true_delta) {
  if (estimated_delta.rows() != true_delta.rows()) {
    throw UsageError("estimate and truth disagree on the number of items");
  }
  const auto flagged = [](const Eigen::MatrixXd& m) {
    Support s;
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      if (m.cols() > 0 && (m.row(j).array() != 0.0).any()) s.push_back({static_cast<int>(j), 1});
    }
    return s;
  };
  return dif_confusion(flagged(estimated_delta), flagged(true_delta),
                       all_cells(static_cast<int>(true_delta.rows()), 1));
}

Eigen::VectorXi map_labels(const Eigen::MatrixXd& posterior) {
  Eigen::VectorXi out(posterior.rows());
  for (Eigen::Index i = 0; i < posterior.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < posterior.cols(); ++k) {
      if (posterior(i, k) > posterior(i, best)) best = k;
    }
    out(i) = static_cast<int>(best);
  }
  return out;
}

namespace {

double label_error(const Eigen::VectorXi& est, const Eigen::VectorXi& truth, int n_classes) {
  if (est.size() != truth.size()) throw UsageError("posterior and label lengths differ");
  if (est.size() == 0) throw UsageError("no respondents to classify");
  std::vector<int> perm(static_cast<std::size_t>(n_classes));
  std::iota(perm.begin(), perm.end(), 0);
  Eigen::Index best = est.size();
  // perm[0] stays 0: only focal labels are permuted.
  do {
    Eigen::Index wrong = 0;
    for (Eigen::Index i = 0; i < est.size(); ++i) wrong += perm[static_cast<std::size_t>(est(i))] != truth(i);
    best = std::min(best, wrong);
  } while (n_classes > 2 && std::next_permutation(perm.begin() + 1, perm.end()));
  return static_cast<double>(best) / static_cast<double>(est.size());
}

}  // namespace

double map_classify(const Eigen::MatrixXd& posterior, const Eigen::VectorXi& true_labels) {
  return label_error(map_labels(posterior), true_labels, static_cast<int>(posterior.cols()));
}

namespace {

void check_binary(const Eigen::VectorXd& scores, const Eigen::VectorXi& positive, Eigen::Index& n_pos,
                  Eigen::Index& n_neg) {
  if (scores.size() != positive.size()) throw UsageError("scores and labels differ in length");
  n_pos = 0;
  for (Eigen::Index i = 0; i < positive.size(); ++i) {
    if (positive(i) != 0 && positive(i) != 1) throw UsageError("AUC labels must be 0 or 1");
    if (!std::isfinite(scores(i))) throw UsageError("AUC scores must be finite");
    n_pos += positive(i);
  }
  n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UsageError("AUC needs both positive and negative labels");
}

std::vector<Eigen::Index> order_by_score(const Eigen::VectorXd& scores) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });
  return idx;
}

}  // namespace

double auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& positive) {
  Eigen::Index n_pos = 0, n_neg = 0;
  check_binary(scores, positive, n_pos, n_neg);
  const auto idx = order_by_score(scores);
  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores(idx[j + 1]) == scores(idx[i])) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (positive(idx[t])) rank_sum += mid;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

RocCurve roc(const Eigen::VectorXd& scores, const Eigen::VectorXi& positive) {
  RocCurve out;
  out.auc = auc(scores, positive);
  Eigen::Index n_pos = 0, n_neg = 0;
  check_binary(scores, positive, n_pos, n_neg);
  auto idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  out.points.push_back({0.0, 0.0});
  Eigen::Index tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores(idx[j]) == scores(idx[i])) {
      (positive(idx[j]) ? tp : fp) += 1;
      ++j;
    }
    out.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return out;
}

namespace {

double pi_hat(const ModelParams& p) { return p.n_focal() >= 1 ? p.nu()(1) : 0.0; }

double first_focal_delta(const ModelParams& p, int j) { return p.n_focal() >= 1 ? p.delta()(j, 0) : 0.0; }

void check_record(const ReplicationRecord& r) {
  const int J = r.truth.params.n_items();
  if (r.estimate.params.n_items() != J) {
    throw UsageError("replication " + std::to_string(r.replication_index) +
                     ": estimate and truth disagree on the number of items");
  }
  const auto n = r.truth.class_labels.size();
  if (r.focal_score.size() != n || r.map_class.size() != n) {
    throw UsageError("replication " + std::to_string(r.replication_index) +
                     ": classification vectors do not match the sample size");
  }
}

}  // namespace

ReplicationMetrics replication_metrics(const ReplicationRecord& r) {
  check_record(r);
  ReplicationMetrics m;
  m.dif = item_dif_rates(r.estimate.params.delta(), r.truth.params.delta());
  m.classification_error = label_error(r.map_class, r.truth.class_labels, r.estimate.params.n_classes());
  Eigen::VectorXi positive = (r.truth.class_labels.array() != 0).cast<int>();
  const auto n_pos = positive.sum();
  if (n_pos > 0 && n_pos < positive.size()) m.auc = auc(r.focal_score, positive);
  const double p = pi_hat(r.estimate.params);
  m.naive_error = std::min(p, 1.0 - p);
  return m;
}

BiasRmse bias_rmse(const std::vector<ReplicationRecord>& records) {
  if (records.empty()) throw UsageError("bias_rmse needs at least one replication");
  const int J = records.front().truth.params.n_items();
  std::vector<std::vector<double>> ed(J), edelta(J);
  std::vector<double> epi, emu, esigma;
  for (const auto& r : records) {
    check_record(r);
    if (r.truth.params.n_items() != J) throw UsageError("replications disagree on the number of items");
    const ModelParams& est = r.estimate.params;
    const ModelParams& tru = r.truth.params;
    for (int j = 0; j < J; ++j) {
      ed[j].push_back(est.d()(j) - tru.d()(j));
      edelta[j].push_back(first_focal_delta(est, j) - first_focal_delta(tru, j));
    }
    epi.push_back(pi_hat(est) - pi_hat(tru));
    if (est.n_focal() >= 1 && tru.n_focal() >= 1) {
      emu.push_back(est.mu()(1) - tru.mu()(1));
      esigma.push_back(est.sigma()(1) - tru.sigma()(1));
    }
  }
  BiasRmse out;
  for (int j = 0; j < J; ++j) {
    out.d.push_back(summarize_errors(ed[j]));
    out.delta.push_back(summarize_errors(edelta[j]));
  }
  out.pi = summarize_errors(epi);
  out.mu1 = summarize_errors(emu);
  out.sigma1 = summarize_errors(esigma);
  return out;
}

AggregateReport aggregate(const std::vector<ReplicationRecord>& records) {
  if (records.empty()) throw UsageError("aggregate needs at least one replication");
  const SimDesign& cell = records.front().design;
  AggregateReport out;
  out.design = cell.design;
  out.n = cell.n;
  out.pi = cell.pi_focal;
  out.n_reps = static_cast<int>(records.size());
  out.errors = bias_rmse(records);

  double tpr = 0.0, fpr = 0.0, err = 0.0, auc_sum = 0.0, naive = 0.0;
  int n_tpr = 0, n_auc = 0;
  Eigen::Index total = 0;
  for (const auto& r : records) {
    if (r.design.design != cell.design || r.design.n != cell.n || r.design.pi_focal != cell.pi_focal) {
      throw UsageError("aggregate: replications come from different design cells");
    }
    const ReplicationMetrics m = replication_metrics(r);
    if (m.dif.tpr) {
      tpr += *m.dif.tpr;
      ++n_tpr;
    }
    fpr += m.dif.fpr;
    err += m.classification_error;
    naive += m.naive_error;
    if (m.auc) {
      auc_sum += *m.auc;
      ++n_auc;
    }
    total += r.focal_score.size();
  }
  const double R = out.n_reps;
  if (n_tpr > 0) out.tpr = tpr / n_tpr;
  out.fpr = fpr / R;
  out.classification_error = err / R;
  out.naive_error = naive / R;
  if (n_auc > 0) out.auc = auc_sum / n_auc;

  Eigen::VectorXd scores(total);
  Eigen::VectorXi positive(total);
  Eigen::Index at = 0;
  for (const auto& r : records) {
    const auto n = r.focal_score.size();
    scores.segment(at, n) = r.focal_score;
    positive.segment(at, n) = (r.truth.class_labels.array() != 0).cast<int>();
    at += n;
  }
  const auto n_pos = positive.sum();
  if (n_pos > 0 && n_pos < total) out.roc = roc(scores, positive).points;
  return out;
}

}  // namespace cllmix
