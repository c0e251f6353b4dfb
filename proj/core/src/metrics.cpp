#include "gengap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "gengap/errors.hpp"
#include "gengap/numerics.hpp"

namespace gengap {

void PredictionMatrix::validate() const {
  if (num_points == 0) throw DomainError("prediction matrix has no points");
  if (num_classes < 2) throw DomainError("prediction matrix needs >= 2 classes");
  if (probs.size() != num_models() * num_points * num_classes) {
    throw ShapeError("prediction matrix size does not match its header");
  }
  for (std::size_t m = 0; m < num_models(); ++m) {
    for (std::size_t x = 0; x < num_points; ++x) {
      double s = 0.0;
      for (double v : at(m, x)) {
        if (!(v >= 0.0)) throw DomainError("negative or NaN probability");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        throw DomainError(fmt::format(
            "prediction row (model {}, point {}) sums to {:.12g}", m, x, s));
      }
    }
  }
}

PredictionMatrix predict_matrix(std::span<const Model> models,
                                const Tensor& eval, std::string eval_set_id) {
  if (eval.rank() != 2 || eval.rows() == 0) {
    throw DomainError("evaluation set is empty");
  }
  PredictionMatrix out;
  out.eval_set_id = std::move(eval_set_id);
  out.num_points = eval.rows();
  out.num_classes = models.empty() ? 2 : models.front().spec.num_classes;
  for (const auto& m : models) {
    if (m.spec.num_classes != out.num_classes) {
      throw ShapeError("models disagree on the number of classes");
    }
    auto p = predict_proba(m, eval);
    out.probs.insert(out.probs.end(), p.data().begin(), p.data().end());
    out.lineage.push_back(m.lineage);
  }
  return out;
}

std::vector<double> mean_prediction(
    std::span<const std::span<const double>> members) {
  if (members.empty()) throw DomainError("mean_prediction: empty group");
  const auto c = members.front().size();
  std::vector<double> out(c, 0.0);
  for (const auto& p : members) {
    if (p.size() != c) throw ShapeError("mean_prediction: length mismatch");
    for (std::size_t i = 0; i < c; ++i) out[i] += p[i];
  }
  const auto count = static_cast<double>(members.size());
  double s = 0.0;
  for (auto& v : out) {
    v /= count;
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) {
    for (auto& v : out) v /= s;
  }
  return out;
}

std::vector<double> mean_prediction(std::span<const Model> members,
                                    std::span<const double> x) {
  if (members.empty()) throw DomainError("mean_prediction: empty group");
  std::vector<std::vector<double>> rows;
  for (const auto& m : members) rows.push_back(predict_proba(m, x));
  std::vector<std::span<const double>> views(rows.begin(), rows.end());
  return mean_prediction(views);
}

namespace {

// Row indices grouped by training-set index k, in ascending k.
std::map<std::uint32_t, std::vector<std::size_t>> group_by_k(
    const PredictionMatrix& preds) {
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < preds.num_models(); ++r) {
    groups[preds.lineage[r].k].push_back(r);
  }
  return groups;
}

bool eligible(const PredictionMatrix& preds, std::size_t a, std::size_t b) {
  return a != b && preds.lineage[a].run_id != preds.lineage[b].run_id;
}

// Mean over points of d(row a, row b), reduced pairwise.
template <typename D>
double mean_over_points(const PredictionMatrix& preds, std::size_t a,
                        std::size_t b, D&& d) {
  std::vector<double> vals(preds.num_points);
  for (std::size_t x = 0; x < preds.num_points; ++x) {
    vals[x] = d(preds.at(a, x), preds.at(b, x));
  }
  return pairwise_sum(vals) / static_cast<double>(preds.num_points);
}

// Procedure-wise pair estimator: mean over k of the mean over eligible
// ordered pairs within group k.
template <typename D>
double within_group_estimate(const PredictionMatrix& preds, D&& d,
                             const char* what) {
  preds.validate();
  const auto groups = group_by_k(preds);
  if (groups.empty()) throw DegenerateInputError(fmt::format("{}: no models", what));
  std::vector<double> per_group;
  for (const auto& [k, rows] : groups) {
    if (rows.size() < 2) {
      throw DegenerateInputError(fmt::format(
          "{}: training set {} has fewer than two models", what, k));
    }
    std::vector<double> pair_vals;
    for (auto a : rows) {
      for (auto b : rows) {
        if (!eligible(preds, a, b)) continue;
        pair_vals.push_back(mean_over_points(preds, a, b, d));
      }
    }
    if (pair_vals.empty()) {
      throw DegenerateInputError(fmt::format(
          "{}: training set {} has no eligible pairs after same-run exclusion",
          what, k));
    }
    per_group.push_back(pairwise_sum(pair_vals) /
                        static_cast<double>(pair_vals.size()));
  }
  return pairwise_sum(per_group) / static_cast<double>(per_group.size());
}

// Mean prediction per group: groups x points x classes.
std::vector<std::vector<std::vector<double>>> group_means(
    const PredictionMatrix& preds) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& [k, rows] : group_by_k(preds)) {
    std::vector<std::vector<double>> means;
    for (std::size_t x = 0; x < preds.num_points; ++x) {
      std::vector<std::span<const double>> members;
      for (auto r : rows) members.push_back(preds.at(r, x));
      means.push_back(mean_prediction(members));
    }
    out.push_back(std::move(means));
  }
  return out;
}

template <typename D>
double between_group_estimate(const PredictionMatrix& preds, D&& d,
                              const char* what) {
  preds.validate();
  const auto means = group_means(preds);
  if (means.size() < 2) {
    throw DegenerateInputError(
        fmt::format("{}: needs at least two training sets", what));
  }
  std::vector<double> pair_vals;
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = 0; b < means.size(); ++b) {
      if (a == b) continue;
      std::vector<double> vals(preds.num_points);
      for (std::size_t x = 0; x < preds.num_points; ++x) {
        vals[x] = d(std::span<const double>(means[a][x]),
                    std::span<const double>(means[b][x]));
      }
      pair_vals.push_back(pairwise_sum(vals) /
                          static_cast<double>(preds.num_points));
    }
  }
  return pairwise_sum(pair_vals) / static_cast<double>(pair_vals.size());
}

double kl_rows(std::span<const double> p, std::span<const double> q) {
  return kl_div_unchecked(p, q);
}

double decision_differs(std::span<const double> p, std::span<const double> q) {
  return argmax(p) != argmax(q) ? 1.0 : 0.0;
}

double squared_l1(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s * s;
}

template <typename D>
double modelwise_estimate(const PredictionMatrix& preds, std::size_t row, D&& d,
                          const char* what) {
  preds.validate();
  if (row >= preds.num_models()) throw DomainError("model row out of range");
  std::vector<double> vals;
  for (std::size_t peer = 0; peer < preds.num_models(); ++peer) {
    if (preds.lineage[peer].k != preds.lineage[row].k) continue;
    if (!eligible(preds, peer, row)) continue;
    vals.push_back(mean_over_points(preds, peer, row, d));
  }
  if (vals.empty()) {
    throw DegenerateInputError(
        fmt::format("{}: model has no eligible peers", what));
  }
  return pairwise_sum(vals) / static_cast<double>(vals.size());
}

PredictionMatrix peer_matrix(const Model& model, std::span<const Model> peers,
                             const Tensor& eval) {
  std::vector<Model> all;
  all.push_back(model);
  all.back().lineage.k = 0;
  for (const auto& p : peers) {
    all.push_back(p);
    all.back().lineage.k = 0;
  }
  return predict_matrix(all, eval, "peers");
}

}  // namespace

double estimate_inconsistency(const PredictionMatrix& preds) {
  return within_group_estimate(preds, kl_rows, "inconsistency");
}

double estimate_instability(const PredictionMatrix& preds) {
  return between_group_estimate(preds, kl_rows, "instability");
}

double estimate_disagreement(const PredictionMatrix& preds) {
  return within_group_estimate(preds, decision_differs, "disagreement");
}

OneNormVariants one_norm_variants(const PredictionMatrix& preds) {
  OneNormVariants out;
  const auto attempt = [](auto&& f) -> std::optional<double> {
    try {
      return f();
    } catch (const DegenerateInputError&) {
      return std::nullopt;
    }
  };
  out.inconsistency = attempt(
      [&] { return within_group_estimate(preds, squared_l1, "1-norm inconsistency"); });
  out.instability = attempt(
      [&] { return between_group_estimate(preds, squared_l1, "1-norm instability"); });
  return out;
}

double modelwise_inconsistency(const PredictionMatrix& preds, std::size_t row) {
  return modelwise_estimate(preds, row, kl_rows, "model-wise inconsistency");
}

double modelwise_disagreement(const PredictionMatrix& preds, std::size_t row) {
  return modelwise_estimate(preds, row, decision_differs,
                            "model-wise disagreement");
}

double estimate_inconsistency(std::span<const Model> models, const Tensor& eval) {
  return estimate_inconsistency(predict_matrix(models, eval, "eval"));
}

double estimate_instability(std::span<const Model> models, const Tensor& eval) {
  return estimate_instability(predict_matrix(models, eval, "eval"));
}

double estimate_disagreement(std::span<const Model> models, const Tensor& eval) {
  return estimate_disagreement(predict_matrix(models, eval, "eval"));
}

OneNormVariants one_norm_variants(std::span<const Model> models,
                                  const Tensor& eval) {
  return one_norm_variants(predict_matrix(models, eval, "eval"));
}

double modelwise_inconsistency(const Model& model, std::span<const Model> peers,
                               const Tensor& eval) {
  return modelwise_inconsistency(peer_matrix(model, peers, eval), 0);
}

double modelwise_disagreement(const Model& model, std::span<const Model> peers,
                              const Tensor& eval) {
  return modelwise_disagreement(peer_matrix(model, peers, eval), 0);
}

LossError eval_loss_error(const Tensor& probs,
                          std::span<const std::size_t> labels) {
  if (probs.rank() != 2 || probs.rows() != labels.size() || labels.empty()) {
    throw DomainError("eval_loss_error: data is empty or misaligned");
  }
  std::vector<double> losses(labels.size());
  std::vector<double> errors(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto p = probs.row(i);
    if (labels[i] >= p.size()) throw DomainError("label out of range");
    losses[i] = -std::log(std::max(p[labels[i]], kProbClamp));
    errors[i] = argmax(p) == labels[i] ? 0.0 : 1.0;
  }
  const auto n = static_cast<double>(labels.size());
  return {pairwise_sum(losses) / n, pairwise_sum(errors) / n};
}

LossError eval_loss_error(const Model& model, const LabeledSet& data) {
  if (data.empty()) throw DomainError("eval_loss_error: data is empty");
  return eval_loss_error(predict_proba(model, data.features), data.labels);
}

}  // namespace gengap
