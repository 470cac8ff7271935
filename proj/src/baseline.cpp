// Copyright 2026 The Tiereval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tiereval/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tiereval/embeddings.hpp"
#include "tiereval/errors.hpp"
#include "tiereval/metrics.hpp"
#include "tiereval/rng.hpp"

namespace tiereval {
namespace {

// (1/N) sum_i w_i (logsumexp(S_i) - S_{i,y_i}). When `resid` is non-null it
// receives w_i (softmax(S_i) - e_{y_i}) / N.
double data_term(const Eigen::MatrixXd& s, const std::vector<int>& y,
                 const Eigen::VectorXd& w, Eigen::MatrixXd* resid) {
  const Eigen::Index n = s.rows();
  const Eigen::VectorXd m = s.rowwise().maxCoeff();
  Eigen::MatrixXd e = (s.colwise() - m).array().exp().matrix();
  const Eigen::VectorXd z = e.rowwise().sum();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = m(i) + std::log(z(i));
    total += w(i) * (lse - s(i, y[static_cast<std::size_t>(i)]));
  }
  if (resid != nullptr) {
    e.array().colwise() /= z.array();
    for (Eigen::Index i = 0; i < n; ++i) e(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    e.array().colwise() *= (w.array() * inv_n);
    *resid = std::move(e);
  }
  return total * inv_n;
}

double inf_norm(const Eigen::MatrixXd& gw, const Eigen::VectorXd& gb) {
  double g = gw.size() > 0 ? gw.cwiseAbs().maxCoeff() : 0.0;
  if (gb.size() > 0) g = std::max(g, gb.cwiseAbs().maxCoeff());
  return g;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

struct DenseLabels {
  std::vector<std::size_t> classes;  // label index per dense id
  std::vector<int> y;
};

DenseLabels densify(std::span<const std::uint16_t> labels, std::size_t num_labels) {
  std::vector<int> map(num_labels, -1);
  for (auto l : labels) map[l] = 0;
  DenseLabels d;
  for (std::size_t c = 0; c < num_labels; ++c) {
    if (map[c] == 0) {
      map[c] = static_cast<int>(d.classes.size());
      d.classes.push_back(c);
    }
  }
  d.y.reserve(labels.size());
  for (auto l : labels) d.y.push_back(map[l]);
  return d;
}

Eigen::VectorXd sample_weights_for(const std::vector<int>& y, int k, bool balanced) {
  if (!balanced) return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(y.size()));
  return balanced_sample_weights(y, k);
}

}  // namespace

void HyperparamGrid::validate() const {
  if (c_values.empty()) throw ConfigError("C grid must not be empty");
  for (double c : c_values) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("C values must be positive");
  }
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
}

Eigen::VectorXd balanced_sample_weights(std::span<const int> y, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int c : y) ++counts[static_cast<std::size_t>(c)];
  const auto present = static_cast<double>(
      std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }));
  const auto n = static_cast<double>(y.size());
  Eigen::VectorXd w(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    w(static_cast<Eigen::Index>(i)) =
        n / (present * static_cast<double>(counts[static_cast<std::size_t>(y[i])]));
  }
  return w;
}

SoftmaxProblem::SoftmaxProblem(const Eigen::MatrixXd& X, std::vector<int> y,
                               int num_classes, Eigen::VectorXd sample_weights, double c)
    : x_(X),
      y_(std::move(y)),
      k_(num_classes),
      w_(std::move(sample_weights)),
      c_(c),
      lambda_(1.0 / (c * static_cast<double>(X.rows()))) {
  if (static_cast<std::size_t>(X.rows()) != y_.size() ||
      w_.size() != static_cast<Eigen::Index>(y_.size())) {
    throw DataError("features, labels, and weights disagree in length");
  }
  if (y_.empty()) throw DataError("no training samples");
}

double SoftmaxProblem::evaluate(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                                Eigen::MatrixXd* grad_w, Eigen::VectorXd* grad_b) const {
  Eigen::MatrixXd s = x_ * W.transpose();
  s.rowwise() += b.transpose();
  const bool want_grad = grad_w != nullptr && grad_b != nullptr;
  Eigen::MatrixXd resid;
  const double f = data_term(s, y_, w_, want_grad ? &resid : nullptr) +
                   0.5 * lambda_ * W.squaredNorm();
  if (want_grad) {
    *grad_w = resid.transpose() * x_ + lambda_ * W;
    *grad_b = resid.colwise().sum().transpose();
  }
  return f;
}

FitResult fit_softmax(const SoftmaxProblem& problem, const OptimizerOptions& options,
                      const Eigen::MatrixXd* init_w, const Eigen::VectorXd* init_b,
                      bool record_trace) {
  const Eigen::MatrixXd& x = problem.features();
  const auto k = static_cast<Eigen::Index>(problem.num_classes());
  const double lambda = problem.lambda();
  FitResult r;
  r.weights = init_w != nullptr ? *init_w : Eigen::MatrixXd::Zero(k, x.cols());
  r.bias = init_b != nullptr ? *init_b : Eigen::VectorXd::Zero(k);

  Eigen::MatrixXd s = x * r.weights.transpose();
  s.rowwise() += r.bias.transpose();
  Eigen::MatrixXd resid;
  double f = data_term(s, problem.labels(), problem.sample_weights(), &resid) +
             0.5 * lambda * r.weights.squaredNorm();
  Eigen::MatrixXd gw = resid.transpose() * x + lambda * r.weights;
  Eigen::VectorXd gb = resid.colwise().sum().transpose();
  if (record_trace) r.trace.push_back(f);

  double step = 1.0;
  for (;;) {
    r.gradient_norm = inf_norm(gw, gb);
    if (r.gradient_norm <= options.gradient_tolerance) {
      r.converged = true;
      break;
    }
    if (r.iterations >= options.max_iterations) break;

    // Scores move linearly along the search direction.
    Eigen::MatrixXd d = x * gw.transpose();
    d.rowwise() += gb.transpose();
    const double g2 = gw.squaredNorm() + gb.squaredNorm();

    bool accepted = false;
    double f_new = f;
    Eigen::MatrixXd s_new, w_new;
    for (int bt = 0; bt <= options.max_backtracks; ++bt, step *= 0.5) {
      s_new = s - step * d;
      w_new = r.weights - step * gw;
      f_new = data_term(s_new, problem.labels(), problem.sample_weights(), nullptr) +
              0.5 * lambda * w_new.squaredNorm();
      if (f_new <= f - options.armijo_c * step * g2 && f_new < f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    r.weights = std::move(w_new);
    r.bias -= step * gb;
    s = std::move(s_new);
    f = f_new;
    data_term(s, problem.labels(), problem.sample_weights(), &resid);
    Eigen::MatrixXd gw_new = resid.transpose() * x + lambda * r.weights;
    Eigen::VectorXd gb_new = resid.colwise().sum().transpose();
    ++r.iterations;
    if (record_trace) r.trace.push_back(f);

    // Barzilai-Borwein: s_k = -step * g_k, y_k = g_{k+1} - g_k.
    const double sy = -step * (((gw_new - gw).array() * gw.array()).sum() +
                               (gb_new - gb).dot(gb));
    const double ss = step * step * g2;
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : 2.0 * step;
    gw = std::move(gw_new);
    gb = std::move(gb_new);
  }
  r.objective = f;
  return r;
}

Eigen::MatrixXd predict_proba(const ClassifierModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<Eigen::Index>(X.cols()) != model.weights.cols()) {
    throw DataError("feature dimension " + std::to_string(X.cols()) +
                    " does not match the model's " + std::to_string(model.weights.cols()));
  }
  Eigen::MatrixXd xs = X;
  if (model.l2_normalized) l2_normalize_rows(xs);
  Eigen::MatrixXd s = xs * model.weights.transpose();
  s.rowwise() += model.bias.transpose();
  const Eigen::VectorXd m = s.rowwise().maxCoeff();
  Eigen::MatrixXd e = (s.colwise() - m).array().exp().matrix();
  e.array().colwise() /= e.rowwise().sum().array();
  return e;
}

std::vector<std::size_t> predict(const ClassifierModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<Eigen::Index>(X.cols()) != model.weights.cols()) {
    throw DataError("feature dimension " + std::to_string(X.cols()) +
                    " does not match the model's " + std::to_string(model.weights.cols()));
  }
  Eigen::MatrixXd xs = X;
  if (model.l2_normalized) l2_normalize_rows(xs);
  Eigen::MatrixXd s = xs * model.weights.transpose();
  s.rowwise() += model.bias.transpose();
  std::vector<std::size_t> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < s.cols(); ++c) {
      if (s(i, c) > s(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = model.classes[static_cast<std::size_t>(best)];
  }
  return out;
}

std::vector<std::size_t> stratified_folds(std::span<const std::uint16_t> y,
                                          std::size_t folds, std::uint64_t seed,
                                          std::vector<std::string>* notes) {
  std::size_t num_labels = 0;
  for (auto l : y) num_labels = std::max<std::size_t>(num_labels, l + 1u);
  std::vector<std::vector<std::size_t>> by_label(num_labels);
  for (std::size_t i = 0; i < y.size(); ++i) by_label[y[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> fold_of(y.size(), 0);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < num_labels; ++c) {
    auto& idx = by_label[c];
    if (idx.empty()) continue;
    if (idx.size() < folds && notes != nullptr) {
      notes->push_back("label " + std::to_string(c) + " has " +
                       std::to_string(idx.size()) + " samples for " +
                       std::to_string(folds) + " folds");
    }
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      fold_of[idx[j]] = (offset + j) % folds;
    }
    offset += idx.size();
  }
  return fold_of;
}

double validation_score(std::span<const std::uint16_t> gold,
                        std::span<const std::size_t> pred, std::size_t num_labels,
                        CvMetric metric) {
  if (metric == CvMetric::kAccuracy) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hit += gold[i] == pred[i];
    return gold.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(gold.size());
  }
  std::vector<std::uint64_t> tp(num_labels, 0), fp(num_labels, 0), fn(num_labels, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == pred[i]) {
      ++tp[gold[i]];
    } else {
      ++fp[pred[i]];
      ++fn[gold[i]];
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < num_labels; ++c) sum += class_prf(tp[c], fp[c], fn[c]).f1;
  return sum / static_cast<double>(num_labels);
}

TrainResult train(const Eigen::MatrixXd& X_in, std::span<const std::uint16_t> y,
                  std::size_t num_labels, const TrainOptions& options,
                  const std::string& attribute) {
  options.grid.validate();
  const std::string who = attribute.empty() ? std::string("training") : "'" + attribute + "'";
  if (static_cast<std::size_t>(X_in.rows()) != y.size()) {
    throw DataError(who + ": " + std::to_string(X_in.rows()) + " feature rows for " +
                    std::to_string(y.size()) + " labels");
  }
  if (!X_in.allFinite()) throw DataError(who + ": non-finite features");
  for (auto l : y) {
    if (l >= num_labels) throw DataError(who + ": label outside the label space");
  }
  const DenseLabels all = densify(y, num_labels);
  if (all.classes.size() < 2) {
    throw DataError(who + ": fewer than two classes present in the training data");
  }

  Eigen::MatrixXd X = X_in;
  if (options.l2_normalize) l2_normalize_rows(X);

  TrainResult result;
  CVResult& cv = result.cv;
  cv.c_values = options.grid.c_values;
  cv.metric = options.metric;
  const std::size_t nc = cv.c_values.size();
  const std::size_t folds = options.grid.folds;
  cv.fold_scores.assign(nc, std::vector<double>(folds, 0.0));

  std::vector<std::size_t> order(nc);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cv.c_values[a] < cv.c_values[b];
  });

  const auto fold_of = stratified_folds(y, folds, options.seed, &cv.notes);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? va : tr).push_back(i);
    if (va.empty() || tr.empty()) {
      cv.notes.push_back("fold " + std::to_string(f) + " is empty");
      continue;
    }
    const Eigen::MatrixXd x_tr = gather_rows(X, tr);
    const Eigen::MatrixXd x_va = gather_rows(X, va);
    std::vector<std::uint16_t> y_tr, y_va;
    for (auto i : tr) y_tr.push_back(y[i]);
    for (auto i : va) y_va.push_back(y[i]);
    const DenseLabels dense = densify(y_tr, num_labels);

    ClassifierModel m;
    m.classes = dense.classes;
    if (dense.classes.size() < 2) {
      cv.notes.push_back("fold " + std::to_string(f) + " trains on a single class");
      m.weights = Eigen::MatrixXd::Zero(1, X.cols());
      m.bias = Eigen::VectorXd::Zero(1);
      const auto pred = predict(m, x_va);
      for (std::size_t ci = 0; ci < nc; ++ci) {
        cv.fold_scores[ci][f] = validation_score(y_va, pred, num_labels, options.metric);
      }
      continue;
    }
    const int k = static_cast<int>(dense.classes.size());
    const Eigen::VectorXd w = sample_weights_for(dense.y, k, options.class_balanced);
    const Eigen::MatrixXd* warm_w = nullptr;
    const Eigen::VectorXd* warm_b = nullptr;
    FitResult prev;
    for (std::size_t ci : order) {
      const SoftmaxProblem problem(x_tr, dense.y, k, w, cv.c_values[ci]);
      FitResult fit = fit_softmax(problem, options.optimizer, warm_w, warm_b);
      m.weights = fit.weights;
      m.bias = fit.bias;
      const auto pred = predict(m, x_va);
      cv.fold_scores[ci][f] = validation_score(y_va, pred, num_labels, options.metric);
      if (options.warm_start) {
        prev = std::move(fit);
        warm_w = &prev.weights;
        warm_b = &prev.bias;
      }
    }
  }

  cv.mean_scores.assign(nc, 0.0);
  for (std::size_t ci = 0; ci < nc; ++ci) {
    double sum = 0.0;
    for (double s : cv.fold_scores[ci]) sum += s;
    cv.mean_scores[ci] = sum / static_cast<double>(folds);
  }
  std::size_t best = order.front();
  for (std::size_t ci : order) {
    if (cv.mean_scores[ci] > cv.mean_scores[best]) best = ci;
  }
  cv.selected_index = best;
  cv.selected_c = cv.c_values[best];

  const int k = static_cast<int>(all.classes.size());
  const SoftmaxProblem problem(X, all.y, k, sample_weights_for(all.y, k, options.class_balanced),
                               cv.selected_c);
  FitResult fit = fit_softmax(problem, options.optimizer);
  ClassifierModel& model = result.model;
  model.attribute = attribute;
  model.num_labels = num_labels;
  model.classes = all.classes;
  model.weights = std::move(fit.weights);
  model.bias = std::move(fit.bias);
  model.chosen_c = cv.selected_c;
  model.iterations = fit.iterations;
  model.final_objective = fit.objective;
  model.converged = fit.converged;
  model.class_balanced = options.class_balanced;
  model.l2_normalized = options.l2_normalize;
  return result;
}

nlohmann::json to_json(const ClassifierModel& m) {
  nlohmann::json weights = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.weights.cols()));
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) {
      row[static_cast<std::size_t>(c)] = m.weights(r, c);
    }
    weights.push_back(row);
  }
  std::vector<double> bias(m.bias.data(), m.bias.data() + m.bias.size());
  return {{"attribute", m.attribute},
          {"num_labels", m.num_labels},
          {"classes", m.classes},
          {"weights", weights},
          {"bias", bias},
          {"chosen_c", m.chosen_c},
          {"iterations", m.iterations},
          {"final_objective", m.final_objective},
          {"converged", m.converged},
          {"class_balanced", m.class_balanced},
          {"l2_normalized", m.l2_normalized}};
}

ClassifierModel model_from_json(const nlohmann::json& j) {
  try {
    ClassifierModel m;
    m.attribute = j.at("attribute").get<std::string>();
    m.num_labels = j.at("num_labels").get<std::size_t>();
    m.classes = j.at("classes").get<std::vector<std::size_t>>();
    const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    if (rows.size() != m.classes.size() || bias.size() != m.classes.size()) {
      throw DataError("model weights do not match its class list");
    }
    const std::size_t dim = rows.empty() ? 0 : rows.front().size();
    m.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != dim) throw DataError("ragged model weights");
      for (std::size_t c = 0; c < dim; ++c) {
        m.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    m.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    m.chosen_c = j.value("chosen_c", 0.0);
    m.iterations = j.value("iterations", 0);
    m.final_objective = j.value("final_objective", 0.0);
    m.converged = j.value("converged", false);
    m.class_balanced = j.value("class_balanced", true);
    m.l2_normalized = j.value("l2_normalized", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model document: ") + e.what());
  }
}

nlohmann::json to_json(const CVResult& cv) {
  return {{"c_values", cv.c_values},
          {"fold_scores", cv.fold_scores},
          {"mean_scores", cv.mean_scores},
          {"selected_c", cv.selected_c},
          {"metric", cv.metric == CvMetric::kMacroF1 ? "macro_f1" : "accuracy"},
          {"notes", cv.notes}};
}

}  // namespace tiereval
