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

// Per-attribute multinomial logistic regression on fixed embeddings.
//
// For N samples with labels y_i over K' present classes, sample weights w_i,
// and regularization strength C, the training objective is
//
//   f(W, b) = (1/N) sum_i w_i * CE(softmax(W x_i + b), y_i)
//             + ||W||_F^2 / (2 C N)
//
// which is the usual C-weighted formulation divided by C N. The bias is not
// penalized. Minimization is full-batch gradient descent with a
// Barzilai-Borwein trial step and Armijo backtracking, so every accepted
// step strictly decreases f.

#ifndef TIEREVAL_BASELINE_HPP_
#define TIEREVAL_BASELINE_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace tiereval {

struct HyperparamGrid {
  std::vector<double> c_values = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  std::size_t folds = 5;

  // Throws ConfigError on an empty grid, a non-positive C, or folds < 2.
  void validate() const;
};

enum class CvMetric { kMacroF1, kAccuracy };

struct OptimizerOptions {
  int max_iterations = 1000;
  // On the infinity norm of the full gradient.
  double gradient_tolerance = 1e-6;
  double armijo_c = 1e-4;
  int max_backtracks = 60;
};

struct TrainOptions {
  HyperparamGrid grid;
  OptimizerOptions optimizer;
  bool class_balanced = true;
  bool l2_normalize = false;
  // Start each C from the previous (smaller) C's solution within a fold.
  bool warm_start = false;
  CvMetric metric = CvMetric::kMacroF1;
  std::uint64_t seed = 0;
};

// w_c = N / (K' * N_c) for each sample's class; K' counts present classes.
Eigen::VectorXd balanced_sample_weights(std::span<const int> y, int num_classes);

class SoftmaxProblem {
 public:
  // `y` holds dense class ids in [0, num_classes). X is N x d.
  SoftmaxProblem(const Eigen::MatrixXd& X, std::vector<int> y, int num_classes,
                 Eigen::VectorXd sample_weights, double c);

  // Objective at (W, b); fills the gradient when both outputs are non-null.
  double evaluate(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                  Eigen::MatrixXd* grad_w, Eigen::VectorXd* grad_b) const;

  const Eigen::MatrixXd& features() const { return x_; }
  const std::vector<int>& labels() const { return y_; }
  int num_classes() const { return k_; }
  double c() const { return c_; }
  double lambda() const { return lambda_; }
  const Eigen::VectorXd& sample_weights() const { return w_; }

 private:
  const Eigen::MatrixXd& x_;
  std::vector<int> y_;
  int k_;
  Eigen::VectorXd w_;
  double c_;
  double lambda_;
};

struct FitResult {
  Eigen::MatrixXd weights;  // K' x d
  Eigen::VectorXd bias;     // K'
  int iterations = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  // Objective after every accepted step, starting with the initial point.
  std::vector<double> trace;
};

FitResult fit_softmax(const SoftmaxProblem& problem, const OptimizerOptions& options,
                      const Eigen::MatrixXd* init_w = nullptr,
                      const Eigen::VectorXd* init_b = nullptr,
                      bool record_trace = false);

struct ClassifierModel {
  std::string attribute;
  // Size of the attribute's full label space.
  std::size_t num_labels = 0;
  // Label index of each weight row, ascending.
  std::vector<std::size_t> classes;
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  double chosen_c = 0.0;
  int iterations = 0;
  double final_objective = 0.0;
  bool converged = false;
  bool class_balanced = true;
  bool l2_normalized = false;
};

// Softmax probabilities over model.classes, one row per sample.
Eigen::MatrixXd predict_proba(const ClassifierModel& model, const Eigen::MatrixXd& X);
// Argmax label indices; ties go to the lowest class. Throws DataError when
// the feature dimension does not match.
std::vector<std::size_t> predict(const ClassifierModel& model, const Eigen::MatrixXd& X);

struct CVResult {
  std::vector<double> c_values;
  // [c][fold]
  std::vector<std::vector<double>> fold_scores;
  std::vector<double> mean_scores;
  std::size_t selected_index = 0;
  double selected_c = 0.0;
  CvMetric metric = CvMetric::kMacroF1;
  // Degenerate-fold conditions encountered (sparse classes, single-class
  // training folds).
  std::vector<std::string> notes;
};

struct TrainResult {
  ClassifierModel model;
  CVResult cv;
};

// Fold id per sample: each label's samples are shuffled with a seeded
// generator and dealt round-robin, continuing across labels. Labels with
// fewer samples than folds are reported in `notes`.
std::vector<std::size_t> stratified_folds(std::span<const std::uint16_t> y,
                                          std::size_t folds, std::uint64_t seed,
                                          std::vector<std::string>* notes = nullptr);

// Cross-validated grid search, then a refit on all rows with the selected C.
// Selection maximizes the mean validation score; ties go to the smallest C.
// Throws DataError for fewer than two present classes, non-finite features,
// labels outside [0, num_labels), or a row/label count mismatch.
TrainResult train(const Eigen::MatrixXd& X, std::span<const std::uint16_t> y,
                  std::size_t num_labels, const TrainOptions& options,
                  const std::string& attribute = "");

// Macro-F1 over the full label space, or accuracy.
double validation_score(std::span<const std::uint16_t> gold,
                        std::span<const std::size_t> pred, std::size_t num_labels,
                        CvMetric metric);

nlohmann::json to_json(const ClassifierModel& model);
ClassifierModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CVResult& cv);

}  // namespace tiereval

#endif  // TIEREVAL_BASELINE_HPP_
