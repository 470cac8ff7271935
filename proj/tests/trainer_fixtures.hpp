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

// Oracles and constructed instances for the baseline trainer.

#ifndef TIEREVAL_TESTS_TRAINER_FIXTURES_HPP_
#define TIEREVAL_TESTS_TRAINER_FIXTURES_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tiereval/baseline.hpp"

namespace tiereval::testing {

// ||analytic - numeric||_inf / ||analytic||_inf over all of (W, b), with
// central differences of step h.
inline double gradient_relative_error(const SoftmaxProblem& p, const Eigen::MatrixXd& W,
                               const Eigen::VectorXd& b, double h) {
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  p.evaluate(W, b, &gw, &gb);
  double max_diff = 0.0;
  double max_grad = 0.0;
  Eigen::MatrixXd Wp = W;
  for (Eigen::Index i = 0; i < W.size(); ++i) {
    const double orig = Wp.data()[i];
    Wp.data()[i] = orig + h;
    const double up = p.evaluate(Wp, b, nullptr, nullptr);
    Wp.data()[i] = orig - h;
    const double down = p.evaluate(Wp, b, nullptr, nullptr);
    Wp.data()[i] = orig;
    max_diff = std::max(max_diff, std::abs(gw.data()[i] - (up - down) / (2 * h)));
    max_grad = std::max(max_grad, std::abs(gw.data()[i]));
  }
  Eigen::VectorXd bp = b;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double orig = bp[i];
    bp[i] = orig + h;
    const double up = p.evaluate(W, bp, nullptr, nullptr);
    bp[i] = orig - h;
    const double down = p.evaluate(W, bp, nullptr, nullptr);
    bp[i] = orig;
    max_diff = std::max(max_diff, std::abs(gb[i] - (up - down) / (2 * h)));
    max_grad = std::max(max_grad, std::abs(gb[i]));
  }
  return max_diff / max_grad;
}

// Gaussian clusters at distance 10 per class along distinct axes.
inline void separable_clusters(std::size_t n, int k, std::size_t dim, std::uint64_t seed,
                        Eigen::MatrixXd* X, std::vector<std::uint16_t>* y) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 0.5);
  X->resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  y->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(k));
    (*y)[i] = static_cast<std::uint16_t>(c);
    for (std::size_t d = 0; d < dim; ++d) {
      const double center = d == static_cast<std::size_t>(c) % dim ? 10.0 : 0.0;
      (*X)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = center + noise(gen);
    }
  }
}

// Two classes offset by +-m along x2 around the diagonal x2 = x1, with x1
// uniform in [-1, 1]. The class means differ only along x2, so a strongly
// regularized model (direction near the mean difference) misclassifies most
// points with |x1| > m; only weak regularization recovers the diagonal.
inline void diagonal_instance(std::size_t n, double m, std::uint64_t seed, Eigen::MatrixXd* X,
                       std::vector<std::uint16_t>* y) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  X->resize(static_cast<Eigen::Index>(n), 2);
  y->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = u(gen);
    const int c = static_cast<int>(i % 2);
    (*X)(static_cast<Eigen::Index>(i), 0) = t;
    (*X)(static_cast<Eigen::Index>(i), 1) = t + (c == 0 ? m : -m);
    (*y)[i] = static_cast<std::uint16_t>(c);
  }
}

}  // namespace tiereval::testing

#endif  // TIEREVAL_TESTS_TRAINER_FIXTURES_HPP_
