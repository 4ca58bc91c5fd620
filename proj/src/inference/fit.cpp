#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "mlfp/inference.hpp"

namespace mlfp::inference {

namespace {

// Columns are scaled to unit norm before rank decisions, since token totals
// (~1e5) and seconds (~1e3) live on very different scales.
constexpr double kRankTolerance = 1e-9;

Eigen::Index numeric_rank(const Eigen::MatrixXd& a) {
  if (a.cols() == 0) return 0;
  Eigen::MatrixXd scaled = a;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double n = scaled.col(j).norm();
    if (n > 0.0) scaled.col(j) /= n;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(kRankTolerance);
  return qr.rank();
}

// Best non-negative solution of min |A x - y| by enumerating active sets;
// fine for three unknowns.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(a.cols());
  Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
  double best_residual = y.squaredNorm();
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> cols;
    for (int j = 0; j < n; ++j) {
      if (mask & (1 << j)) cols.push_back(j);
    }
    Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
    if (numeric_rank(sub) < sub.cols()) continue;
    const Eigen::VectorXd x = sub.colPivHouseholderQr().solve(y);
    if ((x.array() < 0.0).any()) continue;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < cols.size(); ++k) full(cols[k]) = x(static_cast<Eigen::Index>(k));
    const double residual = (a * full - y).squaredNorm();
    if (residual < best_residual * (1.0 - 1e-12)) {
      best_residual = residual;
      best = full;
    }
  }
  return best;
}

}  // namespace

double predict_energy(const EnergyCoefficients& c, double total_input_tokens, double total_output_tokens,
                      double makespan_s) {
  return c.per_input_token_kwh * total_input_tokens + c.per_output_token_kwh * total_output_tokens +
         c.per_active_second_kwh * makespan_s;
}

double predict_energy(const EnergyCoefficients& c, const InferenceMeasurement& m) {
  return predict_energy(c, m.total_input_tokens(), m.total_output_tokens(), m.makespan_s);
}

FitResult fit_energy_model(const std::vector<InferenceMeasurement>& ms) {
  if (ms.size() < 2) throw ValidationError("fit needs at least two measurements");
  for (const auto& m : ms) validate(m);

  std::set<std::string> rates;
  for (const auto& m : ms) rates.insert(rate_label(m.request_rate));
  if (rates.size() < 2) {
    throw ValidationError("fit needs measurements at two or more distinct request rates; all are at rate " +
                          *rates.begin());
  }

  const auto rows = static_cast<Eigen::Index>(ms.size());
  Eigen::MatrixXd a(rows, 3);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& m = ms[static_cast<std::size_t>(i)];
    a(i, 0) = m.total_input_tokens();
    a(i, 1) = m.total_output_tokens();
    a(i, 2) = m.makespan_s;
    y(i) = m.energy_kwh;
  }

  FitResult out;
  const Eigen::Index rank = numeric_rank(a);
  if (rank == 3) {
    const Eigen::VectorXd x = nnls(a, y);
    out.coefficients = {x(0), x(1), x(2)};
  } else {
    // Which variation is missing decides whether a reduced model still makes
    // sense. Proportional token totals (the usual case: the same prompt set
    // at every rate) leave a shared per-token cost identifiable.
    const Eigen::Index token_rank = numeric_rank(a.leftCols(2));
    Eigen::MatrixXd pooled(rows, 2);
    pooled.col(0) = a.col(0) + a.col(1);
    pooled.col(1) = a.col(2);
    if (token_rank <= 1 && numeric_rank(pooled) == 2) {
      const Eigen::VectorXd x = nnls(pooled, y);
      out.coefficients = {x(0), x(0), x(1)};
      out.tokens_pooled = true;
    } else if (numeric_rank(pooled) < 2) {
      throw ValidationError(
          "fit is rank-deficient: makespan does not vary independently of token totals across the measurements");
    } else {
      throw ValidationError("fit is rank-deficient: input and output token totals do not vary independently");
    }
  }

  for (const auto& m : ms) {
    const double p = predict_energy(out.coefficients, m);
    out.predicted_kwh.push_back(p);
    if (m.energy_kwh > 0.0) {
      out.max_relative_residual = std::max(out.max_relative_residual, std::abs(p - m.energy_kwh) / m.energy_kwh);
    } else if (p != 0.0) {
      out.max_relative_residual = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

}  // namespace mlfp::inference
