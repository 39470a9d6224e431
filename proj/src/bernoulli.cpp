#include "deputy/bernoulli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "deputy/errors.hpp"

namespace deputy {

void FalseNegativeModel::validate() const {
  if (m < 1) {
    throw Error(ErrorCode::kOutOfRange, "m must be positive, got " + std::to_string(m));
  }
  if (k < 0 || k > m) {
    throw Error(ErrorCode::kOutOfRange,
                "k=" + std::to_string(k) + " outside [0, " + std::to_string(m) + "]");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "p must lie in [0, 1]");
  }
}

double log_binomial_coefficient(int m, int j) {
  if (m < 0 || j < 0 || j > m) {
    throw Error(ErrorCode::kOutOfRange,
                "C(" + std::to_string(m) + ", " + std::to_string(j) + ") undefined");
  }
  const int r = std::min(j, m - j);
  if (r == 0) return 0.0;
  if (m <= 1000) {
    // C(1000, 500) ~ 2.7e299 still fits in a double.
    double c = 1.0;
    for (int i = 1; i <= r; ++i) {
      c = c * static_cast<double>(m - r + i) / static_cast<double>(i);
    }
    return std::log(c);
  }
  return std::lgamma(m + 1.0) - std::lgamma(j + 1.0) - std::lgamma(m - j + 1.0);
}

double binomial_tail(const FalseNegativeModel& model) {
  model.validate();
  const int m = model.m;
  const int k = model.k;
  const double p = model.p;
  if (k == 0) return 1.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  std::vector<double> terms;
  terms.reserve(m - k + 1);
  for (int j = k; j <= m; ++j) {
    terms.push_back(log_binomial_coefficient(m, j) + j * log_p + (m - j) * log_q);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return std::clamp(std::exp(top + std::log(sum)), 0.0, 1.0);
}

std::vector<RiskRow> risk_table(int m, double p, const std::vector<int>& ks) {
  std::vector<RiskRow> rows;
  rows.reserve(ks.size());
  for (int k : ks) {
    rows.push_back({k, binomial_tail({m, k, p})});
  }
  return rows;
}

std::string binomial_tail_multiprecision(const FalseNegativeModel& model, int digits) {
  namespace mp = boost::multiprecision;
  using Float = mp::cpp_bin_float_100;
  model.validate();
  const Float p = model.p;
  const Float q = Float(1) - p;
  Float total = 0;
  mp::cpp_int binom = 1;  // C(m, j), updated incrementally from j = 0
  for (int j = 0; j <= model.m; ++j) {
    if (j > 0) binom = binom * (model.m - j + 1) / j;
    if (j < model.k) continue;
    total += Float(binom) * mp::pow(p, j) * mp::pow(q, model.m - j);
  }
  std::ostringstream out;
  out << std::scientific << std::setprecision(digits - 1) << total;
  return out.str();
}

}  // namespace deputy
