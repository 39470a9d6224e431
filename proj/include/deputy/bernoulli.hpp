#ifndef DEPUTY_BERNOULLI_HPP_
#define DEPUTY_BERNOULLI_HPP_

#include <string>
#include <utility>
#include <vector>

namespace deputy {

// Probability that the rank-k negative (out of m) shares the anchor's class,
// when each negative independently does so with probability p.
struct FalseNegativeModel {
  int m = 1;
  int k = 0;
  double p = 0.0;

  void validate() const;
};

// ln C(m, j). Exact multiplicative evaluation for m <= 1000, log-gamma above.
double log_binomial_coefficient(int m, int j);

// sum_{j=k}^{m} C(m,j) p^j (1-p)^(m-j), summed in log space.
double binomial_tail(const FalseNegativeModel& model);

struct RiskRow {
  int k = 0;
  double probability = 0.0;
};

std::vector<RiskRow> risk_table(int m, double p, const std::vector<int>& ks);

// The same tail evaluated with 100-digit floating point and exact integer
// binomial coefficients. Returned as a decimal string with `digits`
// significant digits.
std::string binomial_tail_multiprecision(const FalseNegativeModel& model, int digits = 20);

}  // namespace deputy

#endif  // DEPUTY_BERNOULLI_HPP_
