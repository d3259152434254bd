#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace nmdr {

/// 1/(1+exp(-x)), evaluated on the branch that cannot overflow.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(logistic(x)).
inline double log_logistic(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

/// Membership probabilities of one node over the instantiated communities
/// plus the mass of everything beyond them.
struct StickWeights {
  std::vector<double> pi;
  double tail = 1.0;

  int K() const { return static_cast<int>(pi.size()); }
};

/// Log-space stick recurrence shared by every caller so that incremental
/// extension and full recomputation produce bit-identical values.
struct StickAccumulator {
  double log_remaining = 0.0;

  /// Breaks the next stick; returns log pi_k.
  double next(double score) {
    double lp = log_remaining + log_logistic(score);
    log_remaining += log_logistic(-score);
    return lp;
  }

  /// Forced final stick of a truncated representation: takes all remaining mass.
  double close() {
    double lp = log_remaining;
    log_remaining = -INFINITY;
    return lp;
  }
};

/// pi_k = logistic(v_k) * prod_{l<k} logistic(-v_l); tail = prod_l logistic(-v_l).
template <typename Vec>
StickWeights stick_weights(const Vec& v, bool truncated = false) {
  StickWeights out;
  const int K = static_cast<int>(v.size());
  out.pi.resize(K);
  StickAccumulator acc;
  for (int k = 0; k < K; ++k) {
    double lp = (truncated && k == K - 1) ? acc.close() : acc.next(v[k]);
    out.pi[k] = std::exp(lp);
  }
  out.tail = std::exp(acc.log_remaining);
  return out;
}

inline StickWeights stick_weights(std::initializer_list<double> v, bool truncated = false) {
  return stick_weights(std::vector<double>(v), truncated);
}

}  // namespace nmdr
