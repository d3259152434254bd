#pragma once

#include "nmdr/random.hpp"
#include "nmdr/simulate.hpp"
#include "nmdr/spectral.hpp"
#include "nmdr/sticks.hpp"
#include "nmdr/types.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <vector>

namespace nmdr {

enum class Side { Source, Receiver };

/// Node score proposals. Column and Coordinate draw from the prior; Laplace
/// proposes each score from a Gaussian fitted at the mode of its conditional.
enum class VProposal { Column, Coordinate, Laplace };

/// Starting indicators: everything in community 0, a draw from the prior
/// sticks (instantiating communities as the draws require), or each node's
/// cluster from a spectral embedding of the training adjacency.
enum class InitIndicators { SingleCommunity, Prior, Spectral };

struct ChainConfig {
  /// 0 runs the retrospective sampler over the unbounded community set; a
  /// positive value fixes that many communities with the last stick closed.
  int truncation = 0;
  int walk_cap = 1000;
  /// Independence proposals for each v column per sweep.
  int mh_proposals = 1;
  VProposal v_proposal = VProposal::Laplace;
  bool freeze_lambda_V = false;
  InitIndicators init = InitIndicators::Spectral;
  /// Cluster count for spectral initialization; 0 picks it by eigengap.
  int init_communities = 0;
  int init_rounds = 50;

  friend bool operator==(const ChainConfig&, const ChainConfig&) = default;
};

/// Complete sampler state. Everything after `iter` is derived and can be
/// rebuilt from the fields above it.
struct ChainState {
  GlobalState global;
  NodeState nodes;
  AssignmentState assign;
  HyperParams hyper;
  EdgeData data;
  Metadata phi;
  Rng rng;
  long iter = 0;
  ChainConfig config;

  std::vector<ObservedEdge> edges;  // observed entries, aligned with assign.s / assign.r
  Eigen::MatrixXd log_pi;           // K x N
  Eigen::MatrixXd pi;               // K x N
  Eigen::VectorXd log_tail;         // N
  Eigen::MatrixXi node_counts;      // K x N: indicators drawn from node i's sticks
  Eigen::MatrixXd phi_gram;         // F x F

  int K() const { return global.K(); }
  int N() const { return data.N(); }
  int M() const { return data.M(); }
  int F() const { return phi.F(); }
  bool truncated() const { return config.truncation > 0; }

  double tail(int i) const { return std::exp(log_tail(i)); }

  /// Largest occupied community index plus one.
  int K_occupied() const {
    for (int k = K() - 1; k >= 0; --k)
      if (node_counts.row(k).sum() > 0) return k + 1;
    return 0;
  }

  StickWeights sticks(int i) const {
    StickWeights w;
    w.pi.assign(pi.col(i).data(), pi.col(i).data() + K());
    w.tail = tail(i);
    return w;
  }

  mutable std::vector<double> scratch;
};

struct SweepReport {
  long iter = 0;
  double log_joint = 0.0;
  int K_occupied = 0;
  int K_instantiated = 0;
  double mh_accept_rate = 0.0;
  int new_communities_born = 0;
};

namespace detail {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double log_normal(double x, double mean, double precision) {
  double d = x - mean;
  return 0.5 * std::log(precision) - kLogSqrt2Pi - 0.5 * precision * d * d;
}

inline double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

inline void refresh_node_sticks(ChainState& st, int i) {
  StickAccumulator acc;
  const int K = st.K();
  for (int k = 0; k < K; ++k) {
    double lp = (st.truncated() && k == K - 1) ? acc.close() : acc.next(st.nodes.v(k, i));
    st.log_pi(k, i) = lp;
    st.pi(k, i) = std::exp(lp);
  }
  st.log_tail(i) = acc.log_remaining;
}

inline void refresh_all_sticks(ChainState& st) {
  st.log_pi.resize(st.K(), st.N());
  st.pi.resize(st.K(), st.N());
  st.log_tail.resize(st.N());
  for (int i = 0; i < st.N(); ++i) refresh_node_sticks(st, i);
}

inline void resize_communities(ChainState& st, int K) {
  st.global.eta.conservativeResize(st.F(), K);
  st.nodes.v.conservativeResize(K, st.N());
  st.assign.A.resize(K);
  st.assign.B.resize(K);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(K, st.N());
  const int keep = std::min<int>(K, static_cast<int>(st.node_counts.rows()));
  counts.topRows(keep) = st.node_counts.topRows(keep);
  st.node_counts = std::move(counts);
}

/// Appends one community drawn from the prior: a weight column and a score
/// for every node. Extends the stick caches in place.
inline void append_community(ChainState& st) {
  const int k = st.K();
  resize_communities(st, k + 1);
  const double sd_F = 1.0 / std::sqrt(st.global.lambda_F);
  const double sd_V = 1.0 / std::sqrt(st.global.lambda_V);
  for (int f = 0; f < st.F(); ++f) st.global.eta(f, k) = st.rng.normal(st.global.mu(f), sd_F);
  for (int j = 0; j < st.N(); ++j)
    st.nodes.v(k, j) = st.rng.normal(st.global.eta.col(k).dot(st.phi.phi.col(j)), sd_V);

  st.log_pi.conservativeResize(k + 1, st.N());
  st.pi.conservativeResize(k + 1, st.N());
  for (int j = 0; j < st.N(); ++j) {
    StickAccumulator acc{st.log_tail(j)};
    double lp = acc.next(st.nodes.v(k, j));
    st.log_pi(k, j) = lp;
    st.pi(k, j) = std::exp(lp);
    st.log_tail(j) = acc.log_remaining;
  }
}

/// Inversion draw from node i's sticks, extending them as needed.
inline int draw_from_sticks(ChainState& st, int i) {
  const double target = std::log1p(-st.rng.uniform());
  StickAccumulator acc;
  for (int k = 0;; ++k) {
    if (k == st.K()) {
      if (st.truncated() || k >= st.config.walk_cap) return k - 1;
      append_community(st);
    }
    if (st.truncated() && k == st.K() - 1) return k;
    acc.next(st.nodes.v(k, i));
    if (acc.log_remaining < target) return k;
  }
}

inline void add_edge(ChainState& st, std::size_t e, int sign) {
  const auto& ed = st.edges[e];
  int s = st.assign.s[e], r = st.assign.r[e];
  (ed.y ? st.assign.A : st.assign.B)(s, r, ed.m) += sign;
  st.node_counts(s, ed.i) += sign;
  st.node_counts(r, ed.j) += sign;
}

}  // namespace detail

/// Recomputes A, B and the per-node indicator counts from (s, r, data).
inline void rebuild_counts(ChainState& st) {
  st.assign.A = CountTable(st.K(), st.M());
  st.assign.B = CountTable(st.K(), st.M());
  st.node_counts = Eigen::MatrixXi::Zero(st.K(), st.N());
  for (std::size_t e = 0; e < st.edges.size(); ++e) detail::add_edge(st, e, +1);
}

/// Fresh count tables computed from scratch, for consistency checks.
inline AssignmentState recount(const ChainState& st) {
  AssignmentState out;
  out.s = st.assign.s;
  out.r = st.assign.r;
  out.A = CountTable(st.K(), st.M());
  out.B = CountTable(st.K(), st.M());
  for (std::size_t e = 0; e < st.edges.size(); ++e) {
    const auto& ed = st.edges[e];
    (ed.y ? out.A : out.B)(out.s[e], out.r[e], ed.m) += 1;
  }
  return out;
}

inline bool counts_consistent(const ChainState& st) {
  auto fresh = recount(st);
  return fresh.A == st.assign.A && fresh.B == st.assign.B;
}

namespace detail {
inline void finish_setup(ChainState& st) {
  st.edges = st.data.observed_edges();
  st.phi_gram = st.phi.phi * st.phi.phi.transpose();
  refresh_all_sticks(st);
}

inline void check_inputs(const EdgeData& data, const Metadata& phi, const HyperParams& hyper,
                         const ChainConfig& config) {
  data.validate();
  phi.validate();
  hyper.validate();
  if (data.N() != phi.N())
    throw DataError("metadata has " + std::to_string(phi.N()) + " nodes but edge data has " +
                    std::to_string(data.N()));
  if (config.truncation < 0 || config.walk_cap < 1 || config.mh_proposals < 0 ||
      config.init_communities < 0 ||
      config.init_rounds < 0)
    throw UsageError("invalid chain configuration");
}
}  // namespace detail

/// Builds a chain positioned at a forward-simulated latent draw. `data` must
/// observe exactly the pairs the simulation generated indicators for.
inline ChainState chain_from_latents(const LatentRecord& t, const EdgeData& data, const Metadata& phi, Rng rng,
                                     ChainConfig config = {}) {
  detail::check_inputs(data, phi, t.hyper, config);
  if (config.truncation > 0) throw UsageError("latent initialization requires the retrospective sampler");
  ChainState st;
  st.hyper = t.hyper;
  st.data = data;
  st.phi = phi;
  st.rng = rng;
  st.config = config;
  st.global.lambda_S = t.lambda_S;
  st.global.lambda_F = t.lambda_F;
  st.global.lambda_V = t.lambda_V;
  st.global.mu = t.mu;
  st.global.eta = t.eta;
  st.nodes.v = t.v;
  detail::finish_setup(st);
  if (st.edges.size() != t.s.size()) throw DataError("latent record does not match observed entries");
  st.assign.s = t.s;
  st.assign.r = t.r;
  rebuild_counts(st);
  return st;
}

/// Posterior over one indicator given all other variables; entry K is the
/// aggregate mass of every uninstantiated community. The caller must already
/// have removed edge e from the count tables.
inline std::vector<double> indicator_posterior(const ChainState& st, std::size_t e, Side side) {
  const auto& ed = st.edges[e];
  const int K = st.K();
  const double ga = st.hyper.gamma_a, gb = st.hyper.gamma_b;
  const int node = side == Side::Source ? ed.i : ed.j;
  const int other = side == Side::Source ? st.assign.r[e] : st.assign.s[e];
  std::vector<double> w(K + 1);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    int a = side == Side::Source ? st.assign.A(k, other, ed.m) : st.assign.A(other, k, ed.m);
    int b = side == Side::Source ? st.assign.B(k, other, ed.m) : st.assign.B(other, k, ed.m);
    double lik = (ed.y ? a + ga : b + gb) / (a + b + ga + gb);
    w[k] = st.pi(k, node) * lik;
    total += w[k];
  }
  w[K] = st.tail(node) * (ed.y ? ga : gb) / (ga + gb);
  total += w[K];
  assert(total > 0.0);
  for (auto& x : w) x /= total;
  return w;
}

struct IndicatorDraw {
  int index = 0;
  int born = 0;
};

/// Gibbs update of one indicator. A draw in the tail walks the stick-breaking
/// prior forward, instantiating communities until one accepts the node.
inline IndicatorDraw resample_indicator(ChainState& st, std::size_t e, Side side) {
  const auto& ed = st.edges[e];
  detail::add_edge(st, e, -1);

  const int K = st.K();
  const double ga = st.hyper.gamma_a, gb = st.hyper.gamma_b;
  const int node = side == Side::Source ? ed.i : ed.j;
  const int other = side == Side::Source ? st.assign.r[e] : st.assign.s[e];
  auto& w = st.scratch;
  w.resize(K + 1);
  double total = 0.0;
  const double num_prior = ed.y ? ga : gb;
  for (int k = 0; k < K; ++k) {
    int a = side == Side::Source ? st.assign.A(k, other, ed.m) : st.assign.A(other, k, ed.m);
    int b = side == Side::Source ? st.assign.B(k, other, ed.m) : st.assign.B(other, k, ed.m);
    w[k] = st.pi(k, node) * ((ed.y ? a : b) + num_prior) / (a + b + ga + gb);
    total += w[k];
  }
  w[K] = st.truncated() ? 0.0 : st.tail(node) * num_prior / (ga + gb);
  total += w[K];
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("indicator posterior is not normalizable");

  IndicatorDraw out;
  int k = static_cast<int>(st.rng.categorical(w, total));
  if (k == K) {
    for (int steps = 0;; ++steps) {
      if (steps >= st.config.walk_cap)
        throw NumericalError("retrospective walk exceeded " + std::to_string(st.config.walk_cap) + " steps");
      detail::append_community(st);
      ++out.born;
      if (st.rng.bernoulli(logistic(st.nodes.v(k, node)))) break;
      ++k;
    }
  }
  out.index = k;
  (side == Side::Source ? st.assign.s : st.assign.r)[e] = k;
  detail::add_edge(st, e, +1);
  return out;
}

/// Drops instantiated communities above the largest occupied index. Empty
/// communities below it stay, since their sticks shape later weights.
inline void prune_communities(ChainState& st) {
  if (st.truncated()) return;
  const int keep = std::max(st.K_occupied(), 1);
  if (keep == st.K()) return;
  detail::resize_communities(st, keep);
  detail::refresh_all_sticks(st);
}

/// log prod of pi over the indicators drawn from node i's sticks, evaluated
/// at a candidate score column. Reads only node i's indicator counts.
inline double node_indicator_loglik(const ChainState& st, int i, const Eigen::VectorXd& v_col) {
  StickAccumulator acc;
  double ll = 0.0;
  const int K = st.K();
  for (int k = 0; k < K; ++k) {
    double lp = (st.truncated() && k == K - 1) ? acc.close() : acc.next(v_col(k));
    int n = st.node_counts(k, i);
    if (n > 0) ll += n * lp;
  }
  return ll;
}

struct VUpdate {
  int proposals = 0;
  int accepted = 0;
};

namespace detail {

// Given the counts, v_ki only enters through n log psi(v) + m log psi(-v),
// where n uses stick k and m is the number of indicators past it.
struct ScoreConditional {
  double n, m, mean, prec;
  double log_density(double v) const {
    return n * log_logistic(v) + m * log_logistic(-v) - 0.5 * prec * (v - mean) * (v - mean);
  }
  double grad(double v) const { return n * logistic(-v) - m * logistic(v) - prec * (v - mean); }
  double curvature(double v) const { return (n + m) * logistic(v) * logistic(-v) + prec; }
  // grad is strictly decreasing, so Newton steps are kept inside a bracket
  // and replaced by bisection when they leave it
  double mode() const {
    double lo = mean, hi = mean;
    for (double w = 1.0; grad(lo) < 0.0; w *= 2.0) lo = mean - w;
    for (double w = 1.0; grad(hi) > 0.0; w *= 2.0) hi = mean + w;
    double v = 0.5 * (lo + hi);
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      double g = grad(v);
      if (g == 0.0) break;
      (g > 0.0 ? lo : hi) = v;
      double next = v + g / curvature(v);
      v = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
      if (std::abs(g) < 1e-10) break;
    }
    return v;
  }
};

}  // namespace detail

/// Metropolis-Hastings independence step for node i's scores. Returns the
/// number of proposals made and accepted.
inline VUpdate resample_v(ChainState& st, int i) {
  const int K = st.K();
  const double sd_V = 1.0 / std::sqrt(st.global.lambda_V);
  Eigen::VectorXd mean = st.global.eta.transpose() * st.phi.phi.col(i);
  Eigen::VectorXd current = st.nodes.v.col(i);
  VUpdate out;

  if (st.config.v_proposal == VProposal::Column) {
    Eigen::VectorXd prop(K);
    for (int k = 0; k < K; ++k) prop(k) = st.rng.normal(mean(k), sd_V);
    double log_ratio = node_indicator_loglik(st, i, prop) - node_indicator_loglik(st, i, current);
    out.proposals = 1;
    if (log_ratio >= 0.0 || std::log(st.rng.uniform()) < log_ratio) {
      st.nodes.v.col(i) = prop;
      detail::refresh_node_sticks(st, i);
      out.accepted = 1;
    }
    return out;
  }

  if (st.config.v_proposal == VProposal::Laplace) {
    const int open = st.truncated() ? K - 1 : K;
    double beyond = 0.0;
    for (int k = 0; k < K; ++k) beyond += st.node_counts(k, i);
    for (int k = 0; k < open; ++k) {
      double n = st.node_counts(k, i);
      beyond -= n;
      detail::ScoreConditional c{n, beyond, mean(k), st.global.lambda_V};
      double centre = c.mode();
      double sd = 1.0 / std::sqrt(c.curvature(centre));
      double prop = st.rng.normal(centre, sd);
      auto log_q = [&](double x) { return -0.5 * (x - centre) * (x - centre) / (sd * sd); };
      double log_ratio = c.log_density(prop) - c.log_density(current(k)) + log_q(current(k)) - log_q(prop);
      ++out.proposals;
      if (log_ratio >= 0.0 || std::log(st.rng.uniform()) < log_ratio) {
        current(k) = prop;
        ++out.accepted;
      }
    }
    // a closed last stick carries no indicator likelihood: exact prior draw
    for (int k = open; k < K; ++k) {
      current(k) = st.rng.normal(mean(k), sd_V);
      ++out.proposals;
      ++out.accepted;
    }
    if (out.accepted > 0) {
      st.nodes.v.col(i) = current;
      detail::refresh_node_sticks(st, i);
    }
    return out;
  }

  double current_ll = node_indicator_loglik(st, i, current);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd prop = current;
    prop(k) = st.rng.normal(mean(k), sd_V);
    double prop_ll = node_indicator_loglik(st, i, prop);
    double log_ratio = prop_ll - current_ll;
    ++out.proposals;
    if (log_ratio >= 0.0 || std::log(st.rng.uniform()) < log_ratio) {
      current = prop;
      current_ll = prop_ll;
      ++out.accepted;
    }
  }
  if (out.accepted > 0) {
    st.nodes.v.col(i) = current;
    detail::refresh_node_sticks(st, i);
  }
  return out;
}

/// Gaussian full conditional of community k's regression weights.
inline void resample_eta(ChainState& st, int k) {
  const auto& g = st.global;
  const int F = st.F();
  Eigen::MatrixXd P = g.lambda_V * st.phi_gram;
  P.diagonal().array() += g.lambda_F;
  Eigen::VectorXd b = g.lambda_F * g.mu + g.lambda_V * (st.phi.phi * st.nodes.v.row(k).transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) throw NumericalError("weight posterior precision is not positive definite");
  Eigen::VectorXd mean = llt.solve(b);
  Eigen::VectorXd z(F);
  for (int f = 0; f < F; ++f) z(f) = st.rng.normal();
  // P = L L^T, so L^{-T} z has covariance P^{-1}
  st.global.eta.col(k) = mean + llt.matrixU().solve(z);
}

inline void resample_mu(ChainState& st) {
  auto& g = st.global;
  const int K = st.K();
  const double prec = g.lambda_S + K * g.lambda_F;
  for (int f = 0; f < st.F(); ++f) {
    double sum = K > 0 ? g.eta.row(f).sum() : 0.0;
    g.mu(f) = st.rng.normal(g.lambda_F * sum / prec, 1.0 / std::sqrt(prec));
  }
}

inline void resample_precisions(ChainState& st) {
  auto& g = st.global;
  const auto& h = st.hyper;
  const int K = st.K(), F = st.F(), N = st.N();

  double ss_eta = (g.eta.colwise() - g.mu).squaredNorm();
  g.lambda_F = st.rng.gamma(h.a_F + 0.5 * K * F, h.b_F + 0.5 * ss_eta);

  g.lambda_S = st.rng.gamma(h.a_S + 0.5 * F, h.b_S + 0.5 * g.mu.squaredNorm());

  if (!st.config.freeze_lambda_V) {
    double ss_v = (st.nodes.v - g.eta.transpose() * st.phi.phi).squaredNorm();
    g.lambda_V = st.rng.gamma(h.a_V + 0.5 * K * N, h.b_V + 0.5 * ss_v);
  }
}

/// sum over cells of log B(A + gamma_a, B + gamma_b) - log B(gamma_a, gamma_b):
/// the edge likelihood with every block probability integrated out.
inline double collapsed_edge_term(const CountTable& A, const CountTable& B, double ga, double gb) {
  const double base = detail::log_beta_fn(ga, gb);
  double total = 0.0;
  for (int m = 0; m < A.M(); ++m)
    for (int k = 0; k < A.K(); ++k)
      for (int l = 0; l < A.K(); ++l) {
        int a = A(k, l, m), b = B(k, l, m);
        if (a + b == 0) continue;
        total += detail::log_beta_fn(a + ga, b + gb) - base;
      }
  return total;
}

/// Joint log density of the instantiated variables, indicators and data,
/// with the block probabilities marginalized.
inline double log_joint(const ChainState& st) {
  using detail::log_normal;
  const auto& g = st.global;
  const auto& h = st.hyper;
  double lp = detail::log_gamma_density(g.lambda_S, h.a_S, h.b_S) +
              detail::log_gamma_density(g.lambda_F, h.a_F, h.b_F) +
              detail::log_gamma_density(g.lambda_V, h.a_V, h.b_V);
  for (int f = 0; f < st.F(); ++f) lp += log_normal(g.mu(f), 0.0, g.lambda_S);
  for (int k = 0; k < st.K(); ++k)
    for (int f = 0; f < st.F(); ++f) lp += log_normal(g.eta(f, k), g.mu(f), g.lambda_F);
  Eigen::MatrixXd mean = g.eta.transpose() * st.phi.phi;
  for (int i = 0; i < st.N(); ++i)
    for (int k = 0; k < st.K(); ++k) lp += log_normal(st.nodes.v(k, i), mean(k, i), g.lambda_V);
  for (int i = 0; i < st.N(); ++i)
    for (int k = 0; k < st.K(); ++k)
      if (st.node_counts(k, i) > 0) lp += st.node_counts(k, i) * st.log_pi(k, i);
  lp += collapsed_edge_term(st.assign.A, st.assign.B, h.gamma_a, h.gamma_b);
  return lp;
}

/// Draws the globals from the prior and places the indicators per
/// `config.init`. With spectral initialization every node starts in its
/// cluster, after which v, eta, mu and the precisions take `init_rounds`
/// conditional updates given those indicators.
inline ChainState init_chain(const EdgeData& data, const Metadata& phi, const HyperParams& hyper, Rng rng,
                             ChainConfig config = {}) {
  detail::check_inputs(data, phi, hyper, config);
  ChainState st;
  st.hyper = hyper;
  st.data = data;
  st.phi = phi;
  st.rng = rng;
  st.config = config;

  auto& g = st.global;
  g.lambda_S = st.rng.gamma(hyper.a_S, hyper.b_S);
  g.lambda_F = st.rng.gamma(hyper.a_F, hyper.b_F);
  g.lambda_V = st.rng.gamma(hyper.a_V, hyper.b_V);
  g.mu.resize(phi.F());
  for (int f = 0; f < phi.F(); ++f) g.mu(f) = st.rng.normal(0.0, 1.0 / std::sqrt(g.lambda_S));

  std::vector<int> label;
  int K = 1;
  if (config.init == InitIndicators::Spectral) {
    label = spectral_labels(data, config.init_communities, st.rng);
    K = 1 + *std::max_element(label.begin(), label.end());
    if (config.truncation > 0) {
      for (int& l : label) l = std::min(l, config.truncation - 1);
      K = config.truncation;
    }
  } else if (config.truncation > 0) {
    K = config.truncation;
  }

  g.eta.resize(phi.F(), K);
  st.nodes.v.resize(K, data.N());
  for (int k = 0; k < K; ++k) {
    for (int f = 0; f < phi.F(); ++f) g.eta(f, k) = st.rng.normal(g.mu(f), 1.0 / std::sqrt(g.lambda_F));
    for (int i = 0; i < data.N(); ++i)
      st.nodes.v(k, i) = st.rng.normal(g.eta.col(k).dot(phi.phi.col(i)), 1.0 / std::sqrt(g.lambda_V));
  }

  detail::finish_setup(st);
  st.assign.s.assign(st.edges.size(), 0);
  st.assign.r.assign(st.edges.size(), 0);
  if (config.init == InitIndicators::Prior) {
    for (std::size_t e = 0; e < st.edges.size(); ++e) {
      st.assign.s[e] = detail::draw_from_sticks(st, st.edges[e].i);
      st.assign.r[e] = detail::draw_from_sticks(st, st.edges[e].j);
    }
  } else if (config.init == InitIndicators::Spectral) {
    for (std::size_t e = 0; e < st.edges.size(); ++e) {
      st.assign.s[e] = label[st.edges[e].i];
      st.assign.r[e] = label[st.edges[e].j];
    }
  }
  rebuild_counts(st);

  if (config.init == InitIndicators::Spectral) {
    const auto proposal = st.config.v_proposal;
    st.config.v_proposal = VProposal::Laplace;
    for (int round = 0; round < config.init_rounds; ++round) {
      for (int i = 0; i < st.N(); ++i) resample_v(st, i);
      for (int k = 0; k < st.K(); ++k) resample_eta(st, k);
      resample_mu(st);
      resample_precisions(st);
    }
    st.config.v_proposal = proposal;
  }
  return st;
}

inline ChainState init_chain(const EdgeData& data, const Metadata& phi, const HyperParams& hyper,
                             std::uint64_t seed, ChainConfig config = {}) {
  return init_chain(data, phi, hyper, Rng(seed), config);
}

/// One full iteration: every indicator (source then receiver), prune, node
/// scores, regression weights, mean, precisions.
inline SweepReport sweep(ChainState& st) {
  SweepReport rep;
  for (std::size_t e = 0; e < st.edges.size(); ++e) {
    rep.new_communities_born += resample_indicator(st, e, Side::Source).born;
    rep.new_communities_born += resample_indicator(st, e, Side::Receiver).born;
  }
  prune_communities(st);

  long proposals = 0, accepted = 0;
  for (int i = 0; i < st.N(); ++i)
    for (int t = 0; t < st.config.mh_proposals; ++t) {
      auto u = resample_v(st, i);
      proposals += u.proposals;
      accepted += u.accepted;
    }
  for (int k = 0; k < st.K(); ++k) resample_eta(st, k);
  resample_mu(st);
  resample_precisions(st);

  ++st.iter;
  rep.iter = st.iter;
  rep.log_joint = log_joint(st);
  rep.K_occupied = st.K_occupied();
  rep.K_instantiated = st.K();
  rep.mh_accept_rate = proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
  if (!std::isfinite(rep.log_joint)) throw NumericalError("log joint became non-finite");
  return rep;
}

}  // namespace nmdr
