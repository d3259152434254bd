#pragma once

#include "nmdr/chain.hpp"
#include "nmdr/random.hpp"
#include "nmdr/sticks.hpp"
#include "nmdr/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace nmdr {

/// Observed entries withheld from training.
struct Mask {
  std::vector<Triple> hidden;
  std::uint64_t seed = 0;
  double p = 0.5;
};

struct MaskedData {
  EdgeData train;
  Mask mask;
};

/// Hides each observed entry independently with probability p.
inline MaskedData make_mask(const EdgeData& data, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("mask probability must lie in (0,1)");
  MaskedData out{data, Mask{{}, seed, p}};
  Rng rng(seed);
  for (const auto& e : data.observed_edges()) {
    if (rng.bernoulli(p)) {
      out.mask.hidden.push_back({e.i, e.j, e.m});
      out.train.set(e.i, e.j, e.m, Obs::Unobserved);
    }
  }
  if (out.train.observed_count() == 0) throw DataError("mask hides every observed entry");
  return out;
}

/// What a posterior sample contributes to link prediction: per-node stick
/// weights and the block count tables.
struct PredictiveSample {
  int N = 0, M = 0, K = 0;
  double gamma_a = 1.0, gamma_b = 1.0;
  Eigen::MatrixXd pi;     // K x N
  Eigen::VectorXd tail;   // N
  CountTable A, B;
  double log_joint = 0.0;

  static PredictiveSample from(const ChainState& st) {
    PredictiveSample ps;
    ps.N = st.N();
    ps.M = st.M();
    ps.K = st.K();
    ps.gamma_a = st.hyper.gamma_a;
    ps.gamma_b = st.hyper.gamma_b;
    ps.pi = st.pi;
    ps.tail.resize(st.N());
    for (int i = 0; i < st.N(); ++i) ps.tail(i) = st.tail(i);
    ps.A = st.assign.A;
    ps.B = st.assign.B;
    ps.log_joint = nmdr::log_joint(st);
    return ps;
  }

  /// Instantiated pairs use the posterior-mean block probability; all other
  /// mass falls back to the prior mean.
  double link_probability(int i, int j, int m) const {
    const double ga = gamma_a, gb = gamma_b;
    double inst = 0.0, mass = 0.0;
    for (int k = 0; k < K; ++k) {
      double pk = pi(k, i);
      if (pk == 0.0) continue;
      for (int l = 0; l < K; ++l) {
        double w = pk * pi(l, j);
        int a = A(k, l, m), b = B(k, l, m);
        inst += w * (a + ga) / (a + b + ga + gb);
        mass += w;
      }
    }
    double p = inst + std::max(0.0, 1.0 - mass) * ga / (ga + gb);
    return std::clamp(p, 0.0, 1.0);
  }
};

struct PredictionRow {
  int i, j, m;
  double p_hat;
  std::optional<int> y_true;
};

using PredictionTable = std::vector<PredictionRow>;

/// Posterior-predictive edge probabilities averaged over samples.
inline PredictionTable predict_links(std::span<const PredictiveSample> samples, std::span<const Triple> queries,
                                     const EdgeData* truth = nullptr) {
  if (samples.empty()) throw UsageError("prediction needs at least one posterior sample");
  PredictionTable out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    double sum = 0.0;
    for (const auto& s : samples) sum += s.link_probability(q.i, q.j, q.m);
    PredictionRow row{q.i, q.j, q.m, sum / static_cast<double>(samples.size()), std::nullopt};
    if (truth && truth->observed(q.i, q.j, q.m)) row.y_true = truth->at(q.i, q.j, q.m) == Obs::Present;
    out.push_back(row);
  }
  return out;
}

inline PredictionTable predict_links(std::span<const ChainState> states, std::span<const Triple> queries,
                                     const EdgeData* truth = nullptr) {
  std::vector<PredictiveSample> samples;
  for (const auto& st : states) samples.push_back(PredictiveSample::from(st));
  return predict_links(samples, queries, truth);
}

/// Mann-Whitney AUC over rows carrying a label; ties count one half.
inline double auc(const PredictionTable& table) {
  std::vector<std::pair<double, int>> rows;
  for (const auto& r : table)
    if (r.y_true) rows.emplace_back(r.p_hat, *r.y_true);
  std::sort(rows.begin(), rows.end());
  double n_pos = 0, n_neg = 0, rank_sum_pos = 0;
  for (std::size_t a = 0; a < rows.size();) {
    std::size_t b = a;
    while (b < rows.size() && rows[b].first == rows[a].first) ++b;
    double mid_rank = 0.5 * static_cast<double>(a + 1 + b);  // average of ranks a+1..b
    for (std::size_t t = a; t < b; ++t) {
      if (rows[t].second) {
        rank_sum_pos += mid_rank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    a = b;
  }
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC needs both positive and negative labels");
  return (rank_sum_pos - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

/// D_ij = 1/2 sum_k |pi_ki - pi_kj|, the tail mass counted as one extra
/// pseudo-community.
inline Eigen::MatrixXd variational_distance(std::span<const StickWeights> nodes) {
  const int N = static_cast<int>(nodes.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      if (nodes[i].K() != nodes[j].K()) throw UsageError("all nodes must share the instantiated community count");
      double d = std::abs(nodes[i].tail - nodes[j].tail);
      for (int k = 0; k < nodes[i].K(); ++k) d += std::abs(nodes[i].pi[k] - nodes[j].pi[k]);
      D(i, j) = D(j, i) = std::clamp(0.5 * d, 0.0, 1.0);
    }
  return D;
}

struct AffinityEdge {
  int i, j;
  double weight;
};

struct AffinityGraph {
  int N = 0;
  std::vector<AffinityEdge> edges;
  std::vector<int> community;  // argmax membership per node
  std::vector<std::string> labels;
};

/// Keeps pairs whose affinity 1 - D_ij strictly exceeds the threshold.
inline AffinityGraph affinity_graph(const Eigen::MatrixXd& D, double threshold = 0.5,
                                    std::span<const StickWeights> memberships = {}) {
  AffinityGraph g;
  g.N = static_cast<int>(D.rows());
  for (int i = 0; i < g.N; ++i)
    for (int j = i + 1; j < g.N; ++j) {
      double w = 1.0 - D(i, j);
      if (w > threshold) g.edges.push_back({i, j, w});
    }
  for (const auto& m : memberships) {
    auto it = std::max_element(m.pi.begin(), m.pi.end());
    g.community.push_back(it == m.pi.end() || m.tail > *it ? m.K() : static_cast<int>(it - m.pi.begin()));
  }
  return g;
}

inline void write_dot(std::ostream& os, const AffinityGraph& g) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  os << "graph affinity {\n";
  for (int i = 0; i < g.N; ++i) {
    std::string label = i < static_cast<int>(g.labels.size()) ? g.labels[i] : std::to_string(i);
    os << "  n" << i << " [label=\"" << label << "\"";
    if (i < static_cast<int>(g.community.size())) {
      int c = g.community[i];
      os << ", community=" << c << ", style=filled, fillcolor=\"" << palette[c % 10] << "\"";
    }
    os << "];\n";
  }
  for (const auto& e : g.edges) os << "  n" << e.i << " -- n" << e.j << " [weight=" << e.weight << "];\n";
  os << "}\n";
}

}  // namespace nmdr
