#pragma once

#include "nmdr/random.hpp"
#include "nmdr/sticks.hpp"
#include "nmdr/types.hpp"

#include "json.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <tuple>
#include <vector>

namespace nmdr {

/// Every latent draw made by a forward simulation.
struct LatentRecord {
  HyperParams hyper;
  double lambda_S = 0, lambda_F = 0, lambda_V = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd eta;  // F x K
  Eigen::MatrixXd v;    // K x N
  // One indicator pair per non-self (i, j, m), in EdgeData::observed_edges() order
  // of the complete tensor.
  std::vector<int> s, r;
  std::map<std::tuple<int, int, int>, double> W;  // drawn lazily, keyed (k, l, m)
  int max_stick_consulted = -1;                   // instrumentation

  int K() const { return static_cast<int>(eta.cols()); }

  int K_occupied() const {
    int mx = -1;
    for (int x : s) mx = std::max(mx, x);
    for (int x : r) mx = std::max(mx, x);
    return mx + 1;
  }
};

struct SimulationResult {
  EdgeData data;
  LatentRecord truth;
};

struct SimulationOptions {
  int max_communities = 0;  // 0 means 10 * N
};

namespace detail {

/// Communities of the infinite model, instantiated on first touch. Each new
/// community draws its weight column and the score of every node at once.
class LazyCommunities {
 public:
  LazyCommunities(const Metadata& md, const Eigen::VectorXd& mu, double lambda_F, double lambda_V,
                  int cap, Rng& rng)
      : md_(md), mu_(mu), sd_F_(1.0 / std::sqrt(lambda_F)), sd_V_(1.0 / std::sqrt(lambda_V)),
        cap_(cap), rng_(rng), log_remaining_(md.N()) {
    eta_.resize(md.F(), 0);
    v_.resize(0, md.N());
  }

  int K() const { return static_cast<int>(eta_.cols()); }

  /// Inversion draw of node i's indicator: smallest k whose residual stick
  /// mass drops below 1 - u.
  int draw(int i, double u) {
    const double target = std::log1p(-u);
    for (int k = 0;; ++k) {
      if (k == K()) instantiate();
      max_consulted_ = std::max(max_consulted_, k);
      double rem = stick_remaining(i, k);
      if (rem < target) return k;
    }
  }

  const Eigen::MatrixXd& eta() const { return eta_; }
  const Eigen::MatrixXd& v() const { return v_; }
  int max_consulted() const { return max_consulted_; }

 private:
  // log of the mass left after breaking sticks 0..k for node i
  double stick_remaining(int i, int k) {
    auto& cache = log_remaining_[i];
    while (static_cast<int>(cache.size()) <= k) {
      StickAccumulator acc{cache.empty() ? 0.0 : cache.back()};
      acc.next(v_(static_cast<int>(cache.size()), i));
      cache.push_back(acc.log_remaining);
    }
    return cache[k];
  }

  void instantiate() {
    if (K() >= cap_)
      throw NumericalError("stick extension exceeded " + std::to_string(cap_) +
                           " communities; hyperparameters look degenerate");
    const int F = md_.F(), N = md_.N(), k = K();
    eta_.conservativeResize(F, k + 1);
    for (int f = 0; f < F; ++f) eta_(f, k) = rng_.normal(mu_(f), sd_F_);
    v_.conservativeResize(k + 1, N);
    for (int j = 0; j < N; ++j) v_(k, j) = rng_.normal(eta_.col(k).dot(md_.phi.col(j)), sd_V_);
  }

  const Metadata& md_;
  const Eigen::VectorXd& mu_;
  double sd_F_, sd_V_;
  int cap_;
  Rng& rng_;
  Eigen::MatrixXd eta_, v_;
  std::vector<std::vector<double>> log_remaining_;
  int max_consulted_ = -1;
};

}  // namespace detail

/// Exact forward draw from the infinite model. Communities and block
/// probabilities are instantiated only when an indicator reaches them.
inline SimulationResult simulate_network(const HyperParams& hyper, const Metadata& md, int M, Rng& rng,
                                         SimulationOptions opts = {}) {
  hyper.validate();
  md.validate();
  if (M < 1) throw UsageError("relation count must be positive");
  const int N = md.N(), F = md.F();
  const int cap = opts.max_communities > 0 ? opts.max_communities : 10 * N;

  SimulationResult out;
  auto& t = out.truth;
  t.hyper = hyper;
  t.lambda_S = rng.gamma(hyper.a_S, hyper.b_S);
  t.lambda_F = rng.gamma(hyper.a_F, hyper.b_F);
  t.lambda_V = rng.gamma(hyper.a_V, hyper.b_V);
  t.mu.resize(F);
  for (int f = 0; f < F; ++f) t.mu(f) = rng.normal(0.0, 1.0 / std::sqrt(t.lambda_S));

  detail::LazyCommunities comms(md, t.mu, t.lambda_F, t.lambda_V, cap, rng);
  out.data = EdgeData(N, M, Obs::Unobserved);
  for (int m = 0; m < M; ++m)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        int s = comms.draw(i, rng.uniform());
        int r = comms.draw(j, rng.uniform());
        auto [it, fresh] = t.W.try_emplace({s, r, m}, 0.0);
        if (fresh) it->second = rng.beta(hyper.gamma_a, hyper.gamma_b);
        bool y = rng.bernoulli(it->second);
        t.s.push_back(s);
        t.r.push_back(r);
        out.data.set(i, j, m, y ? Obs::Present : Obs::Absent);
      }
  t.eta = comms.eta();
  t.v = comms.v();
  t.max_stick_consulted = comms.max_consulted();
  return out;
}

inline SimulationResult simulate_network(const HyperParams& hyper, const Metadata& md, int M,
                                         std::uint64_t seed, SimulationOptions opts = {}) {
  Rng rng(seed);
  return simulate_network(hyper, md, M, rng, opts);
}

// ---------------------------------------------------------------------------
// Fixed-parameter block models used as benchmarks.

struct SynthSingleConfig {
  int nodes = 80;
  int blocks = 5;
  double within = 0.8;
  double between = 0.05;
};

struct SynthMixedConfig {
  int nodes = 80;
  int blocks = 4;
  double alpha = 0.3;
  double diagonal = 0.8;
  double off_diagonal = 0.1;
};

struct SyntheticDataset {
  EdgeData data;
  Eigen::MatrixXd pi;      // blocks x N, true memberships
  Eigen::MatrixXd W;       // blocks x blocks
  std::vector<int> block;  // hard labels (argmax of pi)
  std::vector<int> s, r;   // per non-self pair, canonical order
};

/// Each node belongs to exactly one of `blocks` equal-sized blocks.
inline SyntheticDataset synth_single(Rng& rng, const SynthSingleConfig& cfg = {}) {
  if (cfg.nodes < cfg.blocks || cfg.nodes % cfg.blocks != 0)
    throw UsageError("synth-single needs nodes divisible by blocks");
  SyntheticDataset ds;
  const int N = cfg.nodes, B = cfg.blocks, size = N / B;
  ds.pi = Eigen::MatrixXd::Zero(B, N);
  ds.W = Eigen::MatrixXd::Constant(B, B, cfg.between);
  ds.W.diagonal().setConstant(cfg.within);
  for (int i = 0; i < N; ++i) {
    ds.block.push_back(i / size);
    ds.pi(i / size, i) = 1.0;
  }
  ds.data = EdgeData(N, 1, Obs::Unobserved);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      ds.s.push_back(ds.block[i]);
      ds.r.push_back(ds.block[j]);
      bool y = rng.bernoulli(ds.W(ds.block[i], ds.block[j]));
      ds.data.set(i, j, 0, y ? Obs::Present : Obs::Absent);
    }
  return ds;
}

/// Memberships drawn from a symmetric Dirichlet; each pair draws its own
/// source and receiver block.
inline SyntheticDataset synth_mixed(Rng& rng, const SynthMixedConfig& cfg = {}) {
  if (cfg.nodes < 1 || cfg.blocks < 1 || !(cfg.alpha > 0.0)) throw UsageError("invalid synth-mixed config");
  SyntheticDataset ds;
  const int N = cfg.nodes, B = cfg.blocks;
  ds.pi.resize(B, N);
  ds.W = Eigen::MatrixXd::Constant(B, B, cfg.off_diagonal);
  ds.W.diagonal().setConstant(cfg.diagonal);
  std::vector<double> alpha(B, cfg.alpha);
  for (int i = 0; i < N; ++i) {
    auto p = rng.dirichlet(alpha);
    for (int k = 0; k < B; ++k) ds.pi(k, i) = p[k];
    Eigen::Index best;
    ds.pi.col(i).maxCoeff(&best);
    ds.block.push_back(static_cast<int>(best));
  }
  ds.data = EdgeData(N, 1, Obs::Unobserved);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      auto s = rng.categorical(ds.pi.col(i), 1.0);
      auto r = rng.categorical(ds.pi.col(j), 1.0);
      ds.s.push_back(static_cast<int>(s));
      ds.r.push_back(static_cast<int>(r));
      bool y = rng.bernoulli(ds.W(s, r));
      ds.data.set(i, j, 0, y ? Obs::Present : Obs::Absent);
    }
  return ds;
}

inline SyntheticDataset synth_single(std::uint64_t seed, const SynthSingleConfig& cfg = {}) {
  Rng rng(seed);
  return synth_single(rng, cfg);
}

inline SyntheticDataset synth_mixed(std::uint64_t seed, const SynthMixedConfig& cfg = {}) {
  Rng rng(seed);
  return synth_mixed(rng, cfg);
}

// ---------------------------------------------------------------------------
// Latent record files: JSON lines, one latent group per line, each carrying a
// "group" key. Community indices are 0-based.

namespace detail {
inline nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    auto row = nlohmann::json::array();
    for (Eigen::Index b = 0; b < m.cols(); ++b) row.push_back(m(a, b));
    rows.push_back(std::move(row));
  }
  return rows;
}
}  // namespace detail

inline void write_latent_record(std::ostream& os, const LatentRecord& t) {
  using nlohmann::json;
  const auto& h = t.hyper;
  os << json{{"group", "hyper"}, {"a_F", h.a_F}, {"b_F", h.b_F}, {"a_S", h.a_S}, {"b_S", h.b_S},
             {"a_V", h.a_V}, {"b_V", h.b_V}, {"gamma_a", h.gamma_a}, {"gamma_b", h.gamma_b}}
            .dump()
     << '\n';
  std::vector<double> mu(t.mu.data(), t.mu.data() + t.mu.size());
  os << json{{"group", "precisions"}, {"lambda_S", t.lambda_S}, {"lambda_F", t.lambda_F}, {"lambda_V", t.lambda_V}}
            .dump()
     << '\n';
  os << json{{"group", "mu"}, {"values", mu}}.dump() << '\n';
  os << json{{"group", "eta"}, {"K", t.K()}, {"rows", detail::matrix_rows(t.eta)}}.dump() << '\n';
  os << json{{"group", "v"}, {"K", t.K()}, {"rows", detail::matrix_rows(t.v)}}.dump() << '\n';
  auto w = json::array();
  for (const auto& [key, p] : t.W) w.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), p});
  os << json{{"group", "W"}, {"entries", w}}.dump() << '\n';
  os << json{{"group", "indicators"}, {"s", t.s}, {"r", t.r}}.dump() << '\n';
}

inline void write_latent_record(std::ostream& os, const SyntheticDataset& ds) {
  using nlohmann::json;
  os << json{{"group", "memberships"}, {"rows", detail::matrix_rows(ds.pi)}}.dump() << '\n';
  os << json{{"group", "blocks"}, {"values", ds.block}}.dump() << '\n';
  os << json{{"group", "W"}, {"rows", detail::matrix_rows(ds.W)}}.dump() << '\n';
  os << json{{"group", "indicators"}, {"s", ds.s}, {"r", ds.r}}.dump() << '\n';
}

}  // namespace nmdr
