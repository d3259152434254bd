#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmdr {

// Error categories; the CLI maps them to exit codes 1, 2 and 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fixed scalars of the prior hierarchy. Gamma priors use shape-rate.
struct HyperParams {
  double a_F = 1.0, b_F = 1.0;
  double a_S = 1.0, b_S = 1.0;
  double a_V = 1.0, b_V = 1.0;
  double gamma_a = 1.0, gamma_b = 1.0;

  void validate() const {
    for (double x : {a_F, b_F, a_S, b_S, a_V, b_V, gamma_a, gamma_b})
      if (!(x > 0.0) || !std::isfinite(x))
        throw UsageError("hyperparameters must be finite and strictly positive");
  }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Node covariates, one column per node.
struct Metadata {
  Eigen::MatrixXd phi;                  // F x N
  std::vector<std::string> feature_names;

  int F() const { return static_cast<int>(phi.rows()); }
  int N() const { return static_cast<int>(phi.cols()); }

  static Metadata intercept_only(int n) {
    Metadata md;
    md.phi = Eigen::MatrixXd::Ones(1, n);
    md.feature_names = {"intercept"};
    return md;
  }

  void validate() const {
    if (phi.rows() < 1 || phi.cols() < 1) throw DataError("metadata must have at least one feature and node");
    if (!phi.allFinite()) throw DataError("metadata contains non-finite entries");
  }
};

enum class Obs : std::uint8_t { Absent = 0, Present = 1, Unobserved = 2 };

struct Triple {
  int i = 0, j = 0, m = 0;
  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct ObservedEdge {
  int i, j, m;
  std::uint8_t y;
};

/// Ternary observation tensor over (source, receiver, relation).
class EdgeData {
 public:
  EdgeData() = default;
  EdgeData(int n, int m, Obs fill = Obs::Unobserved)
      : n_(n), m_(m), obs_(static_cast<std::size_t>(n) * n * m, fill) {
    for (int r = 0; r < m; ++r)
      for (int i = 0; i < n; ++i) obs_[offset(i, i, r)] = Obs::Unobserved;
  }

  int N() const { return n_; }
  int M() const { return m_; }

  Obs at(int i, int j, int m) const { return obs_[offset(i, j, m)]; }

  void set(int i, int j, int m, Obs o) {
    if (i == j) return;  // self-pairs stay unobserved
    obs_[offset(i, j, m)] = o;
  }

  bool observed(int i, int j, int m) const { return at(i, j, m) != Obs::Unobserved; }

  /// Observed entries in canonical (relation, source, receiver) order.
  std::vector<ObservedEdge> observed_edges() const {
    std::vector<ObservedEdge> out;
    for (int r = 0; r < m_; ++r)
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) {
          Obs o = at(i, j, r);
          if (o != Obs::Unobserved) out.push_back({i, j, r, static_cast<std::uint8_t>(o == Obs::Present)});
        }
    return out;
  }

  std::size_t count(Obs o) const {
    std::size_t c = 0;
    for (auto x : obs_) c += (x == o);
    return c;
  }

  std::size_t observed_count() const { return count(Obs::Present) + count(Obs::Absent); }

  void validate() const {
    if (n_ < 1 || m_ < 1) throw DataError("edge data needs at least one node and one relation");
    if (observed_count() == 0) throw DataError("edge data has no observed entries");
  }

  std::vector<std::string> node_ids;
  std::vector<std::string> relation_ids;

  friend bool operator==(const EdgeData& a, const EdgeData& b) {
    return a.n_ == b.n_ && a.m_ == b.m_ && a.obs_ == b.obs_;
  }

 private:
  std::size_t offset(int i, int j, int m) const {
    return (static_cast<std::size_t>(m) * n_ + i) * n_ + j;
  }

  int n_ = 0, m_ = 0;
  std::vector<Obs> obs_;
};

/// Regression weights and the precisions of the hierarchy.
struct GlobalState {
  Eigen::MatrixXd eta;  // F x K
  Eigen::VectorXd mu;   // F
  double lambda_S = 1.0, lambda_F = 1.0, lambda_V = 1.0;

  int K() const { return static_cast<int>(eta.cols()); }
};

/// Node scores, K x N.
struct NodeState {
  Eigen::MatrixXd v;
};

/// Dense K x K x M integer table with amortized growth in K.
class CountTable {
 public:
  CountTable() = default;
  CountTable(int k, int m) : k_(k), cap_(std::max(k, 1)), m_(m), data_(static_cast<std::size_t>(cap_) * cap_ * m, 0) {}

  int K() const { return k_; }
  int M() const { return m_; }

  int operator()(int k, int l, int m) const { return data_[offset(k, l, m)]; }
  int& operator()(int k, int l, int m) { return data_[offset(k, l, m)]; }

  void resize(int k) {
    if (k > cap_) {
      int cap = std::max(k, 2 * cap_);
      std::vector<int> next(static_cast<std::size_t>(cap) * cap * m_, 0);
      for (int r = 0; r < m_; ++r)
        for (int a = 0; a < k_; ++a)
          for (int b = 0; b < k_; ++b)
            next[(static_cast<std::size_t>(r) * cap + a) * cap + b] = data_[offset(a, b, r)];
      data_ = std::move(next);
      cap_ = cap;
    } else if (k < k_) {
      // zero the dropped band so later growth starts clean
      for (int r = 0; r < m_; ++r)
        for (int a = 0; a < k_; ++a)
          for (int b = 0; b < k_; ++b)
            if (a >= k || b >= k) data_[offset(a, b, r)] = 0;
    }
    k_ = k;
  }

  friend bool operator==(const CountTable& a, const CountTable& b) {
    if (a.k_ != b.k_ || a.m_ != b.m_) return false;
    for (int r = 0; r < a.m_; ++r)
      for (int x = 0; x < a.k_; ++x)
        for (int y = 0; y < a.k_; ++y)
          if (a(x, y, r) != b(x, y, r)) return false;
    return true;
  }

 private:
  std::size_t offset(int k, int l, int m) const {
    return (static_cast<std::size_t>(m) * cap_ + k) * cap_ + l;
  }

  int k_ = 0, cap_ = 1, m_ = 0;
  std::vector<int> data_;
};

/// Per-observed-entry source/receiver indicators (0-based community ids),
/// aligned with EdgeData::observed_edges(), plus the edge and non-edge counts.
struct AssignmentState {
  std::vector<int> s, r;
  CountTable A, B;
};

}  // namespace nmdr
