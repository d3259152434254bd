#pragma once

#include "nmdr/random.hpp"
#include "nmdr/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace nmdr {

/// Node embedding from the training adjacency: row i holds node i's
/// outgoing then incoming entries over every relation, with unobserved
/// entries filled by the observed density.
struct SpectralEmbedding {
  Eigen::MatrixXd coords;          // N x rank, left singular vectors scaled by singular values
  Eigen::VectorXd singular_values; // all of them, descending
};

inline SpectralEmbedding spectral_embedding(const EdgeData& data) {
  const int N = data.N(), M = data.M();
  const auto edges = data.observed_edges();
  double present = 0.0;
  for (const auto& e : edges) present += e.y;
  const double rho = edges.empty() ? 0.0 : present / static_cast<double>(edges.size());

  Eigen::MatrixXd X = Eigen::MatrixXd::Constant(N, 2 * N * M, rho);
  for (const auto& e : edges) {
    X(e.i, e.m * N + e.j) = e.y;
    X(e.j, N * M + e.m * N + e.i) = e.y;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
  SpectralEmbedding out;
  out.singular_values = svd.singularValues();
  out.coords = svd.matrixU() * out.singular_values.asDiagonal();
  return out;
}

/// Largest ratio sigma_k / sigma_{k+1} over 2 <= k <= max_rank. The leading
/// value mostly tracks overall density, so k = 1 is never chosen.
inline int eigengap_rank(const Eigen::VectorXd& sigma, int max_rank) {
  const int top = std::min<int>(max_rank, static_cast<int>(sigma.size()) - 1);
  if (top < 2) return 1;
  int best = 2;
  double best_ratio = 0.0;
  for (int k = 2; k <= top; ++k) {
    double denom = sigma(k);  // sigma_{k+1}, zero-based
    double ratio = denom > 0.0 ? sigma(k - 1) / denom : std::numeric_limits<double>::infinity();
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` by inertia.
/// Labels are renumbered so cluster 0 is the largest.
inline std::vector<int> kmeans(const Eigen::MatrixXd& X, int K, Rng& rng, int restarts = 10, int iters = 100) {
  const int n = static_cast<int>(X.rows());
  K = std::clamp(K, 1, std::max(n, 1));
  std::vector<int> best(n, 0);
  double best_inertia = std::numeric_limits<double>::infinity();

  for (int rep = 0; rep < restarts; ++rep) {
    Eigen::MatrixXd C(K, X.cols());
    C.row(0) = X.row(static_cast<Eigen::Index>(rng.index(n)));
    Eigen::VectorXd d2(n);
    for (int c = 1; c < K; ++c) {
      for (int i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (int b = 0; b < c; ++b) m = std::min(m, (X.row(i) - C.row(b)).squaredNorm());
        d2(i) = m;
      }
      double total = d2.sum();
      int pick = total > 0.0 ? rng.categorical(std::vector<double>(d2.data(), d2.data() + n), total)
                             : static_cast<int>(rng.index(n));
      C.row(c) = X.row(pick);
    }

    std::vector<int> label(n, -1);
    double inertia = 0.0;
    for (int it = 0; it < iters; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double m = std::numeric_limits<double>::infinity();
        for (int c = 0; c < K; ++c) {
          double d = (X.row(i) - C.row(c)).squaredNorm();
          if (d < m) {
            m = d;
            arg = c;
          }
        }
        inertia += m;
        if (label[i] != arg) {
          label[i] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(K, X.cols());
      std::vector<int> size(K, 0);
      for (int i = 0; i < n; ++i) {
        sum.row(label[i]) += X.row(i);
        ++size[label[i]];
      }
      for (int c = 0; c < K; ++c)
        if (size[c] > 0) C.row(c) = sum.row(c) / size[c];
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = label;
    }
  }

  std::vector<int> size(K, 0);
  for (int l : best) ++size[l];
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return size[a] > size[b]; });
  std::vector<int> rank(K);
  for (int r = 0; r < K; ++r) rank[order[r]] = r;
  for (int& l : best) l = rank[l];
  return best;
}

/// Hard node clusters for initializing indicators. `K` = 0 picks the count
/// by eigengap. Labels are contiguous since empty clusters sort last.
inline std::vector<int> spectral_labels(const EdgeData& data, int K, Rng& rng, int max_rank = 10) {
  auto emb = spectral_embedding(data);
  if (K <= 0) K = eigengap_rank(emb.singular_values, std::min(max_rank, data.N() / 2));
  K = std::clamp(K, 1, static_cast<int>(emb.coords.cols()));
  return kmeans(emb.coords.leftCols(K), K, rng);
}

}  // namespace nmdr
