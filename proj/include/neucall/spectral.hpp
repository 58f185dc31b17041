#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "neucall/acfg.hpp"
#include "neucall/error.hpp"

namespace neucall {

struct SpectralOptions {
  std::size_t dense_limit = 512;  // components up to this size use a dense solve
  double tolerance = 1e-9;        // Ritz residual bound for the iterative path
  std::size_t max_iterations = 10000;
};

// Eigenpairs of one connected component's normalized Laplacian, restricted to the
// smallest nonzero eigenvalues. Vector rows follow `nodes` order.
struct ComponentSpectrum {
  std::vector<NodeId> nodes;  // ascending node ids
  std::vector<double> eigenvalues;
  Eigen::MatrixXd vectors;  // nodes.size() x eigenvalues.size()
};

namespace spectral_detail {

inline std::vector<std::vector<NodeId>> components(const HomogeneousGraph& g,
                                                   std::vector<std::vector<NodeId>>& adjacency) {
  adjacency.assign(g.node_count, {});
  for (auto [a, b] : g.edges) {
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  }
  std::vector<std::vector<NodeId>> out;
  std::vector<bool> seen(g.node_count, false);
  for (NodeId s = 0; s < g.node_count; ++s) {
    if (seen[s]) continue;
    std::vector<NodeId> comp{s};
    seen[s] = true;
    for (std::size_t i = 0; i < comp.size(); ++i) {
      for (NodeId v : adjacency[comp[i]]) {
        if (!seen[v]) {
          seen[v] = true;
          comp.push_back(v);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

// Normalized Laplacian of one component as a local sparse operator.
struct LocalLaplacian {
  std::vector<std::vector<std::size_t>> nbrs;
  Eigen::VectorXd inv_sqrt_deg;
  Eigen::VectorXd null_vector;  // unit vector proportional to sqrt(degree)

  LocalLaplacian(const std::vector<NodeId>& comp, const std::vector<std::vector<NodeId>>& adjacency) {
    const std::size_t n = comp.size();
    nbrs.resize(n);
    inv_sqrt_deg.resize(n);
    null_vector.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (NodeId v : adjacency[comp[i]]) {
        nbrs[i].push_back(static_cast<std::size_t>(std::lower_bound(comp.begin(), comp.end(), v) - comp.begin()));
      }
      const double d = static_cast<double>(nbrs[i].size());
      inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
      null_vector[i] = std::sqrt(d);
    }
    null_vector.normalize();
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = x;
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      double acc = 0.0;
      for (auto j : nbrs[i]) acc += inv_sqrt_deg[j] * x[j];
      y[i] -= inv_sqrt_deg[i] * acc;
    }
    return y;
  }

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(nbrs.size());
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (auto j : nbrs[i]) L(i, j) -= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
    return L;
  }
};

struct Pairs {
  std::vector<double> values;
  std::vector<Eigen::VectorXd> vectors;
};

// Lanczos with full reorthogonalization on the operator deflated by `locked`. Returns the
// smallest `k` converged Ritz pairs of that run.
inline Pairs lanczos_run(const LocalLaplacian& op, const std::vector<Eigen::VectorXd>& locked, std::size_t k,
                         std::uint64_t seed, const SpectralOptions& opt, std::size_t& iterations,
                         std::size_t component) {
  const auto n = static_cast<Eigen::Index>(op.nbrs.size());
  auto deflate = [&](Eigen::VectorXd& w) {
    for (const auto& u : locked) w -= u.dot(w) * u;
  };
  std::mt19937_64 rng(seed);
  Eigen::VectorXd q(n);
  for (Eigen::Index i = 0; i < n; ++i) q[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  deflate(q);
  deflate(q);
  if (q.norm() < 1e-12) return {};
  q.normalize();

  std::vector<Eigen::VectorXd> basis{q};
  std::vector<double> alpha, beta;
  const std::size_t max_dim = static_cast<std::size_t>(n) - std::min<std::size_t>(locked.size(), n);
  Pairs result;
  while (true) {
    if (++iterations > opt.max_iterations) throw EigensolveFailure(component);
    const auto& qj = basis.back();
    Eigen::VectorXd w = op.apply(qj);
    alpha.push_back(qj.dot(w));
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) w -= b.dot(w) * b;
      deflate(w);
    }
    const double b_next = w.norm();
    const std::size_t m = alpha.size();
    const bool exhausted = b_next < 1e-12 || m >= max_dim;
    if (exhausted || m % 10 == 0 || m == std::min(k, max_dim)) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (std::size_t i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      const std::size_t want = std::min(k, m);
      bool converged = true;
      for (std::size_t i = 0; i < want && !exhausted; ++i) {
        if (std::abs(b_next * es.eigenvectors()(m - 1, i)) > opt.tolerance) converged = false;
      }
      if (converged) {
        for (std::size_t i = 0; i < want; ++i) {
          Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
          for (std::size_t j = 0; j < m; ++j) v += es.eigenvectors()(j, i) * basis[j];
          v.normalize();
          result.values.push_back(es.eigenvalues()[i]);
          result.vectors.push_back(std::move(v));
        }
        return result;
      }
    }
    if (exhausted) return result;
    beta.push_back(b_next);
    basis.push_back(w / b_next);
  }
}

inline Pairs lanczos_smallest(const LocalLaplacian& op, std::size_t k, const SpectralOptions& opt,
                              std::size_t component) {
  Pairs found;
  std::size_t iterations = 0;
  std::vector<Eigen::VectorXd> locked{op.null_vector};
  for (std::uint64_t restart = 0;; ++restart) {
    Pairs run = lanczos_run(op, locked, k, 0x9e3779b97f4a7c15ULL + restart, opt, iterations, component);
    if (run.values.empty()) break;
    const bool full = found.values.size() >= k;
    if (full && run.values.front() >= found.values[k - 1] - opt.tolerance) break;
    for (std::size_t i = 0; i < run.values.size(); ++i) {
      found.values.push_back(run.values[i]);
      found.vectors.push_back(run.vectors[i]);
      locked.push_back(run.vectors[i]);
    }
    std::vector<std::size_t> order(found.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return found.values[a] < found.values[b]; });
    Pairs sorted;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
      sorted.values.push_back(found.values[order[i]]);
      sorted.vectors.push_back(found.vectors[order[i]]);
    }
    found = std::move(sorted);
    if (locked.size() >= op.nbrs.size()) break;
  }
  return found;
}

}  // namespace spectral_detail

// Deterministic sign: make the sum of cubed entries positive (independent of node order);
// if that sum vanishes, make the first entry with nonzero magnitude positive.
inline void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  constexpr double kEps = 1e-9;
  const double skew = v.array().cube().sum();
  double sign = 1.0;
  if (std::abs(skew) > kEps) {
    sign = skew > 0 ? 1.0 : -1.0;
  } else {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v[i]) > kEps) {
        sign = v[i] > 0 ? 1.0 : -1.0;
        break;
      }
    }
  }
  v *= sign;
}

// Smallest nonzero eigenpairs of L = I - D^-1/2 A D^-1/2 for every connected component.
inline std::vector<ComponentSpectrum> laplacian_eigenpairs(const HomogeneousGraph& g, std::size_t k,
                                                           const SpectralOptions& opt = {}) {
  std::vector<std::vector<NodeId>> adjacency;
  auto comps = spectral_detail::components(g, adjacency);
  std::vector<ComponentSpectrum> out;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    ComponentSpectrum spec;
    spec.nodes = std::move(comps[c]);
    const std::size_t n = spec.nodes.size();
    if (n < 2 || k == 0) {
      spec.vectors.resize(static_cast<Eigen::Index>(n), 0);
      out.push_back(std::move(spec));
      continue;
    }
    spectral_detail::LocalLaplacian op(spec.nodes, adjacency);
    const std::size_t m = std::min(k, n - 1);
    spec.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    if (n <= opt.dense_limit) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.dense());
      if (es.info() != Eigen::Success) throw EigensolveFailure(c);
      // Index 0 is the single zero eigenvalue of a connected component.
      for (std::size_t i = 0; i < m; ++i) {
        spec.eigenvalues.push_back(es.eigenvalues()[static_cast<Eigen::Index>(i + 1)]);
        spec.vectors.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(static_cast<Eigen::Index>(i + 1));
      }
    } else {
      auto pairs = spectral_detail::lanczos_smallest(op, m, opt, c);
      if (pairs.values.size() < m) throw EigensolveFailure(c);
      for (std::size_t i = 0; i < m; ++i) {
        spec.eigenvalues.push_back(pairs.values[i]);
        spec.vectors.col(static_cast<Eigen::Index>(i)) = pairs.vectors[i];
      }
    }
    for (Eigen::Index i = 0; i < spec.vectors.cols(); ++i) canonicalize_sign(spec.vectors.col(i));
    out.push_back(std::move(spec));
  }
  return out;
}

// Laplacian positional encoding: k values per node, zero-padded where a component has fewer
// than k nonzero eigenvalues. Isolated nodes get zero rows.
inline std::vector<std::vector<double>> laplacian_pe(const HomogeneousGraph& g, std::size_t k,
                                                     const SpectralOptions& opt = {}) {
  std::vector<std::vector<double>> pe(g.node_count, std::vector<double>(k, 0.0));
  for (const auto& spec : laplacian_eigenpairs(g, k, opt)) {
    for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
      for (Eigen::Index j = 0; j < spec.vectors.cols(); ++j)
        pe[spec.nodes[i]][static_cast<std::size_t>(j)] = spec.vectors(static_cast<Eigen::Index>(i), j);
    }
  }
  return pe;
}

}  // namespace neucall
