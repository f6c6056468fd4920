#include "core/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"

namespace probescreen::feat {

namespace {

// Lexicographic order over coordinates. Every reduction below runs in this
// canonical order, which makes all features exactly permutation-invariant
// (swapping bit-identical vectors cannot change any floating-point sum).
std::vector<const emb::Embedding*> canonical_order(const EmbeddedSet& set) {
  std::vector<const emb::Embedding*> ptrs;
  ptrs.reserve(set.embeddings.size());
  for (const auto& e : set.embeddings) ptrs.push_back(&e);
  std::stable_sort(ptrs.begin(), ptrs.end(),
                   [](const emb::Embedding* a, const emb::Embedding* b) {
                     return std::lexicographical_compare(
                         a->values.begin(), a->values.end(),
                         b->values.begin(), b->values.end());
                   });
  return ptrs;
}

std::vector<double> diff(const emb::Embedding& a, const emb::Embedding& b) {
  std::vector<double> d(a.values.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = a.values[i] - b.values[i];
  return d;
}

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void validate_set(const EmbeddedSet& set, size_t min_n) {
  if (set.embeddings.size() < min_n) {
    fail(ErrorKind::validation,
         "embedded set '" + set.set_id + "': N=" + std::to_string(set.embeddings.size()) +
             " below minimum " + std::to_string(min_n));
  }
  int d = set.target.dim();
  if (d <= 0) fail(ErrorKind::validation, "embedded set: empty target");
  for (double x : set.target.values) {
    if (!std::isfinite(x)) fail(ErrorKind::validation, "embedded set: non-finite target entry");
  }
  for (size_t i = 0; i < set.embeddings.size(); ++i) {
    if (set.embeddings[i].dim() != d) {
      fail(ErrorKind::validation, "embedded set: embedding " + std::to_string(i) +
                                      " dim " + std::to_string(set.embeddings[i].dim()) +
                                      " != target dim " + std::to_string(d));
    }
    for (double x : set.embeddings[i].values) {
      if (!std::isfinite(x)) {
        fail(ErrorKind::validation, "embedded set: non-finite entry in embedding " +
                                        std::to_string(i));
      }
    }
  }
}

double angular_coverage(const EmbeddedSet& set) {
  validate_set(set);
  auto order = canonical_order(set);
  size_t n = order.size();

  std::vector<std::vector<double>> diffs(n);
  std::vector<double> norms(n);
  for (size_t i = 0; i < n; ++i) {
    diffs[i] = diff(*order[i], set.target);
    norms[i] = vec_norm(diffs[i]);
  }

  double max_cos = -std::numeric_limits<double>::infinity();
  bool any_pair = false;
  for (size_t i = 0; i < n; ++i) {
    if (norms[i] <= kNormEps) continue;
    for (size_t j = i + 1; j < n; ++j) {
      if (norms[j] <= kNormEps) continue;
      double c = vec_dot(diffs[i], diffs[j]) / (norms[i] * norms[j]);
      c = std::min(1.0, std::max(-1.0, c));
      max_cos = std::max(max_cos, c);
      any_pair = true;
    }
  }
  if (!any_pair) return 0.0;
  return 1.0 - max_cos;
}

double distance_ratio(const EmbeddedSet& set, bool* degenerate) {
  validate_set(set);
  if (degenerate) *degenerate = false;
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (const auto& e : set.embeddings) {
    double d = vec_norm(diff(e, set.target));
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  if (dmax <= kNormEps) {
    // All points coincide with the target; all distances are equal at 0.
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  return std::min(1.0, std::max(0.0, dmin / dmax));
}

std::vector<double> covariance_eigenvalues_via_gram(const EmbeddedSet& set) {
  validate_set(set);
  auto order = canonical_order(set);
  const size_t n = order.size();
  const size_t d = static_cast<size_t>(set.target.dim());

  std::vector<double> mean(d, 0.0);
  for (const auto* e : order) {
    for (size_t k = 0; k < d; ++k) mean[k] += e->values[k];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, d);
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < d; ++k) {
      centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          order[i]->values[k] - mean[k];
    }
  }

  Eigen::MatrixXd gram = centered * centered.transpose() / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    fail(ErrorKind::internal, "gram eigensolve failed");
  }

  std::vector<double> eigs(solver.eigenvalues().data(),
                           solver.eigenvalues().data() + n);
  for (double& l : eigs) l = std::max(0.0, l);
  std::sort(eigs.begin(), eigs.end(), std::greater<double>());
  return eigs;
}

double linearity(const EmbeddedSet& set) {
  auto eigs = covariance_eigenvalues_via_gram(set);
  double l1 = eigs[0];
  double l2 = eigs.size() > 1 ? eigs[1] : 0.0;
  double value = (l1 - l2) / (l1 + kLinearityEps);
  return std::min(1.0, std::max(0.0, value));
}

SimStats accumulate_stats(const std::vector<double>& values) {
  if (values.empty()) fail(ErrorKind::validation, "accumulate_stats: no values");
  SimStats s;
  s.min = values[0];
  s.max = values[0];
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

SimStats pairwise_similarity_stats(const EmbeddedSet& set) {
  validate_set(set, 2);
  auto order = canonical_order(set);
  std::vector<double> sims;
  sims.reserve(order.size() * (order.size() - 1) / 2);
  for (size_t i = 0; i < order.size(); ++i) {
    for (size_t j = i + 1; j < order.size(); ++j) {
      sims.push_back(emb::cosine_similarity(*order[i], *order[j]));
    }
  }
  return accumulate_stats(sims);
}

FeatureVector featurize(const EmbeddedSet& set) {
  validate_set(set);
  FeatureVector f;
  f.angular_coverage = angular_coverage(set);
  f.distance_ratio = distance_ratio(set);
  f.linearity = linearity(set);
  SimStats s = pairwise_similarity_stats(set);
  f.sim_mean = s.mean;
  f.sim_std = s.stddev;
  f.sim_min = s.min;
  f.sim_max = s.max;
  f.order_version = kFeatureOrderVersion;
  return f;
}

}  // namespace probescreen::feat
