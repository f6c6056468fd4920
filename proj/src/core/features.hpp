#pragma once

#include <array>
#include <string>
#include <vector>

#include "core/embedding.hpp"

namespace probescreen::feat {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kLinearityEps = 1e-8;

// Serialization order of the seven features. Model files bind to this string;
// bump it if the order or definition of any feature changes.
inline constexpr const char* kFeatureOrderVersion = "ac-dr-lin-simstats.v1";

// N question embeddings plus the target topic embedding, all one dim.
struct EmbeddedSet {
  std::vector<emb::Embedding> embeddings;
  emb::Embedding target;
  std::string set_id;
};

// Throws unless all embeddings and the target share one dim, every entry is
// finite, and N >= min_n.
void validate_set(const EmbeddedSet& set, size_t min_n = 3);

// 1 - max over i != j of cos angle between (e_i - t) and (e_j - t).
// Pairs where either difference has norm <= kNormEps are skipped; if every
// pair is skipped the coverage is 0. Range [0, 2].
double angular_coverage(const EmbeddedSet& set);

// min_i |e_i - t| / max_i |e_i - t|, in [0, 1]. When all points coincide
// with t the ratio is reported as 1.0 and *degenerate is set.
double distance_ratio(const EmbeddedSet& set, bool* degenerate = nullptr);

// (l1 - l2) / (l1 + kLinearityEps) where l1 >= l2 are the two largest
// eigenvalues of the covariance of the mean-centered embeddings (denominator
// N-1). Computed through the N x N Gram matrix of centered vectors, whose
// nonzero eigenvalues equal the covariance's. Clamped to [0, 1].
double linearity(const EmbeddedSet& set);

// Eigenvalues of the centered Gram matrix scaled by 1/(N-1), descending.
// The nonzero entries equal the covariance eigenvalues.
std::vector<double> covariance_eigenvalues_via_gram(const EmbeddedSet& set);

struct SimStats {
  double mean = 0.0;
  double stddev = 0.0;  // population std over the enumerated pairs
  double min = 0.0;
  double max = 0.0;
};

// Statistics over an explicit list of values (population std).
SimStats accumulate_stats(const std::vector<double>& values);

// Statistics over cosine_similarity(e_i, e_j) for all unordered pairs i < j.
SimStats pairwise_similarity_stats(const EmbeddedSet& set);

struct FeatureVector {
  double angular_coverage = 0.0;
  double distance_ratio = 0.0;
  double linearity = 0.0;
  double sim_mean = 0.0;
  double sim_std = 0.0;
  double sim_min = 0.0;
  double sim_max = 0.0;
  std::string order_version = kFeatureOrderVersion;

  std::array<double, 7> to_array() const {
    return {angular_coverage, distance_ratio, linearity,
            sim_mean,         sim_std,        sim_min, sim_max};
  }

  static FeatureVector from_array(const std::array<double, 7>& a,
                                  std::string order_version = kFeatureOrderVersion) {
    FeatureVector f;
    f.angular_coverage = a[0];
    f.distance_ratio = a[1];
    f.linearity = a[2];
    f.sim_mean = a[3];
    f.sim_std = a[4];
    f.sim_min = a[5];
    f.sim_max = a[6];
    f.order_version = std::move(order_version);
    return f;
  }
};

// Assembles all seven features. Pure function of the set contents: the
// working order is canonicalized internally, so shuffling question order
// leaves the result bit-identical.
FeatureVector featurize(const EmbeddedSet& set);

}  // namespace probescreen::feat
