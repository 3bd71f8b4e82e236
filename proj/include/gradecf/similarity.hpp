#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gradecf/error.hpp"
#include "gradecf/ratings_matrix.hpp"

namespace gradecf {

enum class SimilarityKind { UserUser, ItemItem };

inline const char* to_string(SimilarityKind kind) {
  return kind == SimilarityKind::UserUser ? "user_user" : "item_item";
}

inline SimilarityKind parse_similarity_kind(std::string_view s) {
  if (s == "user_user") return SimilarityKind::UserUser;
  if (s == "item_item") return SimilarityKind::ItemItem;
  throw Error(ErrorKind::InvalidConfig, "unknown similarity kind '" + std::string(s) + "'");
}

struct WeightingParams {
  // Pairs with fewer co-ratings than this are scaled by n / threshold.
  std::optional<int> significance_threshold;
  // rho >= 1; sim * |sim|^(rho - 1).
  std::optional<double> amplification_exponent;
  // Pairs with fewer co-ratings get similarity 0.
  int min_corated = 2;

  static constexpr double kDefaultAmplification = 2.5;

  void validate() const {
    if (significance_threshold && *significance_threshold < 1) {
      throw Error(ErrorKind::InvalidConfig, "significance threshold must be a positive integer");
    }
    if (amplification_exponent && !(*amplification_exponent >= 1.0 && std::isfinite(*amplification_exponent))) {
      throw Error(ErrorKind::InvalidConfig, "amplification exponent must be >= 1");
    }
    if (min_corated < 1) throw Error(ErrorKind::InvalidConfig, "min_corated must be a positive integer");
  }

  friend bool operator==(const WeightingParams&, const WeightingParams&) = default;
};

struct PairStat {
  double similarity = 0.0;
  std::size_t corated = 0;
};

/// One student's ratings (ascending course index) and their full-set mean.
/// Lets stored students and ad-hoc grade histories share the Pearson path.
struct RatingProfile {
  std::span<const Entry> ratings;
  double mean = 0.0;
};

inline RatingProfile profile_of(const RatingsMatrix& m, std::size_t s) {
  return {m.student_ratings(s), m.student_mean(s)};
}

inline double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

/// Pearson correlation over the co-rated courses, centring each side on its
/// own full-set mean. Zero when the overlap is below min_corated or either
/// side has no deviation on the overlap.
inline PairStat pearson(const RatingProfile& a, const RatingProfile& b, int min_corated) {
  double num = 0.0, norm_a = 0.0, norm_b = 0.0;
  std::size_t n = 0;
  auto ia = a.ratings.begin();
  auto ib = b.ratings.begin();
  while (ia != a.ratings.end() && ib != b.ratings.end()) {
    if (ia->index < ib->index) {
      ++ia;
    } else if (ib->index < ia->index) {
      ++ib;
    } else {
      const double da = ia->value - a.mean;
      const double db = ib->value - b.mean;
      num += da * db;
      norm_a += da * da;
      norm_b += db * db;
      ++n;
      ++ia;
      ++ib;
    }
  }
  if (n < static_cast<std::size_t>(min_corated) || norm_a == 0.0 || norm_b == 0.0) return {0.0, n};
  return {clamp_unit(num / (std::sqrt(norm_a) * std::sqrt(norm_b))), n};
}

/// Adjusted cosine between two courses over the students who rated both,
/// each rating centred on that student's mean.
inline PairStat adjusted_cosine(const RatingsMatrix& m, std::size_t ci, std::size_t cj, int min_corated) {
  const auto ri = m.course_ratings(ci);
  const auto rj = m.course_ratings(cj);
  double num = 0.0, norm_i = 0.0, norm_j = 0.0;
  std::size_t n = 0;
  auto ii = ri.begin();
  auto ij = rj.begin();
  while (ii != ri.end() && ij != rj.end()) {
    if (ii->index < ij->index) {
      ++ii;
    } else if (ij->index < ii->index) {
      ++ij;
    } else {
      const double mean = m.student_mean(ii->index);
      const double di = ii->value - mean;
      const double dj = ij->value - mean;
      num += di * dj;
      norm_i += di * di;
      norm_j += dj * dj;
      ++n;
      ++ii;
      ++ij;
    }
  }
  if (n < static_cast<std::size_t>(min_corated) || norm_i == 0.0 || norm_j == 0.0) return {0.0, n};
  return {clamp_unit(num / (std::sqrt(norm_i) * std::sqrt(norm_j))), n};
}

inline double pearson_user_similarity(const RatingsMatrix& m, std::string_view u, std::string_view v,
                                      int min_corated = 2) {
  const auto su = m.require_student(u);
  const auto sv = m.require_student(v);
  if (su == sv) throw Error(ErrorKind::SelfSimilarityRequested, std::string(u));
  return pearson(profile_of(m, su), profile_of(m, sv), min_corated).similarity;
}

inline double adjusted_cosine_item_similarity(const RatingsMatrix& m, std::string_view i, std::string_view j,
                                              int min_corated = 2) {
  const auto ci = m.require_course(i);
  const auto cj = m.require_course(j);
  if (ci == cj) throw Error(ErrorKind::SelfSimilarityRequested, std::string(i));
  return adjusted_cosine(m, ci, cj, min_corated).similarity;
}

/// sim * min(n, T) / T; the input is returned untouched once n >= T.
inline double apply_significance_weighting(double sim, std::size_t n_corated, int threshold) {
  const auto t = static_cast<std::size_t>(threshold);
  if (n_corated >= t) return sim;
  return sim * (static_cast<double>(n_corated) / static_cast<double>(t));
}

/// sim * |sim|^(rho - 1): keeps the sign and shrinks weak correlations.
inline double apply_case_amplification(double sim, double rho) {
  if (rho == 1.0) return sim;
  return sim * std::pow(std::abs(sim), rho - 1.0);
}

/// Raw similarity -> significance weighting -> case amplification.
inline double apply_weighting(double raw, std::size_t n_corated, const WeightingParams& params) {
  double sim = raw;
  if (params.significance_threshold) sim = apply_significance_weighting(sim, n_corated, *params.significance_threshold);
  if (params.amplification_exponent) sim = apply_case_amplification(sim, *params.amplification_exponent);
  return sim;
}

/// Precomputed pairwise similarities over one axis of a ratings matrix.
///
/// Indices follow the source matrix (students for user_user, courses for
/// item_item). The table stores the transformed similarity; raw values are
/// not retained.
class SimilarityModel {
 public:
  SimilarityModel(SimilarityKind kind, std::vector<std::string> ids, WeightingParams params,
                  std::uint64_t source_fingerprint)
      : kind_(kind),
        ids_(std::move(ids)),
        params_(params),
        fingerprint_(source_fingerprint),
        table_(ids_.size() * ids_.size(), 0.0),
        corated_(ids_.size() * ids_.size(), 0) {}

  SimilarityKind kind() const noexcept { return kind_; }
  const WeightingParams& params() const noexcept { return params_; }
  std::uint64_t source_fingerprint() const noexcept { return fingerprint_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t pair_count() const noexcept { return ids_.size() * (ids_.size() - (ids_.empty() ? 0 : 1)) / 2; }

  double similarity(std::size_t a, std::size_t b) const { return table_[a * ids_.size() + b]; }
  std::size_t corated(std::size_t a, std::size_t b) const { return corated_[a * ids_.size() + b]; }

  /// Row of similarities for index a (entry a itself is 0).
  std::span<const double> row(std::size_t a) const {
    return std::span<const double>(table_).subspan(a * ids_.size(), ids_.size());
  }

  double similarity(std::string_view a, std::string_view b) const { return similarity(index_of(a), index_of(b)); }

  std::size_t index_of(std::string_view id) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), id,
                                     [](const std::string& x, std::string_view y) { return x < y; });
    if (it == ids_.end() || *it != id) {
      throw Error(kind_ == SimilarityKind::UserUser ? ErrorKind::UnknownStudent : ErrorKind::UnknownCourse,
                  std::string(id));
    }
    return static_cast<std::size_t>(it - ids_.begin());
  }

  void set(std::size_t a, std::size_t b, double sim, std::size_t corated) {
    const auto n = ids_.size();
    table_[a * n + b] = table_[b * n + a] = sim;
    corated_[a * n + b] = corated_[b * n + a] = static_cast<std::uint32_t>(corated);
  }

  friend bool operator==(const SimilarityModel&, const SimilarityModel&) = default;

 private:
  SimilarityKind kind_;
  std::vector<std::string> ids_;
  WeightingParams params_;
  std::uint64_t fingerprint_;
  std::vector<double> table_;
  std::vector<std::uint32_t> corated_;
};

/// Fills every unordered pair with the transformed similarity. Rows are
/// distributed over `threads` workers; each pair is a pure function of the
/// matrix, so the result does not depend on the worker count.
inline SimilarityModel build_similarity_model(const RatingsMatrix& m, SimilarityKind kind,
                                              const WeightingParams& params, unsigned threads = 1) {
  params.validate();
  if (m.degenerate()) throw Error(ErrorKind::DegenerateMatrix, "cannot build a model from an empty matrix");
  SimilarityModel model(kind, kind == SimilarityKind::UserUser ? m.students() : m.courses(), params,
                        m.fingerprint());
  const std::size_t n = model.size();

  auto fill_row = [&](std::size_t a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const PairStat raw = kind == SimilarityKind::UserUser
                               ? pearson(profile_of(m, a), profile_of(m, b), params.min_corated)
                               : adjusted_cosine(m, a, b, params.min_corated);
      model.set(a, b, apply_weighting(raw.similarity, raw.corated, params), raw.corated);
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t a = 0; a < n; ++a) fill_row(a);
  } else {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (std::size_t a = t; a < n; a += threads) fill_row(a);
      });
    }
  }
  return model;
}

}  // namespace gradecf
