#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradecf/error.hpp"
#include "gradecf/ratings_matrix.hpp"
#include "gradecf/similarity.hpp"

namespace gradecf {

enum class FallbackLevel { None, UserMean, ItemMean, GlobalMean };

inline const char* to_string(FallbackLevel level) {
  switch (level) {
    case FallbackLevel::None: return "none";
    case FallbackLevel::UserMean: return "user_mean";
    case FallbackLevel::ItemMean: return "item_mean";
    case FallbackLevel::GlobalMean: return "global_mean";
  }
  return "none";
}

enum class Algorithm { UserBased, ItemBased };

inline const char* to_string(Algorithm a) { return a == Algorithm::UserBased ? "user_based" : "item_based"; }

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "user" || s == "user_based") return Algorithm::UserBased;
  if (s == "item" || s == "item_based") return Algorithm::ItemBased;
  throw Error(ErrorKind::InvalidConfig, "unknown algorithm '" + std::string(s) + "'");
}

inline SimilarityKind kind_for(Algorithm a) {
  return a == Algorithm::UserBased ? SimilarityKind::UserUser : SimilarityKind::ItemItem;
}

struct NeighborhoodConfig {
  // Empty means "all": no cardinality cap.
  std::optional<std::size_t> k = 10;
  bool positive_only = true;
  std::vector<FallbackLevel> fallback = {FallbackLevel::UserMean, FallbackLevel::ItemMean,
                                         FallbackLevel::GlobalMean};
  bool clamp_to_scale = true;

  void validate() const {
    if (k && *k == 0) throw Error(ErrorKind::InvalidConfig, "k must be positive or 'all'");
    if (fallback.empty() || fallback.back() != FallbackLevel::GlobalMean) {
      throw Error(ErrorKind::InvalidConfig, "fallback list must end in global_mean");
    }
    if (std::find(fallback.begin(), fallback.end(), FallbackLevel::None) != fallback.end()) {
      throw Error(ErrorKind::InvalidConfig, "'none' is not a fallback level");
    }
  }
};

inline std::string k_to_string(const std::optional<std::size_t>& k) { return k ? std::to_string(*k) : "all"; }

inline std::optional<std::size_t> parse_k(std::string_view s) {
  if (s == "all") return std::nullopt;
  const auto v = text::parse_integer<std::size_t>(s);
  if (!v || *v == 0) throw Error(ErrorKind::InvalidConfig, "k must be a positive integer or 'all', got '" + std::string(s) + "'");
  return *v;
}

struct Neighbor {
  std::string id;
  double similarity = 0.0;
};

struct Prediction {
  std::string student_id;
  std::string course_id;
  // Clamped when the config asks for it; raw_value is the unclamped estimate.
  double value = 0.0;
  double raw_value = 0.0;
  std::size_t neighborhood_size_used = 0;
  FallbackLevel fallback_level = FallbackLevel::None;
  // Neighbours that entered the weighted sum, in selection order.
  std::vector<Neighbor> neighbors;

  bool clamped() const noexcept { return value != raw_value; }
};

/// Grade history of a student who need not exist in the matrix. Courses the
/// matrix does not know still count towards the mean.
struct VirtualStudent {
  std::string id = "whatif";
  std::vector<std::pair<std::string, double>> history;
};

namespace detail {

struct Candidate {
  std::size_t index;
  double similarity;
};

// Filter, order by similarity descending then index ascending, truncate.
inline std::vector<Candidate> rank_candidates(std::vector<Candidate> pool, const NeighborhoodConfig& cfg) {
  if (cfg.positive_only) {
    std::erase_if(pool, [](const Candidate& c) { return !(c.similarity > 0.0); });
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.index < b.index;
  });
  if (cfg.k && pool.size() > *cfg.k) pool.resize(*cfg.k);
  return pool;
}

// Owned ratings for a prediction target, indexed by matrix course.
struct Target {
  std::string id;
  std::optional<std::size_t> stored;  // matrix index when the student is stored
  std::vector<Entry> ratings;         // ascending course index, known courses only
  double mean = 0.0;
  bool has_history = false;

  RatingProfile profile() const { return {ratings, mean}; }
};

inline Target stored_target(const RatingsMatrix& m, std::size_t s) {
  const auto r = m.student_ratings(s);
  return {m.student_id(s), s, std::vector<Entry>(r.begin(), r.end()), m.student_mean(s), !r.empty()};
}

inline Target virtual_target(const RatingsMatrix& m, const VirtualStudent& v) {
  Target t;
  t.id = v.id;
  double sum = 0.0;
  std::set<std::string> seen;
  for (const auto& [course, grade] : v.history) {
    if (!seen.insert(course).second) throw Error(ErrorKind::DuplicateRecord, v.id + "," + course);
    if (!std::isfinite(grade) || !m.scale().contains(grade)) {
      throw Error(ErrorKind::GradeOutOfRange, course + " grade " + text::format_double(grade));
    }
    sum += grade;
    if (auto c = m.course_index(course)) t.ratings.push_back({*c, grade});
  }
  std::sort(t.ratings.begin(), t.ratings.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
  t.has_history = !v.history.empty();
  // Same summation order as RatingsMatrix when every course is known.
  if (t.ratings.size() == v.history.size()) {
    sum = 0.0;
    for (const auto& e : t.ratings) sum += e.value;
  }
  t.mean = t.has_history ? sum / static_cast<double>(v.history.size()) : 0.0;
  return t;
}

inline void check_model(const RatingsMatrix& m, const SimilarityModel& model, SimilarityKind kind) {
  if (model.kind() != kind) {
    throw Error(ErrorKind::WrongModelKind, std::string("expected a ") + to_string(kind) + " model, got " +
                                               to_string(model.kind()));
  }
  if (model.source_fingerprint() != m.fingerprint()) {
    throw Error(ErrorKind::FingerprintMismatch, "model was built from a different dataset version");
  }
}

inline Prediction finish(const RatingsMatrix& m, const Target& t, std::size_t ci, const NeighborhoodConfig& cfg,
                         std::optional<double> estimate, Prediction p) {
  p.student_id = t.id;
  p.course_id = m.course_id(ci);
  if (estimate) {
    p.raw_value = *estimate;
    p.fallback_level = FallbackLevel::None;
    p.neighborhood_size_used = p.neighbors.size();
  } else {
    p.neighbors.clear();
    p.neighborhood_size_used = 0;
    for (const auto level : cfg.fallback) {
      std::optional<double> v;
      if (level == FallbackLevel::UserMean && t.has_history) v = t.mean;
      if (level == FallbackLevel::ItemMean) v = m.course_mean(ci);
      if (level == FallbackLevel::GlobalMean) v = m.global_mean();
      if (v) {
        p.raw_value = *v;
        p.fallback_level = level;
        break;
      }
    }
  }
  p.value = cfg.clamp_to_scale ? m.scale().clamp(p.raw_value) : p.raw_value;
  return p;
}

// Raters of ci other than the target, with their similarity to the target.
template <typename SimFn>
std::vector<Candidate> user_pool(const RatingsMatrix& m, const Target& t, std::size_t ci, SimFn&& sim) {
  std::vector<Candidate> pool;
  for (const auto& e : m.course_ratings(ci)) {
    if (t.stored && e.index == *t.stored) continue;
    pool.push_back({e.index, sim(e.index)});
  }
  return pool;
}

template <typename SimFn>
Prediction predict_user(const RatingsMatrix& m, const Target& t, std::size_t ci, const NeighborhoodConfig& cfg,
                        SimFn&& sim) {
  const auto selected = rank_candidates(user_pool(m, t, ci, sim), cfg);
  Prediction p;
  double num = 0.0, den = 0.0;
  for (const auto& c : selected) {
    const double deviation = *m.rating(c.index, ci) - m.student_mean(c.index);
    num += c.similarity * deviation;
    den += std::abs(c.similarity);
    p.neighbors.push_back({m.student_id(c.index), c.similarity});
  }
  std::optional<double> estimate;
  if (den > 0.0 && t.has_history) estimate = t.mean + num / den;
  return finish(m, t, ci, cfg, estimate, std::move(p));
}

inline Prediction predict_item(const RatingsMatrix& m, const SimilarityModel& model, const Target& t,
                               std::size_t ci, const NeighborhoodConfig& cfg) {
  std::vector<Candidate> pool;
  const auto row = model.row(ci);
  for (const auto& e : t.ratings) {
    if (e.index == ci) continue;
    pool.push_back({e.index, row[e.index]});
  }
  const auto selected = rank_candidates(std::move(pool), cfg);
  Prediction p;
  double num = 0.0, den = 0.0;
  for (const auto& c : selected) {
    const auto it = std::lower_bound(t.ratings.begin(), t.ratings.end(), c.index,
                                     [](const Entry& e, std::size_t idx) { return e.index < idx; });
    num += c.similarity * it->value;
    den += std::abs(c.similarity);
    p.neighbors.push_back({m.course_id(c.index), c.similarity});
  }
  std::optional<double> estimate;
  if (den > 0.0) estimate = num / den;
  return finish(m, t, ci, cfg, estimate, std::move(p));
}

inline void check_inputs(const RatingsMatrix& m, const NeighborhoodConfig& cfg) {
  cfg.validate();
  if (m.degenerate()) throw Error(ErrorKind::DegenerateMatrix, "no ratings to predict from");
}

}  // namespace detail

/// Raters of course i (other than u), ordered for the user-based weighted sum.
inline std::vector<Neighbor> select_user_neighbors(const SimilarityModel& model, std::string_view u,
                                                   std::string_view i, const RatingsMatrix& m,
                                                   const NeighborhoodConfig& cfg) {
  cfg.validate();
  detail::check_model(m, model, SimilarityKind::UserUser);
  const auto su = m.require_student(u);
  const auto ci = m.require_course(i);
  const auto target = detail::stored_target(m, su);
  const auto row = model.row(su);
  const auto ranked = detail::rank_candidates(
      detail::user_pool(m, target, ci, [&](std::size_t v) { return row[v]; }), cfg);
  std::vector<Neighbor> out;
  for (const auto& c : ranked) out.push_back({m.student_id(c.index), c.similarity});
  return out;
}

/// Courses already rated by u, ordered for the item-based weighted sum.
inline std::vector<Neighbor> select_item_neighbors(const SimilarityModel& model, std::string_view u,
                                                   std::string_view i, const RatingsMatrix& m,
                                                   const NeighborhoodConfig& cfg) {
  cfg.validate();
  detail::check_model(m, model, SimilarityKind::ItemItem);
  const auto su = m.require_student(u);
  const auto ci = m.require_course(i);
  std::vector<detail::Candidate> pool;
  for (const auto& e : m.student_ratings(su)) {
    if (e.index != ci) pool.push_back({e.index, model.similarity(ci, e.index)});
  }
  std::vector<Neighbor> out;
  for (const auto& c : detail::rank_candidates(std::move(pool), cfg)) out.push_back({m.course_id(c.index), c.similarity});
  return out;
}

/// Mean-offset weighted sum over the most similar raters of course i.
inline Prediction predict_user_based(const RatingsMatrix& m, const SimilarityModel& model, std::string_view u,
                                     std::string_view i, const NeighborhoodConfig& cfg) {
  detail::check_inputs(m, cfg);
  detail::check_model(m, model, SimilarityKind::UserUser);
  const auto su = m.require_student(u);
  const auto ci = m.require_course(i);
  const auto row = model.row(su);
  return detail::predict_user(m, detail::stored_target(m, su), ci, cfg, [&](std::size_t v) { return row[v]; });
}

/// Weighted average of u's own grades on the courses most similar to i.
inline Prediction predict_item_based(const RatingsMatrix& m, const SimilarityModel& model, std::string_view u,
                                     std::string_view i, const NeighborhoodConfig& cfg) {
  detail::check_inputs(m, cfg);
  detail::check_model(m, model, SimilarityKind::ItemItem);
  const auto su = m.require_student(u);
  const auto ci = m.require_course(i);
  return detail::predict_item(m, model, detail::stored_target(m, su), ci, cfg);
}

inline Prediction predict(const RatingsMatrix& m, const SimilarityModel& model, std::string_view u,
                          std::string_view i, const NeighborhoodConfig& cfg) {
  return model.kind() == SimilarityKind::UserUser ? predict_user_based(m, model, u, i, cfg)
                                                  : predict_item_based(m, model, u, i, cfg);
}

/// User-based prediction for an ad-hoc grade history. The history is
/// correlated with every stored student on the fly under `params`; nothing
/// is written back to the matrix.
inline std::vector<Prediction> predict_virtual_user_based(const RatingsMatrix& m, const WeightingParams& params,
                                                          const VirtualStudent& v,
                                                          std::span<const std::string> courses,
                                                          const NeighborhoodConfig& cfg) {
  detail::check_inputs(m, cfg);
  params.validate();
  const auto target = detail::virtual_target(m, v);
  std::vector<double> sims(m.student_count(), 0.0);
  for (std::size_t s = 0; s < m.student_count(); ++s) {
    const auto raw = pearson(target.profile(), profile_of(m, s), params.min_corated);
    sims[s] = apply_weighting(raw.similarity, raw.corated, params);
  }
  std::vector<Prediction> out;
  for (const auto& c : courses) {
    out.push_back(detail::predict_user(m, target, m.require_course(c), cfg, [&](std::size_t s) { return sims[s]; }));
  }
  return out;
}

/// Item-based prediction for an ad-hoc grade history, reusing the stored
/// item-item table.
inline std::vector<Prediction> predict_virtual_item_based(const RatingsMatrix& m, const SimilarityModel& model,
                                                          const VirtualStudent& v,
                                                          std::span<const std::string> courses,
                                                          const NeighborhoodConfig& cfg) {
  detail::check_inputs(m, cfg);
  detail::check_model(m, model, SimilarityKind::ItemItem);
  const auto target = detail::virtual_target(m, v);
  std::vector<Prediction> out;
  for (const auto& c : courses) out.push_back(detail::predict_item(m, model, target, m.require_course(c), cfg));
  return out;
}

inline void order_ranking(std::vector<Prediction>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const Prediction& a, const Prediction& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.course_id < b.course_id;
  });
}

/// Predicts every candidate and keeps the n best (value descending, course id
/// ascending on ties).
inline std::vector<Prediction> recommend_top_n(const RatingsMatrix& m, const SimilarityModel& model,
                                               std::string_view u, std::span<const std::string> candidates,
                                               std::size_t n, const NeighborhoodConfig& cfg) {
  const auto su = m.require_student(u);
  std::vector<Prediction> out;
  for (const auto& c : candidates) {
    if (m.has_rating(su, m.require_course(c))) {
      throw Error(ErrorKind::InvalidConfig, "candidate " + c + " is already graded for " + std::string(u));
    }
    out.push_back(predict(m, model, u, c, cfg));
  }
  order_ranking(out);
  if (out.size() > n) out.resize(n);
  return out;
}

/// Courses the student has not been graded in, ascending.
inline std::vector<std::string> unrated_courses(const RatingsMatrix& m, std::string_view u) {
  const auto su = m.require_student(u);
  std::vector<std::string> out;
  for (std::size_t c = 0; c < m.course_count(); ++c) {
    if (!m.has_rating(su, c)) out.push_back(m.course_id(c));
  }
  return out;
}

}  // namespace gradecf
