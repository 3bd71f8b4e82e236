#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gradecf/prediction.hpp"
#include "gradecf/similarity.hpp"
#include "reference_cf.hpp"
#include "test_util.hpp"

using namespace gradecf;

namespace {

RatingsMatrix matrix(std::vector<GradeRecord> recs) { return RatingsMatrix(recs, GradeScale::standard()); }

// Model with hand-set similarities over the matrix's own axis.
SimilarityModel hand_model(const RatingsMatrix& m, SimilarityKind kind,
                           const std::vector<std::tuple<std::string, std::string, double>>& sims) {
  SimilarityModel model(kind, kind == SimilarityKind::UserUser ? m.students() : m.courses(), {}, m.fingerprint());
  for (const auto& [a, b, s] : sims) model.set(model.index_of(a), model.index_of(b), s, 10);
  return model;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

std::vector<std::string> ids(const std::vector<Neighbor>& ns) {
  std::vector<std::string> out;
  for (const auto& n : ns) out.push_back(n.id);
  return out;
}

// Target u plus five raters of course i, with similarities
// (0.9, 0.7, 0.3, -0.2, 0.0).
struct FiveRaters {
  RatingsMatrix m = matrix({{"u", "x", 1, 3}, {"a", "i", 1, 3}, {"b", "i", 1, 3}, {"c", "i", 1, 3},
                            {"d", "i", 1, 3}, {"e", "i", 1, 3}});
  SimilarityModel model = hand_model(m, SimilarityKind::UserUser,
                                     {{"u", "a", 0.3}, {"u", "b", 0.9}, {"u", "c", -0.2}, {"u", "d", 0.7}, {"u", "e", 0.0}});
};

}  // namespace

TEST(SelectUserNeighbors, PositiveOnlyKeepsStrictlyPositive) {
  FiveRaters f;
  NeighborhoodConfig cfg;
  cfg.k = 10;
  const auto ns = select_user_neighbors(f.model, "u", "i", f.m, cfg);
  EXPECT_EQ(ids(ns), (std::vector<std::string>{"b", "d", "a"}));
  EXPECT_EQ(ns[0].similarity, 0.9);
}

TEST(SelectUserNeighbors, TruncatesToK) {
  FiveRaters f;
  NeighborhoodConfig cfg;
  cfg.k = 2;
  EXPECT_EQ(ids(select_user_neighbors(f.model, "u", "i", f.m, cfg)), (std::vector<std::string>{"b", "d"}));
}

TEST(SelectUserNeighbors, PermissiveModeKeepsEveryRater) {
  FiveRaters f;
  NeighborhoodConfig cfg;
  cfg.k = std::nullopt;
  cfg.positive_only = false;
  EXPECT_EQ(ids(select_user_neighbors(f.model, "u", "i", f.m, cfg)),
            (std::vector<std::string>{"b", "d", "a", "e", "c"}));
}

TEST(SelectUserNeighbors, TiesBreakByAscendingId) {
  const auto m = matrix({{"u", "x", 1, 3}, {"p", "i", 1, 3}, {"q", "i", 1, 3}, {"r", "i", 1, 3}});
  const auto model = hand_model(m, SimilarityKind::UserUser, {{"u", "r", 0.7}, {"u", "p", 0.7}, {"u", "q", 0.1}});
  EXPECT_EQ(ids(select_user_neighbors(model, "u", "i", m, {})), (std::vector<std::string>{"p", "r", "q"}));
}

TEST(SelectUserNeighbors, Errors) {
  FiveRaters f;
  EXPECT_EQ(kind_of([&] { select_user_neighbors(f.model, "zz", "i", f.m, {}); }), ErrorKind::UnknownStudent);
  EXPECT_EQ(kind_of([&] { select_user_neighbors(f.model, "u", "zz", f.m, {}); }), ErrorKind::UnknownCourse);
}

TEST(PredictUserBased, SingleNeighbor) {
  // r̄_u = 3.0; v has mean 3.0 and rated i at 3.5.
  const auto m = matrix({{"u", "x", 1, 3.0}, {"v", "i", 1, 3.5}, {"v", "x", 1, 2.5}});
  const auto model = hand_model(m, SimilarityKind::UserUser, {{"u", "v", 1.0}});
  const auto p = predict_user_based(m, model, "u", "i", {});
  EXPECT_DOUBLE_EQ(p.value, 3.5);
  EXPECT_EQ(p.fallback_level, FallbackLevel::None);
  EXPECT_EQ(p.neighborhood_size_used, 1u);
}

TEST(PredictUserBased, SymmetricDeviationsCancel) {
  const auto m = matrix({{"u", "x", 1, 2.7}, {"v", "i", 1, 4.0}, {"v", "x", 1, 2.0},
                         {"w", "i", 1, 2.0}, {"w", "x", 1, 4.0}});
  const auto model = hand_model(m, SimilarityKind::UserUser, {{"u", "v", 0.5}, {"u", "w", 0.5}});
  EXPECT_DOUBLE_EQ(predict_user_based(m, model, "u", "i", {}).value, 2.7);
}

TEST(PredictUserBased, NoPositiveNeighborFallsBackToUserMean) {
  // u = (4, 2); every rater of i is anti- or un-correlated with u.
  const auto m = matrix({{"u", "a", 1, 4}, {"u", "b", 1, 2},
                         {"v", "a", 1, 2}, {"v", "b", 1, 4}, {"v", "i", 1, 3},
                         {"w", "a", 1, 1}, {"w", "b", 1, 3}, {"w", "i", 1, 2},
                         {"z", "a", 1, 3}, {"z", "b", 1, 3}, {"z", "i", 1, 4}});
  const auto model = build_similarity_model(m, SimilarityKind::UserUser, {});
  for (const auto* v : {"v", "w", "z"}) EXPECT_LE(model.similarity("u", v), 0.0);
  const auto p = predict_user_based(m, model, "u", "i", {});
  EXPECT_EQ(p.fallback_level, FallbackLevel::UserMean);
  EXPECT_DOUBLE_EQ(p.value, 3.0);
  EXPECT_EQ(p.neighborhood_size_used, 0u);
}

TEST(PredictItemBased, SingleNeighbor) {
  const auto m = matrix({{"u", "j", 1, 4.0}, {"v", "i", 1, 3.0}, {"v", "j", 1, 3.0}});
  const auto model = hand_model(m, SimilarityKind::ItemItem, {{"i", "j", 0.8}});
  EXPECT_DOUBLE_EQ(predict_item_based(m, model, "u", "i", {}).value, 4.0);
}

TEST(PredictItemBased, WeightedAverageOfTwo) {
  // (0.6 * 4 + 0.3 * 1) / 0.9 = 3.0
  const auto m = matrix({{"u", "j", 1, 4.0}, {"u", "k", 1, 1.0}, {"v", "i", 1, 3.0}});
  const auto model = hand_model(m, SimilarityKind::ItemItem, {{"i", "j", 0.6}, {"i", "k", 0.3}});
  const auto p = predict_item_based(m, model, "u", "i", {});
  EXPECT_NEAR(p.value, 3.0, 1e-12);
  EXPECT_EQ(ids(p.neighbors), (std::vector<std::string>{"j", "k"}));
}

TEST(PredictItemBased, EmptyHistoryFallsBackToItemMean) {
  const auto m = matrix({{"v", "i", 1, 3.0}, {"w", "i", 1, 2.0}, {"v", "j", 1, 1.0}});
  const auto model = build_similarity_model(m, SimilarityKind::ItemItem, {});
  const std::vector<std::string> courses = {"i"};
  const auto p = predict_virtual_item_based(m, model, VirtualStudent{}, courses, {});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].fallback_level, FallbackLevel::ItemMean);
  EXPECT_DOUBLE_EQ(p[0].value, 2.5);
}

TEST(PredictItemBased, UnratedCatalogCourseFallsToGlobalMean) {
  const std::vector<GradeRecord> recs = {{"v", "i", 1, 3.0}, {"w", "i", 1, 2.0}};
  const RatingsMatrix m(recs, GradeScale::standard(), {{"new", 2}});
  const auto model = build_similarity_model(m, SimilarityKind::ItemItem, {});
  const std::vector<std::string> courses = {"new"};
  const auto p = predict_virtual_item_based(m, model, VirtualStudent{}, courses, {});
  EXPECT_EQ(p[0].fallback_level, FallbackLevel::GlobalMean);
  EXPECT_DOUBLE_EQ(p[0].value, 2.5);
}

TEST(Predict, ClampsToScaleAndKeepsRawValue) {
  // r̄_u = 4.2 plus a +1 deviation overshoots 4.3.
  const auto m = matrix({{"u", "x", 1, 4.2}, {"v", "i", 1, 4.0}, {"v", "x", 1, 2.0}});
  const auto model = hand_model(m, SimilarityKind::UserUser, {{"u", "v", 0.9}});
  const auto p = predict_user_based(m, model, "u", "i", {});
  EXPECT_DOUBLE_EQ(p.raw_value, 5.2);
  EXPECT_DOUBLE_EQ(p.value, 4.3);
  EXPECT_TRUE(p.clamped());
  NeighborhoodConfig raw;
  raw.clamp_to_scale = false;
  EXPECT_DOUBLE_EQ(predict_user_based(m, model, "u", "i", raw).value, 5.2);
}

TEST(Predict, Errors) {
  const auto m = matrix({{"u", "a", 1, 4}, {"u", "b", 1, 2}, {"v", "a", 1, 2}, {"v", "b", 1, 4}});
  const auto users = build_similarity_model(m, SimilarityKind::UserUser, {});
  const auto items = build_similarity_model(m, SimilarityKind::ItemItem, {});
  EXPECT_EQ(kind_of([&] { predict_user_based(m, items, "u", "a", {}); }), ErrorKind::WrongModelKind);
  EXPECT_EQ(kind_of([&] { predict_item_based(m, users, "u", "a", {}); }), ErrorKind::WrongModelKind);
  EXPECT_EQ(kind_of([&] { predict_user_based(m, users, "nobody", "a", {}); }), ErrorKind::UnknownStudent);
  EXPECT_EQ(kind_of([&] { predict_item_based(m, items, "u", "zz", {}); }), ErrorKind::UnknownCourse);

  const auto other = matrix({{"u", "a", 1, 4}, {"u", "b", 1, 2}, {"v", "a", 1, 2}, {"v", "b", 1, 3}});
  EXPECT_EQ(kind_of([&] { predict_user_based(other, users, "u", "a", {}); }), ErrorKind::FingerprintMismatch);

  const RatingsMatrix empty;
  EXPECT_EQ(kind_of([&] { predict_user_based(empty, users, "u", "a", {}); }), ErrorKind::DegenerateMatrix);

  NeighborhoodConfig bad;
  bad.k = 0;
  EXPECT_EQ(kind_of([&] { predict_user_based(m, users, "u", "a", bad); }), ErrorKind::InvalidConfig);
  bad = {};
  bad.fallback = {FallbackLevel::UserMean};
  EXPECT_EQ(kind_of([&] { predict_user_based(m, users, "u", "a", bad); }), ErrorKind::InvalidConfig);
}

TEST(RecommendTopN, OrdersByValueThenCourseId) {
  // Single-neighbour item predictions: A -> 3.9 (via D), B -> 3.1 (via E), C -> 3.9 (via D).
  const auto m = matrix({{"u", "D", 1, 3.9}, {"u", "E", 1, 3.1}, {"v", "A", 1, 3}, {"v", "B", 1, 3}, {"v", "C", 1, 3}});
  const auto model = hand_model(m, SimilarityKind::ItemItem, {{"A", "D", 0.8}, {"B", "E", 0.5}, {"C", "D", 0.6}});
  const std::vector<std::string> candidates = {"B", "C", "A"};
  const auto top = recommend_top_n(m, model, "u", candidates, 10, {});
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].course_id, "A");
  EXPECT_EQ(top[1].course_id, "C");
  EXPECT_EQ(top[2].course_id, "B");
  EXPECT_DOUBLE_EQ(top[2].value, 3.1);

  EXPECT_EQ(recommend_top_n(m, model, "u", candidates, 2, {}).size(), 2u);
  EXPECT_TRUE(recommend_top_n(m, model, "u", {}, 5, {}).empty());
  const std::vector<std::string> rated = {"D"};
  EXPECT_EQ(kind_of([&] { recommend_top_n(m, model, "u", rated, 5, {}); }), ErrorKind::InvalidConfig);
}

TEST(RecommendTopN, KeepsFallbackAnnotations) {
  const auto m = matrix({{"u", "a", 1, 4}, {"u", "b", 1, 2}, {"v", "c", 1, 3}});
  const auto model = build_similarity_model(m, SimilarityKind::UserUser, {});
  const auto top = recommend_top_n(m, model, "u", unrated_courses(m, "u"), 5, {});
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].fallback_level, FallbackLevel::UserMean);
}

namespace {

std::vector<GradeRecord> dense_random(std::mt19937_64& rng, std::size_t students, std::size_t courses) {
  return testutil::random_records(rng, students, courses, 0.8);
}

}  // namespace

TEST(PredictionProperties, UserBasedStaysInDeviationHull) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const RatingsMatrix m(dense_random(rng, 15, 8), GradeScale::standard());
    const auto model = build_similarity_model(m, SimilarityKind::UserUser, {});
    NeighborhoodConfig cfg;
    cfg.k = 5;
    cfg.clamp_to_scale = false;
    for (std::size_t s = 0; s < m.student_count(); ++s) {
      for (std::size_t c = 0; c < m.course_count(); ++c) {
        const auto p = predict_user_based(m, model, m.student_id(s), m.course_id(c), cfg);
        if (p.fallback_level != FallbackLevel::None) continue;
        double lo = 1e9, hi = -1e9;
        for (const auto& n : p.neighbors) {
          const auto v = *m.student_index(n.id);
          const double d = *m.rating(v, c) - m.student_mean(v);
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
        EXPECT_GE(p.raw_value, m.student_mean(s) + lo - 1e-12);
        EXPECT_LE(p.raw_value, m.student_mean(s) + hi + 1e-12);
      }
    }
  }
}

TEST(PredictionProperties, ItemBasedStaysInRatingHull) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const RatingsMatrix m(dense_random(rng, 15, 8), GradeScale::standard());
    const auto model = build_similarity_model(m, SimilarityKind::ItemItem, {});
    NeighborhoodConfig cfg;
    cfg.k = 4;
    cfg.clamp_to_scale = false;
    for (std::size_t s = 0; s < m.student_count(); ++s) {
      for (std::size_t c = 0; c < m.course_count(); ++c) {
        const auto p = predict_item_based(m, model, m.student_id(s), m.course_id(c), cfg);
        if (p.fallback_level != FallbackLevel::None) continue;
        double lo = 1e9, hi = -1e9;
        for (const auto& n : p.neighbors) {
          const double r = *m.rating(s, *m.course_index(n.id));
          lo = std::min(lo, r);
          hi = std::max(hi, r);
        }
        EXPECT_GE(p.raw_value, lo - 1e-12);
        EXPECT_LE(p.raw_value, hi + 1e-12);
      }
    }
  }
}

TEST(PredictionProperties, PermutationInvariance) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto recs = dense_random(rng, 12, 7);
    // Reverse-order renaming: a bijection that also flips every tie-break.
    std::vector<GradeRecord> renamed;
    for (auto r : recs) {
      r.student_id = "z" + std::to_string(999 - std::stoi(r.student_id.substr(1)));
      r.course_id = "k" + std::to_string(999 - std::stoi(r.course_id.substr(1)));
      renamed.push_back(r);
    }
    const RatingsMatrix a(recs, GradeScale::standard());
    const RatingsMatrix b(renamed, GradeScale::standard());
    for (auto kind : {SimilarityKind::UserUser, SimilarityKind::ItemItem}) {
      const auto ma = build_similarity_model(a, kind, {});
      const auto mb = build_similarity_model(b, kind, {});
      NeighborhoodConfig cfg;
      cfg.k = 3;
      for (const auto& r : recs) {
        const auto s2 = "z" + std::to_string(999 - std::stoi(r.student_id.substr(1)));
        const auto c2 = "k" + std::to_string(999 - std::stoi(r.course_id.substr(1)));
        EXPECT_NEAR(predict(a, ma, r.student_id, r.course_id, cfg).value, predict(b, mb, s2, c2, cfg).value, 1e-9);
      }
    }
  }
}

TEST(PredictionProperties, FiniteKNeighborsArePrefixOfAll) {
  std::mt19937_64 rng(24);
  const RatingsMatrix m(dense_random(rng, 20, 8), GradeScale::standard());
  const auto model = build_similarity_model(m, SimilarityKind::UserUser, {});
  for (const auto& s : m.students()) {
    for (const auto& c : m.courses()) {
      NeighborhoodConfig all;
      all.k = std::nullopt;
      const auto full = ids(select_user_neighbors(model, s, c, m, all));
      for (std::size_t k = 1; k <= 6; ++k) {
        NeighborhoodConfig cfg;
        cfg.k = k;
        const auto part = ids(select_user_neighbors(model, s, c, m, cfg));
        ASSERT_LE(part.size(), full.size());
        EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin()));
      }
    }
  }
}

TEST(PredictionProperties, MatchesReferenceImplementation) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 15; ++trial) {
    const auto recs = testutil::random_records(rng, 10, 6, 0.7);
    const RatingsMatrix m(recs, GradeScale::standard());
    const reference::Data ref(testutil::to_reference(recs));
    WeightingParams w;
    w.significance_threshold = 4;
    w.amplification_exponent = 2.5;
    reference::Weighting rw{4, 2.5, 2};
    const auto users = build_similarity_model(m, SimilarityKind::UserUser, w);
    const auto items = build_similarity_model(m, SimilarityKind::ItemItem, w);
    for (std::optional<std::size_t> k : {std::optional<std::size_t>(1), std::optional<std::size_t>(3),
                                         std::optional<std::size_t>()}) {
      for (bool positive_only : {true, false}) {
        NeighborhoodConfig cfg;
        cfg.k = k;
        cfg.positive_only = positive_only;
        const reference::Query q{k, positive_only, true, rw};
        for (const auto& s : m.students()) {
          for (const auto& c : m.courses()) {
            EXPECT_NEAR(predict_user_based(m, users, s, c, cfg).value, reference::user_based(ref, s, c, q).value, 1e-9);
            EXPECT_NEAR(predict_item_based(m, items, s, c, cfg).value, reference::item_based(ref, s, c, q).value, 1e-9);
          }
        }
      }
    }
  }
}

TEST(WhatIf, IdenticalHistoryReproducesStoredPredictions) {
  std::mt19937_64 rng(26);
  const RatingsMatrix m(testutil::random_records(rng, 25, 10, 0.6), GradeScale::standard());
  WeightingParams w;
  w.significance_threshold = 5;
  const auto users = build_similarity_model(m, SimilarityKind::UserUser, w);
  const auto items = build_similarity_model(m, SimilarityKind::ItemItem, w);
  const auto before = m.fingerprint();
  for (const auto& s : m.students()) {
    VirtualStudent v;
    for (const auto& e : m.student_ratings(*m.student_index(s))) v.history.emplace_back(m.course_id(e.index), e.value);
    const auto candidates = unrated_courses(m, s);
    const auto vu = predict_virtual_user_based(m, w, v, candidates, {});
    const auto vi = predict_virtual_item_based(m, items, v, candidates, {});
    for (std::size_t n = 0; n < candidates.size(); ++n) {
      const auto su = predict_user_based(m, users, s, candidates[n], {});
      const auto si = predict_item_based(m, items, s, candidates[n], {});
      EXPECT_NEAR(vu[n].value, su.value, 1e-9);
      EXPECT_NEAR(vi[n].value, si.value, 1e-9);
      EXPECT_EQ(vu[n].fallback_level, su.fallback_level);
      EXPECT_EQ(vu[n].neighborhood_size_used, su.neighborhood_size_used);
    }
  }
  EXPECT_EQ(m.fingerprint(), before);
}

TEST(WhatIf, RejectsBadHistory) {
  const auto m = matrix({{"u", "a", 1, 4}, {"u", "b", 1, 2}, {"v", "a", 1, 2}, {"v", "b", 1, 4}});
  VirtualStudent dup;
  dup.history = {{"a", 3.0}, {"a", 2.0}};
  const std::vector<std::string> courses = {"b"};
  EXPECT_EQ(kind_of([&] { predict_virtual_user_based(m, {}, dup, courses, {}); }), ErrorKind::DuplicateRecord);
  VirtualStudent out_of_range;
  out_of_range.history = {{"a", 9.0}};
  EXPECT_EQ(kind_of([&] { predict_virtual_user_based(m, {}, out_of_range, courses, {}); }), ErrorKind::GradeOutOfRange);
}
