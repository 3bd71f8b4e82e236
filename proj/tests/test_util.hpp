#pragma once

#include <random>
#include <string>
#include <vector>

#include "gradecf/ratings_matrix.hpp"
#include "reference_cf.hpp"

namespace testutil {

inline std::string sid(std::size_t i) { return "S" + std::string(i < 10 ? "0" : "") + std::to_string(i); }
inline std::string cid(std::size_t i) { return "C" + std::string(i < 10 ? "0" : "") + std::to_string(i); }

// Random sparse matrix with continuous grades on [0, 4.3]. Every student
// has at least one rating.
inline std::vector<gradecf::GradeRecord> random_records(std::mt19937_64& rng, std::size_t students,
                                                        std::size_t courses, double density) {
  std::uniform_real_distribution<double> grade(0.0, 4.3);
  std::bernoulli_distribution keep(density);
  std::uniform_int_distribution<std::size_t> any_course(0, courses - 1);
  std::vector<gradecf::GradeRecord> out;
  for (std::size_t s = 0; s < students; ++s) {
    const auto forced = any_course(rng);
    for (std::size_t c = 0; c < courses; ++c) {
      if (c == forced || keep(rng)) out.push_back({sid(s), cid(c), 1 + static_cast<int>(c % 3), grade(rng)});
    }
  }
  return out;
}

inline std::vector<reference::Rec> to_reference(const std::vector<gradecf::GradeRecord>& recs) {
  std::vector<reference::Rec> out;
  for (const auto& r : recs) out.push_back({r.student_id, r.course_id, r.grade_points});
  return out;
}

}  // namespace testutil
