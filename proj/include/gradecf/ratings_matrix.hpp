#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradecf/error.hpp"
#include "gradecf/grade_scale.hpp"
#include "gradecf/text.hpp"

namespace gradecf {

inline constexpr std::string_view kRecordHeader = "student_id,course_id,term,grade";

struct GradeRecord {
  std::string student_id;
  std::string course_id;
  int term = 1;
  double grade_points = 0.0;

  friend bool operator==(const GradeRecord&, const GradeRecord&) = default;
};

/// A rating together with the dense index of the other axis.
struct Entry {
  std::size_t index;
  double value;
};

/// Immutable student x course grade table.
///
/// Students and courses are indexed in ascending identifier order, so every
/// loop over an axis visits identifiers in the same order regardless of how
/// the input was arranged. A course may appear in the catalog without any
/// ratings (for instance after its grades were held out for testing).
class RatingsMatrix {
 public:
  RatingsMatrix() : RatingsMatrix({}, GradeScale::standard()) {}

  RatingsMatrix(std::span<const GradeRecord> records, GradeScale scale,
                const std::map<std::string, int>& catalog = {})
      : scale_(std::move(scale)) {
    std::map<std::string, int> course_terms = catalog;
    std::map<std::string, std::size_t> students;
    for (const auto& r : records) {
      if (r.student_id.empty() || r.course_id.empty()) {
        throw Error(ErrorKind::MalformedRow, "empty identifier");
      }
      if (r.term < 1) throw Error(ErrorKind::MalformedRow, "term must be positive for " + r.course_id);
      if (!std::isfinite(r.grade_points) || !scale_.contains(r.grade_points)) {
        throw Error(ErrorKind::GradeOutOfRange, r.student_id + "/" + r.course_id + " grade " +
                                                    text::format_double(r.grade_points));
      }
      auto [it, fresh] = course_terms.emplace(r.course_id, r.term);
      if (!fresh && it->second != r.term) {
        throw Error(ErrorKind::MalformedRow, "course " + r.course_id + " listed in terms " +
                                                 std::to_string(it->second) + " and " + std::to_string(r.term));
      }
      students.emplace(r.student_id, 0);
    }
    for (auto& [id, term] : course_terms) {
      if (term < 1) throw Error(ErrorKind::MalformedRow, "term must be positive for " + id);
      courses_.push_back(id);
      course_terms_.push_back(term);
    }
    for (auto& [id, idx] : students) {
      idx = students_.size();
      students_.push_back(id);
    }

    cells_.assign(students_.size() * courses_.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : records) {
      const auto s = *student_index(r.student_id);
      const auto c = *course_index(r.course_id);
      double& cell = cells_[s * courses_.size() + c];
      if (!std::isnan(cell)) {
        throw Error(ErrorKind::DuplicateRecord, r.student_id + "," + r.course_id);
      }
      cell = r.grade_points;
    }

    by_student_.resize(students_.size());
    by_course_.resize(courses_.size());
    for (std::size_t s = 0; s < students_.size(); ++s) {
      for (std::size_t c = 0; c < courses_.size(); ++c) {
        const double v = cells_[s * courses_.size() + c];
        if (std::isnan(v)) continue;
        by_student_[s].push_back({c, v});
        by_course_[c].push_back({s, v});
      }
    }
    recompute_statistics();
  }

  const GradeScale& scale() const noexcept { return scale_; }

  std::size_t student_count() const noexcept { return students_.size(); }
  std::size_t course_count() const noexcept { return courses_.size(); }
  std::size_t rating_count() const noexcept { return rating_count_; }
  bool degenerate() const noexcept { return rating_count_ == 0; }

  const std::vector<std::string>& students() const noexcept { return students_; }
  const std::vector<std::string>& courses() const noexcept { return courses_; }
  const std::string& student_id(std::size_t s) const { return students_.at(s); }
  const std::string& course_id(std::size_t c) const { return courses_.at(c); }
  int course_term(std::size_t c) const { return course_terms_.at(c); }

  std::optional<std::size_t> student_index(std::string_view id) const { return find(students_, id); }
  std::optional<std::size_t> course_index(std::string_view id) const { return find(courses_, id); }

  std::size_t require_student(std::string_view id) const {
    if (auto s = student_index(id)) return *s;
    throw Error(ErrorKind::UnknownStudent, std::string(id));
  }
  std::size_t require_course(std::string_view id) const {
    if (auto c = course_index(id)) return *c;
    throw Error(ErrorKind::UnknownCourse, std::string(id));
  }

  std::optional<double> rating(std::size_t s, std::size_t c) const {
    const double v = cells_[s * courses_.size() + c];
    if (std::isnan(v)) return std::nullopt;
    return v;
  }
  bool has_rating(std::size_t s, std::size_t c) const { return !std::isnan(cells_[s * courses_.size() + c]); }

  /// Ratings by student s, ascending course index.
  std::span<const Entry> student_ratings(std::size_t s) const { return by_student_.at(s); }
  /// Ratings of course c, ascending student index.
  std::span<const Entry> course_ratings(std::size_t c) const { return by_course_.at(c); }

  /// Mean over every course the student rated.
  double student_mean(std::size_t s) const { return student_means_.at(s); }
  /// Empty for a catalog course nobody rated.
  std::optional<double> course_mean(std::size_t c) const {
    const double v = course_means_.at(c);
    if (std::isnan(v)) return std::nullopt;
    return v;
  }
  /// Scale midpoint when the matrix is degenerate.
  double global_mean() const noexcept { return global_mean_; }

  /// Hash of the catalog and every rating; identifies a dataset version.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  std::map<std::string, int> catalog() const {
    std::map<std::string, int> out;
    for (std::size_t c = 0; c < courses_.size(); ++c) out.emplace(courses_[c], course_terms_[c]);
    return out;
  }

  /// Records ordered by (student, course).
  std::vector<GradeRecord> records() const {
    std::vector<GradeRecord> out;
    out.reserve(rating_count_);
    for (std::size_t s = 0; s < students_.size(); ++s) {
      for (const auto& e : by_student_[s]) {
        out.push_back({students_[s], courses_[e.index], course_terms_[e.index], e.value});
      }
    }
    return out;
  }

  std::string to_csv() const {
    std::string out(kRecordHeader);
    out += '\n';
    for (const auto& r : records()) {
      out += r.student_id + ',' + r.course_id + ',' + std::to_string(r.term) + ',' +
             text::format_double(r.grade_points) + '\n';
    }
    return out;
  }

 private:
  static std::optional<std::size_t> find(const std::vector<std::string>& ids, std::string_view id) {
    const auto it = std::lower_bound(ids.begin(), ids.end(), id,
                                     [](const std::string& a, std::string_view b) { return a < b; });
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids.begin());
  }

  void recompute_statistics() {
    student_means_.assign(students_.size(), 0.0);
    course_means_.assign(courses_.size(), std::numeric_limits<double>::quiet_NaN());
    double total = 0.0;
    rating_count_ = 0;
    for (std::size_t s = 0; s < students_.size(); ++s) {
      double sum = 0.0;
      for (const auto& e : by_student_[s]) sum += e.value;
      student_means_[s] = sum / static_cast<double>(by_student_[s].size());
      total += sum;
      rating_count_ += by_student_[s].size();
    }
    for (std::size_t c = 0; c < courses_.size(); ++c) {
      if (by_course_[c].empty()) continue;
      double sum = 0.0;
      for (const auto& e : by_course_[c]) sum += e.value;
      course_means_[c] = sum / static_cast<double>(by_course_[c].size());
    }
    global_mean_ = rating_count_ == 0 ? scale_.midpoint() : total / static_cast<double>(rating_count_);

    text::Fnv1a hash;
    for (std::size_t c = 0; c < courses_.size(); ++c) {
      hash.update(courses_[c]);
      hash.update_u64(static_cast<std::uint64_t>(course_terms_[c]));
    }
    hash.update("|");
    for (std::size_t s = 0; s < students_.size(); ++s) {
      for (const auto& e : by_student_[s]) {
        hash.update(students_[s]);
        hash.update_u64(e.index);
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof e.value);
        std::memcpy(&bits, &e.value, sizeof bits);
        hash.update_u64(bits);
      }
    }
    fingerprint_ = hash.digest();
  }

  GradeScale scale_;
  std::vector<std::string> students_;
  std::vector<std::string> courses_;
  std::vector<int> course_terms_;
  std::vector<double> cells_;
  std::vector<std::vector<Entry>> by_student_;
  std::vector<std::vector<Entry>> by_course_;
  std::vector<double> student_means_;
  std::vector<double> course_means_;
  double global_mean_ = 0.0;
  std::size_t rating_count_ = 0;
  std::uint64_t fingerprint_ = 0;
};

/// Parses raw CSV lines (optionally led by the header) into records.
inline std::vector<GradeRecord> parse_records(std::span<const std::string_view> rows, const GradeScale& scale) {
  std::vector<GradeRecord> out;
  std::size_t line_no = 0;
  for (auto raw : rows) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty()) continue;
    if (line_no == 1 && line == kRecordHeader) continue;
    const auto fields = text::split(line);
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (fields.size() != 4) {
      throw Error(ErrorKind::MalformedRow, "expected 4 fields, got " + std::to_string(fields.size()) + where);
    }
    if (fields[0].empty() || fields[1].empty()) throw Error(ErrorKind::MalformedRow, "empty identifier" + where);
    const auto term = text::parse_integer<int>(fields[2]);
    if (!term || *term < 1) {
      throw Error(ErrorKind::MalformedRow, "bad term '" + std::string(fields[2]) + "'" + where);
    }
    double points = 0.0;
    try {
      points = scale.parse(fields[3]);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + where);
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]), *term, points});
  }
  return out;
}

inline RatingsMatrix ingest_records(std::span<const std::string_view> rows, const GradeScale& scale) {
  const auto records = parse_records(rows, scale);
  return RatingsMatrix(records, scale);
}

inline RatingsMatrix ingest_csv(std::string_view body, const GradeScale& scale) {
  const auto rows = text::lines(body);
  return ingest_records(rows, scale);
}

namespace detail {
template <typename Fn>
std::vector<std::string> intersect(std::span<const Entry> a, std::span<const Entry> b, Fn&& name) {
  std::vector<std::string> out;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->index < ib->index) {
      ++ia;
    } else if (ib->index < ia->index) {
      ++ib;
    } else {
      out.push_back(name(ia->index));
      ++ia;
      ++ib;
    }
  }
  return out;
}
}  // namespace detail

/// Courses rated by both students, ascending.
inline std::vector<std::string> co_rated_items(const RatingsMatrix& m, std::string_view u, std::string_view v) {
  const auto su = m.require_student(u);
  const auto sv = m.require_student(v);
  return detail::intersect(m.student_ratings(su), m.student_ratings(sv),
                           [&](std::size_t c) { return m.course_id(c); });
}

/// Students who rated both courses, ascending.
inline std::vector<std::string> co_rating_users(const RatingsMatrix& m, std::string_view i, std::string_view j) {
  const auto ci = m.require_course(i);
  const auto cj = m.require_course(j);
  return detail::intersect(m.course_ratings(ci), m.course_ratings(cj),
                           [&](std::size_t s) { return m.student_id(s); });
}

}  // namespace gradecf
