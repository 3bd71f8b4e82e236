#pragma once

// Brute-force neighbourhood CF used as a test oracle. Works from plain
// record lists with std::map lookups and recomputes everything per query;
// it shares no code with the library's similarity or prediction paths.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace reference {

struct Rec {
  std::string student;
  std::string course;
  double grade;
};

using Table = std::map<std::string, std::map<std::string, double>>;

struct Data {
  Table by_student;  // student -> course -> grade
  Table by_course;   // course -> student -> grade
  double lo = 0.0, hi = 4.3;

  explicit Data(const std::vector<Rec>& recs, double lo_ = 0.0, double hi_ = 4.3) : lo(lo_), hi(hi_) {
    for (const auto& r : recs) {
      by_student[r.student][r.course] = r.grade;
      by_course[r.course][r.student] = r.grade;
    }
  }

  double mean_of(const std::string& s) const {
    const auto& row = by_student.at(s);
    double sum = 0;
    for (const auto& kv : row) sum += kv.second;
    return sum / row.size();
  }

  double global_mean() const {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [s, row] : by_student)
      for (const auto& kv : row) {
        sum += kv.second;
        ++n;
      }
    return n ? sum / n : 0.5 * (lo + hi);
  }
};

struct Weighting {
  std::optional<int> threshold;
  std::optional<double> rho;
  int min_corated = 2;
};

inline double transform(double sim, std::size_t n, const Weighting& w) {
  if (w.threshold && n < static_cast<std::size_t>(*w.threshold)) sim = sim * (double(n) / double(*w.threshold));
  if (w.rho && *w.rho != 1.0) sim = (sim < 0 ? -1.0 : 1.0) * std::pow(std::fabs(sim), *w.rho);
  return sim;
}

// Pearson with full-set means, over co-rated courses.
inline std::pair<double, std::size_t> pearson_raw(const Data& d, const std::string& u, const std::string& v,
                                                  int min_corated) {
  const double mu = d.mean_of(u), mv = d.mean_of(v);
  double num = 0, su = 0, sv = 0;
  std::size_t n = 0;
  for (const auto& [course, ru] : d.by_student.at(u)) {
    const auto& vr = d.by_student.at(v);
    auto it = vr.find(course);
    if (it == vr.end()) continue;
    num += (ru - mu) * (it->second - mv);
    su += (ru - mu) * (ru - mu);
    sv += (it->second - mv) * (it->second - mv);
    ++n;
  }
  if (n < static_cast<std::size_t>(min_corated) || su == 0 || sv == 0) return {0.0, n};
  return {std::max(-1.0, std::min(1.0, num / (std::sqrt(su) * std::sqrt(sv)))), n};
}

inline std::pair<double, std::size_t> adjusted_cosine_raw(const Data& d, const std::string& i, const std::string& j,
                                                          int min_corated) {
  double num = 0, si = 0, sj = 0;
  std::size_t n = 0;
  for (const auto& [student, ri] : d.by_course.at(i)) {
    const auto& jr = d.by_course.at(j);
    auto it = jr.find(student);
    if (it == jr.end()) continue;
    const double m = d.mean_of(student);
    num += (ri - m) * (it->second - m);
    si += (ri - m) * (ri - m);
    sj += (it->second - m) * (it->second - m);
    ++n;
  }
  if (n < static_cast<std::size_t>(min_corated) || si == 0 || sj == 0) return {0.0, n};
  return {std::max(-1.0, std::min(1.0, num / (std::sqrt(si) * std::sqrt(sj)))), n};
}

struct Query {
  std::optional<std::size_t> k;  // empty = all
  bool positive_only = true;
  bool clamp = true;
  Weighting weighting;
};

struct Answer {
  double value;
  bool fell_back;
  std::vector<std::pair<std::string, double>> neighbours;
};

inline std::vector<std::pair<std::string, double>> pick(std::vector<std::pair<std::string, double>> c,
                                                        const Query& q) {
  if (q.positive_only) {
    std::vector<std::pair<std::string, double>> kept;
    for (auto& x : c)
      if (x.second > 0) kept.push_back(x);
    c = kept;
  }
  std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (q.k && c.size() > *q.k) c.resize(*q.k);
  return c;
}

inline Answer fallback(const Data& d, const std::string& u, const std::string& i) {
  if (d.by_student.count(u) && !d.by_student.at(u).empty()) return {d.mean_of(u), true, {}};
  if (d.by_course.count(i) && !d.by_course.at(i).empty()) {
    double sum = 0;
    for (const auto& kv : d.by_course.at(i)) sum += kv.second;
    return {sum / d.by_course.at(i).size(), true, {}};
  }
  return {d.global_mean(), true, {}};
}

inline double clamp(const Data& d, const Query& q, double v) { return q.clamp ? std::max(d.lo, std::min(d.hi, v)) : v; }

inline Answer user_based(const Data& d, const std::string& u, const std::string& i, const Query& q) {
  std::vector<std::pair<std::string, double>> cands;
  if (d.by_course.count(i)) {
    for (const auto& [v, _] : d.by_course.at(i)) {
      if (v == u) continue;
      auto [s, n] = pearson_raw(d, u, v, q.weighting.min_corated);
      cands.push_back({v, transform(s, n, q.weighting)});
    }
  }
  const auto nb = pick(cands, q);
  double num = 0, den = 0;
  for (const auto& [v, s] : nb) {
    num += s * (d.by_student.at(v).at(i) - d.mean_of(v));
    den += std::fabs(s);
  }
  if (den == 0) {
    auto a = fallback(d, u, i);
    a.value = clamp(d, q, a.value);
    return a;
  }
  return {clamp(d, q, d.mean_of(u) + num / den), false, nb};
}

inline Answer item_based(const Data& d, const std::string& u, const std::string& i, const Query& q) {
  std::vector<std::pair<std::string, double>> cands;
  for (const auto& [j, _] : d.by_student.at(u)) {
    if (j == i) continue;
    double s = 0;
    std::size_t n = 0;
    if (d.by_course.count(i) && d.by_course.count(j)) std::tie(s, n) = adjusted_cosine_raw(d, i, j, q.weighting.min_corated);
    cands.push_back({j, transform(s, n, q.weighting)});
  }
  const auto nb = pick(cands, q);
  double num = 0, den = 0;
  for (const auto& [j, s] : nb) {
    num += s * d.by_student.at(u).at(j);
    den += std::fabs(s);
  }
  if (den == 0) {
    auto a = fallback(d, u, i);
    a.value = clamp(d, q, a.value);
    return a;
  }
  return {clamp(d, q, num / den), false, nb};
}

}  // namespace reference
