#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradecf/error.hpp"
#include "gradecf/text.hpp"

namespace gradecf {

struct GradeSymbol {
  std::string symbol;
  double points = 0.0;
  // Allowed to share its value with another symbol.
  bool alias = false;
};

/// Maps grade symbols onto grade points and bounds the numeric range.
///
/// Grades may be given either as a symbol from the mapping or as a decimal
/// numeral inside [min_points, max_points].
class GradeScale {
 public:
  GradeScale(std::vector<GradeSymbol> symbols, double min_points, double max_points)
      : symbols_(std::move(symbols)), min_points_(min_points), max_points_(max_points) {
    if (!(min_points_ < max_points_)) {
      throw Error(ErrorKind::InvalidScale, "min_points must be below max_points");
    }
    std::map<double, const GradeSymbol*> by_value;
    for (const auto& s : symbols_) {
      if (s.symbol.empty()) throw Error(ErrorKind::InvalidScale, "empty grade symbol");
      if (!std::isfinite(s.points) || s.points < min_points_ || s.points > max_points_) {
        throw Error(ErrorKind::InvalidScale, "symbol '" + s.symbol + "' maps outside the scale range");
      }
      if (!index_.emplace(s.symbol, s.points).second) {
        throw Error(ErrorKind::InvalidScale, "symbol '" + s.symbol + "' defined twice");
      }
      auto [it, fresh] = by_value.emplace(s.points, &s);
      if (!fresh && !s.alias && !it->second->alias) {
        throw Error(ErrorKind::InvalidScale, "symbols '" + it->second->symbol + "' and '" + s.symbol +
                                                 "' share a value without an alias flag");
      }
    }
    for (const auto& [value, _] : by_value) levels_.push_back(value);
  }

  /// Letter grades A+ .. F on a 4.3 point scale.
  static GradeScale standard() {
    return GradeScale({{"A+", 4.3},
                       {"A", 4.0},
                       {"A-", 3.7},
                       {"B+", 3.3},
                       {"B", 3.0},
                       {"B-", 2.7},
                       {"C+", 2.3},
                       {"C", 2.0},
                       {"D", 1.0},
                       {"F", 0.0},
                       {"A−", 3.7, true},
                       {"B−", 2.7, true}},
                      0.0, 4.3);
  }

  /// Parses `symbol,points[,alias]` lines. The range is the span of the
  /// mapped values. Blank lines and lines starting with '#' are skipped, as
  /// is a leading `symbol,points` header.
  static GradeScale from_csv(std::string_view body) {
    std::vector<GradeSymbol> symbols;
    bool first = true;
    for (auto raw : text::lines(body)) {
      const auto line = text::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const auto fields = text::split(line);
      if (first && fields.size() >= 2 && fields[0] == "symbol" && fields[1] == "points") {
        first = false;
        continue;
      }
      first = false;
      if (fields.size() < 2 || fields.size() > 3) {
        throw Error(ErrorKind::InvalidScale, "scale line needs symbol,points[,alias]: '" + std::string(line) + "'");
      }
      const auto points = text::parse_decimal(fields[1]);
      if (!points) throw Error(ErrorKind::InvalidScale, "bad points value in '" + std::string(line) + "'");
      bool alias = false;
      if (fields.size() == 3) {
        if (fields[2] != "alias") throw Error(ErrorKind::InvalidScale, "third column must be 'alias'");
        alias = true;
      }
      symbols.push_back({std::string(fields[0]), *points, alias});
    }
    if (symbols.empty()) throw Error(ErrorKind::InvalidScale, "scale file defines no symbols");
    const auto [lo, hi] = std::minmax_element(symbols.begin(), symbols.end(),
                                              [](const auto& a, const auto& b) { return a.points < b.points; });
    return GradeScale(std::move(symbols), lo->points, hi->points);
  }

  std::string to_csv() const {
    std::string out = "symbol,points\n";
    for (const auto& s : symbols_) {
      out += s.symbol + "," + text::format_double(s.points) + (s.alias ? ",alias\n" : "\n");
    }
    return out;
  }

  double min_points() const noexcept { return min_points_; }
  double max_points() const noexcept { return max_points_; }
  double midpoint() const noexcept { return 0.5 * (min_points_ + max_points_); }
  const std::vector<GradeSymbol>& symbols() const noexcept { return symbols_; }

  /// Distinct mapped values, ascending.
  const std::vector<double>& levels() const noexcept { return levels_; }

  bool contains(double points) const noexcept { return points >= min_points_ && points <= max_points_; }

  std::optional<double> lookup(std::string_view symbol) const {
    const auto it = index_.find(std::string(symbol));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Symbol first, then decimal numeral.
  double parse(std::string_view field) const {
    field = text::trim(field);
    if (auto v = lookup(field)) return *v;
    if (auto v = text::parse_decimal(field)) {
      if (!contains(*v)) {
        throw Error(ErrorKind::GradeOutOfRange, "grade " + std::string(field) + " outside [" +
                                                    text::format_double(min_points_) + ", " +
                                                    text::format_double(max_points_) + "]");
      }
      return *v;
    }
    throw Error(ErrorKind::UnknownGradeSymbol, "'" + std::string(field) + "'");
  }

  double clamp(double v) const noexcept { return std::clamp(v, min_points_, max_points_); }

  /// Nearest mapped level; ties go to the higher level. Falls back to the
  /// range bounds when the mapping is empty.
  double quantize(double v) const noexcept {
    v = clamp(v);
    if (levels_.empty()) return v;
    const auto hi = std::lower_bound(levels_.begin(), levels_.end(), v);
    if (hi == levels_.begin()) return *hi;
    if (hi == levels_.end()) return levels_.back();
    const double below = *(hi - 1);
    return (v - below < *hi - v) ? below : *hi;
  }

  /// Smallest gap between adjacent levels.
  double min_step() const noexcept {
    double step = max_points_ - min_points_;
    for (std::size_t i = 1; i < levels_.size(); ++i) step = std::min(step, levels_[i] - levels_[i - 1]);
    return step;
  }

 private:
  std::vector<GradeSymbol> symbols_;
  double min_points_;
  double max_points_;
  std::map<std::string, double, std::less<>> index_;
  std::vector<double> levels_;
};

}  // namespace gradecf
