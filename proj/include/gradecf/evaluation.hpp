#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "gradecf/error.hpp"
#include "gradecf/grade_scale.hpp"
#include "gradecf/prediction.hpp"
#include "gradecf/ratings_matrix.hpp"
#include "gradecf/similarity.hpp"
#include "gradecf/text.hpp"

namespace gradecf {

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  std::size_t held_out_student_count = 25;
  int held_out_term = 3;
  std::uint64_t seed = 7;
};

struct Split {
  RatingsMatrix train;
  std::vector<GradeRecord> test;
  // Test rows over all rows.
  double x = 0.0;
  std::vector<std::string> held_out_students;
};

/// Picks held_out_student_count students uniformly at random among those
/// graded in held_out_term and moves all their grades for that term into
/// the test list. The train matrix keeps the full course catalog.
inline Split split_held_out_students(const RatingsMatrix& m, const SplitSpec& spec) {
  bool term_known = false;
  for (std::size_t c = 0; c < m.course_count(); ++c) term_known |= m.course_term(c) == spec.held_out_term;
  if (!term_known) throw Error(ErrorKind::UnknownTerm, "term " + std::to_string(spec.held_out_term));

  std::vector<std::size_t> eligible;
  for (std::size_t s = 0; s < m.student_count(); ++s) {
    const auto r = m.student_ratings(s);
    if (std::any_of(r.begin(), r.end(), [&](const Entry& e) { return m.course_term(e.index) == spec.held_out_term; })) {
      eligible.push_back(s);
    }
  }
  if (spec.held_out_student_count > eligible.size()) {
    throw Error(ErrorKind::InsufficientStudents, "asked for " + std::to_string(spec.held_out_student_count) +
                                                     " students, only " + std::to_string(eligible.size()) +
                                                     " graded in term " + std::to_string(spec.held_out_term));
  }

  // Partial Fisher-Yates: the first `count` slots become the sample.
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = 0; i < spec.held_out_student_count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  std::vector<bool> held(m.student_count(), false);
  for (std::size_t i = 0; i < spec.held_out_student_count; ++i) held[eligible[i]] = true;

  std::vector<GradeRecord> train, test;
  for (auto& r : m.records()) {
    const bool out = held[*m.student_index(r.student_id)] && r.term == spec.held_out_term;
    (out ? test : train).push_back(std::move(r));
  }
  Split split{RatingsMatrix(train, m.scale(), m.catalog()), std::move(test), 0.0, {}};
  split.x = m.rating_count() == 0 ? 0.0
                                  : static_cast<double>(split.test.size()) / static_cast<double>(m.rating_count());
  for (std::size_t s = 0; s < m.student_count(); ++s) {
    if (held[s]) split.held_out_students.push_back(m.student_id(s));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Metrics

struct PredictionPair {
  double predicted;
  double actual;
};

inline double mae(std::span<const PredictionPair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyPairList, "MAE needs at least one pair");
  double sum = 0.0;
  for (const auto& p : pairs) sum += std::abs(p.predicted - p.actual);
  return sum / static_cast<double>(pairs.size());
}

/// MAE of predicting the train global mean for every test row.
inline double global_mean_baseline_mae(const RatingsMatrix& train, std::span<const GradeRecord> test) {
  std::vector<PredictionPair> pairs;
  for (const auto& r : test) pairs.push_back({train.global_mean(), r.grade_points});
  return mae(pairs);
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthesisSpec {
  std::size_t students = 255;
  std::vector<std::size_t> courses_per_term = {9, 9, 7};
  double noise_sd = 0.3;
  std::size_t latent_dim = 4;
  std::uint64_t seed = 7;
  double base_mean = 3.0;
  double ability_sd = 0.4;
  double difficulty_sd = 0.3;
  // Per-component sd of the student and course latent vectors.
  double latent_sd = 0.4;
  // Snap to the nearest scale level; off gives continuous grades.
  bool quantize = true;
};

inline std::string padded_id(char prefix, std::size_t n, std::size_t total) {
  const auto width = std::to_string(total).size();
  auto digits = std::to_string(n);
  return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

/// grade = base + ability_s - difficulty_c + <p_s, q_c> + noise, clamped to
/// the scale and optionally quantized. Every student takes every course.
inline std::vector<GradeRecord> synthesize_dataset(const SynthesisSpec& spec, const GradeScale& scale) {
  if (spec.students == 0 || spec.courses_per_term.empty() || spec.latent_dim == 0) {
    throw Error(ErrorKind::InvalidConfig, "synthesis needs students, terms and a latent dimension");
  }
  for (auto n : spec.courses_per_term) {
    if (n == 0) throw Error(ErrorKind::InvalidConfig, "each term needs at least one course");
  }
  if (spec.noise_sd < 0 || spec.ability_sd < 0 || spec.difficulty_sd < 0 || spec.latent_sd < 0) {
    throw Error(ErrorKind::InvalidConfig, "standard deviations must be non-negative");
  }
  std::size_t courses = 0;
  for (auto n : spec.courses_per_term) courses += n;

  std::mt19937_64 rng(spec.seed);
  auto draw = [&](double sd) {
    if (sd == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sd)(rng);
  };
  std::vector<double> ability(spec.students), difficulty(courses);
  std::vector<double> p(spec.students * spec.latent_dim), q(courses * spec.latent_dim);
  for (auto& v : ability) v = draw(spec.ability_sd);
  for (auto& v : difficulty) v = draw(spec.difficulty_sd);
  for (auto& v : p) v = draw(spec.latent_sd);
  for (auto& v : q) v = draw(spec.latent_sd);

  std::vector<int> term_of(courses);
  for (std::size_t t = 0, c = 0; t < spec.courses_per_term.size(); ++t) {
    for (std::size_t k = 0; k < spec.courses_per_term[t]; ++k) term_of[c++] = static_cast<int>(t + 1);
  }

  std::vector<GradeRecord> out;
  out.reserve(spec.students * courses);
  for (std::size_t s = 0; s < spec.students; ++s) {
    for (std::size_t c = 0; c < courses; ++c) {
      double dot = 0.0;
      for (std::size_t d = 0; d < spec.latent_dim; ++d) dot += p[s * spec.latent_dim + d] * q[c * spec.latent_dim + d];
      const double g = spec.base_mean + ability[s] - difficulty[c] + dot + draw(spec.noise_sd);
      out.push_back({padded_id('S', s + 1, spec.students), padded_id('C', c + 1, courses), term_of[c],
                     spec.quantize ? scale.quantize(g) : scale.clamp(g)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment grid

struct ExperimentConfig {
  std::vector<Algorithm> algorithms = {Algorithm::UserBased, Algorithm::ItemBased};
  // Empty optional is "all".
  std::vector<std::optional<std::size_t>> k_values = {5, 10, 15, 20, std::nullopt};
  std::vector<SplitSpec> splits = {SplitSpec{}};
  WeightingParams weighting;
  // k is overwritten per grid cell.
  NeighborhoodConfig neighborhood;
  unsigned threads = 1;
};

struct ReportRow {
  Algorithm algorithm = Algorithm::UserBased;
  std::optional<std::size_t> k;
  double x = 0.0;
  std::uint64_t seed = 0;
  std::size_t held_out_students = 0;
  int term = 0;
  double mae = 0.0;
  // NaN when every cell fell back.
  double mae_neighborhood_only = std::numeric_limits<double>::quiet_NaN();
  double coverage = 0.0;
  std::array<std::size_t, 4> fallback{};  // indexed by FallbackLevel
  std::size_t clamped = 0;
  std::size_t n_pairs = 0;
  std::size_t test_rows = 0;

  friend bool operator==(const ReportRow& a, const ReportRow& b) {
    const auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.algorithm == b.algorithm && a.k == b.k && a.x == b.x && a.seed == b.seed &&
           a.held_out_students == b.held_out_students && a.term == b.term && a.mae == b.mae &&
           same(a.mae_neighborhood_only, b.mae_neighborhood_only) && a.coverage == b.coverage &&
           a.fallback == b.fallback && a.clamped == b.clamped && a.n_pairs == b.n_pairs && a.test_rows == b.test_rows;
  }
};

struct EvaluationReport {
  std::vector<ReportRow> rows;
  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

// Called for every prediction made during run_experiment.
using PredictionObserver = std::function<void(const ReportRow&, const Prediction&)>;

namespace detail {
inline int k_order(const std::optional<std::size_t>& k) {
  return k ? static_cast<int>(*k) : std::numeric_limits<int>::max();
}
}  // namespace detail

/// For each split, algorithm and k: builds the model on the train matrix,
/// predicts every test row and aggregates MAE, coverage and fallback counts.
/// Rows come back ordered by algorithm, split position, then k ("all" last).
inline EvaluationReport run_experiment(const RatingsMatrix& dataset, const ExperimentConfig& cfg,
                                       const PredictionObserver& observer = {}) {
  if (cfg.algorithms.empty() || cfg.k_values.empty()) {
    throw Error(ErrorKind::InvalidConfig, "experiment needs at least one algorithm and one k");
  }
  cfg.weighting.validate();
  cfg.neighborhood.validate();

  struct Keyed {
    std::size_t algorithm, split;
    int k;
    ReportRow row;
  };
  std::vector<Keyed> keyed;

  for (std::size_t si = 0; si < cfg.splits.size(); ++si) {
    const auto& spec = cfg.splits[si];
    const auto split = split_held_out_students(dataset, spec);
    for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai) {
      const auto algorithm = cfg.algorithms[ai];
      const auto model = build_similarity_model(split.train, kind_for(algorithm), cfg.weighting, cfg.threads);
      for (const auto& k : cfg.k_values) {
        auto ncfg = cfg.neighborhood;
        ncfg.k = k;
        ReportRow row;
        row.algorithm = algorithm;
        row.k = k;
        row.x = split.x;
        row.seed = spec.seed;
        row.held_out_students = spec.held_out_student_count;
        row.term = spec.held_out_term;
        row.test_rows = split.test.size();

        std::vector<PredictionPair> all, genuine;
        for (const auto& r : split.test) {
          if (!split.train.student_index(r.student_id) || !split.train.course_index(r.course_id)) continue;
          const auto p = predict(split.train, model, r.student_id, r.course_id, ncfg);
          if (observer) observer(row, p);
          all.push_back({p.value, r.grade_points});
          if (p.fallback_level == FallbackLevel::None) genuine.push_back({p.value, r.grade_points});
          ++row.fallback[static_cast<std::size_t>(p.fallback_level)];
          row.clamped += p.clamped() ? 1 : 0;
        }
        row.n_pairs = all.size();
        row.mae = all.empty() ? std::numeric_limits<double>::quiet_NaN() : mae(all);
        if (!genuine.empty()) row.mae_neighborhood_only = mae(genuine);
        row.coverage = row.test_rows == 0 ? 0.0
                                          : static_cast<double>(genuine.size()) / static_cast<double>(row.test_rows);
        keyed.push_back({ai, si, detail::k_order(k), row});
      }
    }
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.algorithm, a.split, a.k) < std::tie(b.algorithm, b.split, b.k);
  });
  EvaluationReport report;
  for (auto& k : keyed) report.rows.push_back(std::move(k.row));
  return report;
}

// ---------------------------------------------------------------------------
// Report files

inline constexpr std::string_view kResultsHeader =
    "algorithm,k,x,seed,mae,coverage,fallback_none,fallback_user_mean,fallback_item_mean,fallback_global_mean,"
    "clamped,n_pairs";

inline std::string results_csv(const EvaluationReport& report) {
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : report.rows) {
    out += std::string(to_string(r.algorithm)) + ',' + k_to_string(r.k) + ',' + text::format_double(r.x) + ',' +
           std::to_string(r.seed) + ',' + text::format_double(r.mae) + ',' + text::format_double(r.coverage);
    for (auto n : r.fallback) out += ',' + std::to_string(n);
    out += ',' + std::to_string(r.clamped) + ',' + std::to_string(r.n_pairs) + '\n';
  }
  return out;
}

// Columns the fixed results table has no room for.
inline std::string results_detail_csv(const EvaluationReport& report) {
  std::string out = "algorithm,k,x,seed,held_out_students,term,test_rows,mae,mae_neighborhood_only\n";
  for (const auto& r : report.rows) {
    out += std::string(to_string(r.algorithm)) + ',' + k_to_string(r.k) + ',' + text::format_double(r.x) + ',' +
           std::to_string(r.seed) + ',' + std::to_string(r.held_out_students) + ',' + std::to_string(r.term) + ',' +
           std::to_string(r.test_rows) + ',' + text::format_double(r.mae) + ',' +
           (std::isnan(r.mae_neighborhood_only) ? std::string() : text::format_double(r.mae_neighborhood_only)) +
           '\n';
  }
  return out;
}

/// MAE against k, one series per (x, seed), for one algorithm. The "all"
/// neighbourhood is written with the literal abscissa `all`.
inline std::string mae_vs_k_series(const EvaluationReport& report, Algorithm algorithm) {
  std::map<std::pair<double, std::uint64_t>, std::vector<const ReportRow*>> series;
  for (const auto& r : report.rows) {
    if (r.algorithm == algorithm) series[{r.x, r.seed}].push_back(&r);
  }
  std::string out = "# MAE vs neighbourhood size, " + std::string(to_string(algorithm)) + "\n";
  for (const auto& [key, rows] : series) {
    out += "\n# series: " + std::string(to_string(algorithm)) + " x=" + text::format_double(key.first) +
           " seed=" + std::to_string(key.second) + "\n# k mae\n";
    for (const auto* r : rows) out += k_to_string(r->k) + ' ' + text::format_double(r->mae) + '\n';
  }
  return out;
}

/// MAE against x at a fixed k, one series per algorithm.
inline std::string mae_vs_x_series(const EvaluationReport& report, std::size_t k) {
  std::map<Algorithm, std::vector<const ReportRow*>> series;
  for (const auto& r : report.rows) {
    if (r.k == k) series[r.algorithm].push_back(&r);
  }
  std::string out = "# MAE vs test fraction x at k=" + std::to_string(k) + "\n";
  for (auto& [algorithm, rows] : series) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow* a, const ReportRow* b) { return a->x < b->x; });
    out += "\n# series: " + std::string(to_string(algorithm)) + "\n# x mae\n";
    for (const auto* r : rows) out += text::format_double(r->x) + ' ' + text::format_double(r->mae) + '\n';
  }
  return out;
}

/// Writes results.csv, results_detail.csv, a MAE-vs-k series file per
/// algorithm and, when k = 10 was evaluated, the user/item overlay against x.
/// Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const EvaluationReport& report,
                                                      const std::filesystem::path& destination) {
  namespace fs = std::filesystem;
  if (report.rows.empty()) throw Error(ErrorKind::EmptyReport, "nothing to write");
  std::error_code ec;
  fs::create_directories(destination, ec);
  if (ec || !fs::is_directory(destination)) {
    throw Error(ErrorKind::DestinationUnwritable, destination.string());
  }
  std::vector<std::pair<fs::path, std::string>> files;
  files.emplace_back(destination / "results.csv", results_csv(report));
  files.emplace_back(destination / "results_detail.csv", results_detail_csv(report));
  for (auto algorithm : {Algorithm::UserBased, Algorithm::ItemBased}) {
    const bool present = std::any_of(report.rows.begin(), report.rows.end(),
                                     [&](const ReportRow& r) { return r.algorithm == algorithm; });
    if (present) {
      files.emplace_back(destination / ("mae_vs_k_" + std::string(to_string(algorithm)) + ".dat"),
                         mae_vs_k_series(report, algorithm));
    }
  }
  if (std::any_of(report.rows.begin(), report.rows.end(), [](const ReportRow& r) { return r.k == 10u; })) {
    files.emplace_back(destination / "mae_vs_x_k10.dat", mae_vs_x_series(report, 10));
  }
  std::vector<fs::path> written;
  for (const auto& [path, body] : files) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) throw Error(ErrorKind::DestinationUnwritable, path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace gradecf
