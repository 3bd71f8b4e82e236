#pragma once

// Command-line front end. Exit status: 0 success, 1 data error, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradecf/evaluation.hpp"
#include "gradecf/http_server.hpp"
#include "gradecf/service.hpp"
#include "gradecf/store.hpp"

namespace gradecf {

namespace cli {

enum class Format { Text, Json, Csv };

struct WeightingFlags {
  std::optional<int> significance_threshold;
  std::optional<double> amplification;
  int min_corated = 2;

  void add(CLI::App* app) {
    app->add_option("--significance-threshold", significance_threshold, "Shrink pairs with fewer co-ratings");
    app->add_option("--amplification", amplification, "Case amplification exponent");
    app->add_option("--min-corated", min_corated, "Minimum overlap for a non-zero similarity")->capture_default_str();
  }

  WeightingParams params() const {
    WeightingParams p;
    p.significance_threshold = significance_threshold;
    p.amplification_exponent = amplification;
    p.min_corated = min_corated;
    p.validate();
    return p;
  }
};

inline void add_format(CLI::App* app, Format& format, bool with_csv = true) {
  std::map<std::string, Format> names{{"text", Format::Text}, {"json", Format::Json}};
  if (with_csv) names.emplace("csv", Format::Csv);
  app->add_option("--output", format, "Output format")->transform(CLI::CheckedTransformer(names, CLI::ignore_case));
}

inline std::optional<std::size_t> k_option(const std::string& s) {
  try {
    return parse_k(s);
  } catch (const Error&) {
    throw CLI::ValidationError("--k", "expected a positive integer or 'all', got '" + s + "'");
  }
}

inline RatingsMatrix stored_dataset(const Store& store) {
  auto m = store.load_dataset();
  if (!m) throw Error(ErrorKind::NoDataset, "no dataset in " + store.root().string() + "; run ingest first");
  return std::move(*m);
}

// The stored model when given or when one with these params exists, else a
// freshly built one that is not saved.
inline SimilarityModel model_for(const Store& store, const RatingsMatrix& m, const std::string& explicit_id,
                                 SimilarityKind kind, const WeightingParams& params) {
  const auto id = explicit_id.empty() ? model_id(kind, params, m.fingerprint()) : explicit_id;
  if (!valid_model_id(id)) throw Error(ErrorKind::UnknownModel, "bad model id");
  if (auto sm = store.load_model(id)) return std::move(sm->model);
  if (!explicit_id.empty()) throw Error(ErrorKind::UnknownModel, explicit_id);
  return build_similarity_model(m, kind, params);
}

inline void write_predictions(std::ostream& out, const std::vector<Prediction>& ps, Format format,
                              const std::string& key) {
  switch (format) {
    case Format::Json:
      out << json{{key, predictions_json(ps)}}.dump(2) << '\n';
      break;
    case Format::Csv:
      out << "student_id,course_id,value,raw_value,neighborhood_size_used,fallback_level\n";
      for (const auto& p : ps) {
        out << p.student_id << ',' << p.course_id << ',' << text::format_double(p.value) << ','
            << text::format_double(p.raw_value) << ',' << p.neighborhood_size_used << ','
            << to_string(p.fallback_level) << '\n';
      }
      break;
    case Format::Text:
      for (const auto& p : ps) {
        out << p.student_id << ' ' << p.course_id << " value=" << text::format_double(p.value)
            << " fallback=" << to_string(p.fallback_level) << " neighbors=" << p.neighborhood_size_used;
        if (p.clamped()) out << " raw=" << text::format_double(p.raw_value);
        out << '\n';
      }
      break;
  }
}

inline json report_json(const EvaluationReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"algorithm", to_string(r.algorithm)},
                    {"k", k_json(r.k)},
                    {"x", r.x},
                    {"seed", r.seed},
                    {"held_out_students", r.held_out_students},
                    {"term", r.term},
                    {"mae", r.mae},
                    {"mae_neighborhood_only", std::isnan(r.mae_neighborhood_only) ? json() : json(r.mae_neighborhood_only)},
                    {"coverage", r.coverage},
                    {"fallback_none", r.fallback[0]},
                    {"fallback_user_mean", r.fallback[1]},
                    {"fallback_item_mean", r.fallback[2]},
                    {"fallback_global_mean", r.fallback[3]},
                    {"clamped", r.clamped},
                    {"n_pairs", r.n_pairs},
                    {"test_rows", r.test_rows}});
  }
  return {{"rows", std::move(rows)}};
}

}  // namespace cli

/// `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using cli::Format;
  CLI::App app{"Grade prediction with neighbourhood collaborative filtering", "gradecf"};
  app.require_subcommand(1);
  std::string data_dir = default_data_dir().string();
  app.add_option("--data-dir", data_dir, std::string("Dataset and model directory (env ") + kDataDirEnv + ")")
      ->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a grade file and store it as the current dataset");
  std::string ingest_input, ingest_scale;
  Format ingest_format = Format::Text;
  ingest->add_option("--input", ingest_input, "CSV: student_id,course_id,term,grade")->required()->check(CLI::ExistingFile);
  ingest->add_option("--scale", ingest_scale, "CSV: symbol,points[,alias]")->check(CLI::ExistingFile);
  cli::add_format(ingest, ingest_format, false);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a latent-factor grade dataset");
  SynthesisSpec spec;
  std::string synth_file;
  bool synth_store = false, continuous = false;
  synth->add_option("--students", spec.students)->capture_default_str();
  synth->add_option("--terms", spec.courses_per_term, "Courses per term")->delimiter(',')->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--noise-sd", spec.noise_sd)->capture_default_str();
  synth->add_option("--latent-dim", spec.latent_dim)->capture_default_str();
  synth->add_option("--latent-sd", spec.latent_sd)->capture_default_str();
  synth->add_option("--ability-sd", spec.ability_sd)->capture_default_str();
  synth->add_option("--difficulty-sd", spec.difficulty_sd)->capture_default_str();
  synth->add_option("--base-mean", spec.base_mean)->capture_default_str();
  synth->add_flag("--continuous", continuous, "Skip snapping grades to scale levels");
  synth->add_option("--file", synth_file, "Write records here instead of stdout");
  synth->add_flag("--store", synth_store, "Also make the result the current dataset");

  // train
  auto* train = app.add_subcommand("train", "Build and store a similarity model");
  std::string train_algorithm = "user";
  cli::WeightingFlags train_weighting;
  unsigned train_threads = 1;
  Format train_format = Format::Text;
  train->add_option("--algorithm", train_algorithm, "user or item")->capture_default_str();
  train_weighting.add(train);
  train->add_option("--threads", train_threads)->check(CLI::PositiveNumber)->capture_default_str();
  cli::add_format(train, train_format, false);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run the held-out-student MAE grid and write report files");
  std::vector<std::string> algorithms{"user", "item"}, ks{"5", "10", "15", "20", "all"};
  std::vector<std::size_t> held_out{25};
  std::vector<std::uint64_t> seeds{7};
  int term = 3;
  std::string eval_input, report_dir;
  cli::WeightingFlags eval_weighting;
  unsigned eval_threads = 1;
  Format eval_format = Format::Csv;
  evaluate->add_option("--algorithms", algorithms)->delimiter(',')->capture_default_str();
  evaluate->add_option("--k", ks, "Neighbourhood sizes; 'all' for no cap")->delimiter(',')->capture_default_str();
  evaluate->add_option("--held-out-students", held_out)->delimiter(',')->capture_default_str();
  evaluate->add_option("--term", term)->capture_default_str();
  evaluate->add_option("--seed", seeds)->delimiter(',')->capture_default_str();
  evaluate->add_option("--input", eval_input, "Evaluate this CSV instead of the stored dataset")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--report-dir", report_dir, "Defaults to <data-dir>/report");
  eval_weighting.add(evaluate);
  evaluate->add_option("--threads", eval_threads)->check(CLI::PositiveNumber)->capture_default_str();
  cli::add_format(evaluate, eval_format);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict grades for a stored student");
  std::string student, algorithm = "user", model_arg, k_arg = "10";
  std::vector<std::string> courses;
  cli::WeightingFlags predict_weighting;
  Format predict_format = Format::Text;
  predict_cmd->add_option("--student", student)->required();
  predict_cmd->add_option("--course", courses, "Defaults to every ungraded course")->delimiter(',');
  predict_cmd->add_option("--algorithm", algorithm, "user or item")->capture_default_str();
  predict_cmd->add_option("--k", k_arg)->capture_default_str();
  predict_cmd->add_option("--model", model_arg, "Stored model id");
  predict_weighting.add(predict_cmd);
  cli::add_format(predict_cmd, predict_format);

  // recommend
  auto* recommend = app.add_subcommand("recommend", "Rank ungraded courses by predicted grade");
  std::string rec_student, rec_algorithm = "user", rec_model, rec_k = "10";
  std::vector<std::string> rec_courses;
  std::size_t top_n = 5;
  cli::WeightingFlags rec_weighting;
  Format rec_format = Format::Text;
  recommend->add_option("--student", rec_student)->required();
  recommend->add_option("--n", top_n)->check(CLI::PositiveNumber)->capture_default_str();
  recommend->add_option("--courses", rec_courses, "Candidates; defaults to every ungraded course")->delimiter(',');
  recommend->add_option("--algorithm", rec_algorithm, "user or item")->capture_default_str();
  recommend->add_option("--k", rec_k)->capture_default_str();
  recommend->add_option("--model", rec_model, "Stored model id");
  rec_weighting.add(recommend);
  cli::add_format(recommend, rec_format);

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP service on the stored dataset");
  std::string host = "127.0.0.1";
  int port = 8080;
  unsigned serve_threads = 1;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->check(CLI::Range(0, 65535))->capture_default_str();
  serve->add_option("--threads", serve_threads, "Threads per model build")->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::vector<Algorithm> parsed_algorithms;
  std::vector<std::optional<std::size_t>> parsed_ks;
  std::optional<std::size_t> predict_k, rec_k_parsed;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    // Value checks CLI11 cannot express; failures here are usage errors too.
    const auto algo = [](const std::string& flag, const std::string& s) {
      try {
        return parse_algorithm(s);
      } catch (const Error&) {
        throw CLI::ValidationError(flag, "expected user or item, got '" + s + "'");
      }
    };
    if (*evaluate) {
      for (const auto& a : algorithms) parsed_algorithms.push_back(algo("--algorithms", a));
      for (const auto& k : ks) parsed_ks.push_back(cli::k_option(k));
    }
    if (*train) algo("--algorithm", train_algorithm);
    if (*predict_cmd) {
      algo("--algorithm", algorithm);
      predict_k = cli::k_option(k_arg);
    }
    if (*recommend) {
      algo("--algorithm", rec_algorithm);
      rec_k_parsed = cli::k_option(rec_k);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const Store store(data_dir);

    if (*ingest) {
      const auto scale = ingest_scale.empty() ? GradeScale::standard() : GradeScale::from_csv(Store::read(ingest_scale));
      const auto body = Store::read(ingest_input);
      const auto m = ingest_csv(body, scale);
      store.save_dataset(m);
      if (ingest_format == Format::Json) {
        out << dataset_json(m).dump(2) << '\n';
      } else {
        out << "stored dataset " << dataset_id(m) << ": " << m.student_count() << " students, " << m.course_count()
            << " courses, " << m.rating_count() << " grades\n";
      }
      return 0;
    }

    if (*synth) {
      spec.quantize = !continuous;
      const auto scale = GradeScale::standard();
      const auto records = synthesize_dataset(spec, scale);
      const RatingsMatrix m(records, scale);
      if (synth_store) store.save_dataset(m);
      if (synth_file.empty()) {
        out << m.to_csv();
      } else {
        Store::write(synth_file, m.to_csv());
        out << "wrote " << records.size() << " records to " << synth_file << '\n';
      }
      return 0;
    }

    if (*train) {
      const auto m = cli::stored_dataset(store);
      const auto kind = kind_for(parse_algorithm(train_algorithm));
      const auto params = train_weighting.params();
      const auto id = model_id(kind, params, m.fingerprint());
      StoredModel sm{{id, kind, params, dataset_id(m), utc_now()},
                     build_similarity_model(m, kind, params, train_threads)};
      store.save_model(sm);
      if (train_format == Format::Json) out << handle_json(sm.handle).dump(2) << '\n';
      else out << id << '\n';
      return 0;
    }

    if (*evaluate) {
      const auto m = eval_input.empty() ? cli::stored_dataset(store) : ingest_csv(Store::read(eval_input), GradeScale::standard());
      ExperimentConfig cfg;
      cfg.algorithms = parsed_algorithms;
      cfg.k_values = parsed_ks;
      cfg.splits.clear();
      for (auto seed : seeds) {
        for (auto n : held_out) cfg.splits.push_back({n, term, seed});
      }
      cfg.weighting = eval_weighting.params();
      cfg.threads = eval_threads;
      const auto report = run_experiment(m, cfg);
      emit_report(report, report_dir.empty() ? store.root() / "report" : std::filesystem::path(report_dir));
      switch (eval_format) {
        case Format::Csv: out << results_csv(report); break;
        case Format::Json: out << cli::report_json(report).dump(2) << '\n'; break;
        case Format::Text:
          for (const auto& r : report.rows) {
            out << to_string(r.algorithm) << " k=" << k_to_string(r.k) << " x=" << text::format_fixed(r.x, 4)
                << " seed=" << r.seed << " mae=" << text::format_fixed(r.mae, 4)
                << " coverage=" << text::format_fixed(r.coverage, 4) << '\n';
          }
          break;
      }
      return 0;
    }

    if (*predict_cmd) {
      const auto m = cli::stored_dataset(store);
      const auto alg = parse_algorithm(algorithm);
      const auto model = cli::model_for(store, m, model_arg, kind_for(alg), predict_weighting.params());
      NeighborhoodConfig cfg;
      cfg.k = predict_k;
      if (courses.empty()) courses = unrated_courses(m, student);
      std::vector<Prediction> ps;
      for (const auto& c : courses) ps.push_back(predict(m, model, student, c, cfg));
      cli::write_predictions(out, ps, predict_format, "predictions");
      return 0;
    }

    if (*recommend) {
      const auto m = cli::stored_dataset(store);
      const auto alg = parse_algorithm(rec_algorithm);
      const auto model = cli::model_for(store, m, rec_model, kind_for(alg), rec_weighting.params());
      NeighborhoodConfig cfg;
      cfg.k = rec_k_parsed;
      if (rec_courses.empty()) rec_courses = unrated_courses(m, rec_student);
      cli::write_predictions(out, recommend_top_n(m, model, rec_student, rec_courses, top_n, cfg), rec_format,
                             "recommendations");
      return 0;
    }

    if (*serve) {
      Service service(store, serve_threads);
      httplib::Server server;
      mount(server, service);
      if (!server.bind_to_port(host, port)) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
      out << "listening on " << host << ':' << port << " (data dir " << store.root().string() << ")" << std::endl;
      server.listen_after_bind();
      return 0;
    }
  } catch (const std::exception& e) {
    err << "gradecf: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gradecf
