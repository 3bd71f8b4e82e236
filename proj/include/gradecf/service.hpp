#pragma once

// Request handlers behind the HTTP service. Each handler takes already-split
// request parts and returns a status plus a JSON body, so the same code runs
// under httplib and in-process tests.
//
// Reads work on an immutable snapshot (dataset plus built models). Uploads
// and builds are serialized and publish a fresh snapshot when done, so a read
// that started earlier finishes on the old one.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gradecf/prediction.hpp"
#include "gradecf/store.hpp"

namespace gradecf {

using json = nlohmann::json;
using QueryParams = std::map<std::string, std::string>;

struct Response {
  int status = 200;
  json body;
};

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownStudent:
    case ErrorKind::UnknownCourse:
    case ErrorKind::UnknownModel:
      return 404;
    case ErrorKind::FingerprintMismatch:
      return 409;
    case ErrorKind::DegenerateMatrix:
    case ErrorKind::NoDataset:
      return 503;
    case ErrorKind::Io:
    case ErrorKind::DestinationUnwritable:
    case ErrorKind::MalformedModel:
      return 500;
    default:
      return 400;
  }
}

inline json k_json(const std::optional<std::size_t>& k) { return k ? json(*k) : json("all"); }

inline json prediction_json(const Prediction& p) {
  json neighbors = json::array();
  for (const auto& n : p.neighbors) neighbors.push_back({{"id", n.id}, {"similarity", n.similarity}});
  return {{"student_id", p.student_id},
          {"course_id", p.course_id},
          {"value", p.value},
          {"raw_value", p.raw_value},
          {"neighborhood_size_used", p.neighborhood_size_used},
          {"fallback_level", to_string(p.fallback_level)},
          {"clamped", p.clamped()},
          {"neighbors", std::move(neighbors)}};
}

inline json predictions_json(const std::vector<Prediction>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back(prediction_json(p));
  return out;
}

inline json dataset_json(const RatingsMatrix& m) {
  return {{"dataset_id", dataset_id(m)},
          {"student_count", m.student_count()},
          {"course_count", m.course_count()},
          {"rating_count", m.rating_count()},
          {"degenerate", m.degenerate()}};
}

/// Comma-separated list with empty fields dropped.
inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (text::trim(s).empty()) return out;
  for (auto f : text::split(s)) {
    if (!f.empty()) out.emplace_back(f);
  }
  return out;
}

// Model ids double as file names.
inline bool valid_model_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
  }
  return true;
}

class Service {
 public:
  Service() : state_(std::make_shared<State>()) {}

  /// Loads whatever the store already holds; later mutations are written back.
  explicit Service(Store store, unsigned build_threads = 1)
      : store_(std::move(store)), build_threads_(build_threads), state_(std::make_shared<State>()) {
    auto next = std::make_shared<State>();
    if (auto m = store_->load_dataset()) next->dataset = std::make_shared<const RatingsMatrix>(std::move(*m));
    for (const auto& id : store_->model_ids()) {
      if (auto sm = store_->load_model(id)) next->models[id] = std::make_shared<const StoredModel>(std::move(*sm));
    }
    state_ = std::move(next);
  }

  // POST /datasets. CSV body, or JSON with "records" or "csv" plus optional
  // "scale_csv" and "courses" (catalog entries without ratings).
  Response upload_dataset(std::string_view body, std::string_view content_type = "text/csv") {
    return guarded([&] {
      std::lock_guard write(write_mu_);
      const auto current = snapshot();
      auto scale = current->dataset ? current->dataset->scale() : GradeScale::standard();
      std::vector<GradeRecord> records;
      std::map<std::string, int> catalog;
      if (is_json(body, content_type)) {
        const auto j = parse_body(body);
        if (auto it = j.find("scale_csv"); it != j.end()) scale = GradeScale::from_csv(it->get<std::string>());
        if (auto it = j.find("csv"); it != j.end()) {
          const auto csv = it->get<std::string>();
          const auto rows = text::lines(csv);
          records = parse_records(rows, scale);
        } else if (auto rit = j.find("records"); rit != j.end() && rit->is_array()) {
          for (const auto& r : *rit) records.push_back(record_from_json(r, scale));
        } else {
          throw Error(ErrorKind::MalformedRow, "expected \"records\" or \"csv\"");
        }
        if (auto it = j.find("courses"); it != j.end()) {
          for (const auto& c : *it) catalog[c.at("course_id").get<std::string>()] = c.at("term").get<int>();
        }
      } else {
        const auto rows = text::lines(body);
        records = parse_records(rows, scale);
      }
      auto matrix = std::make_shared<const RatingsMatrix>(records, scale, catalog);
      if (store_) store_->save_dataset(*matrix);
      auto next = std::make_shared<State>(*current);
      next->dataset = matrix;
      publish(std::move(next));
      return Response{201, dataset_json(*matrix)};
    });
  }

  // POST /models {"kind": "user_user"|"item_item"} or {"algorithm": "user"|"item"},
  // weighting fields at top level or under "params".
  Response build_model(std::string_view body) {
    return guarded([&] {
      const auto j = body.empty() ? json::object() : parse_body(body);
      if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "expected an object");
      SimilarityKind kind;
      if (auto it = j.find("kind"); it != j.end()) kind = parse_similarity_kind(it->get<std::string>());
      else if (auto at = j.find("algorithm"); at != j.end()) kind = kind_for(parse_algorithm(at->get<std::string>()));
      else throw Error(ErrorKind::InvalidConfig, "\"kind\" or \"algorithm\" is required");
      auto params = params_from_json(j.contains("params") ? j.at("params") : j);

      std::lock_guard write(write_mu_);
      const auto current = snapshot();
      const auto& m = require_dataset(*current);
      const auto id = model_id(kind, params, m.fingerprint());
      if (auto it = current->models.find(id); it != current->models.end()) {
        return Response{200, handle_json(it->second->handle)};
      }
      auto model = build_similarity_model(m, kind, params, build_threads_);
      auto sm = std::make_shared<const StoredModel>(
          StoredModel{{id, kind, params, dataset_id(m), utc_now()}, std::move(model)});
      if (store_) store_->save_model(*sm);
      auto next = std::make_shared<State>(*current);
      next->models[id] = sm;
      publish(std::move(next));
      return Response{201, handle_json(sm->handle)};
    });
  }

  // GET /models/{id}
  Response get_model(const std::string& id) const {
    return guarded([&] {
      const auto state = snapshot();
      const auto& sm = find_model(*state, id);
      auto j = handle_json(sm.handle);
      j["size"] = sm.model.size();
      j["pair_count"] = sm.model.pair_count();
      j["stale"] = !state->dataset || sm.model.source_fingerprint() != state->dataset->fingerprint();
      return Response{200, j};
    });
  }

  // GET /courses
  Response list_courses() const {
    return guarded([&] {
      const auto state = snapshot();
      const auto& m = require_dataset(*state);
      json courses = json::array();
      for (std::size_t c = 0; c < m.course_count(); ++c) {
        const auto mean = m.course_mean(c);
        courses.push_back({{"course_id", m.course_id(c)},
                           {"term", m.course_term(c)},
                           {"rating_count", m.course_ratings(c).size()},
                           {"mean", mean ? json(*mean) : json()}});
      }
      return Response{200, {{"dataset_id", dataset_id(m)}, {"courses", std::move(courses)}}};
    });
  }

  // GET /students/{id}/predictions?courses=&model=&algorithm=&k=
  // Without courses, every course the student has no grade in.
  Response student_predictions(const std::string& student, const QueryParams& q) const {
    return guarded([&] {
      const auto state = snapshot();
      const auto& m = require_dataset(*state);
      const auto& sm = resolve_model(*state, q);
      const auto cfg = neighborhood_from(q);
      m.require_student(student);
      auto courses = q.count("courses") ? split_list(q.at("courses")) : unrated_courses(m, student);
      std::vector<Prediction> out;
      for (const auto& c : courses) out.push_back(predict(m, sm.model, student, c, cfg));
      return Response{200, {{"student_id", student},
                            {"model_id", sm.handle.model_id},
                            {"k", k_json(cfg.k)},
                            {"predictions", predictions_json(out)}}};
    });
  }

  // GET /students/{id}/recommendations?n=&courses=&model=&algorithm=&k=
  Response student_recommendations(const std::string& student, const QueryParams& q) const {
    return guarded([&] {
      const auto state = snapshot();
      const auto& m = require_dataset(*state);
      const auto& sm = resolve_model(*state, q);
      const auto cfg = neighborhood_from(q);
      std::size_t n = 5;
      if (auto it = q.find("n"); it != q.end()) {
        const auto parsed = text::parse_integer<std::size_t>(it->second);
        if (!parsed || *parsed == 0) throw Error(ErrorKind::InvalidConfig, "n must be a positive integer");
        n = *parsed;
      }
      m.require_student(student);
      const auto candidates = q.count("courses") ? split_list(q.at("courses")) : unrated_courses(m, student);
      const auto ranked = recommend_top_n(m, sm.model, student, candidates, n, cfg);
      return Response{200, {{"student_id", student},
                            {"model_id", sm.handle.model_id},
                            {"k", k_json(cfg.k)},
                            {"n", n},
                            {"recommendations", predictions_json(ranked)}}};
    });
  }

  // POST /whatif. The history is folded in as a virtual student for this
  // request only; nothing in the snapshot changes.
  Response whatif(std::string_view body) const {
    return guarded([&] {
      const auto j = parse_body(body);
      if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "expected an object");
      const auto state = snapshot();
      const auto& m = require_dataset(*state);

      VirtualStudent v;
      for (const auto& row : j.value("grade_history", json::array())) {
        const auto course = row.at("course_id").get<std::string>();
        v.history.emplace_back(course, grade_from_json(row.contains("grade_points") ? row.at("grade_points")
                                                                                    : row.at("grade"),
                                                       m.scale()));
      }
      const auto candidates = j.value("candidate_courses", std::vector<std::string>{});
      for (const auto& c : candidates) {
        for (const auto& h : v.history) {
          if (h.first == c) throw Error(ErrorKind::InvalidConfig, "candidate " + c + " is already in the history");
        }
      }
      const auto algorithm = parse_algorithm(j.value("algorithm", std::string("user_based")));
      NeighborhoodConfig cfg;
      if (auto it = j.find("k"); it != j.end()) {
        cfg.k = it->is_string() ? parse_k(it->get<std::string>()) : std::optional<std::size_t>(it->get<std::size_t>());
      }
      if (auto it = j.find("positive_only"); it != j.end()) cfg.positive_only = it->get<bool>();
      cfg.validate();
      if (algorithm == Algorithm::UserBased && v.history.empty()) {
        throw Error(ErrorKind::InvalidConfig, "user-based what-if needs a non-empty grade history");
      }

      const StoredModel* sm = nullptr;
      if (j.contains("model") || algorithm == Algorithm::ItemBased) {
        QueryParams mq{{"algorithm", to_string(algorithm)}};
        if (j.contains("model")) mq["model"] = j.at("model").get<std::string>();
        sm = &resolve_model(*state, mq);
        if (sm->model.kind() != kind_for(algorithm)) {
          throw Error(ErrorKind::WrongModelKind, "model " + sm->handle.model_id + " is " + to_string(sm->model.kind()));
        }
      }
      std::vector<Prediction> out;
      if (algorithm == Algorithm::UserBased) {
        WeightingParams params = sm ? sm->handle.params : WeightingParams{};
        if (sm && sm->model.source_fingerprint() != m.fingerprint()) {
          throw Error(ErrorKind::FingerprintMismatch, "model was built from a different dataset version");
        }
        if (auto it = j.find("weighting"); it != j.end()) params = params_from_json(*it, params);
        out = predict_virtual_user_based(m, params, v, candidates, cfg);
      } else {
        if (auto it = j.find("weighting"); it != j.end() && !it->empty()) {
          throw Error(ErrorKind::InvalidConfig, "item-based what-if uses the stored model's weighting");
        }
        out = predict_virtual_item_based(m, sm->model, v, candidates, cfg);
      }
      order_ranking(out);
      return Response{200, {{"student_id", v.id},
                            {"algorithm", to_string(algorithm)},
                            {"model_id", sm ? json(sm->handle.model_id) : json()},
                            {"k", k_json(cfg.k)},
                            {"predictions", predictions_json(out)}}};
    });
  }

  std::optional<std::string> current_dataset_id() const {
    const auto state = snapshot();
    if (!state->dataset) return std::nullopt;
    return dataset_id(*state->dataset);
  }

 private:
  struct State {
    std::shared_ptr<const RatingsMatrix> dataset;
    std::map<std::string, std::shared_ptr<const StoredModel>> models;
  };

  std::shared_ptr<const State> snapshot() const {
    std::lock_guard lock(state_mu_);
    return state_;
  }

  void publish(std::shared_ptr<const State> next) {
    std::lock_guard lock(state_mu_);
    state_ = std::move(next);
  }

  template <typename Fn>
  static Response guarded(Fn&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      return {http_status(e.kind()), {{"error", to_string(e.kind())}, {"message", e.what()}}};
    } catch (const json::exception& e) {
      return {400, {{"error", "MalformedRequest"}, {"message", e.what()}}};
    } catch (const std::exception& e) {
      return {500, {{"error", "Internal"}, {"message", e.what()}}};
    }
  }

  static bool is_json(std::string_view body, std::string_view content_type) {
    if (content_type.find("json") != std::string_view::npos) return true;
    const auto t = text::trim(body);
    return !t.empty() && t.front() == '{';
  }

  static json parse_body(std::string_view body) {
    return json::parse(body.begin(), body.end());
  }

  static double grade_from_json(const json& g, const GradeScale& scale) {
    if (g.is_string()) return scale.parse(g.get<std::string>());
    const double v = g.get<double>();
    if (!scale.contains(v)) throw Error(ErrorKind::GradeOutOfRange, text::format_double(v));
    return v;
  }

  static GradeRecord record_from_json(const json& r, const GradeScale& scale) {
    return {r.at("student_id").get<std::string>(), r.at("course_id").get<std::string>(), r.at("term").get<int>(),
            grade_from_json(r.contains("grade_points") ? r.at("grade_points") : r.at("grade"), scale)};
  }

  static const RatingsMatrix& require_dataset(const State& s) {
    if (!s.dataset) throw Error(ErrorKind::NoDataset, "upload a dataset first");
    return *s.dataset;
  }

  static const StoredModel& find_model(const State& s, const std::string& id) {
    if (!valid_model_id(id)) throw Error(ErrorKind::UnknownModel, "bad model id");
    const auto it = s.models.find(id);
    if (it == s.models.end()) throw Error(ErrorKind::UnknownModel, id);
    return *it->second;
  }

  // Explicit model id, else the default-weighting model for the requested
  // algorithm (user-based when unspecified) on the current dataset.
  static const StoredModel& resolve_model(const State& s, const QueryParams& q) {
    if (auto it = q.find("model"); it != q.end() && !it->second.empty()) return find_model(s, it->second);
    const auto& m = require_dataset(s);
    const auto it = q.find("algorithm");
    const auto algorithm = it == q.end() ? Algorithm::UserBased : parse_algorithm(it->second);
    return find_model(s, model_id(kind_for(algorithm), WeightingParams{}, m.fingerprint()));
  }

  static NeighborhoodConfig neighborhood_from(const QueryParams& q) {
    NeighborhoodConfig cfg;
    if (auto it = q.find("k"); it != q.end()) cfg.k = parse_k(it->second);
    if (auto it = q.find("positive_only"); it != q.end()) {
      if (it->second != "true" && it->second != "false") {
        throw Error(ErrorKind::InvalidConfig, "positive_only must be true or false");
      }
      cfg.positive_only = it->second == "true";
    }
    cfg.validate();
    return cfg;
  }

  std::optional<Store> store_;
  unsigned build_threads_ = 1;
  std::mutex write_mu_;
  mutable std::mutex state_mu_;
  std::shared_ptr<const State> state_;
};

}  // namespace gradecf
