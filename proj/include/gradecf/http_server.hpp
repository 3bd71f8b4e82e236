#pragma once

#include <string>

#include <httplib.h>

#include "gradecf/service.hpp"

namespace gradecf {

namespace detail {

inline void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline QueryParams query_of(const httplib::Request& req) {
  QueryParams q;
  for (const auto& [k, v] : req.params) q.emplace(k, v);  // first value wins
  return q;
}

}  // namespace detail

/// Routes every endpoint onto `service`, which must outlive `server`.
inline void mount(httplib::Server& server, Service& service) {
  server.Post("/datasets", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.upload_dataset(req.body, req.get_header_value("Content-Type")));
  });
  server.Post("/models", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.build_model(req.body));
  });
  server.Get(R"(/models/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.get_model(req.matches[1]));
  });
  server.Get("/courses", [&](const httplib::Request&, httplib::Response& res) {
    detail::reply(res, service.list_courses());
  });
  server.Get(R"(/students/([^/]+)/predictions)", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.student_predictions(req.matches[1], detail::query_of(req)));
  });
  server.Get(R"(/students/([^/]+)/recommendations)", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.student_recommendations(req.matches[1], detail::query_of(req)));
  });
  server.Post("/whatif", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.whatif(req.body));
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(json{{"error", "NotFound"}, {"message", "no such endpoint"}}.dump(), "application/json");
  });
}

}  // namespace gradecf
