#pragma once

// Filesystem persistence for one dataset version and the models built on it.
//
//   <root>/dataset.csv       grade records
//   <root>/courses.csv       course_id,term for the full catalog
//   <root>/scale.csv         grade scale
//   <root>/models/<id>.model similarity table
//   <root>/models/<id>.json  handle metadata

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradecf/model_io.hpp"
#include "gradecf/ratings_matrix.hpp"
#include "gradecf/similarity.hpp"

namespace gradecf {

inline constexpr const char* kDataDirEnv = "GRADECF_DATA_DIR";

inline std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  return "gradecf-data";
}

inline std::string dataset_id(const RatingsMatrix& m) { return text::hex64(m.fingerprint()); }

/// Same kind, params and dataset always give the same id.
inline std::string model_id(SimilarityKind kind, const WeightingParams& params, std::uint64_t fingerprint) {
  text::Fnv1a h;
  h.update(params.significance_threshold ? std::to_string(*params.significance_threshold) : "none");
  h.update("|");
  h.update(params.amplification_exponent ? detail::hexfloat(*params.amplification_exponent) : "none");
  h.update("|");
  h.update(std::to_string(params.min_corated));
  return std::string(to_string(kind)) + "-" + text::hex64(fingerprint).substr(0, 8) + "-" +
         text::hex64(h.digest()).substr(0, 8);
}

struct ModelHandle {
  std::string model_id;
  SimilarityKind kind = SimilarityKind::UserUser;
  WeightingParams params;
  std::string source_dataset_id;
  std::string created_at;  // UTC, ISO 8601
};

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json params_json(const WeightingParams& p) {
  nlohmann::json j;
  j["significance_threshold"] = p.significance_threshold ? nlohmann::json(*p.significance_threshold) : nlohmann::json();
  j["amplification_exponent"] = p.amplification_exponent ? nlohmann::json(*p.amplification_exponent) : nlohmann::json();
  j["min_corated"] = p.min_corated;
  return j;
}

/// Missing keys keep their defaults.
inline WeightingParams params_from_json(const nlohmann::json& j, WeightingParams base = {}) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "weighting must be an object");
  if (auto it = j.find("significance_threshold"); it != j.end()) {
    if (it->is_null()) base.significance_threshold.reset();
    else if (it->is_number_integer()) base.significance_threshold = it->get<int>();
    else throw Error(ErrorKind::InvalidConfig, "significance_threshold must be an integer or null");
  }
  if (auto it = j.find("amplification_exponent"); it != j.end()) {
    if (it->is_null()) base.amplification_exponent.reset();
    else if (it->is_number()) base.amplification_exponent = it->get<double>();
    else throw Error(ErrorKind::InvalidConfig, "amplification_exponent must be a number or null");
  }
  if (auto it = j.find("min_corated"); it != j.end()) {
    if (!it->is_number_integer()) throw Error(ErrorKind::InvalidConfig, "min_corated must be an integer");
    base.min_corated = it->get<int>();
  }
  base.validate();
  return base;
}

inline nlohmann::json handle_json(const ModelHandle& h) {
  return {{"model_id", h.model_id},
          {"kind", to_string(h.kind)},
          {"params", params_json(h.params)},
          {"source_dataset_id", h.source_dataset_id},
          {"created_at", h.created_at}};
}

inline ModelHandle handle_from_json(const nlohmann::json& j) {
  try {
    ModelHandle h;
    h.model_id = j.at("model_id").get<std::string>();
    h.kind = parse_similarity_kind(j.at("kind").get<std::string>());
    h.params = params_from_json(j.at("params"));
    h.source_dataset_id = j.at("source_dataset_id").get<std::string>();
    h.created_at = j.at("created_at").get<std::string>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedModel, e.what());
  }
}

struct StoredModel {
  ModelHandle handle;
  SimilarityModel model;
};

class Store {
 public:
  explicit Store(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }

  bool has_dataset() const { return std::filesystem::exists(root_ / "dataset.csv"); }

  void save_dataset(const RatingsMatrix& m) const {
    std::filesystem::create_directories(root_);
    std::string catalog = "course_id,term\n";
    for (const auto& [course, term] : m.catalog()) catalog += course + ',' + std::to_string(term) + '\n';
    write(root_ / "scale.csv", m.scale().to_csv());
    write(root_ / "courses.csv", catalog);
    write(root_ / "dataset.csv", m.to_csv());
  }

  std::optional<RatingsMatrix> load_dataset() const {
    if (!has_dataset()) return std::nullopt;
    const auto scale_path = root_ / "scale.csv";
    const auto scale =
        std::filesystem::exists(scale_path) ? GradeScale::from_csv(read(scale_path)) : GradeScale::standard();
    std::map<std::string, int> catalog;
    if (const auto p = root_ / "courses.csv"; std::filesystem::exists(p)) {
      const auto body = read(p);
      const auto rows = text::lines(body);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (text::trim(rows[i]).empty()) continue;
        const auto f = text::split(rows[i]);
        const auto term = f.size() == 2 ? text::parse_integer<int>(f[1]) : std::nullopt;
        if (!term) throw Error(ErrorKind::MalformedRow, "courses.csv line " + std::to_string(i + 1));
        catalog.emplace(std::string(f[0]), *term);
      }
    }
    const auto body = read(root_ / "dataset.csv");
    const auto rows = text::lines(body);
    return RatingsMatrix(parse_records(rows, scale), scale, catalog);
  }

  void save_model(const StoredModel& sm) const {
    std::filesystem::create_directories(root_ / "models");
    write(root_ / "models" / (sm.handle.model_id + ".model"), dump_model(sm.model));
    write(root_ / "models" / (sm.handle.model_id + ".json"), handle_json(sm.handle).dump(2) + "\n");
  }

  std::optional<StoredModel> load_model(const std::string& id) const {
    const auto base = root_ / "models" / id;
    if (!std::filesystem::exists(base.string() + ".model") || !std::filesystem::exists(base.string() + ".json")) {
      return std::nullopt;
    }
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(read(base.string() + ".json"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedModel, e.what());
    }
    return StoredModel{handle_from_json(meta), gradecf::load_model(read(base.string() + ".model"))};
  }

  std::vector<std::string> model_ids() const {
    std::vector<std::string> out;
    const auto dir = root_ / "models";
    if (!std::filesystem::is_directory(dir)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() == ".model") out.push_back(e.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  static std::string read(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static void write(const std::filesystem::path& p, const std::string& body) {
    // Write-then-rename so a crash never leaves a torn file behind.
    const auto tmp = p.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorKind::DestinationUnwritable, p.string());
      out << body;
      if (!out) throw Error(ErrorKind::DestinationUnwritable, p.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) throw Error(ErrorKind::DestinationUnwritable, p.string() + ": " + ec.message());
  }

 private:
  std::filesystem::path root_;
};

}  // namespace gradecf
