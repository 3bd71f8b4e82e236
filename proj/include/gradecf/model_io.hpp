#pragma once

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <string_view>

#include "gradecf/error.hpp"
#include "gradecf/similarity.hpp"
#include "gradecf/text.hpp"

namespace gradecf {

// Text model dump, version 1:
//
//   gradecf-similarity-model 1
//   kind user_user|item_item
//   significance_threshold none|<int>
//   amplification_exponent none|<hexfloat>
//   min_corated <int>
//   fingerprint <16 hex digits>
//   size <n>
//   id <identifier>                      (n lines, ascending)
//   <a> <b> <corated> <hexfloat sim>     (every a < b, row-major)
//   end
//
// Similarities are written as hexadecimal floating point so a reload
// reproduces the table bit for bit.
inline constexpr std::string_view kModelMagic = "gradecf-similarity-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {
inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error(ErrorKind::MalformedModel, "bad number '" + s + "'");
  return v;
}
}  // namespace detail

inline std::string dump_model(const SimilarityModel& model) {
  std::ostringstream out;
  const auto& p = model.params();
  out << kModelMagic << ' ' << kModelFormatVersion << '\n';
  out << "kind " << to_string(model.kind()) << '\n';
  out << "significance_threshold "
      << (p.significance_threshold ? std::to_string(*p.significance_threshold) : std::string("none")) << '\n';
  out << "amplification_exponent "
      << (p.amplification_exponent ? detail::hexfloat(*p.amplification_exponent) : std::string("none")) << '\n';
  out << "min_corated " << p.min_corated << '\n';
  out << "fingerprint " << text::hex64(model.source_fingerprint()) << '\n';
  out << "size " << model.size() << '\n';
  for (const auto& id : model.ids()) out << "id " << id << '\n';
  for (std::size_t a = 0; a < model.size(); ++a) {
    for (std::size_t b = a + 1; b < model.size(); ++b) {
      out << a << ' ' << b << ' ' << model.corated(a, b) << ' ' << detail::hexfloat(model.similarity(a, b)) << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

inline SimilarityModel load_model(std::string_view body) {
  std::istringstream in{std::string(body)};
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) throw Error(ErrorKind::MalformedModel, "expected '" + key + "'");
    std::string v;
    if (!(in >> v)) throw Error(ErrorKind::MalformedModel, "missing value for '" + key + "'");
    return v;
  };
  if (expect(std::string(kModelMagic)) != std::to_string(kModelFormatVersion)) {
    throw Error(ErrorKind::MalformedModel, "unsupported model format version");
  }
  const auto kind = parse_similarity_kind(expect("kind"));
  WeightingParams params;
  if (const auto t = expect("significance_threshold"); t != "none") {
    const auto v = text::parse_integer<int>(t);
    if (!v) throw Error(ErrorKind::MalformedModel, "bad significance_threshold");
    params.significance_threshold = *v;
  }
  if (const auto r = expect("amplification_exponent"); r != "none") {
    params.amplification_exponent = detail::parse_hexfloat(r);
  }
  {
    const auto v = text::parse_integer<int>(expect("min_corated"));
    if (!v) throw Error(ErrorKind::MalformedModel, "bad min_corated");
    params.min_corated = *v;
  }
  try {
    params.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::MalformedModel, e.what());
  }
  const auto fp_text = expect("fingerprint");
  const auto fingerprint = std::strtoull(fp_text.c_str(), nullptr, 16);
  const auto size = text::parse_integer<std::size_t>(expect("size"));
  if (!size) throw Error(ErrorKind::MalformedModel, "bad size");

  std::vector<std::string> ids;
  ids.reserve(*size);
  for (std::size_t i = 0; i < *size; ++i) {
    ids.push_back(expect("id"));
    if (i > 0 && !(ids[i - 1] < ids[i])) throw Error(ErrorKind::MalformedModel, "ids not strictly ascending");
  }
  SimilarityModel model(kind, std::move(ids), params, fingerprint);
  for (std::size_t a = 0; a < *size; ++a) {
    for (std::size_t b = a + 1; b < *size; ++b) {
      std::size_t ra = 0, rb = 0, corated = 0;
      std::string sim;
      if (!(in >> ra >> rb >> corated >> sim) || ra != a || rb != b) {
        throw Error(ErrorKind::MalformedModel, "pair table truncated or out of order");
      }
      model.set(a, b, detail::parse_hexfloat(sim), corated);
    }
  }
  std::string tail;
  if (!(in >> tail) || tail != "end") throw Error(ErrorKind::MalformedModel, "missing end marker");
  return model;
}

}  // namespace gradecf
