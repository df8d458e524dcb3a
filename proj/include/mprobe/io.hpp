#pragma once

// Problem-document parsing (strict: unknown fields rejected, every violation
// carries its field path) and the CSV/JSON emitters. All numeric output is
// printed with 17 significant digits so doubles round-trip exactly.

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mprobe/errors.hpp"
#include "mprobe/jacobi.hpp"
#include "mprobe/kernels.hpp"
#include "mprobe/model.hpp"
#include "mprobe/probe.hpp"
#include "mprobe/weyl.hpp"

namespace mprobe {

using nlohmann::json;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace io_detail {

inline void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                           const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ValidationError("unknown field", {path + "." + it.key() + ": unknown field"});
  }
}

inline double need_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError("type error", {path + ": expected a number"});
  return j.get<double>();
}

inline const json& need_field(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError("missing field", {path + "." + key + ": required"});
  return *it;
}

inline BoundaryCondition parse_bc(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError("type error", {path + ": expected {\"c\":..., \"s\":...}"});
  reject_unknown(j, {"c", "s"}, path);
  return BoundaryCondition{need_number(need_field(j, "c", path), path + ".c"),
                           need_number(need_field(j, "s", path), path + ".s")};
}

inline std::vector<double> parse_breakpoints(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError("type error", {path + ": expected an array"});
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(need_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace io_detail

inline ProblemSpec parse_problem_json(const json& doc) {
  using namespace io_detail;
  if (!doc.is_object()) throw ValidationError("problem document must be a JSON object");
  reject_unknown(doc, {"geometry", "potential", "left_bc", "right_bc"}, "$");

  ProblemSpec spec;
  const json& g = need_field(doc, "geometry", "$");
  if (g.is_string() && g.get<std::string>() == "half_line") {
    spec.geometry = GeometryKind::HalfLine;
  } else if (g.is_string() && g.get<std::string>() == "full_line") {
    spec.geometry = GeometryKind::FullLine;
  } else if (g.is_object()) {
    reject_unknown(g, {"finite_interval"}, "$.geometry");
    spec.geometry = GeometryKind::FiniteInterval;
    spec.b = need_number(need_field(g, "finite_interval", "$.geometry"), "$.geometry.finite_interval");
  } else {
    throw ValidationError("type error",
                          {"$.geometry: expected \"half_line\", \"full_line\" or {\"finite_interval\": b}"});
  }

  const json& pot = need_field(doc, "potential", "$");
  if (!pot.is_object()) throw ValidationError("type error", {"$.potential: expected an object"});
  const bool matrix = pot.contains("dim");
  if (matrix) {
    reject_unknown(pot, {"dim", "breakpoints", "segments"}, "$.potential");
    HermitianMatrixPotential p;
    const json& dj = need_field(pot, "dim", "$.potential");
    if (!dj.is_number_integer() || dj.get<int>() < 1)
      throw ValidationError("type error", {"$.potential.dim: expected a positive integer"});
    p.dim = dj.get<int>();
    p.breakpoints = parse_breakpoints(need_field(pot, "breakpoints", "$.potential"),
                                      "$.potential.breakpoints");
    const json& segs = need_field(pot, "segments", "$.potential");
    if (!segs.is_array()) throw ValidationError("type error", {"$.potential.segments: expected an array"});
    for (std::size_t si = 0; si < segs.size(); ++si) {
      const std::string sp = "$.potential.segments[" + std::to_string(si) + "]";
      if (!segs[si].is_array()) throw ValidationError("type error", {sp + ": expected an array of coefficients"});
      Poly<CMat> seg;
      for (std::size_t ci = 0; ci < segs[si].size(); ++ci) {
        const std::string cp = sp + "[" + std::to_string(ci) + "]";
        const json& mj = segs[si][ci];
        if (!mj.is_array() || mj.size() != static_cast<std::size_t>(p.dim) * p.dim)
          throw ValidationError("type error", {cp + ": expected " + std::to_string(p.dim * p.dim) +
                                               " [re, im] pairs (row-major)"});
        CMat m(p.dim);
        for (int r = 0; r < p.dim; ++r)
          for (int c = 0; c < p.dim; ++c) {
            const json& e = mj[static_cast<std::size_t>(r) * p.dim + c];
            const std::string ep = cp + "[" + std::to_string(r * p.dim + c) + "]";
            if (!e.is_array() || e.size() != 2)
              throw ValidationError("type error", {ep + ": expected [re, im]"});
            m(r, c) = cplx(need_number(e[0], ep + "[0]"), need_number(e[1], ep + "[1]"));
          }
        seg.c.push_back(std::move(m));
      }
      p.segments.push_back(std::move(seg));
    }
    spec.potential = std::move(p);
  } else {
    reject_unknown(pot, {"breakpoints", "segments"}, "$.potential");
    PiecewisePotential p;
    p.breakpoints = parse_breakpoints(need_field(pot, "breakpoints", "$.potential"),
                                      "$.potential.breakpoints");
    const json& segs = need_field(pot, "segments", "$.potential");
    if (!segs.is_array()) throw ValidationError("type error", {"$.potential.segments: expected an array"});
    for (std::size_t si = 0; si < segs.size(); ++si) {
      const std::string sp = "$.potential.segments[" + std::to_string(si) + "]";
      if (!segs[si].is_array()) throw ValidationError("type error", {sp + ": expected an array of coefficients"});
      Poly<double> seg;
      for (std::size_t ci = 0; ci < segs[si].size(); ++ci)
        seg.c.push_back(io_detail::need_number(segs[si][ci], sp + "[" + std::to_string(ci) + "]"));
      p.segments.push_back(std::move(seg));
    }
    spec.potential = std::move(p);
  }

  if (doc.contains("left_bc")) spec.left_bc = parse_bc(doc["left_bc"], "$.left_bc");
  if (doc.contains("right_bc")) spec.right_bc = parse_bc(doc["right_bc"], "$.right_bc");
  return spec;
}

inline ProblemSpec parse_problem_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  return parse_problem_json(doc);
}

inline json emit_problem_json(const ProblemSpec& spec) {
  json doc;
  switch (spec.geometry) {
    case GeometryKind::HalfLine: doc["geometry"] = "half_line"; break;
    case GeometryKind::FullLine: doc["geometry"] = "full_line"; break;
    case GeometryKind::FiniteInterval: doc["geometry"] = {{"finite_interval", spec.b}}; break;
  }
  json pot;
  if (spec.is_matrix()) {
    const auto& p = spec.matrix_potential();
    pot["dim"] = p.dim;
    pot["breakpoints"] = p.breakpoints;
    json segs = json::array();
    for (const auto& seg : p.segments) {
      json coefs = json::array();
      for (const auto& m : seg.c) {
        json entries = json::array();
        for (int r = 0; r < p.dim; ++r)
          for (int c = 0; c < p.dim; ++c)
            entries.push_back({m(r, c).real(), m(r, c).imag()});
        coefs.push_back(std::move(entries));
      }
      segs.push_back(std::move(coefs));
    }
    pot["segments"] = std::move(segs);
  } else {
    const auto& p = spec.scalar_potential();
    pot["breakpoints"] = p.breakpoints;
    json segs = json::array();
    for (const auto& seg : p.segments) segs.push_back(seg.c);
    pot["segments"] = std::move(segs);
  }
  doc["potential"] = std::move(pot);
  doc["left_bc"] = {{"c", spec.left_bc.c}, {"s", spec.left_bc.s}};
  if (spec.right_bc) doc["right_bc"] = {{"c", spec.right_bc->c}, {"s", spec.right_bc->s}};
  return doc;
}

// ---- Jacobi documents -----------------------------------------------------

struct JacobiDoc {
  bool rational = false;
  jacobi::JacobiOperator<double> flt;
  jacobi::JacobiOperator<jacobi::Rational> rat;
};

inline JacobiDoc parse_jacobi_json(const json& doc) {
  using namespace io_detail;
  if (!doc.is_object()) throw ValidationError("jacobi document must be a JSON object");
  reject_unknown(doc, {"a", "b", "arithmetic"}, "$");
  JacobiDoc out;
  std::string arith = "float";
  if (doc.contains("arithmetic")) {
    if (!doc["arithmetic"].is_string())
      throw ValidationError("type error", {"$.arithmetic: expected \"float\" or \"rational\""});
    arith = doc["arithmetic"].get<std::string>();
  }
  if (arith != "float" && arith != "rational")
    throw ValidationError("type error", {"$.arithmetic: expected \"float\" or \"rational\""});
  out.rational = arith == "rational";

  auto parse_entries = [&](const char* key, auto push) {
    const json& arr = need_field(doc, key, "$");
    if (!arr.is_array())
      throw ValidationError("type error", {std::string("$.") + key + ": expected an array"});
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = std::string("$.") + key + "[" + std::to_string(i) + "]";
      push(arr[i], p);
    }
  };
  if (out.rational) {
    auto to_rat = [](const json& e, const std::string& p) -> jacobi::Rational {
      if (e.is_string()) return jacobi::parse_rational(e.get<std::string>());
      if (e.is_number_integer()) return jacobi::Rational(e.get<long long>());
      throw ValidationError("type error", {p + ": rational mode takes integers or \"p/q\" strings"});
    };
    parse_entries("a", [&](const json& e, const std::string& p) { out.rat.a.push_back(to_rat(e, p)); });
    parse_entries("b", [&](const json& e, const std::string& p) { out.rat.b.push_back(to_rat(e, p)); });
    out.rat.check();
  } else {
    parse_entries("a", [&](const json& e, const std::string& p) { out.flt.a.push_back(need_number(e, p)); });
    parse_entries("b", [&](const json& e, const std::string& p) { out.flt.b.push_back(need_number(e, p)); });
    out.flt.check();
  }
  return out;
}

inline jacobi::DiscreteMeasure<double> parse_measure_json(const json& doc) {
  using namespace io_detail;
  if (!doc.is_object()) throw ValidationError("measure document must be a JSON object");
  reject_unknown(doc, {"points", "weights"}, "$");
  jacobi::DiscreteMeasure<double> mu;
  mu.points = parse_breakpoints(need_field(doc, "points", "$"), "$.points");
  mu.weights = parse_breakpoints(need_field(doc, "weights", "$"), "$.weights");
  mu.check();
  return mu;
}

// ---- CSV / report emitters --------------------------------------------------

// Trace CSV: re_z, im_z, then re/im of each value entry row-major.
inline void write_mtrace_csv(std::ostream& os, const MTrace& t) {
  os << "re_z,im_z";
  if (t.dim == 1) {
    os << ",re_m,im_m";
  } else {
    for (int r = 1; r <= t.dim; ++r)
      for (int c = 1; c <= t.dim; ++c)
        os << ",re_m_" << r << c << ",im_m_" << r << c;
  }
  os << "\n";
  for (std::size_t i = 0; i < t.z.size(); ++i) {
    os << fmt17(t.z[i].real()) << "," << fmt17(t.z[i].imag());
    for (int r = 0; r < t.dim; ++r)
      for (int c = 0; c < t.dim; ++c)
        os << "," << fmt17(t.value[i](r, c).real()) << "," << fmt17(t.value[i](r, c).imag());
    os << "\n";
  }
}

// Kernel dump: x, y, K over the triangle, row-major in y.
inline void write_kernel_csv(std::ostream& os, const TriangularKernelGrid& K) {
  os << "x,y,K\n";
  const double h = K.h();
  for (int j = 0; j <= K.n; ++j)
    for (int i = 0; i <= j; ++i)
      os << fmt17(i * h) << "," << fmt17(j * h) << "," << fmt17(K.at(i, j)) << "\n";
}

inline void write_diff_csv(std::ostream& os, const MTrace& t,
                           const std::vector<std::pair<double, double>>& diffs) {
  os << "re_z,im_z,s,delta_norm\n";
  for (std::size_t i = 0; i < diffs.size(); ++i)
    os << fmt17(t.z[i].real()) << "," << fmt17(t.z[i].imag()) << "," << fmt17(diffs[i].first)
       << "," << fmt17(diffs[i].second) << "\n";
}

inline void write_agreement_report_json(std::ostream& os, const AgreementReport& rep) {
  os << "{\n";
  os << "  \"a_hat\": " << fmt17(rep.a_hat) << ",\n";
  os << "  \"stderr\": " << fmt17(rep.fit.std_err) << ",\n";
  os << "  \"intercept\": " << fmt17(rep.fit.intercept) << ",\n";
  os << "  \"points_used\": " << rep.fit.points_used << ",\n";
  os << "  \"window\": [" << fmt17(rep.fit.window_lo) << ", " << fmt17(rep.fit.window_hi) << "],\n";
  os << "  \"saturated_at_floor\": " << (rep.fit.saturated_at_floor ? "true" : "false") << ",\n";
  os << "  \"verdict\": \"" << verdict_name(rep.verdict) << "\",\n";
  if (rep.alpha_estimates)
    os << "  \"alpha_estimates\": [" << fmt17(rep.alpha_estimates->first) << ", "
       << fmt17(rep.alpha_estimates->second) << "]\n";
  else
    os << "  \"alpha_estimates\": null\n";
  os << "}\n";
}

inline void write_error_json(std::ostream& os, int code, const std::string& kind,
                             const std::string& message, const std::vector<std::string>& issues = {}) {
  json err;
  err["error"]["code"] = code;
  err["error"]["kind"] = kind;
  err["error"]["message"] = message;
  if (!issues.empty()) err["error"]["issues"] = issues;
  os << err.dump() << "\n";
}

}  // namespace mprobe
