#include "hombif/cli.hpp"

#include "hombif/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>

namespace hombif::cli {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw InputError("scenario " + (path.empty() ? std::string("/") : path) + ": " + what);
}

void allow_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) bad(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(keys.begin(), keys.end(),
                                   [&](const char* k) { return it.key() == k; });
    if (!known) bad(path + "/" + it.key(), "unknown field");
  }
}

const Json* find(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const Json& require(const Json& obj, const char* key, const std::string& path) {
  const Json* p = find(obj, key);
  if (!p) bad(path + "/" + key, "required field is missing");
  return *p;
}

double number(const Json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(path, "expected a finite number");
  return v;
}

double positive(const Json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0)) bad(path, "expected a positive number");
  return v;
}

long integer(const Json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<long>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) return static_cast<long>(v);
  }
  bad(path, "expected an integer");
}

long at_least(const Json& j, const std::string& path, long lo) {
  const long v = integer(j, path);
  if (v < lo) bad(path, "expected an integer >= " + std::to_string(lo));
  return v;
}

std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) bad(path, "expected true or false");
  return j.get<bool>();
}

Vector vector(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) bad(path, "expected a non-empty array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number(j[i], path + "/" + std::to_string(i));
  }
  return v;
}

Matrix square(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) bad(path, "expected a non-empty array of rows");
  const auto d = static_cast<Eigen::Index>(j.size());
  Matrix m(d, d);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string rp = path + "/" + std::to_string(r);
    const Vector row = vector(j[r], rp);
    if (row.size() != d) bad(rp, "expected " + std::to_string(d) + " entries (square matrix)");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

TimeWindow window(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) bad(path, "expected [first, last]");
  const TimeWindow w{integer(j[0], path + "/0"), integer(j[1], path + "/1")};
  if (w.first > w.last) bad(path, "first exceeds last");
  if (w.length() > 100000) bad(path, "window longer than 100000 times");
  return w;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json to_json(TimeWindow w) { return Json::array({w.first, w.last}); }

// --- loop ------------------------------------------------------------------

ParameterLoop parse_loop(const Json& j, const std::string& path, Json& echo) {
  allow_keys(j, path, {"kind", "samples", "points"});
  const std::string kind = find(j, "kind") ? text(j["kind"], path + "/kind") : "circle";
  if (kind == "circle") {
    if (find(j, "points")) bad(path + "/points", "only for kind \"points\"");
    const long n = find(j, "samples") ? integer(j["samples"], path + "/samples") : 16;
    if (n < 8 || n > 4096) bad(path + "/samples", "expected 8 to 4096 samples");
    echo = Json{{"kind", "circle"}, {"samples", n}};
    return ParameterLoop::circle(static_cast<std::size_t>(n));
  }
  if (kind == "points") {
    if (find(j, "samples")) bad(path + "/samples", "only for kind \"circle\"");
    const Json& pts = require(j, "points", path);
    if (!pts.is_array()) bad(path + "/points", "expected an array of coordinate arrays");
    std::vector<Parameter> samples;
    Json pecho = Json::array();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string pp = path + "/points/" + std::to_string(i);
      const Vector c = vector(pts[i], pp);
      if (!samples.empty() && static_cast<std::size_t>(c.size()) != samples.front().coords.size()) {
        bad(pp, "all points need the same number of coordinates");
      }
      Parameter p;
      p.coords.assign(c.data(), c.data() + c.size());
      samples.push_back(p);
      pecho.push_back(to_json(c));
    }
    echo = Json{{"kind", "points"}, {"points", std::move(pecho)}};
    try {
      return ParameterLoop(std::move(samples), false);
    } catch (const Error& e) {
      bad(path, e.what());
    }
  }
  bad(path + "/kind", "unknown loop kind \"" + kind + "\" (known: circle, points)");
}

// --- fields ----------------------------------------------------------------

struct ParsedField {
  Json echo;
  std::optional<DiscreteVectorField> linear;
  std::optional<NonlinearField> nonlinear;
};

SampledBundle parse_bundle(const Json& j, const std::string& path, const ParameterLoop& loop,
                           Json& echo) {
  if (!j.is_object()) bad(path, "expected a bundle object");
  const std::string kind = text(require(j, "bundle", path), path + "/bundle");
  if (kind == "mobius") {
    allow_keys(j, path, {"bundle"});
    if (!loop.angular()) bad(path, "the Mobius bundle needs a circle loop");
    echo = Json{{"bundle", "mobius"}};
    return mobius_bundle(loop);
  }
  if (kind == "trivial") {
    allow_keys(j, path, {"bundle", "ambient", "rank"});
    const long d = at_least(require(j, "ambient", path), path + "/ambient", 1);
    const long k = at_least(require(j, "rank", path), path + "/rank", 0);
    if (d > 16) bad(path + "/ambient", "at most 16");
    if (k > d) bad(path + "/rank", "exceeds the ambient dimension");
    echo = Json{{"bundle", "trivial"}, {"ambient", d}, {"rank", k}};
    return trivial_bundle(loop, static_cast<int>(d), static_cast<int>(k));
  }
  if (kind == "sum") {
    allow_keys(j, path, {"bundle", "summands"});
    const Json& parts = require(j, "summands", path);
    if (!parts.is_array() || parts.empty()) bad(path + "/summands", "expected a non-empty array");
    Json pe = Json::array();
    std::optional<SampledBundle> acc;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      Json e;
      auto b = parse_bundle(parts[i], path + "/summands/" + std::to_string(i), loop, e);
      pe.push_back(std::move(e));
      acc = acc ? whitney_sum(*acc, b) : b;
    }
    echo = Json{{"bundle", "sum"}, {"summands", std::move(pe)}};
    return *acc;
  }
  bad(path + "/bundle", "unknown bundle \"" + kind + "\" (known: mobius, trivial, sum)");
}

ParsedField parse_field(const Json& j, const std::string& path, const ParameterLoop& loop);

ParsedField parse_builtin(const Json& j, const std::string& path, const ParameterLoop& loop) {
  allow_keys(j, path, {"kind", "name", "params"});
  const std::string name = text(require(j, "name", path), path + "/name");
  static const Json empty = Json::object();
  const Json& p = find(j, "params") ? j["params"] : empty;
  const std::string pp = path + "/params";
  ParsedField out;
  Json params;
  try {
    if (name == "autonomous") {
      allow_keys(p, pp, {"matrix"});
      const Matrix a = square(require(p, "matrix", pp), pp + "/matrix");
      params["matrix"] = to_json(a);
      out.linear = autonomous_field(a);
    } else if (name == "diagonal") {
      allow_keys(p, pp, {"entries"});
      const Vector e = vector(require(p, "entries", pp), pp + "/entries");
      params["entries"] = to_json(e);
      out.linear = autonomous_field(e.asDiagonal().toDenseMatrix());
    } else if (name == "switched") {
      allow_keys(p, pp, {"before", "after", "switch_time"});
      const Matrix b = square(require(p, "before", pp), pp + "/before");
      const Matrix a = square(require(p, "after", pp), pp + "/after");
      if (a.rows() != b.rows()) bad(pp + "/after", "dimension differs from before");
      const long t = find(p, "switch_time") ? integer(p["switch_time"], pp + "/switch_time") : 0;
      params["before"] = to_json(b);
      params["after"] = to_json(a);
      params["switch_time"] = t;
      out.linear = switched_field(b, a, t);
    } else if (name == "realization") {
      allow_keys(p, pp, {"e", "f", "q", "kappa_minus", "kappa_plus"});
      Json ee, fe;
      const auto e = parse_bundle(require(p, "e", pp), pp + "/e", loop, ee);
      const auto f = parse_bundle(require(p, "f", pp), pp + "/f", loop, fe);
      if (e.ambient != f.ambient) bad(pp + "/f", "ambient dimension differs from e");
      const double q = find(p, "q") ? positive(p["q"], pp + "/q") : 0.5;
      if (!(q < 1)) bad(pp + "/q", "expected 0 < q < 1");
      const long km = find(p, "kappa_minus") ? integer(p["kappa_minus"], pp + "/kappa_minus") : -2;
      const long kp = find(p, "kappa_plus") ? integer(p["kappa_plus"], pp + "/kappa_plus") : 2;
      if (km > kp) bad(pp, "kappa_minus exceeds kappa_plus");
      params = Json{{"e", ee}, {"f", fe}, {"q", q}, {"kappa_minus", km}, {"kappa_plus", kp}};
      out.linear = realization_field(e, f, q, km, kp);
    } else if (name == "system2-mobius") {
      allow_keys(p, pp, {});
      if (!loop.angular()) bad(path, "system2-mobius needs a circle loop");
      params = Json::object();
      out.nonlinear = system2_mobius(loop);
      out.linear = linearize_at_zero(*out.nonlinear);
    } else {
      bad(path + "/name", "unknown builtin \"" + name +
                              "\" (known: autonomous, diagonal, switched, realization, "
                              "system2-mobius)");
    }
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    bad(path, e.what());
  }
  out.echo = Json{{"kind", "builtin"}, {"name", name}, {"params", params}};
  return out;
}

ParsedField parse_tabulated(const Json& j, const std::string& path, const ParameterLoop& loop) {
  allow_keys(j, path, {"kind", "window", "shape", "data"});
  const TimeWindow w = window(require(j, "window", path), path + "/window");
  const Json& shape = require(j, "shape", path);
  if (!shape.is_array() || shape.size() != 3) bad(path + "/shape", "expected [N_params, W_times, d]");
  const long np = at_least(shape[0], path + "/shape/0", 1);
  const long nw = at_least(shape[1], path + "/shape/1", 1);
  const long d = at_least(shape[2], path + "/shape/2", 1);
  if (np != static_cast<long>(loop.size())) {
    bad(path + "/shape/0", "expected the loop size " + std::to_string(loop.size()));
  }
  if (nw != w.length()) bad(path + "/shape/1", "expected the window length " + std::to_string(w.length()));
  if (d > 16) bad(path + "/shape/2", "at most 16");
  const Json& data = require(j, "data", path);
  const std::size_t count = static_cast<std::size_t>(np * nw * d * d);
  if (!data.is_array() || data.size() != count) {
    bad(path + "/data", "expected " + std::to_string(count) + " numbers (row-major N x W x d x d)");
  }
  std::vector<std::vector<Matrix>> table(static_cast<std::size_t>(np));
  std::size_t k = 0;
  for (auto& row : table) {
    row.resize(static_cast<std::size_t>(nw), Matrix(d, d));
    for (auto& m : row) {
      for (long r = 0; r < d; ++r) {
        for (long c = 0; c < d; ++c, ++k) m(r, c) = number(data[k], path + "/data/" + std::to_string(k));
      }
    }
  }
  ParsedField out;
  out.linear = tabulated_field(static_cast<int>(d), w, std::move(table));
  out.echo = Json{{"kind", "tabulated"}, {"window", to_json(w)},
                  {"shape", Json::array({np, nw, d})}, {"data", data}};
  return out;
}

// R(lambda, n, x) choices; each vanishes at x = 0 with D_2 R(0) = 0.
ParsedField parse_nonlinear(const Json& j, const std::string& path, const ParameterLoop& loop) {
  allow_keys(j, path, {"kind", "linear", "residual", "r0", "name"});
  auto lin = parse_field(require(j, "linear", path), path + "/linear", loop);
  if (lin.nonlinear) bad(path + "/linear", "expected a linear field");
  const std::string residual = find(j, "residual") ? text(j["residual"], path + "/residual")
                                                   : "quadratic-decaying";
  const double r0 = find(j, "r0") ? positive(j["r0"], path + "/r0") : 0.5;
  const std::string name = find(j, "name") ? text(j["name"], path + "/name") : "nonlinear";

  PerturbedSystemSpec spec{*lin.linear, std::nullopt, {}, {}, r0, name};
  if (residual == "none") {
    spec.residual = [](const Parameter&, long, const Vector& x) -> Vector {
      return Vector::Zero(x.size());
    };
    spec.residual_jacobian = [](const Parameter&, long, const Vector& x) -> Matrix {
      return Matrix::Zero(x.size(), x.size());
    };
  } else if (residual == "quadratic-decaying") {
    // R_i = e^{-|n|} x_1 x_i
    spec.residual = [](const Parameter&, long n, const Vector& x) -> Vector {
      return std::exp(-std::abs(static_cast<double>(n))) * x(0) * x;
    };
    spec.residual_jacobian = [](const Parameter&, long n, const Vector& x) -> Matrix {
      Matrix jac = x(0) * Matrix::Identity(x.size(), x.size());
      jac.col(0) += x;
      return std::exp(-std::abs(static_cast<double>(n))) * jac;
    };
  } else if (residual == "cubic-decaying") {
    // R_i = e^{-|n|} x_i^3
    spec.residual = [](const Parameter&, long n, const Vector& x) -> Vector {
      return std::exp(-std::abs(static_cast<double>(n))) * x.array().cube().matrix();
    };
    spec.residual_jacobian = [](const Parameter&, long n, const Vector& x) -> Matrix {
      return std::exp(-std::abs(static_cast<double>(n))) *
             (3 * x.array().square()).matrix().asDiagonal().toDenseMatrix();
    };
  } else {
    bad(path + "/residual", "unknown residual \"" + residual +
                                "\" (known: none, quadratic-decaying, cubic-decaying)");
  }
  ParsedField out;
  try {
    out.nonlinear = make_perturbed_system(spec, loop, nullptr);
  } catch (const Error& e) {
    bad(path, e.what());
  }
  out.linear = linearize_at_zero(*out.nonlinear);
  out.echo = Json{{"kind", "nonlinear"}, {"linear", lin.echo}, {"residual", residual},
                  {"r0", r0}, {"name", name}};
  return out;
}

ParsedField parse_field(const Json& j, const std::string& path, const ParameterLoop& loop) {
  if (!j.is_object()) bad(path, "expected a field object");
  const std::string kind = text(require(j, "kind", path), path + "/kind");
  if (kind == "builtin") return parse_builtin(j, path, loop);
  if (kind == "tabulated") return parse_tabulated(j, path, loop);
  if (kind == "nonlinear") return parse_nonlinear(j, path, loop);
  bad(path + "/kind", "unknown field kind \"" + kind + "\" (known: builtin, tabulated, nonlinear)");
}

// --- options ---------------------------------------------------------------

FiniteWindowSequence parse_rhs(const Json& j, const std::string& path, int d, Json& echo) {
  allow_keys(j, path, {"start", "values"});
  const long start = integer(require(j, "start", path), path + "/start");
  const Json& vals = require(j, "values", path);
  if (!vals.is_array() || vals.empty()) bad(path + "/values", "expected a non-empty array of vectors");
  auto psi = FiniteWindowSequence::zeros({start, start + static_cast<long>(vals.size()) - 1}, d);
  Json ve = Json::array();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const std::string vp = path + "/values/" + std::to_string(i);
    const Vector v = vector(vals[i], vp);
    if (v.size() != d) bad(vp, "expected " + std::to_string(d) + " components");
    psi.values[i] = v;
    ve.push_back(to_json(v));
  }
  echo = Json{{"start", start}, {"values", std::move(ve)}};
  return psi;
}

ScenarioOptions parse_options(const Json& j, const std::string& path, const Scenario& s,
                              Json& echo) {
  allow_keys(j, path, {"window", "horizon", "kappa_plus", "kappa_minus", "samples", "dichotomy",
                       "spectrum", "projectors", "solve", "certify", "realize"});
  ScenarioOptions o;
  const TimeWindow fw = s.linear->window();
  const int d = s.dimension;

  o.kappa_plus = find(j, "kappa_plus") ? integer(j["kappa_plus"], path + "/kappa_plus")
                                       : std::max(1L, fw.last);
  o.kappa_minus = find(j, "kappa_minus") ? integer(j["kappa_minus"], path + "/kappa_minus")
                                         : std::min(-1L, fw.first);
  if (o.kappa_minus >= o.kappa_plus) bad(path + "/kappa_minus", "must be below kappa_plus");
  o.window = find(j, "window") ? window(j["window"], path + "/window")
                               : TimeWindow{std::min(-100L, o.kappa_minus - 10),
                                            std::max(100L, o.kappa_plus + 10)};
  if (!o.window.contains(TimeWindow{o.kappa_minus, o.kappa_plus})) {
    bad(path + "/window", "must contain [kappa_minus, kappa_plus]");
  }
  o.horizon = find(j, "horizon") ? at_least(j["horizon"], path + "/horizon", 8) : 100;
  if (o.horizon > 5000) bad(path + "/horizon", "at most 5000");

  Json samples = Json::array();
  if (const Json* p = find(j, "samples")) {
    if (!p->is_array() || p->empty()) bad(path + "/samples", "expected a non-empty array of indices");
    for (std::size_t i = 0; i < p->size(); ++i) {
      const std::string ip = path + "/samples/" + std::to_string(i);
      const long k = at_least((*p)[i], ip, 0);
      if (k >= static_cast<long>(s.loop.size())) bad(ip, "beyond the loop size");
      o.samples.push_back(static_cast<std::size_t>(k));
    }
  } else {
    for (std::size_t i = 0; i < s.loop.size(); ++i) o.samples.push_back(i);
  }
  for (auto k : o.samples) samples.push_back(k);

  static const Json empty = Json::object();
  auto section = [&](const char* key) -> const Json& {
    const Json* p = find(j, key);
    return p ? *p : empty;
  };

  const Json& dj = section("dichotomy");
  const std::string dp = path + "/dichotomy";
  allow_keys(dj, dp, {"gap_ratio", "sigma_reg", "tau_inv"});
  if (find(dj, "gap_ratio")) o.dichotomy.gap_ratio = positive(dj["gap_ratio"], dp + "/gap_ratio");
  if (find(dj, "sigma_reg")) o.dichotomy.sigma_reg = positive(dj["sigma_reg"], dp + "/sigma_reg");
  if (find(dj, "tau_inv")) o.dichotomy.tau_inv = positive(dj["tau_inv"], dp + "/tau_inv");
  if (!(o.dichotomy.gap_ratio > 1)) bad(dp + "/gap_ratio", "must exceed 1");
  o.dichotomy.seed = s.seed;

  const Json& sj = section("spectrum");
  const std::string sp = path + "/spectrum";
  allow_keys(sj, sp, {"gamma_min", "gamma_max", "grid_size", "relative_precision"});
  if (find(sj, "gamma_min")) o.spectrum.gamma_min = positive(sj["gamma_min"], sp + "/gamma_min");
  if (find(sj, "gamma_max")) o.spectrum.gamma_max = positive(sj["gamma_max"], sp + "/gamma_max");
  if (find(sj, "grid_size")) {
    o.spectrum.grid_size = static_cast<int>(at_least(sj["grid_size"], sp + "/grid_size", 4));
  }
  if (find(sj, "relative_precision")) {
    o.spectrum.relative_precision = positive(sj["relative_precision"], sp + "/relative_precision");
  }
  if (!(o.spectrum.gamma_min < o.spectrum.gamma_max)) bad(sp, "gamma_min must be below gamma_max");
  if (o.spectrum.grid_size > 4096) bad(sp + "/grid_size", "at most 4096");
  o.spectrum.horizon = o.horizon;

  const Json& pj = section("projectors");
  allow_keys(pj, path + "/projectors", {"horizon"});
  if (find(pj, "horizon")) o.projector_horizon = at_least(pj["horizon"], path + "/projectors/horizon", 1);

  const Json& vj = section("solve");
  const std::string vp = path + "/solve";
  allow_keys(vj, vp, {"side", "kappa", "tolerance", "rhs"});
  const std::string side = find(vj, "side") ? text(vj["side"], vp + "/side") : "plus";
  if (side == "plus") {
    o.solve.side = Side::plus;
  } else if (side == "minus") {
    o.solve.side = Side::minus;
  } else {
    bad(vp + "/side", "expected \"plus\" or \"minus\"");
  }
  o.solve.kappa = find(vj, "kappa") ? integer(vj["kappa"], vp + "/kappa")
                                    : (o.solve.side == Side::plus ? o.kappa_plus : o.kappa_minus);
  if (find(vj, "tolerance")) o.solve.tolerance = positive(vj["tolerance"], vp + "/tolerance");
  Json rhs = Json::array();
  if (const Json* r = find(vj, "rhs")) {
    if (!r->is_array() || r->empty()) bad(vp + "/rhs", "expected a non-empty array");
    for (std::size_t i = 0; i < r->size(); ++i) {
      Json e;
      o.solve.rhs.push_back(parse_rhs((*r)[i], vp + "/rhs/" + std::to_string(i), d, e));
      rhs.push_back(std::move(e));
    }
  } else {
    // Unit impulse in the first coordinate next to the anchor.
    const long t = o.solve.side == Side::plus ? o.solve.kappa : o.solve.kappa - 1;
    auto psi = FiniteWindowSequence::zeros({t, t}, d);
    psi.values[0](0) = 1.0;
    o.solve.rhs.push_back(psi);
    rhs.push_back(Json{{"start", t}, {"values", Json::array({to_json(psi.values[0])})}});
  }

  const Json& cj = section("certify");
  const std::string cp = path + "/certify";
  allow_keys(cj, cp, {"manifold_dimension", "sample_reach", "localize", "refinements",
                      "localize_window", "localize_horizon", "seed_ratio"});
  Json manifold = nullptr;
  if (const Json* m = find(cj, "manifold_dimension"); m && !m->is_null()) {
    o.certify.manifold_dimension = static_cast<int>(at_least(*m, cp + "/manifold_dimension", 1));
    manifold = *o.certify.manifold_dimension;
  }
  if (find(cj, "sample_reach")) o.certify.sample_reach = at_least(cj["sample_reach"], cp + "/sample_reach", 0);
  o.certify.kappa_plus = o.kappa_plus;
  o.certify.kappa_minus = o.kappa_minus;
  o.certify.horizon = o.horizon;
  o.certify.dichotomy = o.dichotomy;
  if (find(cj, "localize")) o.localize = boolean(cj["localize"], cp + "/localize");
  if (find(cj, "refinements")) {
    o.localization.refinements = static_cast<int>(at_least(cj["refinements"], cp + "/refinements", 0));
    if (o.localization.refinements > 4) bad(cp + "/refinements", "at most 4");
  }
  o.localization.window = find(cj, "localize_window")
                              ? window(cj["localize_window"], cp + "/localize_window")
                              : TimeWindow{std::min(-40L, o.kappa_minus - 10),
                                           std::max(40L, o.kappa_plus + 10)};
  if (!o.localization.window.contains(TimeWindow{o.kappa_minus, o.kappa_plus})) {
    bad(cp + "/localize_window", "must contain [kappa_minus, kappa_plus]");
  }
  if (find(cj, "localize_horizon")) {
    o.localization.horizon = at_least(cj["localize_horizon"], cp + "/localize_horizon", 8);
  }
  if (find(cj, "seed_ratio")) o.localization.seed_ratio = positive(cj["seed_ratio"], cp + "/seed_ratio");
  o.localization.seed = s.seed;
  o.localization.dichotomy = o.dichotomy;

  const Json& rj = section("realize");
  allow_keys(rj, path + "/realize", {"window"});
  o.realize_window = find(rj, "window") ? window(rj["window"], path + "/realize/window")
                                        : TimeWindow{fw.first - 1, fw.last + 1};

  echo = Json{
      {"window", to_json(o.window)},
      {"horizon", o.horizon},
      {"kappa_plus", o.kappa_plus},
      {"kappa_minus", o.kappa_minus},
      {"samples", std::move(samples)},
      {"dichotomy", {{"gap_ratio", o.dichotomy.gap_ratio},
                     {"sigma_reg", o.dichotomy.sigma_reg},
                     {"tau_inv", o.dichotomy.tau_inv}}},
      {"spectrum", {{"gamma_min", o.spectrum.gamma_min},
                    {"gamma_max", o.spectrum.gamma_max},
                    {"grid_size", o.spectrum.grid_size},
                    {"relative_precision", o.spectrum.relative_precision}}},
      {"projectors", {{"horizon", o.projector_horizon}}},
      {"solve", {{"side", side},
                 {"kappa", o.solve.kappa},
                 {"tolerance", o.solve.tolerance},
                 {"rhs", std::move(rhs)}}},
      {"certify", {{"manifold_dimension", manifold},
                   {"sample_reach", o.certify.sample_reach},
                   {"localize", o.localize},
                   {"refinements", o.localization.refinements},
                   {"localize_window", to_json(o.localization.window)},
                   {"localize_horizon", o.localization.horizon},
                   {"seed_ratio", o.localization.seed_ratio}}},
      {"realize", {{"window", to_json(o.realize_window)}}},
  };
  return o;
}

const std::map<std::string, const char*>& builtin_texts() {
  static const std::map<std::string, const char*> texts = {
      {"autonomous-diag", R"({
  "schema_version": 1,
  "name": "autonomous-diag",
  "loop": {"kind": "circle", "samples": 8},
  "field": {"kind": "builtin", "name": "diagonal", "params": {"entries": [0.5, 2.0]}},
  "options": {"window": [-40, 40]}
})"},
      {"switched-index", R"({
  "schema_version": 1,
  "name": "switched-index",
  "loop": {"kind": "circle", "samples": 8},
  "field": {"kind": "builtin", "name": "switched",
            "params": {"before": [[2.0, 0.0], [0.0, 3.0]],
                       "after": [[0.5, 0.0], [0.0, 0.25]], "switch_time": 0}},
  "options": {"window": [-40, 40]}
})"},
      {"mobius-realization", R"({
  "schema_version": 1,
  "name": "mobius-realization",
  "loop": {"kind": "circle", "samples": 16},
  "field": {"kind": "builtin", "name": "realization",
            "params": {"e": {"bundle": "mobius"},
                       "f": {"bundle": "trivial", "ambient": 2, "rank": 1},
                       "q": 0.5, "kappa_minus": -2, "kappa_plus": 2}},
  "options": {"window": [-40, 40]}
})"},
      {"trivial-realization", R"({
  "schema_version": 1,
  "name": "trivial-realization",
  "loop": {"kind": "circle", "samples": 16},
  "field": {"kind": "builtin", "name": "realization",
            "params": {"e": {"bundle": "trivial", "ambient": 3, "rank": 2},
                       "f": {"bundle": "trivial", "ambient": 3, "rank": 1},
                       "q": 0.5, "kappa_minus": -2, "kappa_plus": 2}},
  "options": {"window": [-40, 40]}
})"},
      {"mobius-sum", R"({
  "schema_version": 1,
  "name": "mobius-sum",
  "loop": {"kind": "circle", "samples": 16},
  "field": {"kind": "builtin", "name": "realization",
            "params": {"e": {"bundle": "sum",
                             "summands": [{"bundle": "mobius"}, {"bundle": "mobius"}]},
                       "f": {"bundle": "trivial", "ambient": 4, "rank": 2},
                       "q": 0.5, "kappa_minus": -2, "kappa_plus": 2}},
  "options": {"window": [-40, 40]}
})"},
      {"system2-mobius", R"({
  "schema_version": 1,
  "name": "system2-mobius",
  "loop": {"kind": "circle", "samples": 64},
  "field": {"kind": "builtin", "name": "system2-mobius"},
  "options": {"window": [-40, 40], "samples": [0, 16, 32, 48]}
})"},
  };
  return texts;
}

}  // namespace

Json parse_scenario_text(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // nlohmann reports "line L, column C" inside the message.
    throw InputError(std::string("scenario is not valid JSON: ") + e.what());
  }
}

Json read_scenario(const std::string& reference) {
  const std::string prefix = "builtin:";
  if (reference.rfind(prefix, 0) == 0) return builtin_scenario(reference.substr(prefix.size()));
  std::ifstream in(reference, std::ios::binary);
  if (!in) throw InputError("cannot read scenario file " + reference);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario_text(ss.str());
  } catch (const InputError& e) {
    throw InputError(reference + ": " + e.what());
  }
}

std::vector<std::string> builtin_scenario_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : builtin_texts()) names.push_back(k);
  return names;
}

Json builtin_scenario(const std::string& name) {
  const auto& t = builtin_texts();
  auto it = t.find(name);
  if (it == t.end()) {
    std::string known;
    for (const auto& [k, v] : t) known += (known.empty() ? "" : ", ") + k;
    throw InputError("unknown builtin scenario \"" + name + "\" (known: " + known + ")");
  }
  return Json::parse(it->second);
}

Scenario load_scenario(const Json& raw, std::optional<std::uint64_t> seed) {
  allow_keys(raw, "", {"schema_version", "name", "dimension", "loop", "field", "options", "seed"});
  const Json& version = require(raw, "schema_version", "");
  if (integer(version, "/schema_version") != schema_version) {
    bad("/schema_version", "unsupported version (this build reads " +
                               std::to_string(schema_version) + ")");
  }
  Scenario s;
  if (seed) {
    s.seed = *seed;
  } else if (const Json* p = find(raw, "seed")) {
    if (!p->is_number_unsigned() && !(p->is_number_integer() && p->get<long>() >= 0)) {
      bad("/seed", "expected a non-negative integer");
    }
    s.seed = p->get<std::uint64_t>();
  }
  const std::string name = find(raw, "name") ? text(raw["name"], "/name") : "";

  static const Json default_loop = Json::object();
  Json loop_echo;
  s.loop = parse_loop(find(raw, "loop") ? raw["loop"] : default_loop, "/loop", loop_echo);

  auto field = parse_field(require(raw, "field", ""), "/field", s.loop);
  s.linear = std::move(field.linear);
  s.nonlinear = std::move(field.nonlinear);
  s.dimension = s.linear->dimension();
  if (const Json* p = find(raw, "dimension")) {
    if (integer(*p, "/dimension") != s.dimension) {
      bad("/dimension", "field has dimension " + std::to_string(s.dimension));
    }
  }

  static const Json no_options = Json::object();
  Json options_echo;
  s.options = parse_options(find(raw, "options") ? raw["options"] : no_options, "/options", s,
                            options_echo);

  s.echo = Json{{"schema_version", schema_version}, {"name", name}, {"dimension", s.dimension},
                {"loop", loop_echo}, {"field", field.echo}, {"options", options_echo},
                {"seed", s.seed}};
  return s;
}

}  // namespace hombif::cli
