// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON and CSV serialization for run configurations, problem bundles, traces
// and models. Every reader is strict: keys it does not know are rejected with
// their full path.
//
// Non-finite doubles are written as the strings "inf", "-inf" and "nan".

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sekit/recipes.hpp"

namespace sekit::io {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scalars

inline Json encode(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline Json encode(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(encode(x));
  return a;
}

[[noreturn]] inline void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigError, (path.empty() ? std::string("config") : path) + ": " + what);
}

inline double decode_double(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return kNegInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  config_error(path, "expected a number");
}

inline std::int64_t decode_int(const Json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
  }
  config_error(path, "expected an integer");
}

inline std::size_t decode_size(const Json& j, const std::string& path) {
  const auto v = decode_int(j, path);
  if (v < 0) config_error(path, "expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

inline bool decode_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) config_error(path, "expected true or false");
  return j.get<bool>();
}

inline std::string decode_string(const Json& j, const std::string& path) {
  if (!j.is_string()) config_error(path, "expected a string");
  return j.get<std::string>();
}

/// Numbers from an arbitrarily nested array, in row-major order.
inline void flatten_into(const Json& j, const std::string& path, Vec& out) {
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten_into(j[i], path + "[" + std::to_string(i) + "]", out);
    return;
  }
  out.push_back(decode_double(j, path));
}

inline Vec decode_vec(const Json& j, const std::string& path) {
  if (!j.is_array()) config_error(path, "expected an array of numbers");
  Vec out;
  flatten_into(j, path, out);
  return out;
}

inline std::vector<std::size_t> decode_sizes(const Json& j, const std::string& path) {
  if (!j.is_array()) config_error(path, "expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(decode_size(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// ---------------------------------------------------------------------------
// Strict object reader

/// Hands out members of a JSON object and, on finish(), rejects any member
/// that was never asked for.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_, "expected an object");
  }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T, class Fn>
  void read(const std::string& key, T& target, Fn decode) {
    if (const Json* v = get(key)) target = decode(*v, path(key));
  }

  void number(const std::string& key, double& t) { read(key, t, decode_double); }
  void integer(const std::string& key, int& t) {
    read(key, t, [](const Json& j, const std::string& p) { return static_cast<int>(decode_int(j, p)); });
  }
  void size(const std::string& key, std::size_t& t) { read(key, t, decode_size); }
  void boolean(const std::string& key, bool& t) { read(key, t, decode_bool); }
  void string(const std::string& key, std::string& t) { read(key, t, decode_string); }
  void vec(const std::string& key, Vec& t) { read(key, t, decode_vec); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) config_error(path(it.key()), "unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Enumerations

template <class E>
E decode_enum(const Json& j, const std::string& path, const std::vector<std::pair<std::string, E>>& names) {
  const std::string s = decode_string(j, path);
  for (const auto& [name, value] : names)
    if (name == s) return value;
  std::string known;
  for (const auto& [name, value] : names) known += (known.empty() ? "" : ", ") + name;
  config_error(path, "unknown value '" + s + "' (expected one of " + known + ")");
}

inline const std::vector<std::pair<std::string, DivergenceFn::Kind>>& divergence_names() {
  static const std::vector<std::pair<std::string, DivergenceFn::Kind>> n{{"cross_entropy", DivergenceFn::Kind::CrossEntropy},
                                                                         {"kl", DivergenceFn::Kind::KL},
                                                                         {"js", DivergenceFn::Kind::JS},
                                                                         {"w1", DivergenceFn::Kind::W1}};
  return n;
}

inline const std::vector<std::pair<std::string, TeacherMode>>& teacher_names() {
  static const std::vector<std::pair<std::string, TeacherMode>> n{{"closed_form", TeacherMode::ClosedForm},
                                                                  {"conditional", TeacherMode::Conditional},
                                                                  {"mirror_descent", TeacherMode::MirrorDescent},
                                                                  {"mean_field", TeacherMode::MeanField},
                                                                  {"sleep_phase", TeacherMode::SleepPhase}};
  return n;
}

inline const std::vector<std::pair<std::string, StudentMode>>& student_names() {
  static const std::vector<std::pair<std::string, StudentMode>> n{{"exact", StudentMode::Exact},
                                                                  {"gradient", StudentMode::Gradient},
                                                                  {"importance_sampling", StudentMode::ImportanceSampling}};
  return n;
}

inline const std::vector<std::pair<std::string, GeneratorLoss>>& generator_loss_names() {
  static const std::vector<std::pair<std::string, GeneratorLoss>> n{{"minimax", GeneratorLoss::Minimax},
                                                                    {"non_saturating", GeneratorLoss::NonSaturating}};
  return n;
}

template <class E>
std::string enum_name(E value, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [name, v] : names)
    if (v == value) return name;
  return "unknown";
}

// ---------------------------------------------------------------------------
// SEConfig and RecipeSettings

inline Json to_json(const SEConfig& c) {
  Json j;
  j["alpha"] = encode(c.alpha);
  j["beta"] = encode(c.beta);
  j["divergence"] = enum_name(c.divergence.kind, divergence_names());
  j["coords"] = encode(c.divergence.coords);
  j["uncertainty"] = c.uncertainty.kind == UncertaintyFn::Kind::Shannon ? "shannon" : "tsallis";
  j["tsallis_index"] = encode(c.uncertainty.index);
  j["teacher"] = enum_name(c.teacher, teacher_names());
  j["student"] = enum_name(c.student, student_names());
  j["teacher_steps"] = c.teacher_steps;
  j["teacher_step_size"] = encode(c.teacher_step_size);
  j["teacher_tol"] = encode(c.teacher_tol);
  j["factor_x"] = c.factor_x;
  j["factor_y"] = c.factor_y;
  j["mean_field_sweeps"] = c.mean_field_sweeps;
  j["sleep_steps"] = c.sleep_steps;
  j["sleep_step_size"] = encode(c.sleep_step_size);
  j["student_steps"] = c.student_steps;
  j["student_step_size"] = encode(c.student_step_size);
  j["differentiate_experience"] = c.differentiate_experience;
  j["is_samples"] = c.is_samples;
  j["stopping"] = {{"max_iters", c.stopping.max_iters}, {"tol", encode(c.stopping.tol)},
                   {"patience", c.stopping.patience}};
  j["label"] = c.label;
  return j;
}

/// Applies the members present in j on top of c.
inline void apply_json(const Json& j, SEConfig& c, const std::string& path = "se") {
  Reader r(j, path);
  r.number("alpha", c.alpha);
  r.number("beta", c.beta);
  r.read("divergence", c.divergence.kind,
         [](const Json& v, const std::string& p) { return decode_enum(v, p, divergence_names()); });
  r.vec("coords", c.divergence.coords);
  bool tsallis = c.uncertainty.kind == UncertaintyFn::Kind::Tsallis;
  r.read("uncertainty", tsallis, [](const Json& v, const std::string& p) {
    return decode_enum<bool>(v, p, {{"shannon", false}, {"tsallis", true}});
  });
  r.number("tsallis_index", c.uncertainty.index);
  c.uncertainty.kind = tsallis ? UncertaintyFn::Kind::Tsallis : UncertaintyFn::Kind::Shannon;
  if (tsallis) c.uncertainty = UncertaintyFn::tsallis(c.uncertainty.index);
  r.read("teacher", c.teacher, [](const Json& v, const std::string& p) { return decode_enum(v, p, teacher_names()); });
  r.read("student", c.student, [](const Json& v, const std::string& p) { return decode_enum(v, p, student_names()); });
  r.integer("teacher_steps", c.teacher_steps);
  r.number("teacher_step_size", c.teacher_step_size);
  r.number("teacher_tol", c.teacher_tol);
  r.size("factor_x", c.factor_x);
  r.size("factor_y", c.factor_y);
  r.integer("mean_field_sweeps", c.mean_field_sweeps);
  r.integer("sleep_steps", c.sleep_steps);
  r.number("sleep_step_size", c.sleep_step_size);
  r.integer("student_steps", c.student_steps);
  r.number("student_step_size", c.student_step_size);
  r.boolean("differentiate_experience", c.differentiate_experience);
  r.integer("is_samples", c.is_samples);
  if (const Json* s = r.get("stopping")) {
    Reader sr(*s, r.path("stopping"));
    sr.integer("max_iters", c.stopping.max_iters);
    sr.number("tol", c.stopping.tol);
    sr.integer("patience", c.stopping.patience);
    sr.finish();
  }
  r.string("label", c.label);
  r.finish();
}

inline Json to_json(const RecipeSettings& s) {
  Json j;
  j["disc_steps"] = s.disc_steps;
  j["disc_step_size"] = encode(s.disc_step_size);
  j["gen_step_size"] = encode(s.gen_step_size);
  j["generator_loss"] = enum_name(s.generator_loss, generator_loss_names());
  j["lipschitz"] = encode(s.lipschitz);
  j["rule_weight"] = encode(s.rule_weight);
  j["active_lambda"] = encode(s.active_lambda);
  j["normalize_informativeness"] = s.normalize_informativeness;
  j["reward_offset"] = encode(s.reward_offset);
  j["segments"] = s.segments;
  j["init_scale"] = encode(s.init_scale);
  return j;
}

inline void apply_json(const Json& j, RecipeSettings& s, const std::string& path = "settings") {
  Reader r(j, path);
  r.integer("disc_steps", s.disc_steps);
  r.number("disc_step_size", s.disc_step_size);
  r.number("gen_step_size", s.gen_step_size);
  r.read("generator_loss", s.generator_loss,
         [](const Json& v, const std::string& p) { return decode_enum(v, p, generator_loss_names()); });
  r.number("lipschitz", s.lipschitz);
  r.number("rule_weight", s.rule_weight);
  r.number("active_lambda", s.active_lambda);
  r.boolean("normalize_informativeness", s.normalize_informativeness);
  r.number("reward_offset", s.reward_offset);
  r.read("segments", s.segments, [](const Json& v, const std::string& p) {
    std::vector<int> out;
    for (std::size_t len : decode_sizes(v, p)) out.push_back(static_cast<int>(len));
    return out;
  });
  r.number("init_scale", s.init_scale);
  r.finish();
}

// ---------------------------------------------------------------------------
// Problem bundles

inline Dataset decode_dataset(const Json& j, const std::string& path) {
  Reader r(j, path);
  std::size_t size = 0;
  r.size("size", size);
  const Json* counts = r.get("counts");
  const Json* obs = r.get("observations");
  r.finish();
  if (size == 0) config_error(r.path("size"), "dataset needs a positive domain size");
  if ((counts == nullptr) == (obs == nullptr)) config_error(path, "give exactly one of 'counts' or 'observations'");
  if (counts) return Dataset(size, decode_sizes(*counts, r.path("counts")));
  const auto o = decode_sizes(*obs, r.path("observations"));
  return Dataset::from_observations(size, o);
}

inline Dist decode_dist(const Json& j, const std::string& path) { return Dist::from_probs(decode_vec(j, path)); }

inline TabularMDP decode_mdp(const Json& j, const std::string& path) {
  Reader r(j, path);
  TabularMDP m;
  r.size("states", m.states);
  r.size("actions", m.actions);
  r.vec("transition", m.transition);
  r.vec("reward", m.reward);
  r.number("gamma", m.gamma);
  if (const Json* p0 = r.get("p0")) m.p0 = decode_dist(*p0, r.path("p0"));
  else if (m.states > 0) m.p0 = Dist::uniform(m.states);
  r.finish();
  m.validate();
  return m;
}

/// ["atom", name] (values from the atoms table) or ["atom", name, [values]],
/// ["and", a, b], ["or", a, b], ["avg", a, ...], ["not", a], ["implies", a, b].
inline SoftLogicExpr decode_rule(const Json& j, const std::string& path, const std::map<std::string, Vec>& atoms) {
  if (!j.is_array() || j.empty() || !j[0].is_string()) config_error(path, "a rule is a nested array headed by an operator");
  const std::string op = j[0].get<std::string>();
  auto child = [&](std::size_t i) { return decode_rule(j[i], path + "[" + std::to_string(i) + "]", atoms); };
  auto arity = [&](std::size_t n) {
    if (j.size() != n + 1) config_error(path, "'" + op + "' takes " + std::to_string(n) + " operand(s)");
  };
  if (op == "atom") {
    if (j.size() < 2 || !j[1].is_string()) config_error(path, "atom needs a name");
    const std::string name = j[1].get<std::string>();
    if (j.size() == 3) return SoftLogicExpr::atom(name, decode_vec(j[2], path + "[2]"));
    arity(1);
    const auto it = atoms.find(name);
    if (it == atoms.end()) config_error(path, "atom '" + name + "' has no values in 'atoms'");
    return SoftLogicExpr::atom(name, it->second);
  }
  if (op == "and") return arity(2), SoftLogicExpr::strong_and(child(1), child(2));
  if (op == "or") return arity(2), SoftLogicExpr::lor(child(1), child(2));
  if (op == "implies") return arity(2), SoftLogicExpr::implies(child(1), child(2));
  if (op == "not") return arity(1), SoftLogicExpr::lnot(child(1));
  if (op == "avg") {
    if (j.size() < 2) config_error(path, "'avg' needs at least one operand");
    std::vector<SoftLogicExpr> xs;
    for (std::size_t i = 1; i < j.size(); ++i) xs.push_back(child(i));
    return SoftLogicExpr::avg(std::move(xs));
  }
  config_error(path, "unknown rule operator '" + op + "'");
}

inline ConditionalSoftmaxModel decode_source(const Json& j, const std::string& path) {
  Reader r(j, path);
  std::size_t nx = 0, ny = 0;
  r.size("nx", nx);
  r.size("ny", ny);
  const Json* probs = r.get("probs");
  const Json* logits = r.get("logits");
  r.finish();
  if ((probs == nullptr) == (logits == nullptr)) config_error(path, "give exactly one of 'probs' or 'logits'");
  if (probs) return ConditionalSoftmaxModel::from_probs(nx, ny, decode_vec(*probs, r.path("probs")));
  Vec theta = decode_vec(*logits, r.path("logits"));
  require(theta.size() == nx * ny, ErrorCode::ConfigError, r.path("logits") + ": expected nx * ny values");
  return {nx, ny, std::move(theta)};
}

inline Problem decode_problem(const Json& j, const std::string& path = "problem") {
  Reader r(j, path);
  Problem pb;
  r.string("name", pb.name);
  r.size("nx", pb.nx);
  r.size("ny", pb.ny);
  if (const Json* d = r.get("data")) pb.data = decode_dataset(*d, r.path("data"));
  r.vec("weights", pb.weights);
  r.vec("kernel", pb.kernel);
  r.size("latent", pb.latent);
  if (const Json* m = r.get("mdp")) pb.mdp = decode_mdp(*m, r.path("mdp"));
  r.vec("intrinsic", pb.intrinsic);
  std::map<std::string, Vec> atoms;
  if (const Json* a = r.get("atoms")) {
    if (!a->is_object()) config_error(r.path("atoms"), "expected an object of named value arrays");
    for (auto it = a->begin(); it != a->end(); ++it)
      atoms[it.key()] = decode_vec(it.value(), r.path("atoms") + "." + it.key());
  }
  if (const Json* rule = r.get("rule")) pb.rule = decode_rule(*rule, r.path("rule"), atoms);
  if (const Json* s = r.get("source")) pb.source = decode_source(*s, r.path("source"));
  if (const Json* p = r.get("pool")) pb.pool = decode_dataset(*p, r.path("pool"));
  if (const Json* l = r.get("labels")) pb.labels = decode_sizes(*l, r.path("labels"));
  r.vec("informativeness", pb.informativeness);
  if (const Json* rw = r.get("rewards")) {
    if (!rw->is_array()) config_error(r.path("rewards"), "expected one reward array per round");
    for (std::size_t i = 0; i < rw->size(); ++i)
      pb.rewards.push_back(decode_vec((*rw)[i], r.path("rewards") + "[" + std::to_string(i) + "]"));
  }
  if (const Json* p = r.get("p_data")) pb.p_data = decode_dist(*p, r.path("p_data"));
  r.vec("coords", pb.coords);
  if (const Json* i = r.get("init")) pb.init = decode_vec(*i, r.path("init"));
  if (const Json* ref = r.get("reference")) pb.reference = decode_dist(*ref, r.path("reference"));
  r.finish();
  return pb;
}

// ---------------------------------------------------------------------------
// Files

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Traces and models

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Columns iter, neg_alpha_H, beta_D, neg_Eqf, total, tv_to_ref, ms. ms is
/// written as 0 unless timing is requested, so traces stay reproducible.
inline std::string trace_csv(const Trace& t, bool timing = false) {
  std::ostringstream out;
  out << "iter,neg_alpha_H,beta_D,neg_Eqf,total,tv_to_ref,ms\n";
  for (const auto& r : t.records) {
    out << r.iter << ',' << format_double(r.neg_alpha_H) << ',' << format_double(r.beta_D) << ','
        << format_double(r.neg_Eqf) << ',' << format_double(r.total) << ','
        << (r.tv_to_ref ? format_double(*r.tv_to_ref) : std::string()) << ','
        << (timing ? format_double(r.ms) : std::string("0")) << '\n';
  }
  return out.str();
}

inline Json to_json(const Trace& t, bool timing = false) {
  Json records = Json::array();
  for (const auto& r : t.records) {
    Json rec{{"iter", r.iter},
             {"segment", r.segment},
             {"neg_alpha_H", encode(r.neg_alpha_H)},
             {"beta_D", encode(r.beta_D)},
             {"neg_Eqf", encode(r.neg_Eqf)},
             {"total", encode(r.total)},
             {"tv_to_ref", r.tv_to_ref ? encode(*r.tv_to_ref) : Json(nullptr)},
             {"ms", timing ? r.ms : 0.0},
             {"q", encode(r.q)},
             {"theta", encode(r.theta)}};
    Json extras = Json::object();
    for (const auto& [k, v] : r.extras) extras[k] = encode(v);
    rec["extras"] = extras;
    records.push_back(std::move(rec));
  }
  return {{"converged", t.converged}, {"stop_reason", t.stop_reason}, {"diagnostics", t.diagnostics}, {"records", records}};
}

inline Json to_json(const Model& m) {
  Json j;
  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, SoftmaxModel>) {
          j["kind"] = "softmax";
        } else if constexpr (std::is_same_v<T, JointConditionalModel>) {
          j["kind"] = "joint_conditional";
          j["nx"] = model.policy.nx;
          j["ny"] = model.policy.ny;
          j["x_marginal"] = encode(model.x_marginal.probs());
          j["conditional"] = encode(model.policy.table());
        } else {
          j["kind"] = "mixture";
          j["components"] = model.k;
          j["nx"] = model.nx;
          j["weights"] = encode(model.weights().probs());
          Vec em;
          for (std::size_t y = 0; y < model.k; ++y) {
            const Vec c = model.component(y).probs();
            em.insert(em.end(), c.begin(), c.end());
          }
          j["emissions"] = encode(em);
        }
      },
      m);
  j["theta"] = encode(params(m));
  j["probs"] = encode(joint(m).probs());
  return j;
}

inline Json to_json(const Discriminator& d) {
  return {{"mode", d.mode == Discriminator::Mode::Classifier ? "classifier" : "critic"},
          {"lipschitz", encode(d.lipschitz)},
          {"phi", encode(d.phi)},
          {"values", encode(d.values())}};
}

inline Json to_json(const EquivalenceReport& r) {
  Json details = Json::object();
  for (const auto& [k, v] : r.details) details[k] = encode(v);
  return {{"recipe", r.recipe},
          {"oracle", r.oracle},
          {"contract", to_string(r.contract)},
          {"pass", r.pass},
          {"max_deviation", encode(r.max_deviation)},
          {"tolerance", encode(r.tolerance)},
          {"compared", r.compared},
          {"details", details}};
}

// ---------------------------------------------------------------------------
// Run configurations

/// A fully resolved run: everything needed to reproduce it.
struct RunSpec {
  const Recipe* recipe = nullptr;
  SEConfig config;
  RecipeSettings settings;
  Problem problem;
  Json problem_json;
  std::string output;
  bool timing = false;
};

/// Parses an override value: JSON if it parses, otherwise a bare string.
inline Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return text;
  }
}

/// Sets a dotted key inside a resolved document. A bare key that is not a
/// top-level member is looked up in "se", then in "settings". The key must
/// already exist, which keeps overrides as strict as the file schema.
inline void set_dotted(Json& doc, const std::string& key, const Json& value) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.empty()) config_error("overrides", "empty override key");
  if (parts.size() == 1 && !doc.contains(parts[0])) {
    for (const char* section : {"se", "settings"})
      if (doc.contains(section) && doc[section].contains(parts[0])) {
        parts.insert(parts.begin(), section);
        break;
      }
  }
  Json* node = &doc;
  for (const auto& p : parts) {
    if (!node->is_object() || !node->contains(p)) config_error("overrides", "unknown key '" + key + "'");
    node = &(*node)[p];
  }
  *node = value;
}

/// Recipe defaults, then the file's "se" and "settings" blocks, into one
/// resolved document with the problem inlined.
inline Json resolve_document(const Json& file, const std::string& base_dir, std::optional<std::uint64_t> seed_fallback) {
  Reader r(file, "");
  std::string recipe_name;
  r.string("recipe", recipe_name);
  if (recipe_name.empty()) config_error("recipe", "missing recipe name");
  const Recipe& recipe = find_recipe(recipe_name);
  SEConfig cfg = recipe.config;
  RecipeSettings settings = recipe.settings;
  if (const Json* se = r.get("se")) apply_json(*se, cfg);
  if (const Json* s = r.get("settings")) apply_json(*s, settings);
  Json problem;
  if (const Json* p = r.get("problem")) {
    if (p->is_string()) {
      std::string path = p->get<std::string>();
      if (!path.empty() && path[0] != '/' && !base_dir.empty()) path = base_dir + "/" + path;
      problem = read_json_file(path);
    } else if (p->is_object()) {
      problem = *p;
    } else {
      config_error("problem", "expected a file path or an inline object");
    }
  } else {
    config_error("problem", "missing problem bundle");
  }
  std::uint64_t seed = seed_fallback.value_or(0);
  if (const Json* s = r.get("seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0))
      config_error("seed", "expected a non-negative integer");
    seed = s->get<std::uint64_t>();
  }
  std::string output;
  r.string("output", output);
  bool timing = false;
  r.boolean("timing", timing);
  const Json* overrides = r.get("overrides");
  r.get("grid");  // consumed by sweeps
  r.finish();

  Json doc{{"recipe", recipe.name}, {"seed", seed},          {"output", output}, {"timing", timing},
           {"se", to_json(cfg)},    {"settings", to_json(settings)}, {"problem", problem}};
  if (overrides) {
    if (!overrides->is_object()) config_error("overrides", "expected an object of dotted keys");
    for (auto it = overrides->begin(); it != overrides->end(); ++it) set_dotted(doc, it.key(), it.value());
  }
  return doc;
}

/// Builds a RunSpec from a resolved document (the shape written to
/// resolved_config.json).
inline RunSpec parse_resolved(const Json& doc) {
  Reader r(doc, "");
  RunSpec spec;
  std::string recipe_name;
  r.string("recipe", recipe_name);
  spec.recipe = &find_recipe(recipe_name);
  spec.config = spec.recipe->config;
  spec.settings = spec.recipe->settings;
  if (const Json* se = r.get("se")) apply_json(*se, spec.config);
  if (const Json* s = r.get("settings")) apply_json(*s, spec.settings);
  if (const Json* s = r.get("seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0))
      config_error("seed", "expected a non-negative integer");
    spec.config.seed = s->get<std::uint64_t>();
  }
  r.string("output", spec.output);
  r.boolean("timing", spec.timing);
  const Json* p = r.get("problem");
  if (!p) config_error("problem", "missing problem bundle");
  spec.problem_json = *p;
  spec.problem = decode_problem(*p);
  r.finish();
  return spec;
}

inline Json resolved_json(const RunSpec& spec) {
  return {{"recipe", spec.recipe->name}, {"seed", spec.config.seed}, {"output", spec.output},
          {"timing", spec.timing},       {"se", to_json(spec.config)}, {"settings", to_json(spec.settings)},
          {"problem", spec.problem_json}};
}

}  // namespace sekit::io
