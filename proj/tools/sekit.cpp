// SPDX-License-Identifier: Apache-2.0
// sekit: run recipes, check them against oracles, sweep configuration grids.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 non-convergence or a
// partially failed sweep, 3 equivalence check failed.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "sekit/io.hpp"

namespace fs = std::filesystem;
using namespace sekit;
using io::Json;

namespace {

constexpr int kOk = 0, kConfigError = 1, kNonConvergence = 2, kCheckFailed = 3;

struct Common {
  std::string config;
  std::string recipe;
  std::string problem;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool timing = false;
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("SEKIT_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used == std::string(v).size()) return s;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::ConfigError, "SEKIT_SEED must be an unsigned integer");
}

/// Config file (if any) plus command-line flags, resolved into one document.
Json resolve(const Common& c) {
  Json file = Json::object();
  std::string base;
  if (!c.config.empty()) {
    file = io::read_json_file(c.config);
    base = fs::path(c.config).parent_path().string();
  }
  if (!c.recipe.empty()) file["recipe"] = c.recipe;
  if (!c.problem.empty()) file["problem"] = fs::absolute(c.problem).string();
  if (!file.contains("recipe")) throw Error(ErrorCode::ConfigError, "no recipe given (--recipe or config 'recipe')");
  Json doc = io::resolve_document(file, base, env_seed());
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorCode::ConfigError, "override '" + o + "' is not key=value");
    io::set_dotted(doc, o.substr(0, eq), io::parse_override_value(o.substr(eq + 1)));
  }
  if (c.seed) doc["seed"] = *c.seed;
  if (!c.out.empty()) doc["output"] = c.out;
  if (c.timing) doc["timing"] = true;
  return doc;
}

struct CellResult {
  std::string status = "ok";
  std::string message;
  std::size_t iterations = 0;
  std::optional<double> total, tv;
};

/// Executes one resolved run and writes its four output files.
CellResult execute(const Json& doc, const std::string& out_dir) {
  CellResult res;
  const io::RunSpec spec = io::parse_resolved(doc);
  const RecipeOutcome out = run_recipe(*spec.recipe, spec.problem, spec.config, spec.settings);
  fs::create_directories(out_dir);
  io::write_text_file(out_dir + "/trace.csv", io::trace_csv(out.trace, spec.timing));
  io::write_text_file(out_dir + "/trace.json", io::to_json(out.trace, spec.timing).dump(2) + "\n");
  Json model = io::to_json(out.model);
  if (out.disc) model["discriminator"] = io::to_json(*out.disc);
  io::write_text_file(out_dir + "/final_model.json", model.dump(2) + "\n");
  io::write_text_file(out_dir + "/resolved_config.json", io::resolved_json(spec).dump(2) + "\n");
  res.iterations = out.trace.records.size();
  if (!out.trace.records.empty()) {
    res.total = out.trace.records.back().total;
    res.tv = out.trace.records.back().tv_to_ref;
  }
  if (!out.trace.converged) {
    res.status = "nonconverged";
    for (const auto& d : out.trace.diagnostics) res.message += (res.message.empty() ? "" : "; ") + d;
  }
  return res;
}

int cmd_run(const Common& c) {
  Json doc = resolve(c);
  std::string out = doc["output"].get<std::string>();
  if (out.empty()) out = "sekit_out";
  doc["output"] = out;
  const CellResult res = execute(doc, out);
  if (res.status != "ok") {
    std::cerr << "sekit: " << res.message << "\n";
    return kNonConvergence;
  }
  return kOk;
}

int cmd_check(const Common& c, const std::string& oracle_name, double tol) {
  const Json doc = resolve(c);
  const io::RunSpec spec = io::parse_resolved(doc);
  const Oracle& oracle = find_oracle(oracle_name);
  const EquivalenceReport rep = check_equivalence(*spec.recipe, spec.config, spec.settings, oracle, spec.problem, tol);
  std::cout << io::to_json(rep).dump(2) << "\n";
  return rep.pass ? kOk : kCheckFailed;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

int cmd_sweep(const Common& c, unsigned jobs) {
  if (c.config.empty()) throw Error(ErrorCode::ConfigError, "sweep needs --config with a 'grid' section");
  const Json file = io::read_json_file(c.config);
  const Json doc = resolve(c);
  const auto grid_it = file.find("grid");
  if (grid_it == file.end() || !grid_it->is_object() || grid_it->empty())
    throw Error(ErrorCode::ConfigError, "grid: empty or missing");
  std::vector<std::pair<std::string, Json>> axes;
  for (auto it = grid_it->begin(); it != grid_it->end(); ++it) {
    if (!it->is_array() || it->empty()) throw Error(ErrorCode::ConfigError, "grid." + it.key() + ": expected a non-empty list");
    Json probe = doc;
    io::set_dotted(probe, it.key(), it->front());  // unknown keys fail the whole sweep
    axes.emplace_back(it.key(), *it);
  }
  std::size_t cells = 1;
  for (const auto& axis : axes) cells *= axis.second.size();

  std::string out = doc["output"].get<std::string>();
  if (out.empty()) out = "sekit_sweep";
  fs::create_directories(out);

  std::vector<std::vector<Json>> values(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    std::size_t rest = i;
    for (auto a = axes.rbegin(); a != axes.rend(); ++a) {
      values[i].insert(values[i].begin(), a->second[rest % a->second.size()]);
      rest /= a->second.size();
    }
  }
  auto cell_name = [](std::size_t i) {
    std::string s = std::to_string(i);
    return "cell_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
  };

  std::vector<CellResult> results(cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++) {
      try {
        Json cell = doc;
        for (std::size_t a = 0; a < axes.size(); ++a) io::set_dotted(cell, axes[a].first, values[i][a]);
        const std::string dir = out + "/" + cell_name(i);
        cell["output"] = dir;
        results[i] = execute(cell, dir);
      } catch (const std::exception& e) {
        results[i].status = "failed";
        results[i].message = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string summary = "cell";
  for (const auto& axis : axes) summary += "," + csv_field(axis.first);
  summary += ",status,iterations,final_total,final_tv_to_ref,message\n";
  bool partial = false;
  for (std::size_t i = 0; i < cells; ++i) {
    const CellResult& r = results[i];
    summary += cell_name(i);
    for (const auto& v : values[i]) summary += "," + csv_field(v.dump());
    summary += "," + r.status + "," + std::to_string(r.iterations) + "," + (r.total ? io::format_double(*r.total) : "") +
               "," + (r.tv ? io::format_double(*r.tv) : "") + "," + csv_field(r.message) + "\n";
    if (r.status != "ok") {
      partial = true;
      std::cerr << "sekit: " << cell_name(i) << ": " << r.message << "\n";
    }
  }
  io::write_text_file(out + "/summary.csv", summary);
  return partial ? kNonConvergence : kOk;
}

void add_common(CLI::App* sub, Common& c, bool with_output) {
  sub->add_option("--config", c.config, "JSON run configuration");
  sub->add_option("--recipe", c.recipe, "recipe name (overrides the config)");
  sub->add_option("--problem", c.problem, "problem bundle JSON (overrides the config)");
  sub->add_option("--seed", c.seed, "64-bit seed (falls back to the config, then SEKIT_SEED)");
  sub->add_option("--override", c.overrides, "key=value, dotted keys into the resolved config")->take_all();
  if (with_output) {
    sub->add_option("--out", c.out, "output directory");
    sub->add_flag("--timing", c.timing, "record wall-clock milliseconds in traces");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sekit: learning objectives from one equation, run as recipes"};
  app.require_subcommand(1);
  Common common;
  std::string oracle;
  double tol = 1e-10;
  unsigned jobs = 1;

  CLI::App* run = app.add_subcommand("run", "run a recipe and write its trace and final model");
  add_common(run, common, true);
  CLI::App* check = app.add_subcommand("check", "compare a recipe against an independent oracle");
  add_common(check, common, false);
  check->add_option("--oracle", oracle, "oracle name")->required();
  check->add_option("--tol", tol, "tolerance on the maximum deviation");
  CLI::App* sweep = app.add_subcommand("sweep", "run the cross product of a config's grid section");
  add_common(sweep, common, true);
  sweep->add_option("--jobs", jobs, "parallel cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(common);
    if (*check) return cmd_check(common, oracle, tol);
    if (*sweep) return cmd_sweep(common, jobs);
  } catch (const Error& e) {
    std::cerr << "sekit: " << e.what() << "\n";
    return e.code() == ErrorCode::NonConvergence ? kNonConvergence : kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "sekit: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}
