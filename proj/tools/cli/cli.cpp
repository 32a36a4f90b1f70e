#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "driventop/parallel.hpp"
#include "driventop/spinops.hpp"
#include "experiments.hpp"

#ifndef DRIVENTOP_VERSION
#define DRIVENTOP_VERSION "unknown"
#endif

namespace driventop::cli {

namespace {

namespace fs = std::filesystem;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

double parse_number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

/// Converts a file or flag value to the type of the key's default.
json coerce(const std::string& key, const json& def, const json& value) {
  if (def.is_number_integer()) {
    if (value.is_number_integer()) return value.get<std::int64_t>();
    if (value.is_number_float()) {
      const double d = value.get<double>();
      if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    if (value.is_string()) {
      const double d = parse_number(key, value.get<std::string>());
      if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError(key + " must be an integer");
  }
  if (def.is_number()) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) return parse_number(key, value.get<std::string>());
    throw ConfigError(key + " must be a number");
  }
  if (def.is_string()) {
    if (value.is_string()) return value;
    throw ConfigError(key + " must be a string");
  }
  if (def.is_array()) {
    json out = json::array();
    if (value.is_array()) {
      for (const auto& v : value) {
        if (!v.is_number()) throw ConfigError(key + " must be a list of numbers");
        out.push_back(v.get<double>());
      }
      return out;
    }
    if (value.is_string()) {
      const std::string s = value.get<std::string>();
      std::size_t start = 0;
      while (start <= s.size() && !s.empty()) {
        const std::size_t end = std::min(s.find(',', start), s.size());
        out.push_back(parse_number(key, s.substr(start, end - start)));
        start = end + 1;
      }
      return out;
    }
    throw ConfigError(key + " must be a list of numbers");
  }
  throw std::logic_error("unsupported default type for " + key);
}

struct FileConfig {
  std::optional<std::string> experiment;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> workers;
  std::optional<std::string> output;
  json parameters = json::object();
};

FileConfig read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  FileConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "experiment" && v.is_string()) {
      c.experiment = v.get<std::string>();
    } else if (k == "seed" && v.is_number_integer()) {
      c.seed = v.get<std::int64_t>();
    } else if (k == "workers" && v.is_number_integer()) {
      c.workers = v.get<std::int64_t>();
    } else if (k == "output" && v.is_string()) {
      c.output = v.get<std::string>();
    } else if (k == "parameters" && v.is_object()) {
      c.parameters = v;
    } else {
      throw ConfigError("config file: unexpected or mistyped key '" + k + "'");
    }
  }
  return c;
}

struct Invocation {
  const Experiment* experiment = nullptr;
  std::map<std::string, std::string> flags;  // parameter key -> flag text
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> workers;
  std::optional<std::string> output;
  bool dry_run = false;
};

json manifest_for(const Experiment& e, const json& params, const json& explicit_keys, std::uint64_t seed, int workers,
                  const std::string& output, const std::string& config_path, const ExperimentResult& r,
                  double wall_time) {
  json files = json::array();
  for (const auto& t : r.tables) {
    files.push_back({{"path", t.path}, {"schema", t.schema}, {"columns", t.table.columns()}, {"rows", t.table.rows()}});
  }
  for (const auto& d : r.documents) files.push_back({{"path", d.path}, {"schema", d.schema}});
  json defaulted = json::array();
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (!explicit_keys.contains(it.key())) defaulted.push_back(it.key());
  }
  return {{"schema_version", kSchemaVersion},
          {"artifact", {{"name", "driventop"}, {"version", DRIVENTOP_VERSION}}},
          {"experiment", e.name},
          {"config",
           {{"seed", seed},
            {"workers", workers},
            {"output", output},
            {"config_file", config_path.empty() ? json(nullptr) : json(config_path)},
            {"parameters", params}}},
          {"defaulted_parameters", defaulted},
          {"tolerances", r.tolerances},
          {"derived", r.derived},
          {"files", files},
          {"wall_time_s", wall_time}};
}

int execute(const Invocation& inv, std::ostream& out, std::ostream& err) {
  FileConfig file;
  if (!inv.config_path.empty()) file = read_config(inv.config_path);
  if (file.experiment && *file.experiment != inv.experiment->name) {
    throw ConfigError("config file is for '" + *file.experiment + "', not '" + inv.experiment->name + "'");
  }
  const Experiment& e = *inv.experiment;

  json params = e.defaults;
  json explicit_keys = json::object();
  for (auto it = file.parameters.begin(); it != file.parameters.end(); ++it) {
    if (!e.defaults.contains(it.key())) throw ConfigError("unknown parameter '" + it.key() + "' for " + e.name);
    params[it.key()] = coerce(it.key(), e.defaults[it.key()], it.value());
    explicit_keys[it.key()] = true;
  }
  for (const auto& [key, text] : inv.flags) {
    params[key] = coerce(key, e.defaults[key], json(text));
    explicit_keys[key] = true;
  }

  const std::int64_t seed = inv.seed ? *inv.seed : file.seed.value_or(0);
  if (seed < 0) throw ConfigError("seed must be >= 0");
  const std::int64_t workers = inv.workers ? *inv.workers : file.workers.value_or(default_workers());
  if (workers < 1) throw ConfigError("workers must be >= 1");
  const std::string output = inv.output ? *inv.output : file.output.value_or("driventop-out");

  if (inv.dry_run) {
    out << json{{"experiment", e.name}, {"seed", seed}, {"workers", workers}, {"output", output}, {"parameters", params}}
               .dump(2)
        << "\n";
    return kExitOk;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const RunContext ctx{Params(params), static_cast<std::uint64_t>(seed), static_cast<int>(workers)};
  const ExperimentResult r = e.run(ctx);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir(output);
  for (const auto& t : r.tables) write_atomic(dir / t.path, t.table.str());
  for (const auto& d : r.documents) write_atomic(dir / d.path, d.content);
  const json manifest = manifest_for(e, params, explicit_keys, static_cast<std::uint64_t>(seed), static_cast<int>(workers),
                                     output, inv.config_path, r, wall);
  const fs::path manifest_path = dir / (e.name + ".manifest.json");
  write_atomic(manifest_path, manifest.dump(2) + "\n");
  err << e.name << ": wrote " << r.tables.size() + r.documents.size() << " file(s) and " << manifest_path.string()
      << " in " << wall << " s\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Classical and quantum driven-top simulations of donor nuclear spins", "driventop"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(DRIVENTOP_VERSION));

  Invocation inv;
  std::string config_path;
  std::int64_t seed = 0, workers = 0;
  std::string output;
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (default 0)");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (default: DRIVENTOP_WORKERS or all cores)");
  auto* output_opt = app.add_option("--output,-o", output, "output directory (default driventop-out)");
  app.add_option("--config,-c", config_path, "JSON config file; flags override its keys");
  app.add_flag("--dry-run", inv.dry_run, "print the resolved configuration and exit");

  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::vector<std::pair<CLI::App*, const Experiment*>> subs;
  for (const auto& e : experiments()) {
    CLI::App* sub = app.add_subcommand(e.name, e.summary);
    auto& values = flag_values[e.name];
    for (auto it = e.defaults.begin(); it != e.defaults.end(); ++it) {
      const std::string key = it.key();
      std::string names = "--" + dashed(key);
      if (dashed(key) != key) names += ",--" + key;
      sub->add_option(names, values[key], "default: " + it.value().dump());
    }
    subs.emplace_back(sub, &e);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << (args.empty() ? app.help() : "");
    const auto* ver = app.get_option_no_throw("--version");
    if (ver != nullptr && ver->count() > 0) {
      out << DRIVENTOP_VERSION << "\n";
      return kExitOk;
    }
    // --help on the app or a subcommand.
    for (const auto& [sub, e] : subs) {
      if (sub->parsed()) {
        out << sub->help();
        return kExitOk;
      }
    }
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  for (const auto& [sub, e] : subs) {
    if (!sub->parsed()) continue;
    inv.experiment = e;
    for (const auto& [key, text] : flag_values[e->name]) {
      if (sub->get_option("--" + dashed(key))->count() > 0) inv.flags[key] = text;
    }
  }
  inv.config_path = config_path;
  if (seed_opt->count() > 0) inv.seed = seed;
  if (workers_opt->count() > 0) inv.workers = workers;
  if (output_opt->count() > 0) inv.output = output;

  try {
    return execute(inv, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace driventop::cli
