// Experiment registry: each experiment declares its parameters with defaults
// (which double as the schema for config files and flags) and a runner that
// turns validated parameters into CSV tables.
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "output.hpp"

namespace driventop::cli {

using nlohmann::json;

/// Invalid configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Params {
 public:
  explicit Params(json values) : values_(std::move(values)) {}

  double num(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::string str(const std::string& key) const;
  std::vector<double> vec(const std::string& key) const;
  const json& raw() const { return values_; }

 private:
  const json& at(const std::string& key) const;
  json values_;
};

struct OutputFile {
  std::string path;    // relative to the output directory
  std::string schema;  // "<name>/<schema_version>"
  CsvTable table;
};

/// Non-CSV artifact, e.g. the pulse-sequence JSON.
struct OutputDocument {
  std::string path;
  std::string schema;
  std::string content;
};

struct ExperimentResult {
  std::vector<OutputFile> tables;
  std::vector<OutputDocument> documents;
  json derived = json::object();
  json tolerances = json::object();
};

struct RunContext {
  Params params;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct Experiment {
  std::string name;
  std::string summary;
  json defaults;  // key -> default value; the type of the default fixes the key's type
  std::function<ExperimentResult(const RunContext&)> run;
};

const std::vector<Experiment>& experiments();
const Experiment* find_experiment(const std::string& name);

}  // namespace driventop::cli
