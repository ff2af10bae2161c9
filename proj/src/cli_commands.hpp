#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "shyp/stability.hpp"

namespace shyp::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum Status { kPass = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

// Config problem; `field` is a JSON pointer or "line:column" for parse errors.
struct SchemaError : Error {
  std::string field;
  SchemaError(std::string f, const std::string& what) : Error(f + ": " + what), field(std::move(f)) {}
};

/// Validated config with every default filled in.
struct Config {
  json settings;
  std::string out;
};

Config parse_config(const std::string& text);
Config materialize(const json& raw);
json defaults();

ActionSystem build_system(const json& node);

struct Artifact {
  std::string name;
  std::string content;
};

struct Outcome {
  int status = kPass;
  json report;
  std::vector<Artifact> artifacts;
};

const std::vector<std::string>& commands();
Outcome run(const std::string& command, const Config& cfg);
void write_outcome(const Outcome& o, const std::string& dir);

int main(int argc, char** argv);

}  // namespace shyp::cli
