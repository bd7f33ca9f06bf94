// Command-line front end for the cisskip shared library. Loads a JSON run
// configuration, applies --set overrides, and dispatches to csk_run.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cisskip.h"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open config " << path << "\n";
    std::exit(kExitUsage);
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "error: config " << path << ": " << e.what() << "\n";
    std::exit(kExitFormat);
  }
}

// Applies one "dotted.key=value" override; the value is parsed as JSON when
// possible and treated as a string otherwise.
void apply_override(json& config, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    std::cerr << "error: --set expects key=value, got '" << assignment << "'\n";
    std::exit(kExitUsage);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings need no quotes
  }

  json* node = &config;
  size_t start = 0;
  for (;;) {
    size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) {
      std::cerr << "error: --set key '" << key << "' has an empty segment\n";
      std::exit(kExitUsage);
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cisskip — sensor-skipping simulator pipeline"};
  app.set_version_flag("--version", std::string(csk_version()));

  std::string config_path;
  if (const char* env = std::getenv("CISSKIP_CONFIG")) config_path = env;
  std::vector<std::string> overrides;

  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"gen", "Generate a synthetic annotated frame sequence"},
      {"train", "Train the mask generator and write weights + loss CSV"},
      {"mask", "Predict per-frame masks and write mIoU/skip metrics"},
      {"simulate", "Run the sensor readout over the dataset with stored masks"},
      {"energy", "Evaluate front-end energy from the readout ledgers"},
      {"sweep", "Sweep normalized energy over skip ratios and periods"},
      {"calibrate", "Fit energy coefficients to the reported reductions"},
  };
  for (const auto& [name, help] : verbs) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration (env CISSKIP_CONFIG)");
    sub->add_option("--set", overrides, "Override a config field, e.g. --set masking.period=24");
  }
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  json config = load_config(config_path);
  for (const std::string& assignment : overrides) apply_override(config, assignment);

  const std::string verb = app.get_subcommands().front()->get_name();
  const std::string config_text = config.dump();

  char* summary = nullptr;
  csk_status status = csk_run(verb.c_str(), config_text.c_str(), &summary);
  if (status == CSK_OK) {
    std::cout << summary << "\n";
    csk_string_free(summary);
    return 0;
  }
  std::cerr << "error: " << csk_last_error() << "\n";
  return static_cast<int>(status);
}
