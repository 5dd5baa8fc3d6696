#pragma once

// Runs the independent Python reference oracle (tests/oracle/pyref.py).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "json.hpp"

namespace eqrl::testing {

inline bool python_available() {
  static const bool ok = std::system("python3 -c 'import ast' >/dev/null 2>&1") == 0;
  return ok;
}

inline nlohmann::json run_pyref(const std::string& command, const nlohmann::json& request) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("eqrl_pyref_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path in = dir / "req.json", out = dir / "resp.json";
  std::ofstream(in) << request.dump();
  const std::string cmd = "python3 " EQRL_SOURCE_DIR "/tests/oracle/pyref.py " + command +
                          " < " + in.string() + " > " + out.string();
  if (std::system(cmd.c_str()) != 0) throw std::runtime_error("pyref failed: " + cmd);
  std::ifstream f(out);
  nlohmann::json j = nlohmann::json::parse(f);
  fs::remove_all(dir);
  return j;
}

}  // namespace eqrl::testing
