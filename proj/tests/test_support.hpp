#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace grit::testing {

inline std::string data_path(const std::string& relative) {
  return std::string(GRIT_TEST_DATA_DIR) + "/" + relative;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing test fixture " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string zebra_trace() { return read_file(data_path("data/zebra_trace.txt")); }

}  // namespace grit::testing
