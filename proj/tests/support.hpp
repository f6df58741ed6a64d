#pragma once

#include <filesystem>
#include <string>

#include "ceg/io.hpp"

namespace ceg::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(CEG_DATA_DIR) / name;
}

inline ModelDocument load(const std::string& name) { return load_model(data_path(name)); }

inline Evidence evidence(const std::string& name) { return load_evidence(data_path(name)); }

}  // namespace ceg::test
