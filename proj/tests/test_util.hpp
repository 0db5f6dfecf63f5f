#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifndef WS_BUILD_CORPUS_DIR
#define WS_BUILD_CORPUS_DIR "corpus"
#endif

namespace testutil {

/// Directory holding the assembled fixture corpus (manifest.json + .wasm).
inline std::string corpus_dir() {
  if (const char* env = std::getenv("WASM_SHADE_CORPUS")) return env;
  return WS_BUILD_CORPUS_DIR;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace testutil
