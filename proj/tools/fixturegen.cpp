// Assembles every corpus/*.watl into <outdir>/<name>.wasm and writes a
// manifest.json describing the corpus. Runs at build time.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "watl/watl.hpp"

namespace fs = std::filesystem;

namespace {

uint64_t fnv1a64(const std::vector<uint8_t>& data) {
  uint64_t h = 14695981039346656037ull;
  for (uint8_t b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: fixturegen <watl-dir> <out-dir>\n";
    return 2;
  }
  fs::path srcdir = argv[1], outdir = argv[2];
  fs::create_directories(outdir);

  std::vector<fs::path> sources;
  for (const auto& e : fs::directory_iterator(srcdir))
    if (e.path().extension() == ".watl") sources.push_back(e.path());
  std::sort(sources.begin(), sources.end());
  if (sources.empty()) {
    std::cerr << "fixturegen: no .watl files in " << srcdir << "\n";
    return 2;
  }

  nlohmann::ordered_json manifest;
  manifest["modules"] = nlohmann::ordered_json::array();
  int failures = 0;
  for (const auto& src : sources) {
    std::ifstream in(src);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    try {
      watl::Assembled a = watl::assemble(text);
      std::string base = src.stem().string();
      fs::path out = outdir / (base + ".wasm");
      std::ofstream os(out, std::ios::binary);
      os.write(reinterpret_cast<const char*>(a.bytes.data()),
               static_cast<std::streamsize>(a.bytes.size()));
      nlohmann::ordered_json entry;
      entry["name"] = a.module_name;
      entry["file"] = base + ".wasm";
      entry["label"] = a.label;
      entry["size"] = a.bytes.size();
      entry["digest"] = hex64(fnv1a64(a.bytes));
      manifest["modules"].push_back(entry);
    } catch (const std::exception& e) {
      std::cerr << src.filename().string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  if (failures) return 1;

  std::ofstream mf(outdir / "manifest.json");
  mf << manifest.dump(2) << "\n";
  std::cout << "fixturegen: wrote " << manifest["modules"].size()
            << " modules to " << outdir << "\n";
  return 0;
}
