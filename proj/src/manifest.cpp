#include "vbid/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace vbid {

const char* kToolVersion = "vbid 1.0.0";

std::uint64_t digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  char buf[1 << 16];
  std::uint64_t h = 0xcbf29ce484222325ull;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

void save_manifest(const RunManifest& m, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp);
    out << "manifest v1\n";
    out << "command = " << m.command << '\n';
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(m.config_hash));
    out << "config_hash = " << hex << '\n';
    out << "seed = " << m.seed << '\n';
    out << "tool_version = " << m.tool_version << '\n';
    std::snprintf(hex, sizeof(hex), "%.3f", m.wall_time_s);
    out << "wall_time_s = " << hex << '\n';
    for (const auto& in : m.inputs) {
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(in.digest));
      out << "input " << hex << ' ' << in.path << '\n';
    }
    if (!out) throw DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot rename " + tmp + " to " + path);
  }
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "manifest v1") {
    throw ParseError(path + ": bad manifest header");
  }
  RunManifest m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("input ", 0) == 0) {
      std::istringstream ss(line.substr(6));
      std::string hex;
      ss >> hex;
      std::string rest;
      std::getline(ss, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      m.inputs.push_back({rest, std::stoull(hex, nullptr, 16)});
      continue;
    }
    auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError(path + ": " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 3);
    if (key == "command") m.command = val;
    else if (key == "config_hash") m.config_hash = std::stoull(val, nullptr, 16);
    else if (key == "seed") m.seed = std::stoull(val);
    else if (key == "tool_version") m.tool_version = val;
    else if (key == "wall_time_s") m.wall_time_s = std::stod(val);
    else throw ParseError(path + ": unknown key " + key);
  }
  return m;
}

bool verify_manifest(const RunManifest& m) {
  for (const auto& in : m.inputs) {
    if (digest_file(in.path) != in.digest) return false;
  }
  return true;
}

}  // namespace vbid
