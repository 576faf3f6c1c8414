#include "dnlab/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dnlab/errors.hpp"

namespace dnlab {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fnv1a_hex(const std::string& bytes) {
  unsigned long long h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", h);
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot hash missing file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a_hex(ss.str());
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  os << header << '\n';
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
}

JsonlWriter::JsonlWriter(std::string path) : path_(std::move(path)) {}

void JsonlWriter::add(const nlohmann::json& line) { lines_.push_back(line.dump()); }

void JsonlWriter::close() {
  if (closed_) return;
  std::ofstream os(path_);
  if (!os) throw ParseError("cannot open " + path_ + " for writing");
  for (const auto& line : lines_) os << line << '\n';
  closed_ = true;
}

Manifest::Manifest(std::string command, unsigned long long seed)
    : command_(std::move(command)), seed_(seed) {}

void Manifest::add_output(const std::string& path) { outputs_.push_back(path); }

std::string Manifest::write(const std::string& dir) {
  nlohmann::json doc;
  doc["command"] = command_;
  doc["seed"] = seed_;
  doc["pass"] = pass_;
  doc["outputs"] = nlohmann::json::array();
  for (const auto& path : outputs_)
    doc["outputs"].push_back({{"path", path}, {"hash", hash_file(path)}});
  if (!notes_.empty()) doc["notes"] = notes_;
  std::string path = dir + "/manifest.json";
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  os << doc.dump(2) << '\n';
  return path;
}

}  // namespace dnlab
