#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dnlab {

/// 17-significant-digit formatting shared by every writer, so that fixed
/// seeds reproduce byte-identical artifacts.
std::string fmt(double x);

/// FNV-1a 64-bit content hash, hex encoded.
std::string fnv1a_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

/// CSV with a fixed header row; all numbers preformatted by the caller.
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows);

/// Append-style JSON-lines writer.
class JsonlWriter {
 public:
  explicit JsonlWriter(std::string path);
  void add(const nlohmann::json& line);
  const std::string& path() const { return path_; }
  void close();

 private:
  std::string path_;
  std::vector<std::string> lines_;
  bool closed_ = false;
};

/// Every produced file with its content hash; exit status material.
class Manifest {
 public:
  Manifest(std::string command, unsigned long long seed);
  void add_output(const std::string& path);
  void set_pass(bool pass) { pass_ = pass; }
  bool pass() const { return pass_; }
  void set_note(const std::string& key, const nlohmann::json& value) { notes_[key] = value; }
  std::string write(const std::string& dir);  // returns the manifest path

 private:
  std::string command_;
  unsigned long long seed_;
  bool pass_ = true;
  std::vector<std::string> outputs_;
  nlohmann::json notes_;
};

}  // namespace dnlab
