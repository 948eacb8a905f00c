#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "plaus/errors.hpp"

namespace plaus::detail {

using json = nlohmann::json;

// A parsed record plus its 1-based line number for error messages.
struct Record {
  std::size_t line = 0;
  json value;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("line " + std::to_string(line) + ": " + what);
  }

  const json& field(const char* name) const {
    auto it = value.find(name);
    if (it == value.end()) fail(std::string("missing field '") + name + "'");
    return *it;
  }

  template <class T>
  T get(const char* name) const {
    try {
      return field(name).get<T>();
    } catch (const json::exception&) {
      fail(std::string("field '") + name + "' has the wrong type");
    }
  }

  bool has(const char* name) const { return value.contains(name); }
};

inline std::vector<Record> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Record r{n, {}};
    try {
      r.value = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(n) + ": malformed record (" + e.what() + ")");
    }
    if (!r.value.is_object()) r.fail("record is not an object");
    out.push_back(std::move(r));
  }
  return out;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void write(const json& j) { out_ << j.dump() << '\n'; }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace plaus::detail
