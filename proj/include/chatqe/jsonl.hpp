// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace chatqe {

using json = nlohmann::ordered_json;

/// Calls `on_record` for every non-blank line of a newline-delimited JSON
/// file. Line numbers are 1-based. JSON syntax errors and any exception
/// thrown by `on_record` (other than chatqe::Error) are rethrown as
/// ParseError carrying the file name and line number.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const json& record, std::size_t line)>& on_record);

/// Writes a file by streaming into a sibling temporary and renaming it into
/// place on commit(). If the writer is destroyed without commit() the
/// temporary is removed, so a failed run leaves no partial output.
class AtomicFileWriter {
 public:
  explicit AtomicFileWriter(std::filesystem::path target);
  ~AtomicFileWriter();
  AtomicFileWriter(const AtomicFileWriter&) = delete;
  AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

  std::ostream& stream() { return out_; }
  void write_line(const json& record);
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

/// Reads a whole text file; throws IoError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Replaces the contents of `path` atomically.
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Typed field access with uniform diagnostics ("missing field 'x'",
// "field 'x' must be a string").
const json& require(const json& record, const char* key);
std::string require_string(const json& record, const char* key);
long long require_integer(const json& record, const char* key);
bool require_bool(const json& record, const char* key);
double require_number(const json& record, const char* key);

}  // namespace chatqe
