// SPDX-License-Identifier: Apache-2.0
#include "chatqe/jsonl.hpp"

#include <atomic>
#include <sstream>

#include "chatqe/error.hpp"

namespace chatqe {
namespace fs = std::filesystem;

void read_jsonl(const fs::path& path,
                const std::function<void(const json&, std::size_t)>& on_record) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    try {
      on_record(record, line_no);
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path.string(), line_no, e.what());
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
}

namespace {
fs::path temp_sibling(const fs::path& target) {
  static std::atomic<unsigned> counter{0};
  auto name = target.filename().string() + ".tmp" + std::to_string(counter++);
  return target.parent_path() / name;
}
}  // namespace

AtomicFileWriter::AtomicFileWriter(fs::path target)
    : target_(std::move(target)), temp_(temp_sibling(target_)) {
  out_.open(temp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot write " + target_.string());
}

AtomicFileWriter::~AtomicFileWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    fs::remove(temp_, ec);
  }
}

void AtomicFileWriter::write_line(const json& record) {
  out_ << record.dump() << '\n';
}

void AtomicFileWriter::commit() {
  out_.flush();
  if (!out_) throw IoError("write failure on " + target_.string());
  out_.close();
  std::error_code ec;
  fs::rename(temp_, target_, ec);
  if (ec) throw IoError("cannot move output into place at " + target_.string() + ": " + ec.message());
  committed_ = true;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  AtomicFileWriter w(path);
  w.stream() << text;
  w.commit();
}

const json& require(const json& record, const char* key) {
  if (!record.is_object()) throw Error("record is not a JSON object");
  auto it = record.find(key);
  if (it == record.end()) throw Error(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& record, const char* key) {
  const auto& v = require(record, key);
  if (!v.is_string()) throw Error(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

long long require_integer(const json& record, const char* key) {
  const auto& v = require(record, key);
  if (!v.is_number_integer()) throw Error(std::string("field '") + key + "' must be an integer");
  return v.get<long long>();
}

bool require_bool(const json& record, const char* key) {
  const auto& v = require(record, key);
  if (!v.is_boolean()) throw Error(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

double require_number(const json& record, const char* key) {
  const auto& v = require(record, key);
  if (!v.is_number()) throw Error(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace chatqe
