#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2caf {

/// RFC-4180 CSV writer: CRLF-free LF rows, quoting only where required,
/// mandatory header row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
    row(header);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << escape(fields[i]);
    }
    out_ << '\n';
  }

  static std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    quoted += '"';
    return quoted;
  }

 private:
  std::ofstream out_;
};

}  // namespace l2caf
