// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal RFC 4180 CSV reading/writing with line tracking for error messages.

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronic/common.hpp"

namespace chronic::csv {

using Row = std::vector<std::string>;

struct Table {
  std::string path;
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> lines;  // source line of each row

  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return int(i);
    return -1;
  }

  [[noreturn]] void fail(std::size_t row, std::string_view col, std::string_view what) const {
    std::ostringstream os;
    os << path << ":" << lines.at(row) << ": column '" << col << "': " << what;
    throw Error(os.str());
  }
};

inline bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\n\r") != std::string_view::npos;
}

inline std::string escape(std::string_view s) {
  if (!needs_quotes(s)) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_row(std::ostream& os, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << escape(row[i]);
  }
  os << '\n';
}

inline Table parse(std::istream& in, std::string path) {
  Table t;
  t.path = std::move(path);
  Row row;
  std::string field;
  bool quoted = false, any = false, first = true;
  std::size_t line = 1, row_line = 1;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (first) {
      t.header = std::move(row);
      first = false;
    } else if (!(row.size() == 1 && row[0].empty())) {
      if (row.size() != t.header.size()) {
        std::ostringstream os;
        os << t.path << ":" << row_line << ": expected " << t.header.size() << " fields, got "
           << row.size();
        throw Error(os.str());
      }
      t.rows.push_back(std::move(row));
      t.lines.push_back(row_line);
    }
    row.clear();
    any = false;
  };
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_row();
      row_line = ++line;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error(t.path + ":" + std::to_string(row_line) + ": unterminated quote");
  if (any || !field.empty() || !row.empty()) end_row();
  if (first) throw Error(t.path + ": missing header");
  return t;
}

inline Table read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return parse(in, path);
}

}  // namespace chronic::csv
