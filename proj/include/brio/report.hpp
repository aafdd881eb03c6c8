// Copyright 2026 The brio-toy Authors.
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

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace brio {

struct ReportRow {
  std::string system;
  double r1 = 0;  // F1 percentages
  double r2 = 0;
  double rl = 0;

  bool operator==(const ReportRow&) const = default;
};

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Aligned plain-text table: System, R-1, R-2, R-L.
inline std::string emit_report_text(const std::vector<ReportRow>& rows) {
  std::size_t label = 6;
  std::size_t num = 5;
  for (const auto& r : rows) {
    label = std::max(label, r.system.size());
    for (double v : {r.r1, r.r2, r.rl}) num = std::max(num, fixed2(v).size());
  }
  auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w - s.size(), ' ') + s; };
  std::ostringstream out;
  out << pad_right("System", label);
  for (const char* h : {"R-1", "R-2", "R-L"}) out << "  " << pad_left(h, num);
  out << '\n';
  out << std::string(label + 3 * (num + 2), '-') << '\n';
  for (const auto& r : rows) {
    out << pad_right(r.system, label);
    for (double v : {r.r1, r.r2, r.rl}) out << "  " << pad_left(fixed2(v), num);
    out << '\n';
  }
  return out.str();
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') out.back() += '"', ++i;
      else if (c == '"') quoted = false;
      else out.back() += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  if (quoted) throw std::invalid_argument("report csv: unterminated quote");
  return out;
}

}  // namespace detail

inline std::string emit_report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "System,R-1,R-2,R-L\n";
  for (const auto& r : rows)
    out << detail::csv_field(r.system) << ',' << fixed2(r.r1) << ',' << fixed2(r.r2) << ','
        << fixed2(r.rl) << '\n';
  return out.str();
}

inline std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "System,R-1,R-2,R-L")
    throw std::invalid_argument("report csv: missing header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::csv_split(line);
    if (f.size() != 4) throw std::invalid_argument("report csv: expected 4 fields in '" + line + "'");
    ReportRow r{f[0]};
    double* dst[3] = {&r.r1, &r.r2, &r.rl};
    for (int k = 0; k < 3; ++k) {
      std::size_t used = 0;
      *dst[k] = std::stod(f[k + 1], &used);
      if (used != f[k + 1].size()) throw std::invalid_argument("report csv: bad number '" + f[k + 1] + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace brio
