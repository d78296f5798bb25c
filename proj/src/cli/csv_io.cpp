// Copyright 2026 The nvreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nvreadout/cli/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "nvreadout/errors.hpp"

namespace nvreadout::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string where(const CsvTable& t, std::size_t row) { return "line " + std::to_string(t.line.at(row)); }

double cell_double(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw DataError(where(t, row) + ": column '" + t.header[col] + "' is not a finite number: '" + s + "'");
  return v;
}

long long cell_integer(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw DataError(where(t, row) + ": column '" + t.header[col] + "' is not an integer: '" + s + "'");
  return v;
}

void require_header(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw DataError("unexpected CSV header; expected '" + want + "'");
  }
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      t.comments.emplace_back(t.rows.size(), trim(s.substr(1)));
      continue;
    }
    auto cells = split_cells(s);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells == t.header) continue;  // repeated header of a further block
    if (cells.size() != t.header.size())
      throw DataError(source + " line " + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line.push_back(n);
  }
  if (t.header.empty()) throw DataError(source + ": missing header row");
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CsvTable read_csv_file(const std::string& path) { return parse_csv(read_text_file(path), path); }

CsvSchema detect_schema(const CsvTable& t) {
  const auto& h = t.header;
  if (h == std::vector<std::string>{"frequency_hz", "label"}) return CsvSchema::kOdmrLines;
  if (h == std::vector<std::string>{"time_s", "rate_cps"}) return CsvSchema::kTraceBundle;
  if (h == std::vector<std::string>{"photon_count", "occurrences"}) return CsvSchema::kHistogram;
  if (h == std::vector<std::string>{"power_mw", "rate_cps"}) return CsvSchema::kSaturation;
  if (h == std::vector<std::string>{"detuning_ghz", "intensity"}) return CsvSchema::kLineshape;
  return CsvSchema::kUnknown;
}

OdmrLineSet read_odmr_lines(const CsvTable& t) {
  require_header(t, {"frequency_hz", "label"});
  OdmrLineSet out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    OdmrLine l;
    l.frequency_hz = cell_double(t, r, 0);
    if (!(l.frequency_hz > 0.0)) throw DataError(where(t, r) + ": frequency must be positive");
    try {
      l.branch = parse_branch_label(t.rows[r][1]);
    } catch (const std::exception&) {
      throw DataError(where(t, r) + ": unknown branch label '" + t.rows[r][1] + "'");
    }
    out.lines.push_back(l);
  }
  out.sort();
  return out;
}

namespace {

struct BlockLabel {
  int family = -1;
  MwVariant variant = MwVariant::kNone;
};

BlockLabel parse_block_label(const std::string& comment) {
  BlockLabel b;
  std::istringstream in(comment);
  std::string token;
  bool have_variant = false;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "family") {
      if (value.size() != 1 || value[0] < 'a' || value[0] > 'f')
        throw DataError("trace block: family must be one of a-f, got '" + value + "'");
      b.family = (value[0] - 'a') % kNumFamilies;
    } else if (key == "variant") {
      try {
        b.variant = parse_variant_label(value);
      } catch (const std::exception&) {
        throw DataError("trace block: unknown MW variant '" + value + "'");
      }
      have_variant = true;
    }
  }
  if (b.family < 0 || !have_variant) b.family = -1;
  return b;
}

}  // namespace

TraceBundle read_trace_bundle(const CsvTable& t) {
  require_header(t, {"time_s", "rate_cps"});
  // Block starts: comments carrying a family/variant label.
  std::vector<std::pair<std::size_t, BlockLabel>> starts;
  for (const auto& [row, text] : t.comments) {
    const BlockLabel b = parse_block_label(text);
    if (b.family >= 0) starts.emplace_back(row, b);
  }
  if (starts.empty()) throw DataError("trace file has no '# family=... variant=...' block header");
  if (starts.front().first != 0) throw DataError(where(t, 0) + ": data row before the first trace block header");
  TraceBundle out;
  double binwidth = 0.0;
  for (std::size_t b = 0; b < starts.size(); ++b) {
    const std::size_t begin = starts[b].first;
    const std::size_t end = b + 1 < starts.size() ? starts[b + 1].first : t.rows.size();
    if (end - begin < 2) throw DataError("trace block " + std::to_string(b + 1) + " has fewer than 2 rows");
    LabeledTrace trace;
    trace.family = starts[b].second.family;
    trace.variant = starts[b].second.variant;
    double prev = 0.0;
    for (std::size_t r = begin; r < end; ++r) {
      const double time = cell_double(t, r, 0), rate = cell_double(t, r, 1);
      if (rate < 0.0) throw DataError(where(t, r) + ": negative count rate");
      if (r > begin) {
        if (!(time > prev)) throw DataError(where(t, r) + ": time column is not increasing");
        const double dt = time - prev;
        if (binwidth == 0.0) binwidth = dt;
        else if (std::abs(dt - binwidth) > 1e-6 * binwidth)
          throw DataError(where(t, r) + ": time step differs from the inferred binwidth");
      }
      prev = time;
      trace.rate_cps.push_back(rate);
    }
    if (!out.traces.empty() && trace.rate_cps.size() != out.traces.front().rate_cps.size())
      throw DataError("trace block " + std::to_string(b + 1) + " length differs from the first block");
    out.traces.push_back(std::move(trace));
  }
  out.binwidth_s = binwidth;
  return out;
}

CountHistogram read_histogram(const CsvTable& t) {
  require_header(t, {"photon_count", "occurrences"});
  std::map<long long, std::uint64_t> by_count;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long long k = cell_integer(t, r, 0), n = cell_integer(t, r, 1);
    if (k < 0) throw DataError(where(t, r) + ": negative photon count");
    if (n < 0) throw DataError(where(t, r) + ": negative occurrence");
    if (!by_count.emplace(k, static_cast<std::uint64_t>(n)).second)
      throw DataError(where(t, r) + ": duplicate photon count " + std::to_string(k));
  }
  std::vector<std::uint64_t> counts(by_count.empty() ? 0 : static_cast<std::size_t>(by_count.rbegin()->first) + 1, 0);
  for (const auto& [k, n] : by_count) counts[static_cast<std::size_t>(k)] = n;
  return CountHistogram::from_counts(std::move(counts));
}

std::vector<SaturationPoint> read_saturation(const CsvTable& t) {
  require_header(t, {"power_mw", "rate_cps"});
  std::vector<SaturationPoint> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double p = cell_double(t, r, 0), f = cell_double(t, r, 1);
    if (p < 0.0) throw DataError(where(t, r) + ": negative power");
    out.push_back({p, f});
  }
  return out;
}

Spectrum read_lineshape(const CsvTable& t) {
  require_header(t, {"detuning_ghz", "intensity"});
  Spectrum s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.x.push_back(cell_double(t, r, 0));
    s.y.push_back(cell_double(t, r, 1));
  }
  return s;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

void CsvWriter::comment(const std::string& text) { text_ += "# " + text + "\n"; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw InvalidArgument("CsvWriter: row width differs from the header");
  for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
  text_ += '\n';
}

void CsvWriter::row_numbers(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  row(cells);
}

std::string format_trace_bundle(const TraceBundle& bundle) {
  std::string out;
  const char* fam = "abc";
  for (const auto& tr : bundle.traces) {
    out += "# family=" + std::string(1, fam[tr.family]) + " variant=" + std::string(variant_label(tr.variant)) + "\n";
    CsvWriter w({"time_s", "rate_cps"});
    for (std::size_t i = 0; i < tr.rate_cps.size(); ++i)
      w.row_numbers({static_cast<double>(i) * bundle.binwidth_s, tr.rate_cps[i]});
    out += w.text();
  }
  return out;
}

std::string format_histogram(const CountHistogram& h) {
  CsvWriter w({"photon_count", "occurrences"});
  for (std::size_t k = 0; k < h.counts.size(); ++k) w.row({std::to_string(k), std::to_string(h.counts[k])});
  return w.text();
}

std::string format_odmr_lines(const OdmrLineSet& lines) {
  CsvWriter w({"frequency_hz", "label"});
  for (const auto& l : lines.lines) w.row({format_number(l.frequency_hz), std::string(branch_label(l.branch))});
  return w.text();
}

}  // namespace nvreadout::cli
