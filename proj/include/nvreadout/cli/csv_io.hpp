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

// CSV ingestion and emission for the documented file schemas.

#ifndef NVREADOUT_CLI_CSV_IO_HPP
#define NVREADOUT_CLI_CSV_IO_HPP

#include <string>
#include <vector>

#include "nvreadout/photon_statistics.hpp"
#include "nvreadout/rate_dynamics.hpp"
#include "nvreadout/spin_hamiltonian.hpp"

namespace nvreadout::cli {

/// Parsed CSV: one header row, then rows of cells. `line` holds the
/// 1-based source line of each row for diagnostics. Lines starting with
/// '#' are kept in `comments` with the index of the row that follows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;
  std::vector<std::pair<std::size_t, std::string>> comments;
};

/// Throws DataError if the file cannot be read or rows are ragged.
CsvTable read_csv_file(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& source = "<memory>");

/// Reads the whole file; throws DataError if it cannot be opened.
std::string read_text_file(const std::string& path);

enum class CsvSchema { kOdmrLines, kTraceBundle, kHistogram, kSaturation, kLineshape, kUnknown };

/// Schema from the first header row (and trace block markers).
CsvSchema detect_schema(const CsvTable& table);

// Ingestion: each throws DataError naming the row on bad data.
OdmrLineSet read_odmr_lines(const CsvTable& table);
/// One or more blocks, each introduced by `# family=<a..f> variant=<label>`
/// and holding `time_s,rate_cps` rows. The binwidth is inferred from the
/// time column and must agree across blocks.
TraceBundle read_trace_bundle(const CsvTable& table);
CountHistogram read_histogram(const CsvTable& table);
std::vector<SaturationPoint> read_saturation(const CsvTable& table);
struct Spectrum {
  std::vector<double> x;
  std::vector<double> y;
};
Spectrum read_lineshape(const CsvTable& table);

// Emission.
std::string format_number(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void comment(const std::string& text);
  void row(const std::vector<std::string>& cells);
  void row_numbers(const std::vector<double>& values);
  const std::string& text() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

std::string format_trace_bundle(const TraceBundle& bundle);
std::string format_histogram(const CountHistogram& h);
std::string format_odmr_lines(const OdmrLineSet& lines);

}  // namespace nvreadout::cli

#endif  // NVREADOUT_CLI_CSV_IO_HPP
