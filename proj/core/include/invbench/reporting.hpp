#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invbench/harness.hpp"

namespace invbench {

inline constexpr std::string_view kRecordCsvHeader =
    "problem,algorithm,env,repetition,test_error,valid_error,lr,weight_decay,lambda,tau,diverged";
inline constexpr std::string_view kSweepCsvHeader = "axis_value,problem,algorithm,mean_error,spread,n";
inline constexpr std::string_view kAverageCsvHeader = "problem,algorithm,mean_error,spread,n";

/// Full-precision record CSV (LF line endings).
void write_records_csv(std::ostream& os, std::span<const RunRecord> records);
/// Inverse of write_records_csv. Throws std::runtime_error on malformed input.
std::vector<RunRecord> read_records_csv(std::istream& is);

/// "{mean:.2f} ± {spread:.2f}"
std::string format_cell(const Summary& summary);
/// Cell text for a method that was not run.
inline constexpr std::string_view kMissingCell = "—";

/// Rows Problem.Ek in canonical order, one column per algorithm in
/// alphabetical order.
struct TableLayout {
  std::vector<std::string> row_labels;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;
};

TableLayout build_table(std::span<const RunRecord> records);
/// Aligned plain-text table.
std::string render_table(std::span<const RunRecord> records);
/// Same cells, comma-separated.
std::string render_table_csv(std::span<const RunRecord> records);

/// Environment-averaged errors per (problem, algorithm).
std::string render_env_average_csv(std::span<const RunRecord> records);

std::string render_sweep_csv(std::span<const SweepRow> rows);

}  // namespace invbench
