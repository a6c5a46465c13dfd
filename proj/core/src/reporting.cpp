#include "invbench/reporting.hpp"

#include <algorithm>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace invbench {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') {
    throw std::runtime_error(fmt::format("records CSV line {}: bad number '{}'", line_no, text));
  }
  return v;
}

int parse_int(const std::string& text, std::size_t line_no) {
  const double v = parse_double(text, line_no);
  if (v != static_cast<int>(v)) {
    throw std::runtime_error(fmt::format("records CSV line {}: expected an integer, got '{}'", line_no, text));
  }
  return static_cast<int>(v);
}

// Code points, which is the terminal width for the characters used here.
std::size_t display_width(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string pad_right(std::string_view s, std::size_t width) {
  std::string out(s);
  out.append(width - std::min(width, display_width(s)), ' ');
  return out;
}

std::string row_label(const std::string& problem, int env) {
  std::string label = problem;
  if (!label.empty()) label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
  return fmt::format("{}.E{}", label, env);
}

}  // namespace

void write_records_csv(std::ostream& os, std::span<const RunRecord> records) {
  os << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    os << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.problem,
                      to_string(r.algorithm), r.env, r.repetition, r.test_error, r.valid_error, r.hparams.lr,
                      r.hparams.weight_decay, r.hparams.lambda, r.hparams.tau, r.diverged ? 1 : 0);
  }
}

std::vector<RunRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("records CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordCsvHeader) throw std::runtime_error(fmt::format("unexpected records CSV header '{}'", line));
  std::vector<RunRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 11) {
      throw std::runtime_error(fmt::format("records CSV line {}: expected 11 fields, got {}", line_no, f.size()));
    }
    RunRecord r;
    r.problem = f[0];
    r.algorithm = parse_method(f[1]);
    r.env = parse_int(f[2], line_no);
    r.repetition = parse_int(f[3], line_no);
    r.test_error = parse_double(f[4], line_no);
    r.valid_error = parse_double(f[5], line_no);
    r.hparams.method = r.algorithm;
    r.hparams.lr = parse_double(f[6], line_no);
    r.hparams.weight_decay = parse_double(f[7], line_no);
    r.hparams.lambda = parse_double(f[8], line_no);
    r.hparams.tau = parse_double(f[9], line_no);
    r.diverged = parse_int(f[10], line_no) != 0;
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_cell(const Summary& summary) {
  return fmt::format("{:.2f} ± {:.2f}", summary.mean, summary.spread);
}

TableLayout build_table(std::span<const RunRecord> records) {
  const auto cells = aggregate(records);
  std::set<std::pair<std::string, int>> rows;
  std::set<std::string> columns;
  for (const auto& r : records) {
    rows.emplace(r.problem, r.env);
    columns.emplace(to_string(r.algorithm));
  }
  TableLayout table;
  table.columns.assign(columns.begin(), columns.end());
  for (const auto& [problem, env] : rows) {
    table.row_labels.push_back(row_label(problem, env));
    std::vector<std::string> line;
    for (const auto& column : table.columns) {
      auto it = cells.find(CellKey{problem, column, env});
      line.push_back(it == cells.end() ? std::string(kMissingCell) : format_cell(it->second));
    }
    table.cells.push_back(std::move(line));
  }
  return table;
}

std::string render_table(std::span<const RunRecord> records) {
  const auto table = build_table(records);
  std::size_t label_width = 0;
  for (const auto& label : table.row_labels) label_width = std::max(label_width, display_width(label));
  std::vector<std::size_t> widths;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    std::size_t w = display_width(table.columns[c]);
    for (const auto& row : table.cells) w = std::max(w, display_width(row[c]));
    widths.push_back(w);
  }
  std::string out = pad_right("", label_width);
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += "  " + pad_right(table.columns[c], widths[c]);
  out += '\n';
  for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
    out += pad_right(table.row_labels[r], label_width);
    for (std::size_t c = 0; c < table.columns.size(); ++c) out += "  " + pad_right(table.cells[r][c], widths[c]);
    out += '\n';
  }
  return out;
}

std::string render_table_csv(std::span<const RunRecord> records) {
  const auto table = build_table(records);
  std::string out = "row";
  for (const auto& c : table.columns) out += "," + c;
  out += '\n';
  for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
    out += table.row_labels[r];
    for (const auto& cell : table.cells[r]) out += "," + cell;
    out += '\n';
  }
  return out;
}

std::string render_env_average_csv(std::span<const RunRecord> records) {
  std::string out(kAverageCsvHeader);
  out += '\n';
  for (const auto& [key, s] : aggregate_env_average(records)) {
    out += fmt::format("{},{},{:.17g},{:.17g},{}\n", key.problem, key.algorithm, s.mean, s.spread, s.n);
  }
  return out;
}

std::string render_sweep_csv(std::span<const SweepRow> rows) {
  std::string out(kSweepCsvHeader);
  out += '\n';
  for (const auto& row : rows) {
    out += fmt::format("{:.6g},{},{},{:.17g},{:.17g},{}\n", row.axis_value, row.problem, row.algorithm,
                       row.summary.mean, row.summary.spread, row.summary.n);
  }
  return out;
}

}  // namespace invbench
