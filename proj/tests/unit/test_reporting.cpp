#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "invbench/reporting.hpp"

using namespace invbench;

namespace {

std::vector<RunRecord> grid(const std::vector<std::string>& problems, const std::vector<Method>& methods, int reps) {
  std::vector<RunRecord> out;
  for (const auto& p : problems) {
    for (Method m : methods) {
      for (int rep = 0; rep < reps; ++rep) {
        for (int env = 0; env < 3; ++env) {
          RunRecord r;
          r.problem = p;
          r.algorithm = m;
          r.env = env;
          r.repetition = rep;
          r.test_error = 0.1 + 0.01 * env + 0.001 * rep + 0.123456789;
          r.valid_error = 1.0 / 3.0;
          r.hparams.method = m;
          r.hparams.lr = 1.2345678901234567e-3;
          r.hparams.weight_decay = 1e-5;
          r.hparams.lambda = m == Method::IRMv1 ? 123.456 : 0.0;
          r.hparams.tau = m == Method::ANDMask ? 0.75 : 0.0;
          out.push_back(r);
        }
      }
    }
  }
  return out;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n' ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("cell formatting") {
  CHECK(format_cell({0.05, 0.004, 50}) == "0.05 ± 0.00");
  CHECK(format_cell({11.27, 0.17, 50}) == "11.27 ± 0.17");
  CHECK(kMissingCell == "—");
}

TEST_CASE("records CSV header and round trip") {
  auto recs = grid({"example1", "example2s"}, {Method::ERM, Method::IRMv1}, 2);
  recs.back().diverged = true;
  recs.back().test_error = NAN;
  std::ostringstream os;
  write_records_csv(os, recs);
  const std::string text = os.str();
  CHECK(text.substr(0, text.find('\n')) == kRecordCsvHeader);
  std::istringstream is(text);
  const auto back = read_records_csv(is);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    CHECK(back[i].problem == recs[i].problem);
    CHECK(back[i].algorithm == recs[i].algorithm);
    CHECK(back[i].test_error == recs[i].test_error);
    CHECK(back[i].valid_error == recs[i].valid_error);
    CHECK(back[i].hparams.lr == recs[i].hparams.lr);
    CHECK(back[i].hparams.lambda == recs[i].hparams.lambda);
    CHECK(back[i].hparams.tau == recs[i].hparams.tau);
  }
  CHECK(back.back().diverged);
  std::ostringstream again;
  write_records_csv(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("malformed records CSV is rejected") {
  std::istringstream empty("");
  CHECK_THROWS(read_records_csv(empty));
  std::istringstream header("problem,algorithm\n");
  CHECK_THROWS(read_records_csv(header));
  std::istringstream short_row(std::string(kRecordCsvHeader) + "\nexample1,ERM,0\n");
  CHECK_THROWS(read_records_csv(short_row));
  std::istringstream bad_method(std::string(kRecordCsvHeader) + "\nexample1,SGD,0,0,0.1,0.1,0.001,0,0,0,0\n");
  CHECK_THROWS(read_records_csv(bad_method));
}

TEST_CASE("table layout for the full grid") {
  std::vector<std::string> problems;
  for (const auto& p : all_problems()) problems.push_back(p.id());
  const auto recs = grid(problems, {kAllMethods.begin(), kAllMethods.end()}, 2);
  const auto layout = build_table(recs);
  CHECK(layout.row_labels.size() == 18);
  CHECK(layout.columns == std::vector<std::string>{"ANDMask", "ERM", "IGA", "IRMv1", "Oracle"});
  CHECK(layout.row_labels.front() == "Example1.E0");
  CHECK(layout.row_labels.back() == "Example3s.E2");
  for (const auto& row : layout.cells) CHECK(row.size() == 5);
  const auto text = render_table(recs);
  CHECK(count_lines(text) >= 18 + 1);
  CHECK(count_lines(render_table_csv(recs)) == 19);
}

TEST_CASE("methods that were not run render as missing") {
  auto recs = grid({"example2"}, {Method::ERM}, 1);
  auto oracle = grid({"example3"}, {Method::Oracle}, 1);
  recs.insert(recs.end(), oracle.begin(), oracle.end());
  const auto layout = build_table(recs);
  CHECK(layout.columns == std::vector<std::string>{"ERM", "Oracle"});
  CHECK(layout.cells[0][1] == std::string(kMissingCell));
  CHECK(layout.cells[3][0] == std::string(kMissingCell));
}

TEST_CASE("rendered table survives a CSV round trip") {
  const auto recs = grid({"example1", "example3s"}, {Method::ANDMask, Method::Oracle}, 3);
  std::ostringstream os;
  write_records_csv(os, recs);
  std::istringstream is(os.str());
  CHECK(render_table(read_records_csv(is)) == render_table(recs));
}

TEST_CASE("plain table columns line up") {
  const auto recs = grid({"example1", "example2"}, {Method::ERM, Method::IGA}, 2);
  std::istringstream is(render_table(recs));
  std::string line;
  std::vector<std::size_t> widths;
  while (std::getline(is, line)) {
    std::size_t w = 0;
    for (unsigned char c : line) w += (c & 0xC0) != 0x80 ? 1 : 0;
    widths.push_back(w);
  }
  REQUIRE(widths.size() > 2);
  for (std::size_t w : widths) CHECK(w == widths.front());
}

TEST_CASE("environment-average and sweep CSV") {
  const auto recs = grid({"example2"}, {Method::ERM, Method::Oracle}, 2);
  const auto avg = render_env_average_csv(recs);
  CHECK(avg.substr(0, avg.find('\n')) == kAverageCsvHeader);
  CHECK(count_lines(avg) == 3);
  std::vector<SweepRow> rows{{0.4, "example3", "ERM", {0.45, 0.01, 5}}, {1.2, "example3", "ERM", {0.40, 0.02, 5}}};
  const auto sweep = render_sweep_csv(rows);
  CHECK(sweep.substr(0, sweep.find('\n')) == kSweepCsvHeader);
  CHECK(sweep.find("\n0.4,example3,ERM,") != std::string::npos);
  CHECK(sweep.find("\n1.2,example3,ERM,") != std::string::npos);
}
