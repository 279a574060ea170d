#include <doctest.h>

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "styloscope/report.hpp"
#include "test_util.hpp"

using namespace styloscope;

TEST_CASE("csv fields are quoted only when needed") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_escape("two\nlines") == "\"two\nlines\"");
  CHECK(csv_escape("") == "");
}

TEST_CASE("csv tables use CRLF and parse back") {
  CsvTable t({"name", "value"});
  t.add_row({"x", "1"});
  t.add_row({"a, \"b\"", "line\r\nbreak"});
  const std::string s = t.str();
  CHECK(s.rfind("name,value\r\nx,1\r\n", 0) == 0);
  auto rows = parse_csv(s);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2] == std::vector<std::string>{"a, \"b\"", "line\r\nbreak"});
  CHECK(error_code_of([&] { t.add_row({"only one"}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("numbers round-trip in shortest form") {
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(100.0) == "100");
  for (double v : {0.1, 1.0 / 3.0, 98.66666666666667, 1e-300, -2.5e17}) {
    CHECK(std::stod(format_number(v)) == v);
  }
}

TEST_CASE("sha256 matches published test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir dir;
  write_text(dir.path / "sub" / "f.txt", "abc");
  CHECK(sha256_file(dir.path / "sub" / "f.txt") == sha256_hex("abc"));
  CHECK(read_text(dir.path / "sub" / "f.txt") == "abc");
}

TEST_CASE("json artifacts are written with a trailing newline") {
  TempDir dir;
  write_json(dir.path / "a.json", nlohmann::json{{"k", 1}});
  const auto text = read_text(dir.path / "a.json");
  CHECK(text.back() == '\n');
  CHECK(nlohmann::json::parse(text)["k"] == 1);
}

TEST_CASE("scatter SVG contains one labelled marker per point") {
  std::vector<SvgPoint> pts = {{0, 0, "A<1>"}, {1, 2, "B"}, {-1, 0.5, "C"}};
  const std::string svg = scatter_svg(pts, "map", "config_hash=abc");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t circles = 0;
  for (auto p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  CHECK(circles == 3);
  CHECK(svg.find("A&lt;1&gt;") != std::string::npos);
  CHECK(svg.find("<metadata>config_hash=abc</metadata>") != std::string::npos);
}
