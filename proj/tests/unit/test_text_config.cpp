#include <doctest.h>

#include "helpers.hpp"
#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

using namespace knobtuner;

TEST_CASE("config text: globals, sections, comments") {
  ConfigText cfg = parse_config_text(
      "# header\n"
      "dbms = mysql\n"
      "\n"
      "[knob]\n"
      "name = a  # trailing comment\n"
      "min = 1\n"
      "[knob]\n"
      "name = b\n");
  CHECK(cfg.globals.get_string("dbms") == "mysql");
  auto knobs = cfg.sections_named("knob");
  REQUIRE(knobs.size() == 2);
  CHECK(knobs[0]->get_string("name") == "a");
  CHECK(knobs[0]->get_number("min") == 1.0);
  CHECK(knobs[1]->get_string("name") == "b");
}

TEST_CASE("config text: parse errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_config_text("key value\n"),
                       doctest::Contains("1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("ok = 1\n[unterminated\n"), ConfigError);
  ConfigText cfg = parse_config_text("n = not_a_number\n");
  CHECK_THROWS_WITH_AS(cfg.globals.get_number("n"), doctest::Contains("line 1"),
                       ConfigError);
}

TEST_CASE("size suffixes") {
  CHECK(parse_size("4G") == 4.0 * 1024 * 1024 * 1024);
  CHECK(parse_size("4GB") == 4.0 * 1024 * 1024 * 1024);
  CHECK(parse_size("4GiB") == 4.0 * 1024 * 1024 * 1024);
  CHECK(parse_size("512M") == 512.0 * 1024 * 1024);
  CHECK(parse_size("256K") == 256.0 * 1024);
  CHECK(parse_size("123") == 123.0);
  CHECK(parse_size("1.5k") == 1536.0);
  CHECK_THROWS_AS(parse_size("12Q"), ConfigError);
  CHECK_THROWS_AS(parse_size("abc"), ConfigError);
}

TEST_CASE("value/unit splitting") {
  auto v = split_value_unit("25%");
  REQUIRE(v.has_value());
  CHECK(v->value == 25.0);
  CHECK(v->unit == "%");
  auto w = split_value_unit(" 4 GB ");
  REQUIRE(w.has_value());
  CHECK(w->value == 4.0);
  CHECK(w->unit == "GB");
  CHECK(!split_value_unit("nope").has_value());
}

TEST_CASE("fnv1a is stable") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") != fnv1a("b"));
  CHECK(to_hex(0x1234abcdull) == "000000001234abcd");
}
