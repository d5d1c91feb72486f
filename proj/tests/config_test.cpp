#include <doctest.h>

#include <sstream>

#include "dcpo/config.hpp"

using namespace dcpo;

TEST_CASE("parses sections, comments and whitespace") {
  KeyValueConfig cfg = KeyValueConfig::parse_string(
      "# leading comment\n"
      "run.task = needle\n"
      "  run.steps=42   \n"
      "\n"
      "run.learning_rate = 0.25  # not a comment, part of the value? no:\n");
  CHECK(cfg.get_string("run.task") == "needle");
  CHECK(cfg.get_int("run.steps") == 42);
  CHECK(cfg.has("run.learning_rate"));
}

TEST_CASE("duplicate keys resolve to the last occurrence") {
  KeyValueConfig cfg =
      KeyValueConfig::parse_string("a.b = 1\na.b = 2\n");
  CHECK(cfg.get_int("a.b") == 2);
}

TEST_CASE("errors carry line numbers") {
  std::istringstream in("ok.key = 1\nthis line has no equals\n");
  CHECK_THROWS_AS(KeyValueConfig::parse(in), ConfigError);
  try {
    KeyValueConfig::parse_string("ok.key = 1\nbroken\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("typed getters validate values") {
  KeyValueConfig cfg = KeyValueConfig::parse_string(
      "n.int = 7\nn.float = 2.5\nn.text = hello\nn.flag = true\n");
  CHECK(cfg.get_int("n.int") == 7);
  CHECK(cfg.get_double("n.float") == doctest::Approx(2.5));
  CHECK(cfg.get_bool("n.flag", false));
  CHECK_THROWS_AS(cfg.get_int("n.text"), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("n.text"), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("missing.key"), ConfigError);
  CHECK(cfg.get_int("missing.key", -1) == -1);
  CHECK(cfg.get_string("missing.key", "dflt") == "dflt");
}

TEST_CASE("unused-key tracking flags typos") {
  KeyValueConfig cfg =
      KeyValueConfig::parse_string("run.task = needle\nrun.stepz = 10\n");
  cfg.get_string("run.task");
  std::vector<std::string> unused = cfg.unused_keys();
  REQUIRE(unused.size() == 1);
  CHECK(unused[0] == "run.stepz");
  cfg.mark_used("run.stepz");
  CHECK(cfg.unused_keys().empty());
}

TEST_CASE("prefix queries and mutation") {
  KeyValueConfig cfg = KeyValueConfig::parse_string(
      "sweep.0.alpha = 0.1\nsweep.1.alpha = 0.2\nrun.task = needle\n");
  CHECK(cfg.keys_with_prefix("sweep.").size() == 2);
  cfg.set("run.seed", "9");
  CHECK(cfg.get_int("run.seed") == 9);
  cfg.erase_prefix("sweep.");
  CHECK(cfg.keys_with_prefix("sweep.").empty());
}

TEST_CASE("parse_int_list") {
  CHECK(parse_int_list("0 1 3", "refs") == std::vector<int>{0, 1, 3});
  CHECK_THROWS(parse_int_list("0 x 3", "refs"));
}
