#include "doctest.h"

#include <cstdlib>

#include "calmix/config.hpp"
#include "calmix/error.hpp"

using namespace calmix;

TEST_CASE("parse: comments, sections, whitespace") {
  const auto cfg = Config::parse(
      "# training\n"
      "beta = 0.3\n"
      "  epochs=12  \n"
      "\n"
      "[selftrain]\n"
      "k = 400\n"
      "[data]\n"
      "pool = a b.jsonl\n");
  CHECK(cfg.get("beta") == "0.3");
  CHECK(cfg.get_uint("epochs", 0) == 12);
  CHECK(cfg.get_double("selftrain.k", 0) == 400.0);
  CHECK(cfg.get("data.pool") == "a b.jsonl");
  CHECK_FALSE(cfg.has("k"));
  CHECK_NOTHROW(cfg.check_keys());
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(Config::parse("beta 0.3\n"), Error);
  CHECK_THROWS_AS(Config::parse("= 3\n"), Error);
  CHECK_THROWS_AS(Config::parse("[data\n"), Error);
  CHECK_THROWS_AS(Config::parse("betta = 0.3\n").check_keys(), Error);
  CHECK_THROWS_AS(Config::load("/nonexistent/calmix.cfg"), Error);
}

TEST_CASE("typed getters") {
  const auto cfg = Config::parse("a = 1.5\nb = -3\nc = yes\nd = 12x\n");
  CHECK(cfg.get_double("a", 0) == 1.5);
  CHECK(cfg.get_int("b", 0) == -3);
  CHECK_THROWS_AS(cfg.get_uint("b", 0), Error);
  CHECK(cfg.get_bool("c", false));
  CHECK_THROWS_AS(cfg.get_int("d", 0), Error);
  CHECK_THROWS_AS(cfg.get_bool("a", false), Error);
  CHECK(cfg.get_double("missing", 2.5) == 2.5);
  CHECK(cfg.get_string("missing", "x") == "x");
}

TEST_CASE("to_text round trips") {
  const auto cfg = Config::parse("[selftrain]\nk = 200\nbeta = 0.1\n");
  const auto again = Config::parse(cfg.to_text());
  CHECK(again.values() == cfg.values());
}

TEST_CASE("environment overrides") {
  CHECK(Config::env_name("selftrain.k") == "CALMIX_SELFTRAIN_K");
  CHECK(Config::env_name("beta") == "CALMIX_BETA");
  auto cfg = Config::parse("beta = 0.3\nepochs = 4\n");
  setenv("CALMIX_BETA", " 0.7 ", 1);
  setenv("CALMIX_SELFTRAIN_K", "0", 1);
  cfg.apply_env();
  unsetenv("CALMIX_BETA");
  unsetenv("CALMIX_SELFTRAIN_K");
  CHECK(cfg.get("beta") == "0.7");
  CHECK(cfg.get("selftrain.k") == "0");
  CHECK(cfg.get("epochs") == "4");
}

TEST_CASE("train and selftrain settings") {
  const auto defaults = train_config_from(Config{});
  CHECK(defaults.beta == training::TrainConfig{}.beta);
  CHECK(defaults.seed == stage_seed(42, "train"));

  const auto cfg = Config::parse(
      "seed = 7\nbeta = 0.5\nmix_per_example = 0\nepochs = 3\nbatch_size = 16\nlearning_rate = 0.01\n"
      "momentum = 0.5\nembedding_dim = 12\nmax_len = 50\nmin_freq = 2\n[selftrain]\nk = 600\nrounds = 2\n");
  const auto t = train_config_from(cfg, "train");
  CHECK(t.beta == 0.5);
  CHECK(t.mix_per_example == 0);
  CHECK(t.epochs == 3);
  CHECK(t.batch_size == 16);
  CHECK(t.learning_rate == 0.01);
  CHECK(t.momentum == 0.5);
  CHECK(t.embedding_dim == 12);
  CHECK(t.max_len == 50);
  CHECK(t.min_freq == 2);
  CHECK(t.seed == stage_seed(7, "train"));
  CHECK(train_config_from(cfg, "grid").seed != t.seed);

  const auto s = selftrain_config_from(cfg);
  CHECK(s.k == 600);
  CHECK(s.rounds == 2);

  CHECK_THROWS_AS(train_config_from(Config::parse("batch_size = 0\n")), Error);
  CHECK_THROWS_AS(selftrain_config_from(Config::parse("[selftrain]\nk = -5\n")), Error);
}

TEST_CASE("stage seeds") {
  CHECK(stage_seed(42, "train") == stage_seed(42, "train"));
  CHECK(stage_seed(42, "train") != stage_seed(42, "selftrain"));
  CHECK(stage_seed(42, "train") != stage_seed(43, "train"));
  CHECK(master_seed(Config{}) == 42);
  CHECK(master_seed(Config::parse("seed = 9\n")) == 9);
}
