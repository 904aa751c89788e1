#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "tpc/config.hpp"
#include "tpc/metrics.hpp"
#include "tpc/trainer.hpp"

using namespace tpc;
namespace fs = std::filesystem;

TEST_CASE("toml subset parses sections, scalars, and comments") {
  const char* text = R"(
seed = 7            # top-level
[env]
task = "pointmass_lite"
image_size = 16
[loss]
lambda2 = 0.1
[train]
no_smoothing = true
)";
  Config c = Config::parse(text);
  CHECK(c.get_int("seed", 0) == 7);
  CHECK(c.get_string("env.task", "") == "pointmass_lite");
  CHECK(c.get_int("env.image_size", 0) == 16);
  CHECK(c.get_double("loss.lambda2", 0) == 0.1);
  CHECK(c.get_bool("train.no_smoothing", false));
}

TEST_CASE("serialize is canonical and reload is byte-exact") {
  Config c = Config::parse(
      "b = 2\na = 1\n[zz]\nx = 1.5\n[aa]\ny = \"hi\"\nflag = false\n");
  std::string s1 = c.serialize();
  Config back = Config::parse(s1);
  CHECK(back == c);
  CHECK(back.serialize() == s1);
}

TEST_CASE("float values round-trip exactly") {
  Config c = Config::parse("x = 0.30000000000000004\ny = 6e-4\nz = 1.0\n");
  Config back = Config::parse(c.serialize());
  CHECK(back.get_double("x", 0) == 0.30000000000000004);
  CHECK(back.get_double("y", 0) == 6e-4);
  CHECK(back.get_double("z", 0) == 1.0);
}

TEST_CASE("dotted-path overrides are applied and typed") {
  Config c;
  c.apply_override("loss.lambda2=0.2");
  c.apply_override("env.task=pendulum_lite");
  c.apply_override("train.no_smoothing=true");
  CHECK(c.get_double("loss.lambda2", 0) == 0.2);
  CHECK(c.get_string("env.task", "") == "pendulum_lite");
  CHECK(c.get_bool("train.no_smoothing", false));
  CHECK_THROWS(c.apply_override("not an assignment"));
}

TEST_CASE("train config rejects unknown keys by name") {
  Config c;
  c.apply_override("loss.lambda9=1.0");
  c.apply_override("misc.whatever=2");
  try {
    TrainConfig::from_config(c);
    FAIL("expected rejection");
  } catch (const std::exception& e) {
    std::string msg = e.what();
    CHECK(msg.find("loss.lambda9") != std::string::npos);
    CHECK(msg.find("misc.whatever") != std::string::npos);
  }
}

TEST_CASE("train config defaults follow the reference settings") {
  TrainConfig t = TrainConfig::from_config(Config());
  CHECK(t.weights.tpc == 1.0);
  CHECK(t.weights.cons == 0.1);
  CHECK(t.weights.spc == 1.0);
  CHECK(t.weights.reward == 1.0);
  CHECK(t.wm_lr == 6e-4);
  CHECK(t.behavior_lr == 8e-5);
  CHECK(t.clip_norm == 100.0);
  CHECK(t.behavior.horizon == 15);
  CHECK(t.behavior.gamma == 0.99);
  CHECK(t.behavior.lambda == 0.95);
  CHECK(t.behavior.target_update_every == 100);
  CHECK(t.seed_episodes == 5);
  CHECK(t.exploration_noise == 0.3);
  CHECK(t.env.action_repeat == 2);
  CHECK(t.env.episode_length == 1000);
}

TEST_CASE("paper-scale flips the default dimensions") {
  Config c;
  c.apply_override("model.paper_scale=true");
  TrainConfig t = TrainConfig::from_config(c);
  CHECK(t.latent_dim == 30);
  CHECK(t.hidden_dim == 200);
  CHECK(t.batch_size == 250);
  CHECK(t.chunk_length == 50);
  CHECK(t.total_env_steps == 2000000);
}

TEST_CASE("variant gating adjusts only the documented weights") {
  TrainConfig t = TrainConfig::from_config(Config());
  t.variant = "spc_only";
  LossWeights w = t.effective_weights();
  CHECK(w.tpc == 0.0);
  CHECK(w.spc == 1.0);
  CHECK(w.cons == 0.1);
  t.variant = "unstable_tpc";
  w = t.effective_weights();
  CHECK(w.tpc == 1.0);
  CHECK(w.spc == 0.0);
  t.variant = "full_tpc";
  w = t.effective_weights();
  CHECK(w.tpc == 1.0);
  CHECK(w.spc == 1.0);
}

TEST_CASE("round-trip through to_config preserves the train config") {
  Config c;
  c.apply_override("env.task=pointmass_lite");
  c.apply_override("loss.lambda4=100.0");
  c.apply_override("seed=9");
  TrainConfig t = TrainConfig::from_config(c);
  Config snap = t.to_config();
  TrainConfig t2 = TrainConfig::from_config(snap);
  CHECK(t2.to_config().serialize() == snap.serialize());
  CHECK(t2.weights.reward == 100.0);
  CHECK(t2.seed == 9);
}

TEST_CASE("metrics csv and jsonl agree on shared fields") {
  fs::path dir = fs::temp_directory_path() / "tpc_metrics_test";
  fs::create_directories(dir);
  {
    MetricsWriter w((dir / "m.jsonl").string(), (dir / "m.csv").string(),
                    {"alpha", "beta"});
    w.write("world_model", 1, {{"alpha", 0.1}, {"beta", -2.5}});
    w.write("behavior", 2, {{"beta", 1.0 / 3.0}});
    CHECK_FALSE(w.error_emitted());
    w.write_error(3, "boom");
    CHECK(w.error_emitted());
  }
  std::ifstream jf(dir / "m.jsonl");
  std::string line;
  std::vector<nlohmann::json> recs;
  while (std::getline(jf, line)) recs.push_back(nlohmann::json::parse(line));
  REQUIRE(recs.size() == 3);

  std::ifstream cf(dir / "m.csv");
  std::vector<std::string> rows;
  while (std::getline(cf, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "step,kind,alpha,beta");
  CHECK(rows[1] == "1,world_model," + format_double(0.1) + "," +
                       format_double(-2.5));
  CHECK(rows[2] == "2,behavior,," + format_double(1.0 / 3.0));
  CHECK(rows[3] == "3,error,,");
  // shared fields byte-identical between the two streams
  CHECK(rows[1].find(recs[0]["alpha"].dump()) != std::string::npos);
  fs::remove_all(dir);
}
