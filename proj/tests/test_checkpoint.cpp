#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tpc/checkpoint.hpp"
#include "tpc/trainer.hpp"

using namespace tpc;
namespace fs = std::filesystem;

TEST_CASE("checkpoint round-trips params and optimizer state exactly") {
  fs::path p = fs::temp_directory_path() / "tpc_ckpt_test.json";
  Rng rng(1);
  ParamStore store;
  Dense l1(store, "enc/l1", 4, 3, rng);
  Adam opt(store.all(), 1e-3, 100.0);
  for (Tensor& t : const_cast<std::vector<Tensor>&>(opt.params())) {
    t.zero_grad();
    for (auto& g : t.raw_grad()) g = 0.5;
  }
  opt.step();

  CheckpointData out;
  pack_store(out, "world", store);
  pack_adam(out, "world", opt);
  out.meta["note"] = "test";
  save_checkpoint(p.string(), out);

  CheckpointData in = load_checkpoint(p.string());
  CHECK(in.meta.at("note") == "test");
  ParamStore store2;
  Rng rng2(99);
  Dense l2(store2, "enc/l1", 4, 3, rng2);
  unpack_store(in, "world", store2);
  for (int i = 0; i < l1.w.size(); ++i) {
    CHECK(store2.at("enc/l1/w").values()[i] == l1.w.values()[i]);
  }
  Adam opt2(store2.all(), 1e-3, 100.0);
  unpack_adam(in, "world", opt2);
  CHECK(opt2.step_count() == 1);
  fs::remove(p);
}

TEST_CASE("loading rejects a dimension mismatch explicitly") {
  fs::path p = fs::temp_directory_path() / "tpc_ckpt_mismatch.json";
  Rng rng(2);
  ParamStore small;
  Dense ls(small, "enc/l1", 4, 3, rng);
  CheckpointData out;
  pack_store(out, "world", small);
  save_checkpoint(p.string(), out);

  ParamStore big;
  Dense lb(big, "enc/l1", 8, 3, rng);
  CheckpointData in = load_checkpoint(p.string());
  try {
    unpack_store(in, "world", big);
    FAIL("expected mismatch error");
  } catch (const std::exception& e) {
    std::string msg = e.what();
    CHECK(msg.find("shape mismatch") != std::string::npos);
    CHECK(msg.find("enc/l1/w") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("format version is required and validated") {
  fs::path p = fs::temp_directory_path() / "tpc_ckpt_version.json";
  {
    std::ofstream out(p);
    out << "{\"params\": {}}";
  }
  CHECK_THROWS(load_checkpoint(p.string()));
  {
    std::ofstream out(p);
    out << "{\"format_version\": 999, \"params\": {}}";
  }
  CHECK_THROWS(load_checkpoint(p.string()));
  fs::remove(p);
}

TEST_CASE("agent checkpoints restore bit-identical behavior") {
  fs::path p = fs::temp_directory_path() / "tpc_agent_ckpt.json";
  Config c;
  c.apply_override("env.image_size=8");
  c.apply_override("model.latent_dim=3");
  c.apply_override("model.hidden_dim=5");
  c.apply_override("model.encoder_hidden=6");
  c.apply_override("model.prior_hidden=6");
  c.apply_override("model.reward_hidden=6");
  c.apply_override("model.rssm_embed=4");
  c.apply_override("behavior.hidden=8");
  TrainConfig cfg = TrainConfig::from_config(c);
  Rng r1(3);
  Agent a(cfg, r1);
  a.save(p.string());

  Rng r2(777);  // different init, then overwritten by the checkpoint
  Agent b(cfg, r2);
  b.load(p.string());

  NoGradGuard ng;
  Rng data(4);
  Tensor obs = Tensor::from_values({2, 64}, data.uniform_vec(128, -0.5, 0.5));
  Tensor sa = a.wm.encode(obs);
  Tensor sb = b.wm.encode(obs);
  for (int i = 0; i < sa.size(); ++i) CHECK(sa.values()[i] == sb.values()[i]);
  fs::remove(p);
}
