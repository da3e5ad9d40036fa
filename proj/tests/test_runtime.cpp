#include "rat/runtime.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <set>

#include "doctest.h"

using namespace rat;

namespace {

Program desk_ntt() { return compile_ntt(16, 13, false); }

EpisodeConfig quiet_config(double power_w = 1.0) {
  EpisodeConfig cfg = episode_modern(power_w);
  cfg.io.input_bits = 16 * 13;
  return cfg;
}

std::vector<Interrupt> random_schedule(std::mt19937_64& rng, u64 action_span,
                                       std::size_t cuts) {
  std::set<u64> at;
  std::uniform_int_distribution<u64> uni(0, action_span - 1);
  while (at.size() < cuts) at.insert(uni(rng));
  std::vector<Interrupt> sched;
  for (u64 a : at) {
    Interrupt iv;
    iv.after_action = a;
    switch (rng() % 3) {
      case 0: iv.before_commit = true; break;
      case 1: iv.lines = 1 + rng() % 16; break;
      default: break;
    }
    sched.push_back(iv);
  }
  return sched;
}

}  // namespace

TEST_CASE("per-cycle usable energy from the capacitor constants") {
  auto m = harvester_modern(0.002);
  auto p = harvester_projected(0.002);
  CHECK(usable_cycle_energy(m) == doctest::Approx(165e-6).epsilon(1e-12));
  CHECK(usable_cycle_energy(p) == doctest::Approx(160.3125e-6).epsilon(1e-12));
  auto bad = m;
  bad.v_off = 0.8;
  CHECK_THROWS_AS(usable_cycle_energy(bad), parameter_error);
}

TEST_CASE("controller state: writes land in the invalid copy, flip commits") {
  ControllerState st;
  CHECK(st.counter() == 0);
  bool old_parity = st.pc_parity;
  commit_instruction(st);
  CHECK(st.counter() == 1);
  CHECK(st.pc_parity != old_parity);
  // the previously valid copy still holds the old value: a cut before the
  // flip would have left counter() == 0 readable
  CHECK(st.pc[old_parity ? 1 : 0] == 0);

  st.set_phase(Phase::Compute);
  CHECK(st.phase() == Phase::Compute);
  CHECK(st.sr[st.sr_parity ? 0 : 1] == Phase::Receive);

  // a torn write into the invalid copy never changes what reads see
  ControllerState torn = st;
  torn.pc[torn.pc_parity ? 0 : 1] = 999;
  CHECK(torn.counter() == st.counter());
}

TEST_CASE("pc fuzz: unit steps, non-decreasing") {
  ControllerState st;
  std::mt19937_64 rng(7);
  u64 prev = 0;
  for (int i = 0; i < 10000; ++i) {
    if (rng() & 1) {
      // interruption between update and flip: valid value unchanged
      st.pc[st.pc_parity ? 0 : 1] = st.counter() + 1;
      CHECK(st.counter() == prev);
    } else {
      commit_instruction(st);
      CHECK(st.counter() == prev + 1);
      prev = st.counter();
    }
  }
}

TEST_CASE("abundant power: zero restarts, zero dead and restore") {
  auto prog = desk_ntt();
  auto rep = run_episode(prog, quiet_config());
  CHECK(rep.restarts == 0);
  CHECK(rep.ledger.dead_j == 0.0);
  CHECK(rep.ledger.restore_j == 0.0);
  CHECK(rep.charge_s == 0.0);
  CHECK(rep.ledger.compute_j > 0.0);
  CHECK(rep.ledger.backup_j ==
        doctest::Approx((double)prog.ops.size() * env_modern().peri.backup_j));
  CHECK(rep.transmitted.size() == prog.output_rows * 2);  // 13 bits -> 2 bytes
}

TEST_CASE("energy accounting: capacitor draw equals ledger over efficiency") {
  auto prog = desk_ntt();
  for (double eff : {1.0, 0.9}) {
    auto cfg = quiet_config();
    cfg.harvester.converter_efficiency = eff;
    auto rep = run_episode(prog, cfg);
    CHECK(rep.capacitor_drawn_j ==
          doctest::Approx(rep.ledger.total_j() / eff).epsilon(1e-9));
  }
  // also with restarts in the picture
  std::mt19937_64 rng(11);
  auto cfg = quiet_config();
  cfg.harvester.converter_efficiency = 0.8;
  cfg.forced = random_schedule(rng, 2 * (u64)prog.ops.size(), 20);
  auto rep = run_episode(prog, cfg);
  CHECK(rep.restarts >= 20);
  CHECK(rep.capacitor_drawn_j ==
        doctest::Approx(rep.ledger.total_j() / 0.8).epsilon(1e-9));
}

TEST_CASE("crash consistency: random schedules reach the uninterrupted state") {
  auto prog = desk_ntt();
  ArrayGrid ref_grid;
  auto ref = run_episode(prog, quiet_config(), &ref_grid);
  auto ref_image = snapshot(ref_grid);
  REQUIRE(!ref.transmitted.empty());

  std::mt19937_64 rng(13);
  u64 span = 2 * (u64)prog.ops.size() + 64;
  for (int trial = 0; trial < 25; ++trial) {
    auto cfg = quiet_config();
    cfg.forced = random_schedule(rng, span, 8);
    cfg.initial_fill = 0.25 + 0.75 * (double)(rng() % 100) / 100.0;
    ArrayGrid grid;
    auto rep = run_episode(prog, cfg, &grid);
    REQUIRE(rep.restarts >= 1);
    CHECK(rep.reexecuted_instructions <= rep.restarts);
    REQUIRE(snapshot(grid) == ref_image);
    REQUIRE(rep.transmitted == ref.transmitted);
  }
}

TEST_CASE("starved harvester also converges to the reference state") {
  auto prog = compile_ntt(4, 13, false);
  ArrayGrid ref_grid;
  auto ref = run_episode(prog, quiet_config(), &ref_grid);
  auto ref_image = snapshot(ref_grid);

  // power below the static draw and a near-empty capacitor: the episode
  // browns out at least once before finishing
  auto cfg = episode_modern(0.004);
  cfg.io.input_bits = 16 * 13;
  cfg.initial_fill = 0.05;
  ArrayGrid grid;
  auto rep = run_episode(prog, cfg, &grid);
  CHECK(rep.restarts > 0);
  CHECK(rep.charge_s > 0.0);
  CHECK(snapshot(grid) == ref_image);
  CHECK(rep.transmitted == ref.transmitted);
}

TEST_CASE("backup energy scales with instructions, not restarts") {
  auto prog = compile_ntt(4, 13, false);
  auto calm = run_episode(prog, quiet_config());
  auto cfg = episode_modern(0.004);
  cfg.io.input_bits = 16 * 13;
  cfg.initial_fill = 0.05;
  auto stormy = run_episode(prog, cfg);
  CHECK(stormy.restarts > calm.restarts);
  CHECK(stormy.ledger.backup_j == doctest::Approx(calm.ledger.backup_j));
}

TEST_CASE("restore cost is linear in the array count") {
  auto prog = compile_ntt(4, 13, false);
  std::mt19937_64 rng(17);
  auto cfg = quiet_config();
  cfg.forced = random_schedule(rng, (u64)prog.ops.size(), 10);
  for (auto& iv : cfg.forced) iv.before_commit = false, iv.lines = 0;
  auto rep = run_episode(prog, cfg);
  REQUIRE(rep.restarts == 10);
  double per = (double)(prog.layout.arrays_used * kGridCols) *
               env_modern().peri.restore_j;
  CHECK(rep.ledger.restore_j == doctest::Approx(10.0 * per));
}

TEST_CASE("receive cost: per-bit energy, one packet retransmitted on a cut") {
  EpisodeConfig cfg = episode_modern(1.0);
  cfg.io.input_bits = 784 * 3;  // raw 3-bit pixels
  cfg.io.result_bits = 0;
  auto rep = run_episode_counting(4, 1e-12, cfg);
  CHECK(rep.ledger.io_j == doctest::Approx(784.0 * 3 * 158e-12).epsilon(1e-12));

  // a cut inside packet 1: exactly that packet's bits show up again
  EpisodeConfig cut = cfg;
  cut.forced = {{1, false, 0}};
  auto rep2 = run_episode_counting(4, 1e-12, cut);
  CHECK(rep2.restarts == 1);
  double pkt_bits = (double)cfg.io.packet_bits;
  CHECK(rep2.ledger.io_j + rep2.ledger.dead_j ==
        doctest::Approx((784.0 * 3 + pkt_bits) * 158e-12).epsilon(1e-9));
}

TEST_CASE("atomic encoder: livelock detection and restart-from-scratch") {
  EpisodeConfig cfg = episode_modern(1.0);
  cfg.io.input_bits = 64;
  cfg.encoder.units = 2;
  cfg.encoder.unit_energy_j = 1.0;  // one joule per unit, never fits
  CHECK_THROWS_AS(run_episode_counting(4, 1e-12, cfg), livelock_error);

  cfg.encoder.unit_energy_j = 60e-6;
  auto calm = run_episode_counting(4, 1e-12, cfg);
  CHECK(calm.ledger.encode_j == doctest::Approx(2 * 60e-6));

  // cut during the second unit: the whole encode phase re-runs
  EpisodeConfig cut = cfg;
  cut.forced = {{2, false, 0}};  // actions: pkt0, unit0, unit1
  auto rep = run_episode_counting(4, 1e-12, cut);
  CHECK(rep.restarts == 1);
  CHECK(rep.ledger.encode_j == doctest::Approx(3 * 60e-6));  // unit0 twice
  CHECK(rep.ledger.dead_j == doctest::Approx(60e-6).epsilon(1e-6));
}

TEST_CASE("counting-mode sweep: monotone latency, shrinking overheads") {
  double powers[] = {0.002, 0.020, 0.100};
  std::string profiles[] = {"modern", "projected"};
  auto rows = sweep(powers, profiles, 1024, 16);
  REQUIRE(rows.size() == 6);

  for (std::size_t base : {std::size_t{0}, std::size_t{3}}) {
    CHECK(rows[base].latency_s >= rows[base + 1].latency_s);
    CHECK(rows[base + 1].latency_s >= rows[base + 2].latency_s);
    CHECK(rows[base].dead_pct >= rows[base + 2].dead_pct);
    CHECK(rows[base].restore_pct >= rows[base + 2].restore_pct);
  }
  // restarts at the lowest power, and the projected profile suffers less
  CHECK(rows[0].restarts > 0);
  CHECK(rows[3].restarts > 0);
  for (int k = 0; k < 3; ++k) {
    CHECK(rows[3 + k].latency_s < rows[k].latency_s);
    CHECK(rows[3 + k].energy_j < rows[k].energy_j);
  }

  auto csv = sweep_csv(rows);
  CHECK(csv.rfind("power_w,profile,latency_s,energy_j,restarts,dead_pct,"
                  "restore_pct,backup_pct,dead_lat_pct,restore_lat_pct\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}

TEST_CASE("overhead structure at the lowest swept power") {
  double powers[] = {0.002};
  std::string profiles[] = {"modern", "projected"};
  auto rows = sweep(powers, profiles, 1024, 16);
  const auto& m = rows[0];
  const auto& p = rows[1];
  CHECK(m.dead_pct + m.restore_pct + m.backup_pct < 1.0);
  CHECK(p.dead_pct + p.restore_pct + p.backup_pct < 1.0);
  CHECK(p.dead_pct < m.dead_pct);
  CHECK(p.restore_pct < m.restore_pct);
  CHECK(p.backup_pct < m.backup_pct);
}
