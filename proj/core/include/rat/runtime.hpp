// Intermittent execution of compiled grid programs under a harvested-power
// model: capacitor charge cycles, the controller's parity-protected state,
// packet reception/transmission with valid bits, atomic encoding, and
// dead/restore/backup accounting.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rat/pim_compiler.hpp"

namespace rat {

struct livelock_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HarvesterConfig {
  double power_w = 0;
  double capacitance = 1e-3;
  double v_on = 0, v_off = 0;
  double clock_hz = 0;
  double converter_efficiency = 1.0;
  std::string profile;
};

HarvesterConfig harvester_modern(double power_w);     // 0.700 / 0.400 V, 30.3 MHz
HarvesterConfig harvester_projected(double power_w);  // 0.575 / 0.100 V, 90.9 MHz

// energy available between turn-on and brown-out: C*(v_on^2 - v_off^2)/2
double usable_cycle_energy(const HarvesterConfig& h);

enum class Phase : std::uint8_t { Receive, Encode, Compute, Transmit, Idle };

// Both SR and PC live in duplicated non-volatile copies with a parity bit
// selecting the valid one.  Updates write the invalid copy first and flip
// the parity last, so a cut at any point leaves one readable copy.
struct ControllerState {
  std::array<Phase, 2> sr{Phase::Receive, Phase::Receive};
  bool sr_parity = false;
  std::array<u64, 2> pc{0, 0};
  bool pc_parity = false;

  Phase phase() const { return sr[sr_parity ? 1 : 0]; }
  u64 counter() const { return pc[pc_parity ? 1 : 0]; }
  void set_phase(Phase p);
  void set_counter(u64 v);
};

// PC <- PC + 1 through the invalid copy; the parity flip is the commit.
void commit_instruction(ControllerState& st);

struct PacketBuffer {
  std::vector<std::vector<std::uint8_t>> packets;
  std::vector<bool> valid;
  bool completed = false;
};

struct IoSpec {
  std::size_t input_bits = 0;
  std::size_t result_bits = 0;     // 0 = derive from program outputs
  std::size_t packet_bits = 256;
  double bit_energy_j = 158e-12;
};

struct EncoderSpec {
  std::size_t units = 1;
  double unit_latency_s = 0.3e-3;
  double unit_energy_j = 60e-6;
};

// Forced power cut after the given global action index; `before_commit`
// lands the cut between a compute instruction's completion and its parity
// flip, and `lines` (when nonzero for a compute action) executes only that
// many lines of the cut instruction before dying.
struct Interrupt {
  u64 after_action = 0;
  bool before_commit = false;
  std::size_t lines = 0;
};

struct EpisodeConfig {
  HarvesterConfig harvester;
  PimEnv env;
  // controller, drivers and clocking draw this while the device is on;
  // debited per action as static_power_w * action latency
  double static_power_w = 0;
  IoSpec io;
  EncoderSpec encoder;
  double initial_fill = 1.0;  // fraction of the usable charge at t = 0
  std::vector<Interrupt> forced;
};

EpisodeConfig episode_modern(double power_w);
EpisodeConfig episode_projected(double power_w);

struct RunReport {
  double latency_s = 0;  // ledger time plus recharge gaps
  double charge_s = 0;   // time spent dark, waiting for v_on
  EnergyLedger ledger;
  u64 restarts = 0;
  u64 reexecuted_instructions = 0;  // compute re-performs, <= restarts
  double capacitor_drawn_j = 0;     // equals ledger total / efficiency
  // overheads against compute-phase totals
  double dead_pct = 0, restore_pct = 0, backup_pct = 0;
  double dead_lat_pct = 0, restore_lat_pct = 0;
  std::vector<std::uint8_t> transmitted;
};

// Bit-level episode: receive -> encode -> compute(program) -> transmit on a
// fresh grid.  If out_grid is given, the post-episode grid is copied there.
RunReport run_episode(const Program& prog, const EpisodeConfig& cfg,
                      ArrayGrid* out_grid = nullptr);

// Counting-mode episode for paper-scale workloads: the compute phase is
// `instructions` identical actions of the given mean energy, one clock each.
RunReport run_episode_counting(u64 instructions, double mean_instr_energy_j,
                               const EpisodeConfig& cfg);

struct SweepRow {
  double power_w = 0;
  std::string profile;
  double latency_s = 0, energy_j = 0;
  u64 restarts = 0;
  double dead_pct = 0, restore_pct = 0, backup_pct = 0;
  double dead_lat_pct = 0, restore_lat_pct = 0;
};

// Counting-mode sweep of the polynomial-multiplication workload across
// power levels and profiles ("modern" / "projected").
std::vector<SweepRow> sweep(std::span<const double> powers,
                            std::span<const std::string> profiles,
                            std::size_t n, unsigned bitwidth);

// header: power_w,profile,latency_s,energy_j,restarts,dead_pct,restore_pct,
//         backup_pct,dead_lat_pct,restore_lat_pct
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace rat
