#include "rat/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>

namespace rat {

HarvesterConfig harvester_modern(double power_w) {
  HarvesterConfig h;
  h.power_w = power_w;
  h.v_on = 0.700;
  h.v_off = 0.400;
  h.clock_hz = 30.3e6;
  h.profile = "modern";
  return h;
}

HarvesterConfig harvester_projected(double power_w) {
  HarvesterConfig h;
  h.power_w = power_w;
  h.v_on = 0.575;
  h.v_off = 0.100;
  h.clock_hz = 90.9e6;
  h.profile = "projected";
  return h;
}

double usable_cycle_energy(const HarvesterConfig& h) {
  if (!(h.v_on > h.v_off) || !(h.v_off > 0) || !(h.power_w > 0)) {
    throw parameter_error("harvester needs v_on > v_off > 0 and power > 0");
  }
  return 0.5 * h.capacitance * (h.v_on * h.v_on - h.v_off * h.v_off);
}

EpisodeConfig episode_modern(double power_w) {
  EpisodeConfig c;
  c.harvester = harvester_modern(power_w);
  c.env = env_modern();
  c.static_power_w = 0.040;
  return c;
}

EpisodeConfig episode_projected(double power_w) {
  EpisodeConfig c;
  c.harvester = harvester_projected(power_w);
  c.env = env_projected();
  // peripheral rails scale with the supply voltage ratio squared
  double s = (0.575 / 0.700) * (0.575 / 0.700);
  c.static_power_w = 0.040 * s;
  return c;
}

void ControllerState::set_phase(Phase p) {
  sr[sr_parity ? 0 : 1] = p;  // write the invalid copy first
  sr_parity = !sr_parity;     // the flip is the commit
}

void ControllerState::set_counter(u64 v) {
  pc[pc_parity ? 0 : 1] = v;
  pc_parity = !pc_parity;
}

void commit_instruction(ControllerState& st) { st.set_counter(st.counter() + 1); }

namespace {

// Action-granular capacitor simulation.  Every modeled step is an "action"
// with a device-side energy and a latency; the capacitor is debited
// draw = energy / efficiency and credited harvest = power * latency.  An
// action that cannot finish drains the capacitor to the brown-out level and
// its partial cost is charged to the dead bucket.
struct Engine {
  const EpisodeConfig& cfg;
  RunReport& rep;
  double e_on, e_off, cap;
  u64 action_index = 0;
  std::size_t forced_at = 0;

  Engine(const EpisodeConfig& c, RunReport& r) : cfg(c), rep(r) {
    double usable = usable_cycle_energy(c.harvester);
    e_off = 0.5 * c.harvester.capacitance * c.harvester.v_off * c.harvester.v_off;
    e_on = e_off + usable;
    double fill = std::clamp(c.initial_fill, 0.0, 1.0);
    cap = e_off + fill * usable;
  }

  double eff() const { return cfg.harvester.converter_efficiency; }
  double power() const { return cfg.harvester.power_w; }

  // the forced cut scheduled for the action about to run, if any
  const Interrupt* pending() const {
    // <= so a cut whose index fell on an uncheckable action (restore,
    // backup) fires at the next opportunity
    if (forced_at < cfg.forced.size() &&
        cfg.forced[forced_at].after_action <= action_index) {
      return &cfg.forced[forced_at];
    }
    return nullptr;
  }
  void consume_forced() { ++forced_at; }

  // charge the whole action to the dead bucket (a forced cut mid-action)
  void die_forced(double device_j, double latency_s) {
    ++action_index;
    double draw = device_j / eff();
    rep.ledger.dead_j += device_j;
    rep.ledger.dead_s += latency_s;
    rep.capacitor_drawn_j += draw;
    cap = std::max(e_off, std::min(e_on, cap + power() * latency_s - draw));
  }

  // static_j rides along on the same draw but lands in the static bucket
  bool act(double device_j, double latency_s, double& bucket_j, double& bucket_s,
           double static_j = 0.0) {
    ++action_index;
    double e = device_j + static_j;
    double draw = e / eff();
    double harvest = power() * latency_s;
    if (cap + harvest - draw >= e_off) {
      cap = std::min(e_on, cap + harvest - draw);
      bucket_j += device_j;
      bucket_s += latency_s;
      rep.ledger.static_j += static_j;
      rep.capacitor_drawn_j += draw;
      return true;
    }
    // death: drain to the brown-out level, partial cost to dead
    if (latency_s > 0) {
      double drain_rate = draw / latency_s - power();
      double t_d = (cap - e_off) / drain_rate;
      rep.ledger.dead_j += (e / latency_s) * t_d;
      rep.ledger.dead_s += t_d;
      rep.capacitor_drawn_j += (draw / latency_s) * t_d;
    } else {
      rep.ledger.dead_j += (cap - e_off) * eff();
      rep.capacitor_drawn_j += cap - e_off;
    }
    cap = e_off;
    return false;
  }

  void recharge() {
    rep.charge_s += (e_on - cap) / power();
    cap = e_on;
  }
};

std::size_t op_fanin(PimOpcode op) {
  switch (op) {
    case PimOpcode::NOT: return 1;
    case PimOpcode::AND:
    case PimOpcode::NAND:
    case PimOpcode::OR:
    case PimOpcode::NOR: return 2;
    default: return 0;
  }
}

double grid_op_energy(const Program& prog, const GridOp& op, const PimEnv& env) {
  std::size_t lines = op.instr.orientation == Orientation::Row
                          ? std::min(prog.layout.n, prog.layout.rows_per_array)
                          : prog.layout.width;
  double e = instruction_energy(op.instr.opcode, op_fanin(op.instr.opcode), lines,
                                env.mtj, env.peri);
  return e * (double)prog.layout.arrays_used;
}

struct Restarter {
  Engine& eng;
  const EpisodeConfig& cfg;
  ArrayGrid* grid;          // null in counting mode
  std::size_t arrays;       // arrays touched by restore
  ControllerState* st;

  // power just failed: recharge, re-read state, re-activate every array
  void operator()() {
    ++eng.rep.restarts;
    if (grid) {
      for (auto& row : grid->arrays) {
        for (auto& a : row) power_loss(a);
      }
    }
    eng.recharge();
    double restore_j = (double)arrays * cfg.env.peri.restore_j;
    double restore_s = (double)arrays * 2.0 / cfg.harvester.clock_hz;
    if (!eng.act(restore_j, restore_s, eng.rep.ledger.restore_j,
                 eng.rep.ledger.restore_s)) {
      throw livelock_error("restore cannot complete on a full capacitor");
    }
    if (grid) {
      PimInstruction act;
      act.opcode = PimOpcode::ACTIVATE;
      for (auto& row : grid->arrays) {
        for (auto& a : row) {
          act.orientation = Orientation::Row;
          exec_gate(a, act, cfg.env);
          act.orientation = Orientation::Column;
          exec_gate(a, act, cfg.env);
        }
      }
    }
    // the encoder is atomic: any cut restarts it from scratch
    if (st->phase() == Phase::Encode) st->set_counter(0);
  }
};

void check_livelock(const EpisodeConfig& cfg, double usable) {
  double enc = cfg.encoder.unit_energy_j +
               cfg.static_power_w * cfg.encoder.unit_latency_s;
  if (enc / cfg.harvester.converter_efficiency >= usable) {
    throw livelock_error("atomic encode step needs " + std::to_string(enc) +
                         " J, one full charge provides " + std::to_string(usable));
  }
}

// deterministic filler for received payloads
std::uint8_t payload_byte(std::size_t i) {
  return (std::uint8_t)((i * 131 + 17) & 0xFF);
}

void run_receive(Engine& eng, Restarter& restart, ControllerState& st,
                 PacketBuffer& buf, const EpisodeConfig& cfg) {
  std::size_t bits = cfg.io.input_bits;
  std::size_t npkt = bits ? (bits + cfg.io.packet_bits - 1) / cfg.io.packet_bits : 0;
  buf.packets.assign(npkt, {});
  buf.valid.assign(npkt, false);
  std::size_t byte_base = 0;
  for (std::size_t p = 0; p < npkt; ++p) {
    std::size_t pbits = std::min(cfg.io.packet_bits, bits - p * cfg.io.packet_bits);
    byte_base = p * ((cfg.io.packet_bits + 7) / 8);
    double e = (double)pbits * cfg.io.bit_energy_j;
    double t = (double)pbits / cfg.harvester.clock_hz;
    while (st.counter() <= p) {
      if (eng.pending()) {
        eng.consume_forced();
        eng.die_forced(e, t);  // cut mid-packet: bytes partial, valid unset
        restart();
        continue;
      }
      if (!eng.act(e, t, eng.rep.ledger.io_j, eng.rep.ledger.io_s)) {
        restart();
        continue;
      }
      buf.packets[p].resize((pbits + 7) / 8);
      for (std::size_t k = 0; k < buf.packets[p].size(); ++k) {
        buf.packets[p][k] = payload_byte(byte_base + k);
      }
      buf.valid[p] = true;  // strictly after the bytes are stored
      commit_instruction(st);
    }
  }
  buf.completed = true;  // strictly after every valid bit
  st.set_phase(Phase::Encode);
  st.set_counter(0);
}

void run_encode(Engine& eng, Restarter& restart, ControllerState& st,
                const EpisodeConfig& cfg) {
  for (;;) {
    u64 u = st.counter();
    if (u >= cfg.encoder.units) break;
    double e = cfg.encoder.unit_energy_j;
    double t = cfg.encoder.unit_latency_s;
    if (eng.pending()) {
      eng.consume_forced();
      eng.die_forced(e, t);
      restart();  // resets the counter to zero while in Encode
      continue;
    }
    if (!eng.act(e, t, eng.rep.ledger.encode_j, eng.rep.ledger.encode_s)) {
      restart();
      continue;
    }
    commit_instruction(st);
  }
  st.set_phase(Phase::Compute);
  st.set_counter(0);
}

// one compute step: gate action, then the backup commit.  Returns false if
// power failed anywhere inside.
bool compute_step(Engine& eng, ControllerState& st, const EpisodeConfig& cfg,
                  double gate_j, double gate_s,
                  const std::function<void(std::size_t)>& apply) {
  const Interrupt* f = eng.pending();
  bool cut_before_commit = f && f->before_commit;
  if (f && !f->before_commit) {
    eng.consume_forced();
    if (apply && f->lines > 0) apply(f->lines);  // partial lines, then death
    eng.die_forced(gate_j + cfg.static_power_w * gate_s, gate_s);
    return false;
  }
  if (!eng.act(gate_j, gate_s, eng.rep.ledger.compute_j, eng.rep.ledger.compute_s,
               cfg.static_power_w * gate_s)) {
    return false;
  }
  if (apply) apply(0);  // full execution
  if (cut_before_commit) {
    // completed on-grid but the parity bit never flips: exactly this
    // instruction is re-performed after restart
    eng.consume_forced();
    ++eng.rep.reexecuted_instructions;
    return false;
  }
  // backup: write the invalid PC copy, flip parity
  if (!eng.act(cfg.env.peri.backup_j, 0.0, eng.rep.ledger.backup_j,
               eng.rep.ledger.backup_s)) {
    ++eng.rep.reexecuted_instructions;
    return false;
  }
  commit_instruction(st);
  return true;
}

void run_transmit(Engine& eng, Restarter& restart, ControllerState& st,
                  std::span<const std::uint8_t> result, const EpisodeConfig& cfg,
                  RunReport& rep) {
  std::size_t bits = result.size() * 8;
  std::size_t npkt = bits ? (bits + cfg.io.packet_bits - 1) / cfg.io.packet_bits : 0;
  std::size_t pkt_bytes = (cfg.io.packet_bits + 7) / 8;
  PacketBuffer rx;  // receiver side
  rx.packets.assign(npkt, {});
  rx.valid.assign(npkt, false);
  for (std::size_t p = 0; p < npkt; ++p) {
    std::size_t pbits = std::min(cfg.io.packet_bits, bits - p * cfg.io.packet_bits);
    double e = (double)pbits *
               (cfg.io.bit_energy_j + cfg.env.peri.read_j_per_bit);
    double t = (double)pbits / cfg.harvester.clock_hz;
    while (st.counter() <= p) {
      if (eng.pending()) {
        eng.consume_forced();
        eng.die_forced(e, t);
        restart();
        continue;
      }
      if (!eng.act(e, t, eng.rep.ledger.io_j, eng.rep.ledger.io_s)) {
        restart();
        continue;
      }
      std::size_t first = p * pkt_bytes;
      std::size_t last = std::min(result.size(), first + pkt_bytes);
      rx.packets[p].assign(result.begin() + first, result.begin() + last);
      rx.valid[p] = true;
      commit_instruction(st);
    }
  }
  rx.completed = true;
  for (const auto& pkt : rx.packets) {
    rep.transmitted.insert(rep.transmitted.end(), pkt.begin(), pkt.end());
  }
  st.set_phase(Phase::Idle);
}

void finish_report(RunReport& rep) {
  const EnergyLedger& l = rep.ledger;
  rep.latency_s = l.total_s() + rep.charge_s;
  if (l.compute_j > 0) {
    rep.dead_pct = 100.0 * l.dead_j / l.compute_j;
    rep.restore_pct = 100.0 * l.restore_j / l.compute_j;
    rep.backup_pct = 100.0 * l.backup_j / l.compute_j;
  }
  if (l.compute_s > 0) {
    rep.dead_lat_pct = 100.0 * l.dead_s / l.compute_s;
    rep.restore_lat_pct = 100.0 * l.restore_s / l.compute_s;
  }
}

std::vector<std::uint8_t> serialize_outputs(const ArrayGrid& g, const Program& prog,
                                            const PimEnv& env) {
  std::vector<std::uint8_t> out;
  for (const auto& name : prog.output_fields) {
    const Field& f = prog.layout.at(name);
    std::size_t bytes = (f.width + 7) / 8;
    auto vals = read_field(g, prog, name, prog.output_rows, env);
    for (u64 v : vals) {
      for (std::size_t k = 0; k < bytes; ++k) out.push_back((v >> (8 * k)) & 0xFF);
    }
  }
  return out;
}

}  // namespace

RunReport run_episode(const Program& prog, const EpisodeConfig& cfg,
                      ArrayGrid* out_grid) {
  RunReport rep;
  Engine eng(cfg, rep);
  check_livelock(cfg, usable_cycle_energy(cfg.harvester));
  ArrayGrid grid = setup_grid(prog);
  ControllerState st;
  Restarter restart{eng, cfg, &grid, prog.layout.arrays_used * kGridCols, &st};
  PacketBuffer rx;

  run_receive(eng, restart, st, rx, cfg);
  run_encode(eng, restart, st, cfg);

  while (st.counter() < prog.ops.size()) {
    const GridOp& op = prog.ops[st.counter()];
    double gate_j = grid_op_energy(prog, op, cfg.env);
    double gate_s = 1.0 / cfg.harvester.clock_hz;
    auto apply = [&](std::size_t lines) {
      std::optional<std::bitset<kArraySize>> subset;
      if (lines > 0) {
        subset.emplace();
        for (std::size_t k = 0; k < lines && k < kArraySize; ++k) (*subset)[k] = true;
      }
      for (std::size_t ar = 0; ar < prog.layout.arrays_used; ++ar) {
        if (op.inter) {
          inter_array_gate(grid, ar, op.left_col, op.instr, cfg.env);
        } else {
          exec_gate(grid.at(ar, op.col), op.instr, cfg.env, nullptr,
                    subset ? &*subset : nullptr);
        }
      }
    };
    if (!compute_step(eng, st, cfg, gate_j, gate_s, apply)) restart();
  }
  st.set_phase(Phase::Transmit);
  st.set_counter(0);

  auto result = serialize_outputs(grid, prog, cfg.env);
  run_transmit(eng, restart, st, result, cfg, rep);
  finish_report(rep);
  if (out_grid) *out_grid = grid;
  return rep;
}

RunReport run_episode_counting(u64 instructions, double mean_instr_energy_j,
                               const EpisodeConfig& cfg) {
  RunReport rep;
  Engine eng(cfg, rep);
  check_livelock(cfg, usable_cycle_energy(cfg.harvester));
  ControllerState st;
  Restarter restart{eng, cfg, nullptr, kGridRows * kGridCols, &st};
  PacketBuffer rx;

  run_receive(eng, restart, st, rx, cfg);
  run_encode(eng, restart, st, cfg);

  double gate_s = 1.0 / cfg.harvester.clock_hz;
  while (st.counter() < instructions) {
    if (!compute_step(eng, st, cfg, mean_instr_energy_j, gate_s, nullptr)) {
      restart();
    }
  }
  st.set_phase(Phase::Transmit);
  st.set_counter(0);

  std::vector<std::uint8_t> result((cfg.io.result_bits + 7) / 8);
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = payload_byte(i);
  run_transmit(eng, restart, st, result, cfg, rep);
  finish_report(rep);
  return rep;
}

std::vector<SweepRow> sweep(std::span<const double> powers,
                            std::span<const std::string> profiles,
                            std::size_t n, unsigned bitwidth) {
  std::vector<SweepRow> rows;
  for (const auto& profile : profiles) {
    bool projected = profile == "projected";
    if (!projected && profile != "modern") {
      throw parameter_error("unknown profile: " + profile);
    }
    PimEnv env = projected ? env_projected() : env_modern();
    auto cost = count_poly_mult(n, bitwidth, env);
    double mean = cost.energy_j / (double)cost.instructions;
    for (double p : powers) {
      EpisodeConfig cfg = projected ? episode_projected(p) : episode_modern(p);
      cfg.io.input_bits = 2 * n * bitwidth;
      cfg.io.result_bits = n * bitwidth;
      auto rep = run_episode_counting(cost.instructions, mean, cfg);
      SweepRow row;
      row.power_w = p;
      row.profile = profile;
      row.latency_s = rep.latency_s;
      row.energy_j = rep.ledger.total_j();
      row.restarts = rep.restarts;
      row.dead_pct = rep.dead_pct;
      row.restore_pct = rep.restore_pct;
      row.backup_pct = rep.backup_pct;
      row.dead_lat_pct = rep.dead_lat_pct;
      row.restore_lat_pct = rep.restore_lat_pct;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "power_w,profile,latency_s,energy_j,restarts,dead_pct,restore_pct,"
        "backup_pct,dead_lat_pct,restore_lat_pct\n";
  for (const auto& r : rows) {
    os << r.power_w << ',' << r.profile << ',' << r.latency_s << ','
       << r.energy_j << ',' << r.restarts << ',' << r.dead_pct << ','
       << r.restore_pct << ',' << r.backup_pct << ',' << r.dead_lat_pct << ','
       << r.restore_lat_pct << '\n';
  }
  return os.str();
}

}  // namespace rat
