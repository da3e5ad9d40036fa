// Bit-level model of the MTJ computation-array grid: cell states,
// thresholded in-memory logic, parity-protected bitmask registers,
// inter-array links, and per-operation energy accounting.
#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rat/modmath.hpp"

namespace rat {

inline constexpr std::size_t kArraySize = 512;
// The two highest physical indices hold the bitmask pair; data placement
// never uses them.
inline constexpr std::size_t kMask0 = 510;
inline constexpr std::size_t kMask1 = 511;

inline constexpr std::size_t kGridRows = 16;
inline constexpr std::size_t kGridCols = 3;

enum class PimOpcode : std::uint8_t {
  NOT = 0,
  AND = 1,
  NAND = 2,
  OR = 3,
  NOR = 4,
  PRESET0 = 5,
  PRESET1 = 6,
  ACTIVATE = 7,
};

enum class Orientation : std::uint8_t { Row = 0, Column = 1 };

struct PimInstruction {
  PimOpcode opcode = PimOpcode::NOT;
  std::uint16_t addr_a = 0;    // 12 bits
  std::uint16_t addr_b = 0;    // 12 bits; unused for NOT/PRESET/ACTIVATE
  std::uint16_t addr_out = 0;  // 12 bits
  Orientation orientation = Orientation::Row;

  // 40-bit word: opcode(3) | a(12) | b(12) | out(12) | orientation(1)
  u64 encode() const;
  static PimInstruction decode(u64 word);

  // "OPCODE A B OUT R|C"
  std::string listing() const;
  static PimInstruction parse(const std::string& line);
};

struct MtjParams {
  double r_p = 0;       // ohms
  double r_ap = 0;      // ohms
  double t_switch = 0;  // seconds
  double i_switch = 0;  // amperes
  std::string profile;
};

MtjParams mtj_modern();     // 3.15 kOhm / 7.34 kOhm / 3 ns / 40 uA
MtjParams mtj_projected();  // 7.34 kOhm / 76.39 kOhm / 1 ns / 3 uA

// Peripheral circuitry model: multiplicative overhead on MTJ switching
// energy plus fixed per-instruction driver/decoder energy.  Defaults are
// calibrated against the published polynomial-multiplication totals and
// then frozen.
struct PeripheralModel {
  double fraction = 0.0;
  double driver_j = 0.0;
  double read_j_per_bit = 0.0;   // sense-amp read
  double backup_j = 0.0;         // controller state backup, per event
  double restore_j = 0.0;        // controller state restore, per event
};

PeripheralModel peripheral_modern();
PeripheralModel peripheral_projected();

struct EnergyLedger {
  double compute_j = 0, io_j = 0, encode_j = 0;
  double dead_j = 0, restore_j = 0, backup_j = 0;
  // controller/driver rail draw concurrent with compute; kept out of
  // compute_j so overhead percentages use the array energy alone
  double static_j = 0;
  double compute_s = 0, io_s = 0, encode_s = 0;
  double dead_s = 0, restore_s = 0, backup_s = 0;
  u64 restarts = 0;

  double total_j() const {
    return compute_j + io_j + encode_j + dead_j + restore_j + backup_j + static_j;
  }
  double total_s() const {
    return compute_s + io_s + encode_s + dead_s + restore_s + backup_s;
  }
};

// Per-line switching energy at the worst-case corner: gate bias chosen so
// the output MTJ still sees i_switch through the series-parallel path of
// fanin high-resistance inputs.  PRESET/ACTIVATE have fanin 0.
double gate_energy_per_line(PimOpcode op, std::size_t fanin, const MtjParams& mtj);

// Full instruction cost: per-line energy times active lines, scaled by the
// peripheral fraction, plus the driver constant.
double instruction_energy(PimOpcode op, std::size_t fanin, std::size_t lines,
                          const MtjParams& mtj, const PeripheralModel& peri);

struct PimEnv {
  MtjParams mtj = mtj_modern();
  PeripheralModel peri = peripheral_modern();
  double clock_period = 1.0 / 30.3e6;
};

PimEnv env_modern();
PimEnv env_projected();

struct ComputeArray {
  // cells[r] holds row r; bit c is column c.  Logical 1 = high resistance.
  std::array<std::bitset<kArraySize>, kArraySize> cells{};
  // parity: which of the bitmask pair is valid.  rp selects the row mask
  // (stored in columns kMask0/kMask1), cp the column mask (rows).
  bool rp = false;
  bool cp = false;
  // volatile activation latches; cleared by power loss
  std::bitset<kArraySize> row_latch{};
  std::bitset<kArraySize> col_latch{};
  bool has_sense_amps = false;

  std::bitset<kArraySize> read_mask_column(std::size_t col) const;
  std::bitset<kArraySize> read_mask_row(std::size_t row) const;
  void write_mask_column(std::size_t col, const std::bitset<kArraySize>& v);
  void write_mask_row(std::size_t row, const std::bitset<kArraySize>& v);
};

// Applies one instruction to one array.  `line_subset`, when given,
// restricts execution to those active lines (the interruption model: a cut
// instruction ran on some lines and not others).  Throws parameter_error on
// address collisions or attempts to write the currently valid bitmask.
void exec_gate(ComputeArray& a, const PimInstruction& instr, const PimEnv& env,
               EnergyLedger* ledger = nullptr,
               const std::bitset<kArraySize>* line_subset = nullptr);

// Volatile state lost; bitmasks and cells persist.
void power_loss(ComputeArray& a);

// Parity-protected mask update: writes the new mask into the currently
// invalid copy one cell at a time, then flips the parity bit.  Interrupting
// after `stop_after` cell writes (before the flip) leaves the old mask
// governing.  stop_after >= kArraySize means run to completion.
void update_bitmask(ComputeArray& a, Orientation which,
                    const std::bitset<kArraySize>& mask,
                    std::size_t stop_after = kArraySize);

struct ArrayGrid {
  std::array<std::array<ComputeArray, kGridCols>, kGridRows> arrays{};
  // link_closed[r][k]: switch between grid columns k and k+1 in array-row r
  std::array<std::array<bool, kGridCols - 1>, kGridRows> link_closed{};

  ArrayGrid();
  ComputeArray& at(std::size_t row, std::size_t col) { return arrays[row][col]; }
  const ComputeArray& at(std::size_t row, std::size_t col) const {
    return arrays[row][col];
  }
};

// Row-parallel gate spanning two horizontally adjacent arrays (grid columns
// left_col and left_col+1).  Addresses in [0, 512) land in the left array,
// [512, 1024) in the right.  Requires the link switch closed.
void inter_array_gate(ArrayGrid& g, std::size_t grid_row, std::size_t left_col,
                      const PimInstruction& instr, const PimEnv& env,
                      EnergyLedger* ledger = nullptr);

// Sense-amp read; permitted only on grid column 0.
std::vector<bool> read_bits(const ArrayGrid& g, std::size_t grid_row,
                            std::size_t grid_col, std::size_t row,
                            std::size_t col_begin, std::size_t col_end,
                            const PimEnv& env, EnergyLedger* ledger = nullptr);

// Versioned binary dump: header, row-major bitplanes, parity bits.
// Volatile latches are not part of the image.
std::vector<std::uint8_t> snapshot(const ArrayGrid& g);
ArrayGrid restore_grid(std::span<const std::uint8_t> bytes);

}  // namespace rat
