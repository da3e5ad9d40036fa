#include "rat/pim.hpp"

#include <ostream>
#include <random>

#include "doctest.h"

using namespace rat;

namespace {

PimInstruction instr(PimOpcode op, unsigned a, unsigned b, unsigned out,
                     Orientation o = Orientation::Row) {
  PimInstruction i;
  i.opcode = op;
  i.addr_a = (std::uint16_t)a;
  i.addr_b = (std::uint16_t)b;
  i.addr_out = (std::uint16_t)out;
  i.orientation = o;
  return i;
}

// all-rows array with a given latch state already loaded
ComputeArray fresh_array() {
  ComputeArray a;
  std::bitset<kArraySize> all;
  all.set();
  update_bitmask(a, Orientation::Row, all);
  update_bitmask(a, Orientation::Column, all);
  exec_gate(a, instr(PimOpcode::ACTIVATE, 0, 0, 0, Orientation::Row), env_modern());
  exec_gate(a, instr(PimOpcode::ACTIVATE, 0, 0, 0, Orientation::Column), env_modern());
  return a;
}

void preset(ComputeArray& a, unsigned addr, bool v,
            Orientation o = Orientation::Row) {
  exec_gate(a, instr(v ? PimOpcode::PRESET1 : PimOpcode::PRESET0, 0, 0, addr, o),
            env_modern());
}

// set one cell via row writes
void put(ComputeArray& a, std::size_t row, std::size_t col, bool v) {
  a.cells[row][col] = v;
}

void randomize_data(ComputeArray& a, std::mt19937_64& rng) {
  for (std::size_t r = 0; r < kArraySize; ++r) {
    for (std::size_t c = 0; c < kMask0; ++c) a.cells[r][c] = rng() & 1;
  }
}

}  // namespace

TEST_CASE("instruction encode/decode roundtrip is 40 bits") {
  PimInstruction i = instr(PimOpcode::NAND, 4095, 17, 2048, Orientation::Column);
  u64 w = i.encode();
  CHECK((w >> 40) == 0);
  auto back = PimInstruction::decode(w);
  CHECK(back.opcode == i.opcode);
  CHECK(back.addr_a == i.addr_a);
  CHECK(back.addr_b == i.addr_b);
  CHECK(back.addr_out == i.addr_out);
  CHECK(back.orientation == i.orientation);
  CHECK_THROWS_AS(PimInstruction::decode(u64{1} << 41), parameter_error);
}

TEST_CASE("listing format roundtrip") {
  PimInstruction i = instr(PimOpcode::PRESET1, 0, 0, 37, Orientation::Column);
  CHECK(i.listing() == "PRESET1 0 0 37 C");
  auto back = PimInstruction::parse("NAND 12 13 14 R");
  CHECK(back.opcode == PimOpcode::NAND);
  CHECK(back.addr_out == 14);
  CHECK(back.orientation == Orientation::Row);
  CHECK_THROWS_AS(PimInstruction::parse("FROB 1 2 3 R"), parameter_error);
  CHECK_THROWS_AS(PimInstruction::parse("NAND 9999 0 1 R"), parameter_error);
  CHECK_THROWS_AS(PimInstruction::parse("NAND 1 2 3 X"), parameter_error);
}

TEST_CASE("gate truth tables, exhaustive over 2-input combinations") {
  struct Want {
    PimOpcode op;
    bool table[4];  // indexed by a*2+b
  } wants[] = {
      {PimOpcode::AND, {0, 0, 0, 1}},
      {PimOpcode::NAND, {1, 1, 1, 0}},
      {PimOpcode::OR, {0, 1, 1, 1}},
      {PimOpcode::NOR, {1, 0, 0, 0}},
  };
  auto env = env_modern();
  for (const auto& w : wants) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        ComputeArray arr = fresh_array();
        put(arr, 0, 10, a);
        put(arr, 0, 11, b);
        // proper preset for the gate's switching direction
        preset(arr, 12, w.op == PimOpcode::AND || w.op == PimOpcode::OR);
        exec_gate(arr, instr(w.op, 10, 11, 12), env);
        CHECK(arr.cells[0][12] == w.table[a * 2 + b]);
      }
    }
  }
  // NOT
  for (int a = 0; a < 2; ++a) {
    ComputeArray arr = fresh_array();
    put(arr, 3, 10, a);
    preset(arr, 12, false);
    exec_gate(arr, instr(PimOpcode::NOT, 10, 0, 12), env);
    CHECK(arr.cells[3][12] == !a);
  }
}

TEST_CASE("NAND without preset: output only ever switches 0 to 1") {
  auto env = env_modern();
  ComputeArray arr = fresh_array();
  put(arr, 0, 10, true);
  put(arr, 0, 11, true);
  preset(arr, 12, false);
  exec_gate(arr, instr(PimOpcode::NAND, 10, 11, 12), env);
  CHECK(arr.cells[0][12] == false);  // NAND(1,1) stays preset 0

  put(arr, 0, 10, false);
  exec_gate(arr, instr(PimOpcode::NAND, 10, 11, 12), env);
  CHECK(arr.cells[0][12] == true);  // NAND(0,x) switches to 1

  put(arr, 0, 10, true);
  exec_gate(arr, instr(PimOpcode::NAND, 10, 11, 12), env);
  CHECK(arr.cells[0][12] == true);  // never switches back without preset
}

TEST_CASE("idempotence: exec twice equals exec once, random states") {
  std::mt19937_64 rng(31);
  auto env = env_modern();
  for (int trial = 0; trial < 50; ++trial) {
    ComputeArray arr = fresh_array();
    randomize_data(arr, rng);
    PimOpcode ops[] = {PimOpcode::NOT, PimOpcode::AND, PimOpcode::NAND,
                       PimOpcode::OR, PimOpcode::NOR, PimOpcode::PRESET0,
                       PimOpcode::PRESET1, PimOpcode::ACTIVATE};
    auto op = ops[rng() % 8];
    auto o = (rng() & 1) ? Orientation::Row : Orientation::Column;
    auto i = instr(op, rng() % 500, rng() % 500, 500 + rng() % 10, o);
    auto once = arr;
    exec_gate(once, i, env);
    auto twice = once;
    exec_gate(twice, i, env);
    REQUIRE(twice.cells == once.cells);
  }
}

TEST_CASE("interruption safety: partial lines then re-execution converges") {
  std::mt19937_64 rng(32);
  auto env = env_modern();
  for (int trial = 0; trial < 50; ++trial) {
    ComputeArray arr = fresh_array();
    randomize_data(arr, rng);
    auto i = instr(PimOpcode::NAND, 10, 11, 12,
                   (rng() & 1) ? Orientation::Row : Orientation::Column);

    auto uninterrupted = arr;
    exec_gate(uninterrupted, i, env);

    std::bitset<kArraySize> subset;
    for (std::size_t ln = 0; ln < kArraySize; ++ln) subset[ln] = rng() & 1;
    auto cut = arr;
    exec_gate(cut, i, env, nullptr, &subset);  // power cut mid-instruction
    REQUIRE(cut.cells != uninterrupted.cells);
    exec_gate(cut, i, env);  // retry after restart
    REQUIRE(cut.cells == uninterrupted.cells);
  }
}

TEST_CASE("preset semantics") {
  ComputeArray arr = fresh_array();
  preset(arr, 42, true);
  for (std::size_t r = 0; r < kArraySize; ++r) CHECK(arr.cells[r][42] == true);
  auto before = arr.cells;
  preset(arr, 42, true);
  CHECK(arr.cells == before);

  // inactive lines are untouched
  std::bitset<kArraySize> some;
  some[3] = some[7] = true;
  update_bitmask(arr, Orientation::Row, some);
  exec_gate(arr, instr(PimOpcode::ACTIVATE, 0, 0, 0), env_modern());
  preset(arr, 42, false);
  CHECK(arr.cells[3][42] == false);
  CHECK(arr.cells[7][42] == false);
  CHECK(arr.cells[5][42] == true);
}

TEST_CASE("address validation rejects collisions and mask writes") {
  ComputeArray arr = fresh_array();
  auto env = env_modern();
  CHECK_THROWS_AS(exec_gate(arr, instr(PimOpcode::AND, 5, 6, 5), env), parameter_error);
  CHECK_THROWS_AS(exec_gate(arr, instr(PimOpcode::AND, 5, 6, 6), env), parameter_error);
  CHECK_THROWS_AS(exec_gate(arr, instr(PimOpcode::NOT, 5, 0, 600), env), parameter_error);

  // the valid bitmask copy is write-protected; the invalid copy is fair game
  std::size_t valid = arr.rp ? kMask1 : kMask0;
  std::size_t invalid = arr.rp ? kMask0 : kMask1;
  CHECK_THROWS_AS(exec_gate(arr, instr(PimOpcode::PRESET1, 0, 0, (unsigned)valid), env),
                  parameter_error);
  CHECK_NOTHROW(exec_gate(arr, instr(PimOpcode::PRESET1, 0, 0, (unsigned)invalid), env));
}

TEST_CASE("activate restores latches from the valid mask copy") {
  ComputeArray arr = fresh_array();
  std::bitset<kArraySize> mask;
  mask[1] = mask[100] = true;
  update_bitmask(arr, Orientation::Row, mask);

  power_loss(arr);
  CHECK(arr.row_latch.none());
  // with no lines active, gates are no-ops
  auto before = arr.cells;
  exec_gate(arr, instr(PimOpcode::PRESET1, 0, 0, 9), env_modern());
  CHECK(arr.cells == before);

  exec_gate(arr, instr(PimOpcode::ACTIVATE, 0, 0, 0), env_modern());
  CHECK(arr.row_latch == mask);
}

TEST_CASE("bitmask update protocol survives interruption at any point") {
  std::bitset<kArraySize> old_mask, new_mask;
  for (std::size_t i = 0; i < kArraySize; ++i) {
    old_mask[i] = i % 3 == 0;
    new_mask[i] = i % 5 == 0;
  }
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 1000; ++trial) {
    ComputeArray arr;
    update_bitmask(arr, Orientation::Row, old_mask);
    std::size_t cut = rng() % (kArraySize + 1);
    update_bitmask(arr, Orientation::Row, new_mask, cut);
    // whatever the cut point, the governing mask is exactly old or new
    exec_gate(arr, instr(PimOpcode::ACTIVATE, 0, 0, 0), env_modern());
    bool is_old = arr.row_latch == old_mask;
    bool is_new = arr.row_latch == new_mask;
    REQUIRE((is_old || is_new));
    if (cut < kArraySize) REQUIRE(is_old);  // commit happens only at the end
    // finishing the update always lands on the new mask
    update_bitmask(arr, Orientation::Row, new_mask);
    exec_gate(arr, instr(PimOpcode::ACTIVATE, 0, 0, 0), env_modern());
    REQUIRE(arr.row_latch == new_mask);
  }
}

TEST_CASE("full-adder macro matches integer addition on random rows") {
  std::mt19937_64 rng(34);
  auto env = env_modern();
  ComputeArray arr = fresh_array();
  // columns 0..7: x, y, cin, sum, cout, and scratch 5..8
  std::vector<int> xs(kArraySize), ys(kArraySize), cs(kArraySize);
  for (std::size_t r = 0; r < kArraySize; ++r) {
    xs[r] = rng() & 1;
    ys[r] = rng() & 1;
    cs[r] = rng() & 1;
    put(arr, r, 0, xs[r]);
    put(arr, r, 1, ys[r]);
    put(arr, r, 2, cs[r]);
  }
  auto nand = [&](unsigned p, unsigned q, unsigned out) {
    exec_gate(arr, instr(PimOpcode::PRESET0, 0, 0, out), env);
    exec_gate(arr, instr(PimOpcode::NAND, p, q, out), env);
  };
  // nine gates: sum and carry of a full adder
  nand(0, 1, 5);
  nand(0, 5, 6);
  nand(1, 5, 7);
  nand(6, 7, 8);  // 8 = x xor y
  nand(8, 2, 6);
  nand(8, 6, 7);
  nand(2, 6, 9);
  nand(7, 9, 3);  // sum
  nand(6, 5, 4);  // cout = nand(nand(x^y,cin), nand(x,y))
  for (std::size_t r = 0; r < kArraySize; ++r) {
    int total = xs[r] + ys[r] + cs[r];
    REQUIRE((int)arr.cells[r][3] == total % 2);
    REQUIRE((int)arr.cells[r][4] == total / 2);
  }
}

TEST_CASE("energy model ordering and ledger routing") {
  auto modern = mtj_modern();
  auto projected = mtj_projected();
  CHECK(gate_energy_per_line(PimOpcode::NOT, 1, projected) <
        gate_energy_per_line(PimOpcode::NOT, 1, modern));
  CHECK(gate_energy_per_line(PimOpcode::NAND, 2, projected) <
        gate_energy_per_line(PimOpcode::NAND, 2, modern));
  CHECK(instruction_energy(PimOpcode::NAND, 2, 0, modern, peripheral_modern()) ==
        peripheral_modern().driver_j);

  EnergyLedger led;
  ComputeArray arr = fresh_array();
  exec_gate(arr, instr(PimOpcode::NAND, 0, 1, 2), env_modern(), &led);
  CHECK(led.compute_j > 0);
  CHECK(led.io_j == 0);
  CHECK(led.total_j() == doctest::Approx(led.compute_j));

  ArrayGrid g;
  std::bitset<kArraySize> all;
  all.set();
  update_bitmask(g.at(0, 0), Orientation::Row, all);
  (void)read_bits(g, 0, 0, 5, 0, 36, env_modern(), &led);
  CHECK(led.io_j == doctest::Approx(36 * env_modern().peri.read_j_per_bit));
}

TEST_CASE("read locality: sense amps only on grid column 0") {
  ArrayGrid g;
  CHECK_NOTHROW(read_bits(g, 2, 0, 1, 0, 8, env_modern()));
  CHECK_THROWS_AS(read_bits(g, 2, 1, 1, 0, 8, env_modern()), parameter_error);
  CHECK_THROWS_AS(read_bits(g, 2, 2, 1, 0, 8, env_modern()), parameter_error);
}

TEST_CASE("inter-array copy moves a field between grid columns") {
  std::mt19937_64 rng(35);
  ArrayGrid g;
  auto env = env_modern();
  std::bitset<kArraySize> all;
  all.set();
  for (std::size_t col = 0; col < 2; ++col) {
    update_bitmask(g.at(0, col), Orientation::Row, all);
    exec_gate(g.at(0, col), instr(PimOpcode::ACTIVATE, 0, 0, 0), env);
  }
  // random 36-bit field at columns 0..35 of the left array
  for (std::size_t r = 0; r < kArraySize; ++r) {
    for (std::size_t c = 0; c < 36; ++c) g.at(0, 0).cells[r][c] = rng() & 1;
  }
  // copy = two NOTs through the link: left -> right scratch -> right dest
  for (unsigned c = 0; c < 36; ++c) {
    inter_array_gate(g, 0, 0, instr(PimOpcode::PRESET0, 0, 0, 512 + 100 + c), env);
    inter_array_gate(g, 0, 0, instr(PimOpcode::NOT, c, 0, 512 + 100 + c), env);
    inter_array_gate(g, 0, 0, instr(PimOpcode::PRESET0, 0, 0, 512 + c), env);
    inter_array_gate(g, 0, 0, instr(PimOpcode::NOT, 512 + 100 + c, 0, 512 + c), env);
  }
  for (std::size_t r = 0; r < kArraySize; ++r) {
    for (std::size_t c = 0; c < 36; ++c) {
      REQUIRE(g.at(0, 1).cells[r][c] == g.at(0, 0).cells[r][c]);
    }
  }
  // idempotent re-execution
  auto before = g.at(0, 1).cells;
  inter_array_gate(g, 0, 0, instr(PimOpcode::NOT, 100 + 512, 0, 512 + 0), env);
  CHECK(g.at(0, 1).cells == before);

  g.link_closed[0][0] = false;
  CHECK_THROWS_AS(inter_array_gate(g, 0, 0, instr(PimOpcode::NOT, 0, 0, 513), env),
                  parameter_error);
  CHECK_THROWS_AS(inter_array_gate(g, 0, 2, instr(PimOpcode::NOT, 0, 0, 513), env),
                  parameter_error);
}

TEST_CASE("snapshot/restore preserves cells, parity, links; latches are volatile") {
  std::mt19937_64 rng(36);
  ArrayGrid g;
  randomize_data(g.at(3, 1), rng);
  std::bitset<kArraySize> mask;
  mask[7] = true;
  update_bitmask(g.at(3, 1), Orientation::Row, mask);
  update_bitmask(g.at(3, 1), Orientation::Row, mask);  // flip parity twice total
  g.link_closed[5][1] = false;
  g.at(0, 0).row_latch.set();

  auto bytes = snapshot(g);
  auto back = restore_grid(bytes);
  CHECK(back.at(3, 1).cells == g.at(3, 1).cells);
  CHECK(back.at(3, 1).rp == g.at(3, 1).rp);
  CHECK(back.link_closed == g.link_closed);
  CHECK(back.at(0, 0).row_latch.none());

  bytes[1] = 'X';
  CHECK_THROWS_AS(restore_grid(bytes), parameter_error);
  bytes[1] = 'G';
  bytes.pop_back();
  CHECK_THROWS_AS(restore_grid(bytes), parameter_error);
}
