#include "rat/pim_compiler.hpp"

#include <algorithm>

#include "json.hpp"
#include "rat/svm.hpp"

namespace rat {

namespace {

constexpr std::size_t kScratchRowA = 508;
constexpr std::size_t kScratchRowB = 509;
constexpr std::size_t kUsableCols = 510;   // 510, 511 are the bitmask pair
constexpr std::size_t kUsableRows = 508;   // 508/509 scratch, 510/511 masks

Field sub(const Field& f, std::size_t off, std::size_t w) {
  if (off + w > f.width) throw capacity_error("scratch region exhausted");
  return {f.grid_col, f.offset + off, w};
}

bool overlaps(const Field& a, const Field& b) {
  return a.grid_col == b.grid_col && a.offset < b.offset + b.width &&
         b.offset < a.offset + a.width;
}

void check_disjoint(const Field& a, const Field& b, const char* what) {
  if (overlaps(a, b)) throw parameter_error(std::string("field overlap: ") + what);
}

GridOp rowop(PimOpcode op, std::size_t col, unsigned a, unsigned b, unsigned out) {
  GridOp g;
  g.instr.opcode = op;
  g.instr.addr_a = (std::uint16_t)a;
  g.instr.addr_b = (std::uint16_t)b;
  g.instr.addr_out = (std::uint16_t)out;
  g.instr.orientation = Orientation::Row;
  g.col = col;
  return g;
}

GridOp colop(PimOpcode op, unsigned row_a, unsigned row_out) {
  GridOp g;
  g.instr.opcode = op;
  g.instr.addr_a = (std::uint16_t)row_a;
  g.instr.addr_out = (std::uint16_t)row_out;
  g.instr.orientation = Orientation::Column;
  g.col = 0;
  return g;
}

GridOp interop(std::size_t left_col, unsigned a, unsigned out) {
  GridOp g;
  g.instr.opcode = PimOpcode::NOT;
  g.instr.addr_a = (std::uint16_t)a;
  g.instr.addr_out = (std::uint16_t)out;
  g.instr.orientation = Orientation::Row;
  g.inter = true;
  g.left_col = left_col;
  return g;
}

unsigned bit(const Field& f, std::size_t k) { return (unsigned)(f.offset + k); }

// 9-NAND full adder on single bit addresses within one grid column.
// temps needs >= 6 scratch bits; sum lands in temps[5] so the destination
// may alias an input, caller copies it out.
void full_adder(Emitter& e, std::size_t col, unsigned a, unsigned b, unsigned cin,
                unsigned cout, const Field& temps) {
  unsigned t1 = bit(temps, 0), t2 = bit(temps, 1), t3 = bit(temps, 2),
           t4 = bit(temps, 3), t5 = bit(temps, 4), s = bit(temps, 5);
  auto nand = [&](unsigned p, unsigned q, unsigned out) {
    e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, out));
    e.emit(rowop(PimOpcode::NAND, col, p, q, out));
  };
  nand(a, b, t1);
  nand(a, t1, t2);
  nand(b, t1, t3);
  nand(t2, t3, t4);  // a xor b
  nand(t4, cin, t2);
  nand(t4, t2, t3);
  nand(cin, t2, t5);
  nand(t3, t5, s);   // sum
  nand(t2, t1, cout);
}

void copy_bit(Emitter& e, std::size_t col, unsigned src, unsigned dst) {
  e.emit(rowop(PimOpcode::PRESET1, col, 0, 0, dst));
  e.emit(rowop(PimOpcode::AND, col, src, src, dst));
}

// dst += src << shift, rippling the carry to the top of dst.
// scr: bit 0 = constant zero, 1..2 = carry pair, 3.. = adder temps.
void add_into(Emitter& e, const Field& dst, const Field& src, std::size_t shift,
              const Field& scr) {
  std::size_t col = dst.grid_col;
  unsigned zero = bit(scr, 0);
  unsigned carry[2] = {bit(scr, 1), bit(scr, 2)};
  Field temps = sub(scr, 3, 6);
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, zero));
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, carry[0]));
  for (std::size_t k = shift; k < dst.width; ++k) {
    unsigned sbit = k - shift < src.width ? bit(src, k - shift) : zero;
    full_adder(e, col, bit(dst, k), sbit, carry[k & 1], carry[(k + 1) & 1], temps);
    copy_bit(e, col, bit(temps, 5), bit(dst, k));
  }
}

// writes q's bit pattern into dst via presets
void materialize_const(Emitter& e, u64 c, const Field& dst) {
  for (std::size_t k = 0; k < dst.width; ++k) {
    e.emit(rowop(((c >> k) & 1) ? PimOpcode::PRESET1 : PimOpcode::PRESET0,
                 dst.grid_col, 0, 0, bit(dst, k)));
  }
}

}  // namespace

void lower_zero(Emitter& e, const Field& dst) {
  for (std::size_t k = 0; k < dst.width; ++k) {
    e.emit(rowop(PimOpcode::PRESET0, dst.grid_col, 0, 0, bit(dst, k)));
  }
}

void lower_copy(Emitter& e, const Field& src, const Field& dst) {
  check_disjoint(src, dst, "copy");
  std::size_t w = std::min(src.width, dst.width);
  for (std::size_t k = 0; k < w; ++k) copy_bit(e, src.grid_col, bit(src, k), bit(dst, k));
  for (std::size_t k = w; k < dst.width; ++k) {
    e.emit(rowop(PimOpcode::PRESET0, dst.grid_col, 0, 0, bit(dst, k)));
  }
}

void lower_add(Emitter& e, const Field& a, const Field& b, const Field& dst,
               const Field& scratch) {
  check_disjoint(a, dst, "add a/dst");
  check_disjoint(b, dst, "add b/dst");
  check_disjoint(dst, scratch, "add dst/scratch");
  std::size_t col = dst.grid_col;
  unsigned zero = bit(scratch, 0);
  unsigned carry[2] = {bit(scratch, 1), bit(scratch, 2)};
  Field temps = sub(scratch, 3, 6);
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, zero));
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, carry[0]));
  for (std::size_t k = 0; k < dst.width; ++k) {
    unsigned abit = k < a.width ? bit(a, k) : zero;
    unsigned bbit = k < b.width ? bit(b, k) : zero;
    full_adder(e, col, abit, bbit, carry[k & 1], carry[(k + 1) & 1], temps);
    copy_bit(e, col, bit(temps, 5), bit(dst, k));
  }
}

void lower_sub(Emitter& e, const Field& a, const Field& b, const Field& dst,
               const Field& scratch) {
  check_disjoint(a, dst, "sub a/dst");
  check_disjoint(b, dst, "sub b/dst");
  check_disjoint(dst, scratch, "sub dst/scratch");
  if (dst.width < 2) throw parameter_error("sub needs a borrow bit on top");
  std::size_t col = dst.grid_col;
  std::size_t vw = dst.width - 1;  // value bits; top bit is the borrow
  unsigned zero = bit(scratch, 0);
  unsigned one = bit(scratch, 1);
  unsigned carry[2] = {bit(scratch, 2), bit(scratch, 3)};
  unsigned nb = bit(scratch, 4);
  Field temps = sub(scratch, 5, 6);
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, zero));
  e.emit(rowop(PimOpcode::PRESET1, col, 0, 0, one));
  e.emit(rowop(PimOpcode::PRESET1, col, 0, 0, carry[0]));  // a + ~b + 1
  for (std::size_t k = 0; k < vw; ++k) {
    unsigned abit = k < a.width ? bit(a, k) : zero;
    if (k < b.width) {
      e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, nb));
      e.emit(rowop(PimOpcode::NOT, col, bit(b, k), 0, nb));
    }
    unsigned bbit = k < b.width ? nb : one;
    full_adder(e, col, abit, bbit, carry[k & 1], carry[(k + 1) & 1], temps);
    copy_bit(e, col, bit(temps, 5), bit(dst, k));
  }
  // borrow = !carry_out
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, bit(dst, vw)));
  e.emit(rowop(PimOpcode::NOT, col, carry[vw & 1], 0, bit(dst, vw)));
}

void lower_mux(Emitter& e, std::size_t sel_addr, const Field& a, const Field& b,
               const Field& dst, const Field& scratch) {
  std::size_t col = dst.grid_col;
  unsigned nsel = bit(scratch, 0), t1 = bit(scratch, 1), t2 = bit(scratch, 2),
           t3 = bit(scratch, 3);
  e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, nsel));
  e.emit(rowop(PimOpcode::NOT, col, (unsigned)sel_addr, 0, nsel));
  for (std::size_t k = 0; k < dst.width; ++k) {
    e.emit(rowop(PimOpcode::PRESET1, col, 0, 0, t1));
    e.emit(rowop(PimOpcode::AND, col, (unsigned)sel_addr, bit(a, k), t1));
    e.emit(rowop(PimOpcode::PRESET1, col, 0, 0, t2));
    e.emit(rowop(PimOpcode::AND, col, nsel, bit(b, k), t2));
    // t1 | t2 with monotone gates: NOR into t3, invert into dst
    e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, t3));
    e.emit(rowop(PimOpcode::NOR, col, t1, t2, t3));
    e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, bit(dst, k)));
    e.emit(rowop(PimOpcode::NOT, col, t3, 0, bit(dst, k)));
  }
}

void lower_mult(Emitter& e, const Field& a, const Field& b, const Field& dst,
                const Field& scratch) {
  check_disjoint(a, dst, "mult a/dst");
  check_disjoint(b, dst, "mult b/dst");
  if (dst.width < a.width + b.width) throw capacity_error("product field too narrow");
  Field m = sub(scratch, 0, a.width);
  Field rest = sub(scratch, a.width, scratch.width - a.width);
  lower_zero(e, dst);
  for (std::size_t j = 0; j < b.width; ++j) {
    for (std::size_t k = 0; k < a.width; ++k) {
      e.emit(rowop(PimOpcode::PRESET1, a.grid_col, 0, 0, bit(m, k)));
      e.emit(rowop(PimOpcode::AND, a.grid_col, bit(a, k), bit(b, j), bit(m, k)));
    }
    add_into(e, dst, m, j, rest);
  }
}

void lower_mult_const(Emitter& e, u64 c, const Field& src, const Field& dst,
                      const Field& scratch) {
  check_disjoint(src, dst, "mult_const src/dst");
  lower_zero(e, dst);
  for (unsigned b = 0; b < 64; ++b) {
    if ((c >> b) & 1) add_into(e, dst, src, b, scratch);
  }
}

void lower_mult_scalar(Emitter& e, unsigned k, const Field& src, const Field& dst,
                       const Field& scratch) {
  if (k > 7) throw parameter_error("scalar constants are 3-bit");
  lower_mult_const(e, k, src, dst, scratch);
}

void lower_mod_reduce(Emitter& e, const ShiftAddSchedule& sched, const Field& src,
                      const Field& dst, const Field& scratch) {
  std::size_t w = dst.width;
  unsigned m_top = sched.m_bits.back();
  std::size_t t1w = src.width + m_top + 2;
  Field t1 = sub(scratch, 0, t1w);
  Field qh = sub(scratch, t1w, w + 2);
  Field qc = sub(scratch, t1w + w + 2, w);
  Field rw = sub(scratch, t1w + 2 * w + 2, w + 2);
  Field ew = sub(scratch, t1w + 3 * w + 4, w + 2);
  Field temps = sub(scratch, t1w + 4 * w + 6, 12);
  std::size_t col = dst.grid_col;

  // quotient estimate: (src * m) >> shift, shifts are free (bit offsets)
  lower_zero(e, t1);
  for (unsigned b : sched.m_bits) add_into(e, t1, src, b, temps);
  for (std::size_t k = 0; k < qh.width; ++k) {
    std::size_t from = sched.shift + k;
    if (from < t1.width) {
      copy_bit(e, col, bit(t1, from), bit(qh, k));
    } else {
      e.emit(rowop(PimOpcode::PRESET0, col, 0, 0, bit(qh, k)));
    }
  }
  // t1 reused as qhat * q
  Field t2 = sub(t1, 0, std::min(t1w, 2 * w + 3));
  lower_zero(e, t2);
  for (unsigned b : sched.q_bits) add_into(e, t2, qh, b, temps);
  // r = src - qhat*q, in [0, 2q)
  lower_sub(e, src, t2, rw, temps);
  // single correction: dst = r >= q ? r - q : r
  materialize_const(e, sched.q, qc);
  lower_sub(e, rw, qc, ew, temps);
  lower_mux(e, bit(ew, ew.width - 1), sub(rw, 0, w), sub(ew, 0, w), dst, temps);
}

namespace {

// dst = (a + b) mod q; dst may alias a or b (written only by the final mux)
void lower_mod_add(Emitter& e, u64 q, const Field& a, const Field& b,
                   const Field& dst, const Field& scratch) {
  std::size_t w = dst.width;
  Field s = sub(scratch, 0, w + 1);
  Field qc = sub(scratch, w + 1, w);
  Field d = sub(scratch, 2 * w + 1, w + 3);
  Field temps = sub(scratch, 3 * w + 4, 12);
  lower_add(e, a, b, s, temps);
  materialize_const(e, q, qc);
  lower_sub(e, s, qc, d, temps);
  // borrow set -> s < q -> keep s
  lower_mux(e, bit(d, d.width - 1), sub(s, 0, w), sub(d, 0, w), dst, temps);
}

// dst = (a - b) mod q; dst may alias a or b
void lower_mod_sub(Emitter& e, u64 q, const Field& a, const Field& b,
                   const Field& dst, const Field& scratch) {
  std::size_t w = dst.width;
  Field d = sub(scratch, 0, w + 1);
  Field qc = sub(scratch, w + 1, w);
  Field s = sub(scratch, 2 * w + 1, w + 1);
  Field temps = sub(scratch, 3 * w + 2, 12);
  lower_sub(e, a, b, d, temps);
  materialize_const(e, q, qc);
  lower_add(e, sub(d, 0, w), qc, s, temps);  // (a-b)+q mod 2^w
  lower_mux(e, bit(d, w), sub(s, 0, w), sub(d, 0, w), dst, temps);
}

// swap the T fields of butterfly partner rows through the two scratch rows
void emit_pair_swap(Emitter& e, std::size_t r1, std::size_t r2) {
  e.emit(colop(PimOpcode::PRESET0, 0, kScratchRowA));
  e.emit(colop(PimOpcode::NOT, (unsigned)r1, kScratchRowA));
  e.emit(colop(PimOpcode::PRESET0, 0, kScratchRowB));
  e.emit(colop(PimOpcode::NOT, (unsigned)r2, kScratchRowB));
  e.emit(colop(PimOpcode::PRESET0, 0, (unsigned)r1));
  e.emit(colop(PimOpcode::NOT, kScratchRowB, (unsigned)r1));
  e.emit(colop(PimOpcode::PRESET0, 0, (unsigned)r2));
  e.emit(colop(PimOpcode::NOT, kScratchRowA, (unsigned)r2));
}

void emit_stage_swaps(Emitter& e, const LayoutPlan& layout, std::size_t stride) {
  if (layout.arrays_used == 1) {
    for (std::size_t r = 0; r < layout.n; ++r) {
      if ((r & stride) == 0) emit_pair_swap(e, r, r + stride);
    }
  } else {
    // counting mode: partner exchange is shared across the array-rows of
    // the grid column; one swap sequence per local pair
    for (std::size_t p = 0; p < layout.rows_per_array / 2; ++p) {
      emit_pair_swap(e, 2 * p, 2 * p + 1);
    }
  }
}

// copy a per-stage twiddle slot from its storage column into the working
// TW field of column 0, hopping through the links
void emit_twiddle_load(Emitter& e, const LayoutPlan& layout, const Field& slot,
                       const Field& tw, const Field& scr) {
  unsigned hop = bit(scr, 0);
  for (std::size_t k = 0; k < tw.width; ++k) {
    unsigned src = bit(slot, k);
    if (slot.grid_col == 2) {
      const Field& s1 = layout.at("S1");
      e.emit(rowop(PimOpcode::PRESET0, 1, 0, 0, bit(s1, k)));
      e.emit(interop(1, 512 + src, bit(s1, k)));  // s1 = !slot
      e.emit(rowop(PimOpcode::PRESET0, 0, 0, 0, hop));
      e.emit(interop(0, 512 + bit(s1, k), hop));  // hop = slot
      copy_bit(e, 0, hop, bit(tw, k));
    } else {
      e.emit(rowop(PimOpcode::PRESET0, 0, 0, 0, hop));
      e.emit(interop(0, 512 + src, hop));  // hop = !slot
      e.emit(rowop(PimOpcode::PRESET0, 0, 0, 0, bit(tw, k)));
      e.emit(rowop(PimOpcode::NOT, 0, hop, 0, bit(tw, k)));
    }
  }
}

}  // namespace

Workload parse_workload(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& ex) {
    throw parameter_error(std::string("workload json: ") + ex.what());
  }
  Workload w;
  std::string kind = j.value("kind", "poly_mult");
  if (kind == "poly_mult") {
    w.kind = WorkloadKind::PolyMult;
  } else if (kind == "svm_linear") {
    w.kind = WorkloadKind::SvmLinear;
  } else if (kind == "ntt") {
    w.kind = WorkloadKind::Ntt;
  } else {
    throw parameter_error("unknown workload kind: " + kind);
  }
  w.n = j.at("n").get<std::size_t>();
  w.bitwidth = j.at("bitwidth").get<unsigned>();
  w.prime_count = j.value("prime_count", 1);
  w.parts = j.value("parts", 2);
  w.svm_dimension = j.value("svm_dimension", 0);
  return w;
}

const Field& LayoutPlan::at(const std::string& name) const {
  auto it = fields.find(name);
  if (it == fields.end()) throw parameter_error("layout has no field " + name);
  return it->second;
}

LayoutPlan plan_layout(const Workload& w) {
  if (!is_power_of_two(w.n)) throw parameter_error("N must be a power of two");
  LayoutPlan lp;
  lp.n = w.n;
  lp.width = w.bitwidth;
  lp.stages = log2_exact(w.n);
  if (w.n <= kUsableRows) {
    lp.rows_per_array = w.n;
    lp.arrays_used = 1;
  } else {
    lp.rows_per_array = (w.n + kGridRows - 1) / kGridRows;
    lp.arrays_used = kGridRows;
    if (lp.rows_per_array > kUsableRows) {
      throw capacity_error("N exceeds " + std::to_string(kGridRows * kUsableRows) +
                           " grid rows");
    }
  }
  std::size_t wd = lp.width;
  // worst case is reducing a 2w+2 bit product: t1 plus four working fields
  std::size_t scr_w = 7 * wd + 24;
  std::array<std::size_t, kGridCols> used{};
  auto place = [&](const std::string& name, std::size_t col, std::size_t width) {
    lp.fields[name] = {col, used[col], width};
    used[col] += width;
    if (used[col] > kUsableCols) {
      throw capacity_error("grid column " + std::to_string(col) + " needs " +
                           std::to_string(used[col]) + " bits, usable " +
                           std::to_string(kUsableCols));
    }
  };

  if (w.kind == WorkloadKind::SvmLinear) {
    place("A", 0, wd);
    place("V", 0, wd);
    place("P", 0, 2 * wd + 2);
    for (std::size_t p = 0; p < w.parts; ++p) place("ACC" + std::to_string(p), 0, wd);
    place("XS", 0, 3 * w.svm_dimension);
    place("SCR", 0, scr_w);
    for (std::size_t d = 0; d < w.svm_dimension; ++d) {
      for (std::size_t p = 0; p < w.parts; ++p) {
        place("CT" + std::to_string(d) + "_" + std::to_string(p), 1, wd);
      }
    }
    lp.ciphertext_bits = 2 * w.parts * w.prime_count * wd;
  } else {
    place("A", 0, wd);
    if (w.kind == WorkloadKind::PolyMult) place("B", 0, wd);
    place("TW", 0, wd);
    place("T", 0, wd);
    place("V", 0, wd);
    place("P", 0, 2 * wd + 2);
    place("FLAG", 0, lp.stages);
    place("SCR", 0, scr_w);
    for (std::size_t s = 0; s < lp.stages; ++s) place("TWS" + std::to_string(s), 1, wd);
    place("S1", 1, wd);
    if (w.kind == WorkloadKind::PolyMult) {
      for (std::size_t s = 0; s < lp.stages; ++s) {
        place("TWSI" + std::to_string(s), 2, wd);
      }
    }
    lp.ciphertext_bits = 2 * w.parts * w.prime_count * wd;
    lp.twiddle_bits = lp.stages * wd;
  }
  return lp;
}

void CountingEmitter::emit(const GridOp& op) {
  ++count_;
  std::size_t fanin = 0;
  switch (op.instr.opcode) {
    case PimOpcode::NOT: fanin = 1; break;
    case PimOpcode::AND:
    case PimOpcode::NAND:
    case PimOpcode::OR:
    case PimOpcode::NOR: fanin = 2; break;
    default: fanin = 0; break;
  }
  std::size_t lines =
      op.instr.orientation == Orientation::Row ? row_lines_ : col_lines_;
  energy_j_ += instruction_energy(op.instr.opcode, fanin, lines, env_.mtj, env_.peri);
}

void lower_ntt(Emitter& e, const LayoutPlan& layout, const NttTables& tables,
               bool inverse, const std::string& value_field, Program* sink) {
  const Field& a = layout.at(value_field);
  const Field& tw = layout.at("TW");
  const Field& t = layout.at("T");
  const Field& v = layout.at("V");
  const Field& p = layout.at("P");
  const Field& flag = layout.at("FLAG");
  const Field& scr = layout.at("SCR");
  std::size_t n = layout.n;
  std::size_t w = layout.width;
  auto sched = make_reduce_schedule(tables.q, (unsigned)w);
  // r1/r2 share the tail of the scratch region with the reduction's rw/ew
  // fields; reduction and the butterfly add/sub never overlap in time, and
  // mod_add/mod_sub/mux only touch the first 3w+16 scratch bits
  Field r1 = sub(scr, scr.width - 2 * w, w);
  Field r2 = sub(scr, scr.width - w, w);
  const Field& rest = scr;

  for (std::size_t s = 0; s < layout.stages; ++s) {
    std::size_t stride = inverse ? ((std::size_t)1 << s) : (n >> (s + 1));
    std::size_t groups = n / (2 * stride);
    std::string slot_name = (inverse ? "TWSI" : "TWS") + std::to_string(s);
    const Field& slot = layout.at(slot_name);
    if (sink && !sink->row_constants.count(slot_name)) {
      std::vector<u64> vals(n, 1);
      for (std::size_t r = 0; r < n; ++r) {
        if (r & stride) {  // bottom rows carry the stage factor, top rows 1
          std::size_t group = r >> (log2_exact(stride) + 1);
          vals[r] = inverse ? tables.inv_twiddles[groups + group]
                            : tables.twiddles[groups + group];
        }
      }
      sink->row_constants[slot_name] = std::move(vals);
    }
    std::size_t sel = flag.offset + log2_exact(stride);  // 1 on bottom rows

    if (!inverse) {
      emit_twiddle_load(e, layout, slot, tw, rest);
      lower_mult(e, a, tw, p, rest);       // v = a * tw mod q, tw = 1 on tops
      lower_mod_reduce(e, sched, p, v, rest);
      lower_copy(e, v, t);
      emit_stage_swaps(e, layout, stride);
      lower_mod_add(e, tables.q, v, t, r1, rest);
      lower_mod_sub(e, tables.q, t, v, r2, rest);
      lower_mux(e, sel, r2, r1, a, rest);  // bottoms take u - v
    } else {
      lower_copy(e, a, t);
      emit_stage_swaps(e, layout, stride);
      lower_mod_add(e, tables.q, a, t, r1, rest);
      lower_mod_sub(e, tables.q, t, a, r2, rest);
      lower_mux(e, sel, r2, r1, v, rest);
      emit_twiddle_load(e, layout, slot, tw, rest);
      lower_mult(e, v, tw, p, rest);       // bottoms: (u - v) * w~, tops: * 1
      lower_mod_reduce(e, sched, p, a, rest);
    }
  }
  if (inverse) {
    lower_mult_const(e, tables.n_inv, a, p, rest);
    lower_mod_reduce(e, sched, p, v, rest);
    lower_copy(e, v, a);
  }
}

namespace {

void fill_flags(Program& prog) {
  std::vector<u64> vals(prog.layout.n);
  for (std::size_t r = 0; r < prog.layout.n; ++r) vals[r] = r;
  prog.row_constants["FLAG"] = std::move(vals);
}

}  // namespace

Program compile_poly_mult(std::size_t n, unsigned bitwidth) {
  Workload w{WorkloadKind::PolyMult, n, bitwidth, 1, 2, 0};
  Program prog;
  prog.layout = plan_layout(w);
  prog.q = find_ntt_primes(bitwidth, 1, 2 * n)[0];
  auto tables = build_tables(prog.q, n);
  fill_flags(prog);
  VectorEmitter ve;
  lower_ntt(ve, prog.layout, tables, false, "A", &prog);
  lower_ntt(ve, prog.layout, tables, false, "B", &prog);
  // pointwise product in the NTT domain
  auto sched = make_reduce_schedule(prog.q, bitwidth);
  const Field& scr = prog.layout.at("SCR");
  lower_mult(ve, prog.layout.at("A"), prog.layout.at("B"), prog.layout.at("P"), scr);
  lower_mod_reduce(ve, sched, prog.layout.at("P"), prog.layout.at("V"), scr);
  lower_copy(ve, prog.layout.at("V"), prog.layout.at("A"));
  lower_ntt(ve, prog.layout, tables, true, "A", &prog);
  prog.ops = std::move(ve.ops);
  prog.input_fields = {"A", "B"};
  prog.output_fields = {"A"};
  prog.output_rows = n;
  return prog;
}

Program compile_ntt(std::size_t n, unsigned bitwidth, bool inverse) {
  Workload w{WorkloadKind::Ntt, n, bitwidth, 1, 2, 0};
  Program prog;
  prog.layout = plan_layout(w);
  prog.q = find_ntt_primes(bitwidth, 1, 2 * n)[0];
  auto tables = build_tables(prog.q, n);
  fill_flags(prog);
  VectorEmitter ve;
  // a standalone inverse program needs the inverse slots in column 1
  if (inverse) {
    for (std::size_t s = 0; s < prog.layout.stages; ++s) {
      auto f = prog.layout.fields.find("TWS" + std::to_string(s));
      prog.layout.fields["TWSI" + std::to_string(s)] = f->second;
    }
  }
  lower_ntt(ve, prog.layout, tables, inverse, "A", &prog);
  prog.ops = std::move(ve.ops);
  prog.input_fields = {"A"};
  prog.output_fields = {"A"};
  prog.output_rows = n;
  return prog;
}

Program compile_svm_linear(const SvmModel& model, const EncryptionParams& params,
                           std::span<const u64> x) {
  if (params.primes.size() != 1) {
    throw capacity_error("grid svm programs take single-prime parameters");
  }
  if (x.size() != model.dimension) {
    throw parameter_error("input dimension mismatch");
  }
  Workload w{WorkloadKind::SvmLinear, params.n, params.prime_bits, 1, 2,
             model.dimension};
  Program prog;
  prog.layout = plan_layout(w);
  prog.q = params.primes[0];
  auto sched = make_reduce_schedule(prog.q, params.prime_bits);
  const Field& a = prog.layout.at("A");
  const Field& v = prog.layout.at("V");
  const Field& p = prog.layout.at("P");
  const Field& xs = prog.layout.at("XS");
  const Field& scr = prog.layout.at("SCR");
  Field rest = sub(scr, 0, scr.width);

  u64 packed_x = 0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (x[d] > 7) throw parameter_error("inputs are 3-bit");
    packed_x |= x[d] << (3 * d);
  }
  prog.row_constants["XS"] = std::vector<u64>(params.n, packed_x);

  VectorEmitter ve;
  for (std::size_t part = 0; part < 2; ++part) {
    lower_zero(ve, prog.layout.at("ACC" + std::to_string(part)));
  }
  unsigned hop = bit(scr, scr.width - 1);
  for (std::size_t d = 0; d < model.dimension; ++d) {
    for (std::size_t part = 0; part < 2; ++part) {
      const Field& ct =
          prog.layout.at("CT" + std::to_string(d) + "_" + std::to_string(part));
      // pull the stored residue through the link into the working field
      for (std::size_t k = 0; k < a.width; ++k) {
        ve.emit(rowop(PimOpcode::PRESET0, 0, 0, 0, hop));
        ve.emit(interop(0, 512 + bit(ct, k), hop));
        ve.emit(rowop(PimOpcode::PRESET0, 0, 0, 0, bit(a, k)));
        ve.emit(rowop(PimOpcode::NOT, 0, hop, 0, bit(a, k)));
      }
      lower_mult(ve, a, sub(xs, 3 * d, 3), p, rest);
      lower_mod_reduce(ve, sched, p, v, rest);
      const Field& acc = prog.layout.at("ACC" + std::to_string(part));
      lower_mod_add(ve, prog.q, acc, v, acc, rest);
    }
  }
  prog.ops = std::move(ve.ops);
  for (std::size_t d = 0; d < model.dimension; ++d) {
    for (std::size_t part = 0; part < 2; ++part) {
      prog.input_fields.push_back("CT" + std::to_string(d) + "_" +
                                  std::to_string(part));
    }
  }
  prog.output_fields = {"ACC0", "ACC1"};
  prog.output_rows = params.n;
  return prog;
}

ProgramCost count_poly_mult(std::size_t n, unsigned bitwidth, const PimEnv& env) {
  Workload w{WorkloadKind::PolyMult, n, bitwidth, 1, 2, 0};
  auto layout = plan_layout(w);
  u64 q = find_ntt_primes(bitwidth, 1, 2 * n)[0];
  auto tables = build_tables(q, n);
  CountingEmitter ce(n, layout.width * layout.arrays_used, env);
  lower_ntt(ce, layout, tables, false, "A", nullptr);
  lower_ntt(ce, layout, tables, false, "B", nullptr);
  auto sched = make_reduce_schedule(q, bitwidth);
  const Field& scr = layout.at("SCR");
  lower_mult(ce, layout.at("A"), layout.at("B"), layout.at("P"), scr);
  lower_mod_reduce(ce, sched, layout.at("P"), layout.at("V"), scr);
  lower_copy(ce, layout.at("V"), layout.at("A"));
  lower_ntt(ce, layout, tables, true, "A", nullptr);
  return {ce.count(), ce.energy_j(), ce.latency_s()};
}

std::vector<std::vector<std::string>> Program::listings() const {
  std::vector<std::vector<std::string>> streams(kGridCols);
  const std::string pad = "PRESET0 0 0 509 C";  // scratch-row no-op
  for (const auto& op : ops) {
    std::string line = op.instr.listing();
    for (std::size_t c = 0; c < kGridCols; ++c) {
      bool mine = op.inter ? (c == op.left_col || c == op.left_col + 1) : (c == op.col);
      streams[c].push_back(mine ? line : pad);
    }
  }
  return streams;
}

ArrayGrid setup_grid(const Program& prog) {
  ArrayGrid g;
  const LayoutPlan& lp = prog.layout;
  std::bitset<kArraySize> col_mask;
  if (auto it = lp.fields.find("T"); it != lp.fields.end()) {
    for (std::size_t k = 0; k < it->second.width; ++k) {
      col_mask[it->second.offset + k] = true;
    }
  }
  for (std::size_t ar = 0; ar < lp.arrays_used; ++ar) {
    std::size_t first = ar * lp.rows_per_array;
    std::size_t rows = first < lp.n ? std::min(lp.rows_per_array, lp.n - first) : 0;
    std::bitset<kArraySize> row_mask;
    for (std::size_t r = 0; r < rows; ++r) row_mask[r] = true;
    for (std::size_t gc = 0; gc < kGridCols; ++gc) {
      ComputeArray& a = g.at(ar, gc);
      update_bitmask(a, Orientation::Row, row_mask);
      update_bitmask(a, Orientation::Column, col_mask);
      PimInstruction act;
      act.opcode = PimOpcode::ACTIVATE;
      act.orientation = Orientation::Row;
      exec_gate(a, act, env_modern());
      act.orientation = Orientation::Column;
      exec_gate(a, act, env_modern());
    }
  }
  ArrayGrid* gp = &g;
  for (const auto& [name, vals] : prog.row_constants) {
    load_field(*gp, prog, name, vals);
  }
  return g;
}

void load_field(ArrayGrid& g, const Program& prog, const std::string& field,
                std::span<const u64> per_row_values) {
  const Field& f = prog.layout.at(field);
  if (per_row_values.size() > prog.layout.n) {
    throw parameter_error("more values than rows");
  }
  for (std::size_t r = 0; r < per_row_values.size(); ++r) {
    std::size_t ar = r / prog.layout.rows_per_array;
    std::size_t lr = r % prog.layout.rows_per_array;
    auto& cells = g.at(ar, f.grid_col).cells[lr];
    for (std::size_t k = 0; k < f.width && k < 64; ++k) {
      cells[f.offset + k] = (per_row_values[r] >> k) & 1;
    }
  }
}

void run_program(const Program& prog, ArrayGrid& g, const PimEnv& env,
                 EnergyLedger* ledger) {
  for (const auto& op : prog.ops) {
    for (std::size_t ar = 0; ar < prog.layout.arrays_used; ++ar) {
      if (op.inter) {
        inter_array_gate(g, ar, op.left_col, op.instr, env, ledger);
      } else {
        exec_gate(g.at(ar, op.col), op.instr, env, ledger);
      }
    }
  }
}

std::vector<u64> read_field(const ArrayGrid& g, const Program& prog,
                            const std::string& field, std::size_t rows,
                            const PimEnv& env, EnergyLedger* ledger) {
  const Field& f = prog.layout.at(field);
  if (f.grid_col != 0) throw parameter_error("output fields live in grid column 0");
  std::vector<u64> out;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ar = r / prog.layout.rows_per_array;
    std::size_t lr = r % prog.layout.rows_per_array;
    auto bits = read_bits(g, ar, 0, lr, f.offset, f.offset + f.width, env, ledger);
    u64 v = 0;
    for (std::size_t k = 0; k < bits.size(); ++k) v |= (u64)bits[k] << k;
    out.push_back(v);
  }
  return out;
}

VerifyReport verify_program(const Program& prog,
                            const std::vector<std::vector<u64>>& inputs,
                            std::span<const u64> expected, const PimEnv& env) {
  VerifyReport rep;
  if (inputs.size() != prog.input_fields.size()) {
    rep.detail = "input count mismatch";
    return rep;
  }
  ArrayGrid g = setup_grid(prog);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    load_field(g, prog, prog.input_fields[i], inputs[i]);
  }
  run_program(prog, g, env);
  std::size_t at = 0;
  for (const auto& name : prog.output_fields) {
    auto got = read_field(g, prog, name, prog.output_rows, env);
    for (std::size_t r = 0; r < got.size(); ++r, ++at) {
      if (at >= expected.size()) {
        rep.detail = "expected output too short";
        return rep;
      }
      if (got[r] != expected[at]) {
        rep.first_bad_row = at;
        rep.got = got[r];
        rep.want = expected[at];
        rep.detail = "field " + name + " row " + std::to_string(r);
        return rep;
      }
    }
  }
  rep.pass = at == expected.size();
  if (!rep.pass) rep.detail = "expected output too long";
  return rep;
}

}  // namespace rat
