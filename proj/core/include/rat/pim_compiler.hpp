// Lowers RNS-BFV linear operations and NTT-based polynomial
// multiplication onto instruction streams for the array grid, with a
// layout planner, a counting mode for paper-scale workloads, and a
// functional verifier.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "rat/bfv.hpp"
#include "rat/pim.hpp"
#include "rat/svm.hpp"

namespace rat {

// A named bit field inside every active row of one grid column's arrays.
struct Field {
  std::size_t grid_col = 0;
  std::size_t offset = 0;  // first column address
  std::size_t width = 0;
};

enum class WorkloadKind { PolyMult, SvmLinear, Ntt };

struct Workload {
  WorkloadKind kind = WorkloadKind::PolyMult;
  std::size_t n = 0;
  unsigned bitwidth = 0;       // residue width
  std::size_t prime_count = 1;
  std::size_t parts = 2;       // ciphertext polynomials (SvmLinear)
  std::size_t svm_dimension = 0;
};

Workload parse_workload(const std::string& json_text);

struct LayoutPlan {
  std::map<std::string, Field> fields;
  std::size_t n = 0;
  unsigned width = 0;           // working residue width
  std::size_t stages = 0;       // log2(n)
  std::size_t rows_per_array = 0;
  std::size_t arrays_used = 0;  // array-rows of the grid in use
  std::size_t ciphertext_bits = 0;  // residue storage incl. working copy
  std::size_t twiddle_bits = 0;     // per-stage twiddle slots

  const Field& at(const std::string& name) const;
};

// Deterministic placement; throws capacity_error naming the violated bound.
LayoutPlan plan_layout(const Workload& w);

// One step of every driver column; `inter` ops span grid columns left_col
// and left_col + 1 through the link.
struct GridOp {
  PimInstruction instr;
  std::size_t col = 0;  // executing driver column for plain ops
  bool inter = false;
  std::size_t left_col = 0;
};

struct Program {
  std::vector<GridOp> ops;
  LayoutPlan layout;
  u64 q = 0;
  // per-row constants loaded into fields at setup time (twiddle slots,
  // stage flags, reduction constants)
  std::map<std::string, std::vector<u64>> row_constants;
  std::vector<std::string> input_fields;   // caller-loaded, row-major values
  std::vector<std::string> output_fields;
  std::size_t output_rows = 0;

  // per-driver-column streams of equal length, pim_arch listing format,
  // padded with scratch-row presets
  std::vector<std::vector<std::string>> listings() const;
};

// Emission target; lowering routines are generation-agnostic so the same
// code path serves executable programs and paper-scale counting.
class Emitter {
 public:
  virtual ~Emitter() = default;
  virtual void emit(const GridOp& op) = 0;
};

class VectorEmitter : public Emitter {
 public:
  void emit(const GridOp& op) override { ops.push_back(op); }
  std::vector<GridOp> ops;
};

// Tallies counts and energy without materializing instructions.
// `row_lines` is the number of active rows per row-parallel instruction
// (summed over participating arrays), `col_lines` the active columns per
// column-parallel instruction.
class CountingEmitter : public Emitter {
 public:
  CountingEmitter(std::size_t row_lines, std::size_t col_lines, PimEnv env)
      : row_lines_(row_lines), col_lines_(col_lines), env_(std::move(env)) {}
  void emit(const GridOp& op) override;
  u64 count() const { return count_; }
  double energy_j() const { return energy_j_; }
  double latency_s() const { return (double)count_ * env_.clock_period; }

 private:
  std::size_t row_lines_, col_lines_;
  PimEnv env_;
  u64 count_ = 0;
  double energy_j_ = 0;
};

// Row-parallel primitives.  All operate on fields of the same grid column
// within each active row; scratch is a caller-designated field.
void lower_copy(Emitter& e, const Field& src, const Field& dst);
void lower_zero(Emitter& e, const Field& dst);
void lower_add(Emitter& e, const Field& a, const Field& b, const Field& dst,
               const Field& scratch);
void lower_sub(Emitter& e, const Field& a, const Field& b, const Field& dst,
               const Field& scratch);  // dst also gets borrow bit on top
void lower_mult_scalar(Emitter& e, unsigned k, const Field& src,
                       const Field& dst, const Field& scratch);
void lower_mult(Emitter& e, const Field& a, const Field& b, const Field& dst,
                const Field& scratch);
void lower_mult_const(Emitter& e, u64 c, const Field& src, const Field& dst,
                      const Field& scratch);
// mux on a per-row select bit: dst = sel ? a : b
void lower_mux(Emitter& e, std::size_t sel_addr, const Field& a,
               const Field& b, const Field& dst, const Field& scratch);
// Barrett shift-add reduction of src (< q^2) into dst (width q_bits)
void lower_mod_reduce(Emitter& e, const ShiftAddSchedule& sched,
                      const Field& src, const Field& dst, const Field& scratch);

// Full NTT over the coefficient-per-row layout; matches ntt_engine's
// forward (natural in, bit-reversed out) and inverse conventions.
void lower_ntt(Emitter& e, const LayoutPlan& layout, const NttTables& tables,
               bool inverse, const std::string& value_field,
               Program* constants_sink);

Program compile_poly_mult(std::size_t n, unsigned bitwidth);
Program compile_svm_linear(const SvmModel& model, const EncryptionParams& params,
                           std::span<const u64> x);
Program compile_ntt(std::size_t n, unsigned bitwidth, bool inverse);

// Counting-mode totals for paper-scale workloads.
struct ProgramCost {
  u64 instructions = 0;
  double energy_j = 0;
  double latency_s = 0;
};
ProgramCost count_poly_mult(std::size_t n, unsigned bitwidth, const PimEnv& env);

// Grid lifecycle: build a grid with masks committed and constants loaded,
// load caller inputs, run, read back.
ArrayGrid setup_grid(const Program& prog);
void load_field(ArrayGrid& g, const Program& prog, const std::string& field,
                std::span<const u64> per_row_values);
void run_program(const Program& prog, ArrayGrid& g, const PimEnv& env,
                 EnergyLedger* ledger = nullptr);
std::vector<u64> read_field(const ArrayGrid& g, const Program& prog,
                            const std::string& field, std::size_t rows,
                            const PimEnv& env, EnergyLedger* ledger = nullptr);

struct VerifyReport {
  bool pass = false;
  std::size_t first_bad_row = 0;
  u64 got = 0, want = 0;
  std::string detail;
};

// Runs prog on a fresh grid against expected output rows.
VerifyReport verify_program(const Program& prog,
                            const std::vector<std::vector<u64>>& inputs,
                            std::span<const u64> expected, const PimEnv& env);

}  // namespace rat
