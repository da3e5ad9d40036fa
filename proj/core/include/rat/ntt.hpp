// Negacyclic number-theoretic transform and shift-add modular reduction.
//
// forward_ntt is decimation-in-time with a bit-reversed twiddle table and
// produces output in bit-reversed order; inverse_ntt (Gentleman-Sande)
// consumes that order and returns natural-order coefficients.  Pointwise
// products between the two are exact negacyclic convolutions mod q.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rat/modmath.hpp"

namespace rat {

struct NttTables {
  u64 q = 0;
  std::size_t n = 0;
  u64 psi = 0;     // primitive 2N-th root of unity, psi^N == -1 mod q
  u64 n_inv = 0;   // N^-1 mod q
  std::vector<u64> twiddles;      // psi^brv(i), i in [0, N)
  std::vector<u64> inv_twiddles;  // psi^-brv(i)
};

// q must satisfy q == 1 (mod 2N).  Root selection is smallest-psi
// deterministic so compiled twiddle ROMs are reproducible.
NttTables build_tables(u64 q, std::size_t n);

void forward_ntt(std::span<u64> coeffs, const NttTables& tables);
void inverse_ntt(std::span<u64> evals, const NttTables& tables);

// Barrett-style reduction schedule built from shifts/adds/subs only; the
// same constants are what the PIM compiler lowers to in-memory arithmetic.
struct ShiftAddSchedule {
  u64 q = 0;
  unsigned shift = 0;  // quotient estimate is (x * m) >> shift
  u64 m = 0;           // floor(2^shift / q)
  std::vector<unsigned> m_bits;  // set-bit positions of m
  std::vector<unsigned> q_bits;  // set-bit positions of q
};

ShiftAddSchedule make_reduce_schedule(u64 q, unsigned prime_bits);

// x in [0, q^2) -> x mod q, using only shifts, adds and one correction.
u64 reduce_shift_add(u128 x, const ShiftAddSchedule& sched);

// O(N^2) schoolbook product with X^N = -1 wraparound; oracle for every
// product path in the project.  If t != 0 the result is further reduced
// mod t (after centering mod q).
std::vector<u64> negacyclic_convolve_naive(std::span<const u64> a,
                                           std::span<const u64> b, u64 q,
                                           u64 t = 0);

}  // namespace rat
