// Modular arithmetic helpers shared by the NTT kernels and BFV layer.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rat {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

inline u64 add_mod(u64 a, u64 b, u64 q) {
  u64 s = a + b;
  return s >= q ? s - q : s;
}

inline u64 sub_mod(u64 a, u64 b, u64 q) { return a >= b ? a - b : a + q - b; }

inline u64 mul_mod(u64 a, u64 b, u64 q) {
  return static_cast<u64>((u128)a * b % q);
}

u64 pow_mod(u64 base, u64 exp, u64 q);

// Modular inverse via Fermat; q must be prime.
inline u64 inv_mod(u64 a, u64 q) { return pow_mod(a, q - 2, q); }

// Deterministic Miller-Rabin, valid for all 64-bit inputs.
bool is_prime(u64 n);

inline bool is_power_of_two(u64 n) { return n != 0 && (n & (n - 1)) == 0; }

inline unsigned log2_exact(u64 n) {
  unsigned k = 0;
  while ((u64{1} << k) < n) ++k;
  return k;
}

inline u64 bit_reverse(u64 x, unsigned bits) {
  u64 r = 0;
  for (unsigned i = 0; i < bits; ++i) r |= ((x >> i) & 1) << (bits - 1 - i);
  return r;
}

// Smallest primes of exactly `bits` bits with p == 1 (mod modulus).
std::vector<u64> find_ntt_primes(unsigned bits, std::size_t count, u64 modulus);

struct parameter_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct capacity_error : parameter_error {
  using parameter_error::parameter_error;
};

}  // namespace rat
