#include "rat/modmath.hpp"

namespace rat {

u64 pow_mod(u64 base, u64 exp, u64 q) {
  u64 r = 1 % q;
  base %= q;
  while (exp) {
    if (exp & 1) r = mul_mod(r, base, q);
    base = mul_mod(base, base, q);
    exp >>= 1;
  }
  return r;
}

bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  unsigned s = 0;
  while ((d & 1) == 0) d >>= 1, ++s;
  // This witness set is exact for n < 2^64.
  for (u64 a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    u64 x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (unsigned i = 1; i < s; ++i) {
      x = mul_mod(x, x, n);
      if (x == n - 1) { composite = false; break; }
    }
    if (composite) return false;
  }
  return true;
}

std::vector<u64> find_ntt_primes(unsigned bits, std::size_t count, u64 modulus) {
  if (bits < 2 || bits > 62) throw parameter_error("prime bit width out of range");
  std::vector<u64> primes;
  u64 lo = u64{1} << (bits - 1);
  u64 hi = (u64{1} << bits) - 1;
  // Only p == 1 (mod modulus) can carry a primitive root of that order.
  u64 k = (lo - 1 + modulus - 1) / modulus;
  for (u64 p = k * modulus + 1; p <= hi && primes.size() < count; p += modulus) {
    if (is_prime(p)) primes.push_back(p);
  }
  if (primes.size() < count) {
    throw parameter_error("no NTT-friendly prime of requested width");
  }
  return primes;
}

}  // namespace rat
