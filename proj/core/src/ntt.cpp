#include "rat/ntt.hpp"

namespace rat {

namespace {

// Smallest primitive 2N-th root of unity mod q.
u64 find_psi(u64 q, std::size_t n) {
  u64 order = 2 * static_cast<u64>(n);
  // candidate = g^((q-1)/2N) for generators g; scanning candidates directly
  // keeps selection deterministic and independent of generator search order.
  for (u64 c = 2; c < q; ++c) {
    u64 psi = pow_mod(c, (q - 1) / order, q);
    if (psi <= 1) continue;
    if (pow_mod(psi, n, q) == q - 1) {
      // psi^N == -1 implies order exactly 2N.  Track the smallest such psi.
      return psi;
    }
  }
  throw parameter_error("no primitive 2N-th root mod q");
}

}  // namespace

NttTables build_tables(u64 q, std::size_t n) {
  if (!is_power_of_two(n)) throw parameter_error("N must be a power of two");
  if (q % (2 * n) != 1) throw parameter_error("q != 1 mod 2N");
  NttTables t;
  t.q = q;
  t.n = n;
  // All primitive 2N-th roots are odd powers of any one of them; take the
  // smallest so compiled twiddle ROMs are reproducible across runs.
  u64 psi0 = find_psi(q, n);
  u64 best = psi0;
  u64 psi_sq = mul_mod(psi0, psi0, q);
  u64 cur = psi0;
  for (std::size_t k = 1; k < n; ++k) {
    cur = mul_mod(cur, psi_sq, q);
    if (cur < best) best = cur;
  }
  t.psi = best;
  t.n_inv = inv_mod(static_cast<u64>(n % q), q);
  unsigned bits = log2_exact(n);
  t.twiddles.resize(n);
  t.inv_twiddles.resize(n);
  u64 psi_inv = inv_mod(best, q);
  for (std::size_t i = 0; i < n; ++i) {
    u64 e = bit_reverse(i, bits);
    t.twiddles[i] = pow_mod(best, e, q);
    t.inv_twiddles[i] = pow_mod(psi_inv, e, q);
  }
  return t;
}

void forward_ntt(std::span<u64> a, const NttTables& tb) {
  const u64 q = tb.q;
  std::size_t n = tb.n;
  std::size_t t = n;
  for (std::size_t m = 1; m < n; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t j1 = 2 * i * t;
      u64 s = tb.twiddles[m + i];
      for (std::size_t j = j1; j < j1 + t; ++j) {
        u64 u = a[j];
        u64 v = mul_mod(a[j + t], s, q);
        a[j] = add_mod(u, v, q);
        a[j + t] = sub_mod(u, v, q);
      }
    }
  }
}

void inverse_ntt(std::span<u64> a, const NttTables& tb) {
  const u64 q = tb.q;
  std::size_t n = tb.n;
  std::size_t t = 1;
  for (std::size_t m = n; m > 1; m >>= 1) {
    std::size_t j1 = 0;
    std::size_t h = m >> 1;
    for (std::size_t i = 0; i < h; ++i) {
      u64 s = tb.inv_twiddles[h + i];
      for (std::size_t j = j1; j < j1 + t; ++j) {
        u64 u = a[j];
        u64 v = a[j + t];
        a[j] = add_mod(u, v, q);
        a[j + t] = mul_mod(sub_mod(u, v, q), s, q);
      }
      j1 += 2 * t;
    }
    t <<= 1;
  }
  for (std::size_t j = 0; j < n; ++j) a[j] = mul_mod(a[j], tb.n_inv, q);
}

ShiftAddSchedule make_reduce_schedule(u64 q, unsigned prime_bits) {
  ShiftAddSchedule s;
  s.q = q;
  s.shift = 2 * prime_bits + 1;
  s.m = static_cast<u64>(((u128)1 << s.shift) / q);
  for (unsigned b = 0; b < 64; ++b) {
    if ((s.m >> b) & 1) s.m_bits.push_back(b);
    if ((q >> b) & 1) s.q_bits.push_back(b);
  }
  return s;
}

u64 reduce_shift_add(u128 x, const ShiftAddSchedule& s) {
  // Quotient estimate via shift-adds over the set bits of m.
  u128 prod = 0;
  for (unsigned b : s.m_bits) prod += x << b;
  u64 qhat = static_cast<u64>(prod >> s.shift);
  // Subtract qhat * q, again as shift-adds over the set bits of q.
  u128 sub = 0;
  for (unsigned b : s.q_bits) sub += (u128)qhat << b;
  u128 r = x - sub;
  // The 2b+1-bit constant guarantees a single correction.
  if (r >= s.q) r -= s.q;
  return static_cast<u64>(r);
}

std::vector<u64> negacyclic_convolve_naive(std::span<const u64> a,
                                           std::span<const u64> b, u64 q,
                                           u64 t) {
  std::size_t n = a.size();
  std::vector<u64> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      u64 p = mul_mod(a[i] % q, b[j] % q, q);
      std::size_t k = i + j;
      if (k < n) {
        out[k] = add_mod(out[k], p, q);
      } else {
        out[k - n] = sub_mod(out[k - n], p, q);  // X^N = -1 wrap
      }
    }
  }
  if (t != 0) {
    for (auto& c : out) c %= t;
  }
  return out;
}

}  // namespace rat
