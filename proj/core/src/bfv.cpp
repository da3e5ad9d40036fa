#include "rat/bfv.hpp"

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rat {

namespace {

constexpr char kMagic[4] = {'R', 'B', 'F', 'V'};
constexpr std::uint8_t kVersion = 1;

mpz_class u64_to_mpz(u64 v) {
  mpz_class z;
  mpz_import(z.get_mpz_t(), 1, 1, sizeof(v), 0, 0, &v);
  return z;
}

u64 mpz_to_u64(const mpz_class& z) {
  u64 out = 0;
  mpz_export(&out, nullptr, 1, sizeof(out), 0, 0, z.get_mpz_t());
  return out;
}

// round(num / den) for num >= 0, half away from zero, exact integers only.
mpz_class div_round(const mpz_class& num, const mpz_class& den) {
  mpz_class q, r;
  mpz_fdiv_qr(q.get_mpz_t(), r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  if (2 * r >= den) q += 1;
  return q;
}

}  // namespace

struct BfvContext::Impl {
  std::vector<NttTables> tables;
  mpz_class big_q;                  // product of all primes
  mpz_class half_q;                 // floor(Q/2), centering threshold
  std::vector<mpz_class> punctured; // Q / q_i
  std::vector<u64> crt_inv;         // (Q/q_i)^-1 mod q_i
  std::vector<u64> delta_mod;       // floor(Q/t) mod q_i
  mpz_class delta;                  // floor(Q/t)
};

EncryptionParams make_params(std::size_t n, unsigned prime_bits,
                             std::size_t prime_count, u64 t,
                             double noise_stddev) {
  if (!is_power_of_two(n)) throw parameter_error("N must be a power of two");
  if (prime_bits < log2_exact(2 * n) + 1) {
    throw parameter_error("prime_bits too small for 2N congruence");
  }
  EncryptionParams p;
  p.n = n;
  p.prime_bits = prime_bits;
  p.primes = find_ntt_primes(prime_bits, prime_count, 2 * static_cast<u64>(n));
  p.t = t;
  p.noise_stddev = noise_stddev;
  for (u64 q : p.primes) {
    if (t >= q) throw parameter_error("t must be below every prime");
  }
  return p;
}

BfvContext::BfvContext(EncryptionParams params)
    : params_(std::move(params)), impl_(std::make_unique<Impl>()) {
  impl_->big_q = 1;
  for (u64 q : params_.primes) {
    impl_->tables.push_back(build_tables(q, params_.n));
    impl_->big_q *= u64_to_mpz(q);
  }
  impl_->half_q = impl_->big_q / 2;
  for (u64 q : params_.primes) {
    mpz_class punct = impl_->big_q / u64_to_mpz(q);
    mpz_class rem = punct % u64_to_mpz(q);
    impl_->punctured.push_back(punct);
    impl_->crt_inv.push_back(inv_mod(mpz_to_u64(rem), q));
  }
  impl_->delta = impl_->big_q / u64_to_mpz(params_.t);
  for (u64 q : params_.primes) {
    impl_->delta_mod.push_back(mpz_to_u64(impl_->delta % u64_to_mpz(q)));
  }
}

BfvContext::~BfvContext() = default;
BfvContext::BfvContext(BfvContext&&) noexcept = default;
BfvContext& BfvContext::operator=(BfvContext&&) noexcept = default;

const NttTables& BfvContext::tables(std::size_t prime_idx) const {
  return impl_->tables.at(prime_idx);
}

Plaintext BfvContext::encode(std::span<const u64> values) const {
  if (values.size() > params_.n) {
    throw capacity_error("encode: more values than ring coefficients");
  }
  Plaintext pt;
  pt.coeffs.assign(params_.n, 0);
  for (std::size_t j = 0; j < values.size(); ++j) {
    pt.coeffs[j] = values[j] % params_.t;
  }
  return pt;
}

std::vector<u64> BfvContext::decode(const Plaintext& pt) const {
  return pt.coeffs;
}

SecretKey BfvContext::gen_secret_key(Rng& rng) const {
  SecretKey sk;
  sk.ternary.resize(params_.n);
  std::uniform_int_distribution<int> tern(-1, 1);
  for (auto& c : sk.ternary) c = static_cast<int8_t>(tern(rng));
  sk.s.residues.resize(params_.primes.size());
  for (std::size_t i = 0; i < params_.primes.size(); ++i) {
    u64 q = params_.primes[i];
    auto& res = sk.s.residues[i];
    res.resize(params_.n);
    for (std::size_t j = 0; j < params_.n; ++j) {
      int8_t c = sk.ternary[j];
      res[j] = c < 0 ? q - 1 : static_cast<u64>(c);
    }
  }
  return sk;
}

namespace {

// Negacyclic product of two residue vectors mod one prime, via NTT.
std::vector<u64> poly_mul(std::span<const u64> a, std::span<const u64> b,
                          const NttTables& tb) {
  std::vector<u64> fa(a.begin(), a.end());
  std::vector<u64> fb(b.begin(), b.end());
  forward_ntt(fa, tb);
  forward_ntt(fb, tb);
  for (std::size_t j = 0; j < fa.size(); ++j) {
    fa[j] = mul_mod(fa[j], fb[j], tb.q);
  }
  inverse_ntt(fa, tb);
  return fa;
}

}  // namespace

Ciphertext BfvContext::encrypt(const Plaintext& pt, const SecretKey& sk,
                               Rng& rng) const {
  record(HeOp::Encrypt);
  const std::size_t np = params_.primes.size();
  Ciphertext ct;
  ct.parts.resize(2);

  // Uniform mask polynomial a, shared across residue rings via CRT.
  RnsPolynomial a;
  a.residues.resize(np);
  for (std::size_t i = 0; i < np; ++i) {
    std::uniform_int_distribution<u64> uni(0, params_.primes[i] - 1);
    a.residues[i].resize(params_.n);
    for (auto& c : a.residues[i]) c = uni(rng);
  }

  // Centered discrete Gaussian noise, tail cut at 6 sigma.
  std::normal_distribution<double> gauss(0.0, params_.noise_stddev);
  double cut = 6.0 * params_.noise_stddev;
  std::vector<long> noise(params_.n);
  for (auto& e : noise) {
    double v = std::clamp(gauss(rng), -cut, cut);
    e = std::lround(v);
  }

  ct.parts[0].residues.resize(np);
  for (std::size_t i = 0; i < np; ++i) {
    u64 q = params_.primes[i];
    auto as = poly_mul(a.residues[i], sk.s.residues[i], impl_->tables[i]);
    auto& c0 = ct.parts[0].residues[i];
    c0.resize(params_.n);
    for (std::size_t j = 0; j < params_.n; ++j) {
      u64 dm = mul_mod(impl_->delta_mod[i], pt.coeffs[j] % params_.t, q);
      u64 e = noise[j] >= 0 ? static_cast<u64>(noise[j]) % q
                            : q - (static_cast<u64>(-noise[j]) % q);
      c0[j] = sub_mod(add_mod(dm, e % q, q), as[j], q);
    }
  }
  ct.parts[1] = std::move(a);
  return ct;
}

namespace {

// c0 + c1*s + c2*s^2 per residue ring.
RnsPolynomial phase_of(const Ciphertext& ct, const SecretKey& sk,
                       const std::vector<NttTables>& tables) {
  const std::size_t np = tables.size();
  const std::size_t n = tables[0].n;
  RnsPolynomial phase;
  phase.residues.resize(np);
  for (std::size_t i = 0; i < np; ++i) {
    u64 q = tables[i].q;
    auto acc = ct.parts[0].residues[i];
    std::vector<u64> s_pow = sk.s.residues[i];
    for (std::size_t k = 1; k < ct.parts.size(); ++k) {
      auto term = poly_mul(ct.parts[k].residues[i], s_pow, tables[i]);
      for (std::size_t j = 0; j < n; ++j) acc[j] = add_mod(acc[j], term[j], q);
      if (k + 1 < ct.parts.size()) {
        s_pow = poly_mul(s_pow, sk.s.residues[i], tables[i]);
      }
    }
    phase.residues[i] = std::move(acc);
  }
  return phase;
}

}  // namespace

Plaintext BfvContext::decrypt(const Ciphertext& ct, const SecretKey& sk) const {
  record(HeOp::Decrypt);
  if (ct.parts.size() < 2 || ct.parts.size() > 3) {
    throw parameter_error("decrypt supports degree 2 and 3 ciphertexts");
  }
  auto phase = phase_of(ct, sk, impl_->tables);
  const std::size_t np = params_.primes.size();
  mpz_class t_mpz = u64_to_mpz(params_.t);
  Plaintext pt;
  pt.coeffs.resize(params_.n);
  for (std::size_t j = 0; j < params_.n; ++j) {
    // CRT reconstruction of coefficient j in [0, Q).
    mpz_class x = 0;
    for (std::size_t i = 0; i < np; ++i) {
      u64 q = params_.primes[i];
      u64 term = mul_mod(phase.residues[i][j], impl_->crt_inv[i], q);
      x += impl_->punctured[i] * u64_to_mpz(term);
    }
    x %= impl_->big_q;
    mpz_class m = div_round(t_mpz * x, impl_->big_q) % t_mpz;
    pt.coeffs[j] = mpz_to_u64(m);
  }
  return pt;
}

Ciphertext BfvContext::he_add(const Ciphertext& a, const Ciphertext& b) const {
  record(HeOp::Add);
  if (a.parts.size() != b.parts.size()) {
    throw parameter_error("he_add: degree mismatch");
  }
  Ciphertext out = a;
  for (std::size_t k = 0; k < out.parts.size(); ++k) {
    for (std::size_t i = 0; i < params_.primes.size(); ++i) {
      u64 q = params_.primes[i];
      auto& dst = out.parts[k].residues[i];
      const auto& src = b.parts[k].residues[i];
      if (dst.size() != src.size()) throw parameter_error("he_add: param mismatch");
      for (std::size_t j = 0; j < dst.size(); ++j) {
        dst[j] = add_mod(dst[j], src[j], q);
      }
    }
  }
  out.mul_depth = std::max(a.mul_depth, b.mul_depth);
  out.plain_mul_count = std::max(a.plain_mul_count, b.plain_mul_count);
  return out;
}

Ciphertext BfvContext::he_mul_scalar(const Ciphertext& a, u64 k) const {
  record(HeOp::MulScalar);
  Ciphertext out = a;
  for (auto& part : out.parts) {
    for (std::size_t i = 0; i < params_.primes.size(); ++i) {
      u64 q = params_.primes[i];
      u64 kq = k % q;
      for (auto& c : part.residues[i]) c = mul_mod(c, kq, q);
    }
  }
  return out;
}

Ciphertext BfvContext::he_mul_plain(const Ciphertext& a, const Plaintext& p) const {
  record(HeOp::MulPlain);
  Ciphertext out = a;
  for (std::size_t i = 0; i < params_.primes.size(); ++i) {
    u64 q = params_.primes[i];
    std::vector<u64> lifted(params_.n);
    for (std::size_t j = 0; j < params_.n; ++j) lifted[j] = p.coeffs[j] % q;
    for (auto& part : out.parts) {
      part.residues[i] = poly_mul(part.residues[i], lifted, impl_->tables[i]);
    }
  }
  out.plain_mul_count = a.plain_mul_count + 1;
  return out;
}

Ciphertext BfvContext::he_mul(const Ciphertext& a, const Ciphertext& b) const {
  record(HeOp::MulCt);
  if (a.parts.size() != 2 || b.parts.size() != 2) {
    throw parameter_error("he_mul: inputs must be degree-2 ciphertexts");
  }
  const std::size_t n = params_.n;
  // Lift residue polynomials to centered big-integer coefficients; the
  // tensor product and t/Q scaling happen in exact arithmetic.
  auto lift = [&](const RnsPolynomial& p) {
    std::vector<mpz_class> out(n);
    for (std::size_t j = 0; j < n; ++j) {
      mpz_class x = 0;
      for (std::size_t i = 0; i < params_.primes.size(); ++i) {
        u64 q = params_.primes[i];
        u64 term = mul_mod(p.residues[i][j], impl_->crt_inv[i], q);
        x += impl_->punctured[i] * u64_to_mpz(term);
      }
      x %= impl_->big_q;
      if (x > impl_->half_q) x -= impl_->big_q;
      out[j] = x;
    }
    return out;
  };
  auto a0 = lift(a.parts[0]);
  auto a1 = lift(a.parts[1]);
  auto b0 = lift(b.parts[0]);
  auto b1 = lift(b.parts[1]);

  auto conv = [n](const std::vector<mpz_class>& x, const std::vector<mpz_class>& y) {
    std::vector<mpz_class> out(n, mpz_class(0));
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] == 0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        std::size_t k = i + j;
        if (k < n) out[k] += x[i] * y[j];
        else out[k - n] -= x[i] * y[j];
      }
    }
    return out;
  };

  std::vector<std::vector<mpz_class>> tensor(3);
  tensor[0] = conv(a0, b0);
  tensor[1] = conv(a0, b1);
  {
    auto t2 = conv(a1, b0);
    for (std::size_t j = 0; j < n; ++j) tensor[1][j] += t2[j];
  }
  tensor[2] = conv(a1, b1);

  mpz_class t_mpz = u64_to_mpz(params_.t);
  Ciphertext out;
  out.parts.resize(3);
  out.mul_depth = std::max(a.mul_depth, b.mul_depth) + 1;
  for (std::size_t k = 0; k < 3; ++k) {
    out.parts[k].residues.resize(params_.primes.size());
    for (auto& r : out.parts[k].residues) r.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      // Scale by t/Q with half-away rounding, then reduce into [0, Q).
      mpz_class num = t_mpz * tensor[k][j];
      mpz_class scaled;
      if (num >= 0) {
        scaled = div_round(num, impl_->big_q);
      } else {
        scaled = -div_round(-num, impl_->big_q);
      }
      mpz_class red = scaled % impl_->big_q;
      if (red < 0) red += impl_->big_q;
      for (std::size_t i = 0; i < params_.primes.size(); ++i) {
        mpz_class r = red % u64_to_mpz(params_.primes[i]);
        out.parts[k].residues[i][j] = mpz_to_u64(r);
      }
    }
  }
  return out;
}

double BfvContext::noise_budget(const Ciphertext& ct, const SecretKey& sk) const {
  auto phase = phase_of(ct, sk, impl_->tables);
  // Recover the message the same way decrypt does, then measure what is
  // left after stripping Delta*m.
  mpz_class t_mpz = u64_to_mpz(params_.t);
  mpz_class max_noise = 0;
  for (std::size_t j = 0; j < params_.n; ++j) {
    mpz_class x = 0;
    for (std::size_t i = 0; i < params_.primes.size(); ++i) {
      u64 q = params_.primes[i];
      u64 term = mul_mod(phase.residues[i][j], impl_->crt_inv[i], q);
      x += impl_->punctured[i] * u64_to_mpz(term);
    }
    x %= impl_->big_q;
    mpz_class m = div_round(t_mpz * x, impl_->big_q) % t_mpz;
    mpz_class noise = x - impl_->delta * m;
    noise %= impl_->big_q;
    if (noise > impl_->half_q) noise -= impl_->big_q;
    mpz_class mag = abs(noise);
    if (mag > max_noise) max_noise = mag;
  }
  double log_bound;
  {
    signed long exp = 0;
    double d = mpz_get_d_2exp(&exp, impl_->big_q.get_mpz_t());
    log_bound = std::log2(d) + exp - std::log2(2.0 * params_.t);
  }
  double log_noise = 0.0;
  if (max_noise > 1) {
    signed long exp = 0;
    double d = mpz_get_d_2exp(&exp, max_noise.get_mpz_t());
    log_noise = std::log2(d) + exp;
  }
  return std::max(0.0, log_bound - log_noise);
}

u64 ciphertext_bytes(unsigned parts, std::size_t prime_count,
                     unsigned prime_bits, std::size_t n) {
  return static_cast<u64>(parts) * prime_count * prime_bits * n / 8;
}

u64 ciphertext_bytes(const EncryptionParams& params, unsigned parts) {
  return ciphertext_bytes(parts, params.primes.size(), params.prime_bits,
                          params.n);
}

namespace {

struct WireHeader {
  char magic[4];
  std::uint8_t version;
  std::uint8_t prime_bits;
  std::uint8_t parts;       // 0 marks a plaintext
  std::uint8_t reserved;
  std::uint32_t n;
  std::uint32_t prime_count;
};
static_assert(sizeof(WireHeader) == 16);

void put_words(std::vector<std::uint8_t>& out, std::span<const u64> vals,
               unsigned width) {
  for (u64 v : vals) {
    for (unsigned b = 0; b < width; ++b) {
      out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    }
  }
}

u64 get_word(std::span<const std::uint8_t> in, std::size_t idx, unsigned width) {
  u64 v = 0;
  for (unsigned b = 0; b < width; ++b) {
    v |= static_cast<u64>(in[idx * width + b]) << (8 * b);
  }
  return v;
}

WireHeader check_header(std::span<const std::uint8_t> bytes,
                        const EncryptionParams& params) {
  if (bytes.size() < sizeof(WireHeader)) throw parameter_error("short payload");
  WireHeader h;
  std::memcpy(&h, bytes.data(), sizeof(h));
  if (std::memcmp(h.magic, kMagic, 4) != 0) throw parameter_error("bad magic");
  if (h.version != kVersion) throw parameter_error("bad version");
  if (h.n != params.n || h.prime_count != params.primes.size() ||
      h.prime_bits != params.prime_bits) {
    throw parameter_error("payload params mismatch");
  }
  return h;
}

}  // namespace

std::vector<std::uint8_t> BfvContext::serialize(const Ciphertext& ct) const {
  unsigned width = (params_.prime_bits + 7) / 8;
  WireHeader h{};
  std::memcpy(h.magic, kMagic, 4);
  h.version = kVersion;
  h.prime_bits = static_cast<std::uint8_t>(params_.prime_bits);
  h.parts = static_cast<std::uint8_t>(ct.parts.size());
  h.n = static_cast<std::uint32_t>(params_.n);
  h.prime_count = static_cast<std::uint32_t>(params_.primes.size());
  std::vector<std::uint8_t> out(sizeof(h));
  std::memcpy(out.data(), &h, sizeof(h));
  for (const auto& part : ct.parts) {
    for (const auto& res : part.residues) put_words(out, res, width);
  }
  return out;
}

std::vector<std::uint8_t> BfvContext::serialize(const Plaintext& pt) const {
  unsigned width = (params_.prime_bits + 7) / 8;
  WireHeader h{};
  std::memcpy(h.magic, kMagic, 4);
  h.version = kVersion;
  h.prime_bits = static_cast<std::uint8_t>(params_.prime_bits);
  h.parts = 0;
  h.n = static_cast<std::uint32_t>(params_.n);
  h.prime_count = static_cast<std::uint32_t>(params_.primes.size());
  std::vector<std::uint8_t> out(sizeof(h));
  std::memcpy(out.data(), &h, sizeof(h));
  put_words(out, pt.coeffs, width);
  return out;
}

Ciphertext BfvContext::deserialize_ciphertext(
    std::span<const std::uint8_t> bytes) const {
  WireHeader h = check_header(bytes, params_);
  if (h.parts < 2 || h.parts > 3) throw parameter_error("bad parts count");
  unsigned width = (params_.prime_bits + 7) / 8;
  std::size_t need = sizeof(h) + static_cast<std::size_t>(h.parts) *
                                     params_.primes.size() * params_.n * width;
  if (bytes.size() != need) throw parameter_error("payload length mismatch");
  auto body = bytes.subspan(sizeof(h));
  Ciphertext ct;
  ct.parts.resize(h.parts);
  std::size_t word = 0;
  for (auto& part : ct.parts) {
    part.residues.resize(params_.primes.size());
    for (std::size_t i = 0; i < params_.primes.size(); ++i) {
      part.residues[i].resize(params_.n);
      for (std::size_t j = 0; j < params_.n; ++j) {
        u64 v = get_word(body, word++, width);
        if (v >= params_.primes[i]) throw parameter_error("residue overflow");
        part.residues[i][j] = v;
      }
    }
  }
  return ct;
}

Plaintext BfvContext::deserialize_plaintext(
    std::span<const std::uint8_t> bytes) const {
  WireHeader h = check_header(bytes, params_);
  if (h.parts != 0) throw parameter_error("not a plaintext payload");
  unsigned width = (params_.prime_bits + 7) / 8;
  std::size_t need = sizeof(h) + params_.n * width;
  if (bytes.size() != need) throw parameter_error("payload length mismatch");
  auto body = bytes.subspan(sizeof(h));
  Plaintext pt;
  pt.coeffs.resize(params_.n);
  for (std::size_t j = 0; j < params_.n; ++j) {
    u64 v = get_word(body, j, width);
    if (v >= params_.t) throw parameter_error("plaintext coefficient overflow");
    pt.coeffs[j] = v;
  }
  return pt;
}

}  // namespace rat
