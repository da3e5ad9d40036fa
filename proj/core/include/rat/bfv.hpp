// Functional RNS-BFV arithmetic: the reference implementation the PIM
// compiler is verified against, and the FLY-side crypto endpoint.
//
// Symmetric-key only, degree-3 decryption instead of relinearization.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rat/ntt.hpp"

namespace rat {

struct EncryptionParams {
  std::size_t n = 0;            // ring degree, power of two
  unsigned prime_bits = 0;      // width of each RNS prime
  std::vector<u64> primes;      // distinct, each == 1 mod 2N
  u64 t = 0;                    // plaintext modulus, t < every prime
  double noise_stddev = 3.2;    // fresh-noise sigma, tail cut at 6 sigma
};

// Primes are the smallest prime_count primes of exactly prime_bits bits
// with q == 1 mod 2N; deterministic for fixed inputs.
EncryptionParams make_params(std::size_t n, unsigned prime_bits,
                             std::size_t prime_count, u64 t,
                             double noise_stddev = 3.2);

struct RnsPolynomial {
  // residues[i][j] = coefficient j mod primes[i]
  std::vector<std::vector<u64>> residues;
};

struct Plaintext {
  std::vector<u64> coeffs;  // length N, entries in [0, t)
};

struct SecretKey {
  std::vector<int8_t> ternary;  // underlying coefficients in {-1, 0, 1}
  RnsPolynomial s;
};

struct Ciphertext {
  std::vector<RnsPolynomial> parts;  // 2 fresh, 3 after one ct-ct product
  unsigned mul_depth = 0;            // ct-ct products applied
  unsigned plain_mul_count = 0;      // plaintext products applied
};

// Operation kinds recorded by the trace hook; the SVM offload-purity
// tests assert the RODENT phase stays within the linear subset.
enum class HeOp { Encrypt, Decrypt, Add, MulScalar, MulPlain, MulCt };

using OpTrace = std::vector<HeOp>;

using Rng = std::mt19937_64;

class BfvContext {
 public:
  explicit BfvContext(EncryptionParams params);
  ~BfvContext();
  BfvContext(BfvContext&&) noexcept;
  BfvContext& operator=(BfvContext&&) noexcept;

  const EncryptionParams& params() const { return params_; }
  const NttTables& tables(std::size_t prime_idx) const;

  Plaintext encode(std::span<const u64> values) const;
  std::vector<u64> decode(const Plaintext& pt) const;

  SecretKey gen_secret_key(Rng& rng) const;
  Ciphertext encrypt(const Plaintext& pt, const SecretKey& sk, Rng& rng) const;
  Plaintext decrypt(const Ciphertext& ct, const SecretKey& sk) const;

  Ciphertext he_add(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext he_mul_scalar(const Ciphertext& a, u64 k) const;
  Ciphertext he_mul_plain(const Ciphertext& a, const Plaintext& p) const;
  Ciphertext he_mul(const Ciphertext& a, const Ciphertext& b) const;

  // log2(Q/2t) - log2(|noise|_inf), clamped at 0.
  double noise_budget(const Ciphertext& ct, const SecretKey& sk) const;

  // Trace hook; null disables recording.
  void set_trace(OpTrace* trace) const { trace_ = trace; }

  std::vector<std::uint8_t> serialize(const Ciphertext& ct) const;
  std::vector<std::uint8_t> serialize(const Plaintext& pt) const;
  Ciphertext deserialize_ciphertext(std::span<const std::uint8_t> bytes) const;
  Plaintext deserialize_plaintext(std::span<const std::uint8_t> bytes) const;

 private:
  struct Impl;
  EncryptionParams params_;
  std::unique_ptr<Impl> impl_;
  mutable OpTrace* trace_ = nullptr;

  void record(HeOp op) const {
    if (trace_) trace_->push_back(op);
  }
};

// parts * prime_count * prime_bits * N / 8, in bytes.  Paper-preset
// ciphertexts come out at 110,592 bytes.
u64 ciphertext_bytes(unsigned parts, std::size_t prime_count,
                     unsigned prime_bits, std::size_t n);
u64 ciphertext_bytes(const EncryptionParams& params, unsigned parts = 2);

}  // namespace rat
