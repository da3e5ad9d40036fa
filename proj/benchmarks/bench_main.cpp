#include <benchmark/benchmark.h>

#include <random>

#include "rat/bfv.hpp"

using namespace rat;

namespace {

std::vector<u64> random_coeffs(std::size_t n, u64 lim, std::mt19937_64& rng) {
  std::uniform_int_distribution<u64> uni(0, lim - 1);
  std::vector<u64> v(n);
  for (auto& c : v) c = uni(rng);
  return v;
}

void BM_forward_ntt(benchmark::State& state) {
  std::size_t n = (std::size_t)state.range(0);
  u64 q = find_ntt_primes(36, 1, 2 * n)[0];
  auto tables = build_tables(q, n);
  std::mt19937_64 rng(1);
  auto coeffs = random_coeffs(n, q, rng);
  for (auto _ : state) {
    auto work = coeffs;
    forward_ntt(work, tables);
    benchmark::DoNotOptimize(work);
  }
  state.SetItemsProcessed((std::int64_t)(state.iterations() * n));
}
BENCHMARK(BM_forward_ntt)->Arg(128)->Arg(1024)->Arg(4096);

void BM_ntt_roundtrip(benchmark::State& state) {
  std::size_t n = (std::size_t)state.range(0);
  u64 q = find_ntt_primes(36, 1, 2 * n)[0];
  auto tables = build_tables(q, n);
  std::mt19937_64 rng(2);
  auto coeffs = random_coeffs(n, q, rng);
  for (auto _ : state) {
    auto work = coeffs;
    forward_ntt(work, tables);
    inverse_ntt(work, tables);
    benchmark::DoNotOptimize(work);
  }
}
BENCHMARK(BM_ntt_roundtrip)->Arg(1024)->Arg(4096);

struct HeFixture {
  EncryptionParams params = make_params(4096, 36, 3, 65537);
  BfvContext ctx{params};
  Rng rng{3};
  SecretKey sk = ctx.gen_secret_key(rng);
  Ciphertext ct;
  Plaintext pt;

  HeFixture() {
    std::mt19937_64 r(4);
    pt = ctx.encode(random_coeffs(params.n, params.t, r));
    ct = ctx.encrypt(pt, sk, rng);
  }
};

HeFixture& fixture() {
  static HeFixture f;
  return f;
}

void BM_he_encrypt(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto c = f.ctx.encrypt(f.pt, f.sk, f.rng);
    benchmark::DoNotOptimize(c);
  }
}
BENCHMARK(BM_he_encrypt);

void BM_he_decrypt(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto p = f.ctx.decrypt(f.ct, f.sk);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_he_decrypt);

void BM_he_add(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto c = f.ctx.he_add(f.ct, f.ct);
    benchmark::DoNotOptimize(c);
  }
}
BENCHMARK(BM_he_add);

void BM_he_mul_scalar(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto c = f.ctx.he_mul_scalar(f.ct, 7);
    benchmark::DoNotOptimize(c);
  }
}
BENCHMARK(BM_he_mul_scalar);

void BM_he_mul_plain(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto c = f.ctx.he_mul_plain(f.ct, f.pt);
    benchmark::DoNotOptimize(c);
  }
}
BENCHMARK(BM_he_mul_plain);

}  // namespace

BENCHMARK_MAIN();
