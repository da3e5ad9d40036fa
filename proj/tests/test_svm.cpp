#include "rat/svm.hpp"

#include <sstream>

#include "doctest.h"

using namespace rat;

namespace {

const char* kMinimalModel =
    "svm_type c_svc\n"
    "kernel_type polynomial\n"
    "degree 2\n"
    "nr_class 2\n"
    "total_sv 2\n"
    "rho -1.0 2.0\n"
    "nr_sv 1 1\n"
    "SV\n"
    "1.0 1:3 4:5\n"
    "-2.0 2:7\n";

EncryptionParams svm_params() { return make_params(128, 36, 1, 65537); }

SvmModel random_model(std::size_t classes, std::size_t dim, std::size_t svs,
                      Rng& rng) {
  std::uniform_int_distribution<u64> feat(0, 7);
  std::uniform_int_distribution<long long> coef(-5, 5);
  SvmModel m;
  m.class_count = classes;
  m.dimension = dim;
  for (std::size_t c = 0; c < classes; ++c) {
    SvmClass cls;
    cls.bias = coef(rng);
    for (std::size_t j = 0; j < svs; ++j) {
      std::vector<u64> sv(dim);
      for (auto& v : sv) v = feat(rng);
      cls.support_vectors.push_back(std::move(sv));
      cls.alpha.push_back(coef(rng));
    }
    m.classes.push_back(std::move(cls));
  }
  return m;
}

std::vector<u64> random_input(std::size_t dim, Rng& rng) {
  std::uniform_int_distribution<u64> feat(0, 7);
  std::vector<u64> x(dim);
  for (auto& v : x) v = feat(rng);
  return x;
}

}  // namespace

TEST_CASE("minimal model parses, dimension inferred from max index") {
  auto m = load_libsvm_model(kMinimalModel);
  CHECK(m.class_count == 2);
  CHECK(m.dimension == 4);
  CHECK(m.classes[0].support_vectors.size() == 1);
  CHECK(m.classes[0].support_vectors[0] == std::vector<u64>{3, 0, 0, 5});
  CHECK(m.classes[0].alpha == std::vector<long long>{1});
  CHECK(m.classes[0].bias == 1);  // -rho
  CHECK(m.classes[1].support_vectors[0][1] == 7);
  CHECK(m.classes[1].alpha == std::vector<long long>{-2});
  CHECK(m.classes[1].bias == -2);
  CHECK(m.warnings.empty());
}

TEST_CASE("sidecar quantization applies to features and coefficients") {
  std::string text =
      "nr_class 1\n"
      "rho 0.5\n"
      "nr_sv 2\n"
      "SV\n"
      "0.25 1:10 2:70\n"
      "-0.5 1:35 2:0\n"
      "{\"scale\": 0.1, \"offset\": 0.0, \"alpha_scale\": 4}\n";
  auto m = load_libsvm_model(text);
  CHECK(m.dimension == 2);
  CHECK(m.classes[0].support_vectors[0] == std::vector<u64>{1, 7});
  CHECK(m.classes[0].support_vectors[1] == std::vector<u64>{4, 0});  // 3.5 rounds away
  CHECK(m.classes[0].alpha == std::vector<long long>{1, -2});
  CHECK(m.classes[0].bias == -2);
}

TEST_CASE("parse errors name the offending line") {
  std::string garbage =
      "nr_class 1\n"
      "rho 0\n"
      "nr_sv 1\n"
      "SV\n"
      "1.0 1:bogus\n";
  CHECK_THROWS_WITH_AS(load_libsvm_model(garbage), doctest::Contains("line 5"),
                       parse_error);

  CHECK_THROWS_WITH_AS(load_libsvm_model("nonsense 3\nSV\n1.0 1:1\n"),
                       doctest::Contains("line 1"), parse_error);
  CHECK_THROWS_AS(load_libsvm_model("nr_class 1\nrho 0\nnr_sv 1\n"), parse_error);
  CHECK_THROWS_AS(
      load_libsvm_model("nr_class 1\nrho 0\nnr_sv 2\nSV\n1.0 1:1\n"), parse_error);
}

TEST_CASE("oversized class is truncated to the largest |alpha| rows") {
  std::ostringstream text;
  std::size_t count = kMaxSupportVectors + 1;
  text << "nr_class 1\nrho 0\nnr_sv " << count << "\nSV\n";
  // row i gets alpha i+1; the smallest (first) row should be dropped
  for (std::size_t i = 0; i < count; ++i) {
    text << (i + 1) << " 1:" << (i % 8) << "\n";
  }
  auto m = load_libsvm_model(text.str());
  REQUIRE(m.warnings.size() == 1);
  CHECK(m.classes[0].support_vectors.size() == kMaxSupportVectors);
  CHECK(m.classes[0].alpha.front() == 2);
  CHECK(m.classes[0].alpha.back() == (long long)count);
}

TEST_CASE("quantize_input endpoints and midpoint") {
  QuantDescriptor q;
  q.scale = {7.0 / 100.0, 7.0 / 100.0, 7.0 / 100.0};
  q.offset = {0, 0, 0};
  std::vector<double> raw{0, 100, 50};
  auto v = quantize_input(raw, q);
  CHECK(v[0] == 0);
  CHECK(v[1] == 7);
  CHECK(v[2] == 4);  // 3.5 rounds half away from zero

  CHECK(quantize_input(std::vector<double>{-40, 400, 50}, q) ==
        std::vector<u64>{0, 7, 4});  // clamped
  CHECK_THROWS_AS(quantize_input(std::vector<double>{1, 2}, q), parameter_error);
}

TEST_CASE("read_csv_samples with and without header") {
  auto s = read_csv_samples("a,b\n1,2\n3.5,4\n", 2);
  REQUIRE(s.size() == 2);
  CHECK(s[1] == std::vector<double>{3.5, 4});
  CHECK(read_csv_samples("1,2\n", 2).size() == 1);
  CHECK_THROWS_WITH_AS(read_csv_samples("1,2\n3\n", 2), doctest::Contains("line 2"),
                       parse_error);
}

TEST_CASE("encrypt_model transposed layout and roundtrip") {
  BfvContext ctx(make_params(8, 36, 1, 65537));
  Rng rng(21);
  auto sk = ctx.gen_secret_key(rng);

  SvmModel m;
  m.class_count = 1;
  m.dimension = 2;
  SvmClass cls;
  cls.support_vectors = {{1, 4}, {2, 5}, {3, 6}};
  cls.alpha = {1, 1, 1};
  m.classes.push_back(cls);

  auto em = encrypt_model(ctx, m, sk, rng);
  REQUIRE(em.class_cts.size() == 1);
  REQUIRE(em.class_cts[0].size() == 2);
  auto col0 = ctx.decrypt(em.class_cts[0][0], sk).coeffs;
  auto col1 = ctx.decrypt(em.class_cts[0][1], sk).coeffs;
  CHECK(col0 == std::vector<u64>{1, 2, 3, 0, 0, 0, 0, 0});
  CHECK(col1 == std::vector<u64>{4, 5, 6, 0, 0, 0, 0, 0});

  // random-model roundtrip
  BfvContext big(svm_params());
  auto skb = big.gen_secret_key(rng);
  for (int trial = 0; trial < 5; ++trial) {
    auto rm = random_model(3, 6, 10, rng);
    auto rem = encrypt_model(big, rm, skb, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t d = 0; d < 6; ++d) {
        auto col = big.decrypt(rem.class_cts[c][d], skb).coeffs;
        for (std::size_t j = 0; j < 10; ++j) {
          REQUIRE(col[j] == rm.classes[c].support_vectors[j][d]);
        }
        for (std::size_t j = 10; j < col.size(); ++j) REQUIRE(col[j] == 0);
      }
    }
  }

  // zero model decrypts to zero plaintexts
  SvmModel z = m;
  for (auto& sv : z.classes[0].support_vectors) sv.assign(2, 0);
  auto ez = encrypt_model(ctx, z, sk, rng);
  CHECK(ctx.decrypt(ez.class_cts[0][0], sk).coeffs == std::vector<u64>(8, 0));

  // capacity: more support vectors than slots
  SvmModel wide = m;
  wide.classes[0].support_vectors.assign(9, std::vector<u64>{1, 1});
  wide.classes[0].alpha.assign(9, 1);
  CHECK_THROWS_AS(encrypt_model(ctx, wide, sk, rng), capacity_error);
}

TEST_CASE("rodent_linear_phase computes encrypted dot products") {
  BfvContext ctx(svm_params());
  Rng rng(22);
  auto sk = ctx.gen_secret_key(rng);
  auto m = random_model(2, 8, 12, rng);
  auto em = encrypt_model(ctx, m, sk, rng);

  auto pr0 = rodent_linear_phase(ctx, em, std::vector<u64>(8, 0));
  CHECK(ctx.decrypt(pr0.per_class[0], sk).coeffs == std::vector<u64>(128, 0));

  std::vector<u64> onehot(8, 0);
  onehot[3] = 1;
  auto pr1 = rodent_linear_phase(ctx, em, onehot);
  auto col = ctx.decrypt(pr1.per_class[1], sk).coeffs;
  for (std::size_t j = 0; j < 12; ++j) {
    CHECK(col[j] == m.classes[1].support_vectors[j][3]);
  }

  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_input(8, rng);
    auto pr = rodent_linear_phase(ctx, em, x);
    for (std::size_t c = 0; c < 2; ++c) {
      auto dots = ctx.decrypt(pr.per_class[c], sk).coeffs;
      for (std::size_t j = 0; j < 12; ++j) {
        u64 want = 0;
        for (std::size_t d = 0; d < 8; ++d) {
          want += x[d] * m.classes[c].support_vectors[j][d];
        }
        REQUIRE(dots[j] == want);
      }
    }
  }

  CHECK_THROWS_AS(rodent_linear_phase(ctx, em, std::vector<u64>(7, 1)),
                  parameter_error);
}

TEST_CASE("offload purity: linear phase stays in the scalar/add subset") {
  BfvContext ctx(svm_params());
  Rng rng(23);
  auto sk = ctx.gen_secret_key(rng);
  auto m = random_model(3, 5, 4, rng);
  auto em = encrypt_model(ctx, m, sk, rng);

  OpTrace trace;
  ctx.set_trace(&trace);
  (void)rodent_linear_phase(ctx, em, random_input(5, rng));
  ctx.set_trace(nullptr);
  CHECK(!trace.empty());
  for (HeOp op : trace) {
    REQUIRE((op == HeOp::MulScalar || op == HeOp::Add));
  }
}

TEST_CASE("fly_finish basics") {
  BfvContext ctx(svm_params());
  Rng rng(24);
  auto sk = ctx.gen_secret_key(rng);

  auto single = random_model(1, 4, 3, rng);
  auto em = encrypt_model(ctx, single, sk, rng);
  auto res = fly_finish(ctx, rodent_linear_phase(ctx, em, random_input(4, rng)),
                        sk, single);
  CHECK(res.predicted == 0);

  // mirrored two-class model: identical scores, tie broken to class 0
  SvmModel mirror = random_model(1, 4, 3, rng);
  mirror.class_count = 2;
  mirror.classes.push_back(mirror.classes[0]);
  auto emm = encrypt_model(ctx, mirror, sk, rng);
  auto rm = fly_finish(ctx, rodent_linear_phase(ctx, emm, random_input(4, rng)),
                       sk, mirror);
  CHECK(rm.scores[0].score == rm.scores[1].score);
  CHECK(rm.predicted == 0);
}

TEST_CASE("end-to-end equals the plaintext oracle on 200 random pairs") {
  BfvContext ctx(svm_params());
  Rng rng(25);
  auto sk = ctx.gen_secret_key(rng);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = random_model(2 + trial % 3, 3 + trial % 6, 2 + trial % 5, rng);
    auto x = random_input(m.dimension, rng);
    auto he = fly_finish(
        ctx, rodent_linear_phase(ctx, encrypt_model(ctx, m, sk, rng), x), sk, m);
    auto ref = plaintext_reference_inference(m, x);
    REQUIRE(he.predicted == ref.predicted);
    for (std::size_t c = 0; c < m.class_count; ++c) {
      REQUIRE(he.scores[c].score == ref.scores[c].score);
    }
  }
}

TEST_CASE("padding with alpha-zero dummy vectors never changes scores") {
  BfvContext ctx(svm_params());
  Rng rng(26);
  auto sk = ctx.gen_secret_key(rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = random_model(2, 6, 4, rng);
    auto padded = m;
    for (auto& cls : padded.classes) {
      for (int extra = 0; extra < 3; ++extra) {
        cls.support_vectors.push_back(random_input(6, rng));
        cls.alpha.push_back(0);
      }
    }
    auto x = random_input(6, rng);
    auto a = fly_finish(
        ctx, rodent_linear_phase(ctx, encrypt_model(ctx, m, sk, rng), x), sk, m);
    auto b = fly_finish(
        ctx, rodent_linear_phase(ctx, encrypt_model(ctx, padded, sk, rng), x),
        sk, padded);
    for (std::size_t c = 0; c < 2; ++c) {
      REQUIRE(a.scores[c].score == b.scores[c].score);
    }
  }
}

TEST_CASE("kernel degree: scaling input and vectors multiplies scores by k^4") {
  Rng rng(27);
  for (long long k : {2LL, 3LL}) {
    auto m = random_model(2, 5, 3, rng);
    for (auto& cls : m.classes) cls.bias = 0;
    auto scaled = m;
    // keep everything in small-int range: base features in [0,7] scale fine
    // as plain integers for the reference evaluator
    for (auto& cls : scaled.classes) {
      for (auto& sv : cls.support_vectors) {
        for (auto& v : sv) v *= (u64)k;
      }
    }
    auto x = random_input(5, rng);
    auto kx = x;
    for (auto& v : kx) v *= (u64)k;
    auto base = plaintext_reference_inference(m, x);
    auto big = plaintext_reference_inference(scaled, kx);
    for (std::size_t c = 0; c < 2; ++c) {
      REQUIRE(big.scores[c].score == k * k * k * k * base.scores[c].score);
    }
    // scaling the input alone is not score-invariant
    auto kx_only = plaintext_reference_inference(m, kx);
    bool changed = false;
    for (std::size_t c = 0; c < 2; ++c) {
      changed = changed || kx_only.scores[c].score != base.scores[c].score;
    }
    CHECK(changed);
  }
}

TEST_CASE("exhausted budget is rejected as an integrity failure") {
  // cramped parameters: 13-bit modulus cannot absorb the scalar products
  BfvContext ctx(make_params(16, 13, 1, 257));
  Rng rng(28);
  auto sk = ctx.gen_secret_key(rng);
  auto m = random_model(1, 5, 4, rng);
  auto em = encrypt_model(ctx, m, sk, rng);
  auto pr = rodent_linear_phase(ctx, em, std::vector<u64>(5, 7));
  CHECK_THROWS_AS(fly_finish(ctx, pr, sk, m), integrity_error);
}

TEST_CASE("overflow budget") {
  SvmModel mnist;
  mnist.class_count = 1;
  mnist.dimension = 784;
  mnist.classes.push_back({{std::vector<u64>(784, 7)}, {3}, 10});
  auto params = make_params(128, 36, 1, 65537);
  auto ob = overflow_budget(mnist, params);
  CHECK(ob.max_dot == 38416);
  CHECK(ob.ok);
  CHECK(ob.max_score == 3LL * 38416 * 38416 + 10);

  SvmModel adult = mnist;
  adult.dimension = 14;
  adult.classes[0].support_vectors[0].resize(14);
  CHECK(overflow_budget(adult, params).max_dot == 686);

  SvmModel huge = mnist;
  huge.dimension = 1400;
  auto bad = overflow_budget(huge, params);
  CHECK(!bad.ok);
  CHECK(bad.advice.find("pick t > 68600") != std::string::npos);
}
