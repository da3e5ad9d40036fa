// Integer one-vs-all SVM with a degree-2 polynomial kernel, split so the
// linear part (scalar products, sums) runs under encryption and the
// squaring/argmax finish runs on decrypted values.
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rat/bfv.hpp"

namespace rat {

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct integrity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hard cap on support vectors per class, matching the largest ring degree
// a single ciphertext can carry.
inline constexpr std::size_t kMaxSupportVectors = 4096;

// Affine quantization sidecar: q = clamp(round(scale*raw + offset), 0, 7),
// half rounds away from zero.  alpha_scale maps real dual coefficients and
// biases to integers.
struct QuantDescriptor {
  std::vector<double> scale;   // per feature
  std::vector<double> offset;  // per feature
  double alpha_scale = 1.0;
};

struct SvmClass {
  std::vector<std::vector<u64>> support_vectors;  // M_c x D, entries in [0,7]
  std::vector<long long> alpha;                   // one per support vector
  long long bias = 0;
};

struct SvmModel {
  std::size_t class_count = 0;
  std::size_t dimension = 0;
  std::vector<SvmClass> classes;
  QuantDescriptor quant;
  std::vector<std::string> warnings;  // e.g. truncation notices
};

// libSVM-style model text: "key value..." header lines, an "SV" separator,
// then one "alpha idx:val idx:val ..." row per support vector, rows
// assigned to classes in nr_sv order.  An optional JSON sidecar object may
// follow the rows.  Errors name the offending line.
SvmModel load_libsvm_model(const std::string& text);

std::vector<u64> quantize_input(std::span<const double> raw,
                                const QuantDescriptor& quant);

// CSV samples, one row per sample, D columns, optional header row.
std::vector<std::vector<double>> read_csv_samples(const std::string& text,
                                                  std::size_t dimension);

// Transposed layout: ciphertext d of a class holds, in coefficient j,
// element d of that class's support vector j; slots past M_c stay zero.
struct EncryptedModel {
  std::vector<std::vector<Ciphertext>> class_cts;  // [class][dimension]
  std::vector<std::size_t> sv_counts;              // meaningful slots per class
  std::size_t dimension = 0;
};

struct PartialResult {
  std::vector<Ciphertext> per_class;  // coefficient j decrypts to dot(x, sv_j)
};

struct ClassScore {
  std::size_t class_id = 0;
  long long score = 0;  // sum_j alpha_j * dot_j^2 + bias
};

struct InferenceResult {
  std::size_t predicted = 0;  // argmax score, ties to lowest class id
  std::vector<ClassScore> scores;
};

EncryptedModel encrypt_model(const BfvContext& ctx, const SvmModel& model,
                             const SecretKey& sk, Rng& rng);

// The offloaded subset: per class, sum_d he_mul_scalar(ct_d, x[d]).  Only
// scalar products and additions; no rotations, no ct-ct products.
PartialResult rodent_linear_phase(const BfvContext& ctx,
                                  const EncryptedModel& em,
                                  std::span<const u64> x);

// Decrypts the per-class dot products and finishes the degree-2 kernel.
// Throws integrity_error if any ciphertext's noise budget is exhausted.
InferenceResult fly_finish(const BfvContext& ctx, const PartialResult& pr,
                           const SecretKey& sk, const SvmModel& model);

// Pure-integer evaluation of the same score formula; ground truth for the
// homomorphic path.
InferenceResult plaintext_reference_inference(const SvmModel& model,
                                              std::span<const u64> x);

struct OverflowBudget {
  long long max_dot = 0;    // D * 7 * 7
  long long max_score = 0;  // worst class: sum |alpha| * max_dot^2 + |bias|
  bool ok = false;          // max_dot < t, the encrypted-phase requirement
  std::string advice;       // set when !ok
};

OverflowBudget overflow_budget(const SvmModel& model,
                               const EncryptionParams& params);

}  // namespace rat
