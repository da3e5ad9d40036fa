#include "rat/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace rat {

namespace {

[[noreturn]] void fail_at(std::size_t line_no, const std::string& what) {
  throw parse_error("line " + std::to_string(line_no) + ": " + what);
}

long long round_half_away(double x) { return std::llround(x); }

u64 quantize_feature(double raw, double scale, double offset) {
  long long v = round_half_away(scale * raw + offset);
  return (u64)std::clamp(v, 0LL, 7LL);
}

double parse_double(const std::string& tok, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    fail_at(line_no, "expected a number, got '" + tok + "'");
  }
  if (used != tok.size()) fail_at(line_no, "trailing junk in number '" + tok + "'");
  return v;
}

struct RawRow {
  double alpha = 0;
  std::vector<std::pair<std::size_t, double>> entries;  // 1-based index
};

}  // namespace

SvmModel load_libsvm_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  std::size_t nr_class = 0, total_sv = 0;
  std::vector<double> rho;
  std::vector<std::size_t> nr_sv;
  bool saw_sv = false;

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "SV") {
      saw_sv = true;
      break;
    }
    if (key == "nr_class") {
      if (!(ls >> nr_class) || nr_class == 0) fail_at(line_no, "bad nr_class");
    } else if (key == "total_sv") {
      if (!(ls >> total_sv)) fail_at(line_no, "bad total_sv");
    } else if (key == "rho") {
      double v;
      while (ls >> v) rho.push_back(v);
    } else if (key == "nr_sv") {
      std::size_t v;
      while (ls >> v) nr_sv.push_back(v);
    } else if (key == "svm_type" || key == "kernel_type" || key == "degree" ||
               key == "gamma" || key == "coef0" || key == "label") {
      // accepted but unused
    } else {
      fail_at(line_no, "unknown header key '" + key + "'");
    }
  }
  if (!saw_sv) fail_at(line_no, "missing SV separator");
  if (nr_class == 0) fail_at(line_no, "missing nr_class");
  if (nr_sv.size() != nr_class) fail_at(line_no, "nr_sv wants one count per class");
  if (rho.size() != nr_class) fail_at(line_no, "rho wants one value per class");
  std::size_t declared = std::accumulate(nr_sv.begin(), nr_sv.end(), std::size_t{0});
  if (total_sv != 0 && total_sv != declared) {
    fail_at(line_no, "total_sv disagrees with nr_sv");
  }

  std::vector<RawRow> rows;
  std::string sidecar;
  while (std::getline(in, line)) {
    ++line_no;
    std::string first;
    std::istringstream probe(line);
    if (!(probe >> first)) continue;
    if (first[0] == '{') {
      // quantization sidecar starts; consume the rest of the text
      sidecar = line + "\n";
      std::string rest;
      while (std::getline(in, rest)) sidecar += rest + "\n";
      break;
    }
    RawRow row;
    row.alpha = parse_double(first, line_no);
    std::string tok;
    while (probe >> tok) {
      auto colon = tok.find(':');
      if (colon == std::string::npos) fail_at(line_no, "expected idx:val, got '" + tok + "'");
      std::size_t idx = 0;
      try {
        idx = std::stoul(tok.substr(0, colon));
      } catch (const std::exception&) {
        fail_at(line_no, "bad sparse index in '" + tok + "'");
      }
      if (idx == 0) fail_at(line_no, "sparse indices are 1-based");
      row.entries.emplace_back(idx, parse_double(tok.substr(colon + 1), line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() != declared) {
    fail_at(line_no, "expected " + std::to_string(declared) + " SV rows, got " +
                         std::to_string(rows.size()));
  }

  std::size_t dimension = 0;
  for (const auto& row : rows) {
    for (auto& [idx, val] : row.entries) dimension = std::max(dimension, idx);
  }
  if (dimension == 0) fail_at(line_no, "no sparse entries, cannot infer dimension");

  SvmModel model;
  model.class_count = nr_class;
  model.dimension = dimension;
  model.quant.scale.assign(dimension, 1.0);
  model.quant.offset.assign(dimension, 0.0);
  if (!sidecar.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(sidecar);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(std::string("sidecar: ") + e.what());
    }
    auto fill = [&](const char* key, std::vector<double>& out) {
      if (!j.contains(key)) return;
      if (j[key].is_number()) {
        out.assign(dimension, j[key].get<double>());
      } else {
        out = j[key].get<std::vector<double>>();
        if (out.size() != dimension) {
          throw parse_error(std::string("sidecar: ") + key + " wants " +
                            std::to_string(dimension) + " entries");
        }
      }
    };
    fill("scale", model.quant.scale);
    fill("offset", model.quant.offset);
    if (j.contains("alpha_scale")) model.quant.alpha_scale = j["alpha_scale"].get<double>();
  }

  std::size_t row_at = 0;
  for (std::size_t c = 0; c < nr_class; ++c) {
    SvmClass cls;
    cls.bias = round_half_away(-rho[c] * model.quant.alpha_scale);
    std::vector<std::size_t> order(nr_sv[c]);
    std::iota(order.begin(), order.end(), row_at);
    if (nr_sv[c] > kMaxSupportVectors) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(rows[a].alpha) > std::abs(rows[b].alpha);
      });
      order.resize(kMaxSupportVectors);
      std::sort(order.begin(), order.end());
      model.warnings.push_back("class " + std::to_string(c) + ": " +
                               std::to_string(nr_sv[c]) + " support vectors, kept the " +
                               std::to_string(kMaxSupportVectors) + " largest by |alpha|");
    }
    for (std::size_t r : order) {
      const auto& row = rows[r];
      cls.alpha.push_back(round_half_away(row.alpha * model.quant.alpha_scale));
      std::vector<u64> sv(dimension, 0);
      for (auto& [idx, val] : row.entries) {
        sv[idx - 1] = quantize_feature(val, model.quant.scale[idx - 1],
                                       model.quant.offset[idx - 1]);
      }
      cls.support_vectors.push_back(std::move(sv));
    }
    row_at += nr_sv[c];
    model.classes.push_back(std::move(cls));
  }
  return model;
}

std::vector<u64> quantize_input(std::span<const double> raw,
                                const QuantDescriptor& quant) {
  if (raw.size() != quant.scale.size() || raw.size() != quant.offset.size()) {
    throw parameter_error("quantize_input: length mismatch");
  }
  std::vector<u64> out(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) {
    out[d] = quantize_feature(raw[d], quant.scale[d], quant.offset[d]);
  }
  return out;
}

std::vector<std::vector<double>> read_csv_samples(const std::string& text,
                                                  std::size_t dimension) {
  std::vector<std::vector<double>> samples;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> toks;
    std::string tok;
    std::istringstream ls(line);
    while (std::getline(ls, tok, ',')) toks.push_back(tok);
    if (line_no == 1) {
      // optional header: skip if any column fails to parse as a number
      bool numeric = true;
      for (const auto& t : toks) {
        try {
          std::size_t used = 0;
          std::stod(t, &used);
          if (used == 0) numeric = false;
        } catch (const std::exception&) {
          numeric = false;
        }
      }
      if (!numeric) continue;
    }
    if (toks.size() != dimension) {
      fail_at(line_no, "expected " + std::to_string(dimension) + " columns, got " +
                           std::to_string(toks.size()));
    }
    std::vector<double> row(dimension);
    for (std::size_t d = 0; d < dimension; ++d) row[d] = parse_double(toks[d], line_no);
    samples.push_back(std::move(row));
  }
  return samples;
}

EncryptedModel encrypt_model(const BfvContext& ctx, const SvmModel& model,
                             const SecretKey& sk, Rng& rng) {
  std::size_t n = ctx.params().n;
  EncryptedModel em;
  em.dimension = model.dimension;
  for (const auto& cls : model.classes) {
    std::size_t m = cls.support_vectors.size();
    if (m > n) throw capacity_error("encrypt_model: more support vectors than slots");
    std::vector<Ciphertext> cts;
    for (std::size_t d = 0; d < model.dimension; ++d) {
      std::vector<u64> column(m);
      for (std::size_t j = 0; j < m; ++j) column[j] = cls.support_vectors[j][d];
      cts.push_back(ctx.encrypt(ctx.encode(column), sk, rng));
    }
    em.class_cts.push_back(std::move(cts));
    em.sv_counts.push_back(m);
  }
  return em;
}

PartialResult rodent_linear_phase(const BfvContext& ctx,
                                  const EncryptedModel& em,
                                  std::span<const u64> x) {
  if (x.size() != em.dimension) {
    throw parameter_error("rodent_linear_phase: input dimension mismatch");
  }
  PartialResult pr;
  for (const auto& cts : em.class_cts) {
    Ciphertext acc = ctx.he_mul_scalar(cts[0], x[0]);
    for (std::size_t d = 1; d < cts.size(); ++d) {
      acc = ctx.he_add(acc, ctx.he_mul_scalar(cts[d], x[d]));
    }
    pr.per_class.push_back(std::move(acc));
  }
  return pr;
}

InferenceResult fly_finish(const BfvContext& ctx, const PartialResult& pr,
                           const SecretKey& sk, const SvmModel& model) {
  if (pr.per_class.size() != model.class_count) {
    throw parameter_error("fly_finish: class count mismatch");
  }
  InferenceResult res;
  for (std::size_t c = 0; c < model.class_count; ++c) {
    if (ctx.noise_budget(pr.per_class[c], sk) <= 0.0) {
      throw integrity_error("fly_finish: noise budget exhausted on class " +
                            std::to_string(c));
    }
    auto pt = ctx.decrypt(pr.per_class[c], sk);
    const auto& cls = model.classes[c];
    long long score = cls.bias;
    for (std::size_t j = 0; j < cls.alpha.size(); ++j) {
      long long dot = (long long)pt.coeffs[j];
      score += cls.alpha[j] * dot * dot;
    }
    res.scores.push_back({c, score});
  }
  res.predicted = 0;
  for (std::size_t c = 1; c < res.scores.size(); ++c) {
    if (res.scores[c].score > res.scores[res.predicted].score) res.predicted = c;
  }
  return res;
}

InferenceResult plaintext_reference_inference(const SvmModel& model,
                                              std::span<const u64> x) {
  if (x.size() != model.dimension) {
    throw parameter_error("reference inference: input dimension mismatch");
  }
  InferenceResult res;
  for (std::size_t c = 0; c < model.class_count; ++c) {
    const auto& cls = model.classes[c];
    long long score = cls.bias;
    for (std::size_t j = 0; j < cls.support_vectors.size(); ++j) {
      long long dot = 0;
      for (std::size_t d = 0; d < model.dimension; ++d) {
        dot += (long long)x[d] * (long long)cls.support_vectors[j][d];
      }
      score += cls.alpha[j] * dot * dot;
    }
    res.scores.push_back({c, score});
  }
  res.predicted = 0;
  for (std::size_t c = 1; c < res.scores.size(); ++c) {
    if (res.scores[c].score > res.scores[res.predicted].score) res.predicted = c;
  }
  return res;
}

OverflowBudget overflow_budget(const SvmModel& model,
                               const EncryptionParams& params) {
  OverflowBudget ob;
  ob.max_dot = (long long)model.dimension * 7 * 7;
  for (const auto& cls : model.classes) {
    long long s = std::abs(cls.bias);
    for (long long a : cls.alpha) s += std::abs(a) * ob.max_dot * ob.max_dot;
    ob.max_score = std::max(ob.max_score, s);
  }
  ob.ok = (u64)ob.max_dot < params.t;
  if (!ob.ok) {
    ob.advice = "worst-case dot product " + std::to_string(ob.max_dot) +
                " >= t = " + std::to_string(params.t) +
                "; pick t > " + std::to_string(ob.max_dot);
  }
  return ob;
}

}  // namespace rat
