// Command-line front end: HE material and roundtrips, SVM inference over
// the functional, on-grid and plaintext paths, intermittency sweeps, the
// offload option table, and the polynomial-multiplication benchmark.
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "rat/offload.hpp"
#include "rat/runtime.hpp"

using namespace rat;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitConsistency = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parameter_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string config_hash(const std::vector<std::string>& parts) {
  std::string all;
  for (const auto& p : parts) all += p + "\x1f";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016zx", std::hash<std::string>{}(all));
  return buf;
}

EncryptionParams he_preset(const std::string& name) {
  if (name == "paper") return make_params(4096, 36, 3, 65537);
  if (name == "desk") return make_params(128, 13, 1, 256, 0.0);
  throw parameter_error("unknown preset '" + name + "' (paper|desk)");
}

// single-prime parameters every inference path, including the grid one,
// can share
EncryptionParams svm_params() { return make_params(128, 36, 1, 65537, 0.0); }

struct SvmArgs {
  std::string model_path, input_path, mode = "functional";
  bool allow_slow = false;
};

int run_svm_infer(const SvmArgs& a, u64 seed) {
  auto model = load_libsvm_model(slurp(a.model_path));
  for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";
  auto raw = read_csv_samples(slurp(a.input_path), model.dimension);
  if (raw.empty()) throw parameter_error("no samples in " + a.input_path);

  std::vector<std::vector<u64>> xs;
  for (const auto& r : raw) xs.push_back(quantize_input(r, model.quant));

  auto params = svm_params();
  auto budget = overflow_budget(model, params);
  if (!budget.ok) throw parameter_error(budget.advice);

  BfvContext ctx(params);
  Rng rng(seed);
  auto sk = ctx.gen_secret_key(rng);
  EncryptedModel em;
  if (a.mode != "plain") em = encrypt_model(ctx, model, sk, rng);

  std::size_t agree = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto oracle = plaintext_reference_inference(model, xs[i]);
    InferenceResult got = oracle;
    if (a.mode == "functional") {
      got = fly_finish(ctx, rodent_linear_phase(ctx, em, xs[i]), sk, model);
    } else if (a.mode == "grid") {
      auto prog = compile_svm_linear(model, params, xs[i]);
      PartialResult pr;
      for (std::size_t c = 0; c < model.class_count; ++c) {
        ArrayGrid g = setup_grid(prog);
        for (std::size_t d = 0; d < model.dimension; ++d) {
          for (std::size_t part = 0; part < 2; ++part) {
            load_field(g, prog, prog.input_fields[2 * d + part],
                       em.class_cts[c][d].parts[part].residues[0]);
          }
        }
        run_program(prog, g, env_modern());
        Ciphertext ct;
        ct.parts.resize(2);
        ct.parts[0].residues = {read_field(g, prog, "ACC0", params.n, env_modern())};
        ct.parts[1].residues = {read_field(g, prog, "ACC1", params.n, env_modern())};
        pr.per_class.push_back(std::move(ct));
      }
      got = fly_finish(ctx, pr, sk, model);
    } else if (a.mode != "plain") {
      throw parameter_error("unknown mode '" + a.mode + "'");
    }
    bool ok = got.predicted == oracle.predicted;
    agree += ok;
    std::cout << "sample " << i << ": predicted=" << got.predicted << " scores=";
    for (const auto& s : got.scores) std::cout << s.score << " ";
    std::cout << (ok ? "" : " MISMATCH") << "\n";
  }
  std::cout << "agreement: " << agree << "/" << xs.size()
            << " with the plaintext oracle\n";
  return agree == xs.size() ? 0 : kExitConsistency;
}

int run_fuzz(std::size_t k, u64 seed) {
  auto prog = compile_ntt(16, 13, false);
  EpisodeConfig base = episode_modern(1.0);
  base.io.input_bits = 16 * 13;
  ArrayGrid ref_grid;
  auto ref = run_episode(prog, base, &ref_grid);
  auto ref_image = snapshot(ref_grid);

  std::mt19937_64 rng(seed);
  std::size_t ok = 0;
  for (std::size_t t = 0; t < k; ++t) {
    EpisodeConfig cfg = base;
    std::uniform_int_distribution<u64> uni(0, 2 * prog.ops.size());
    std::vector<u64> cuts;
    for (int c = 0; c < 6; ++c) cuts.push_back(uni(rng));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (u64 c : cuts) {
      Interrupt iv;
      iv.after_action = c;
      iv.before_commit = (rng() % 3) == 0;
      if (!iv.before_commit && rng() % 2) iv.lines = 1 + rng() % 16;
      cfg.forced.push_back(iv);
    }
    ArrayGrid g;
    auto rep = run_episode(prog, cfg, &g);
    ok += snapshot(g) == ref_image && rep.transmitted == ref.transmitted;
  }
  std::cout << "consistent: " << ok << "/" << k << "\n";
  return ok == k ? 0 : kExitConsistency;
}

void emit(const std::string& out_path, const std::string& header,
          const std::string& body) {
  if (out_path.empty()) {
    std::cout << header << body;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw parameter_error("cannot write " + out_path);
    out << header << body;
    std::cout << "wrote " << out_path << "\n";
  }
}

int run_bench_polymult(const std::string& profile, bool check) {
  struct Ref {
    std::size_t n;
    unsigned w;
    double paper_j;
  };
  const Ref refs[] = {{1024, 16, 9.68e-6}, {4096, 32, 54.65e-6}};
  for (const std::string& p : {std::string("modern"), std::string("projected")}) {
    if (profile != "both" && profile != p) continue;
    PimEnv env = p == "projected" ? env_projected() : env_modern();
    for (const auto& r : refs) {
      auto cost = count_poly_mult(r.n, r.w, env);
      std::cout << p << " n=" << r.n << " w=" << r.w
                << " instructions=" << cost.instructions
                << " energy_uj=" << cost.energy_j * 1e6
                << " latency_ms=" << cost.latency_s * 1e3;
      if (p == "modern") {
        double dev = 100.0 * (cost.energy_j - r.paper_j) / r.paper_j;
        std::cout << " published_uj=" << r.paper_j * 1e6 << " deviation_pct=" << dev;
      }
      std::cout << "\n";
    }
  }
  if (check) {
    auto prog = compile_poly_mult(16, 13);
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<u64> uni(0, prog.q - 1);
    std::vector<u64> av(16), bv(16);
    for (auto& v : av) v = uni(rng);
    for (auto& v : bv) v = uni(rng);
    auto want = negacyclic_convolve_naive(av, bv, prog.q);
    auto rep = verify_program(prog, {av, bv}, want, env_modern());
    std::cout << "functional check: " << (rep.pass ? "pass" : "FAIL " + rep.detail)
              << "\n";
    if (!rep.pass) return kExitConsistency;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beyond-edge encrypted inference toolkit"};
  app.require_subcommand(1);
  u64 seed = 1234;
  app.add_option("--seed", seed, "deterministic seed for all randomness");

  // he
  auto* he = app.add_subcommand("he", "RNS-BFV material and roundtrips");
  he->require_subcommand(1);
  std::string he_pre = "desk";
  he->add_option("--preset", he_pre, "paper|desk")->capture_default_str();
  auto* keygen = he->add_subcommand("keygen", "generate a secret key");
  auto* roundtrip = he->add_subcommand("roundtrip", "encrypt/decrypt a random vector");
  auto* he_bench = he->add_subcommand("bench", "sizes and op timings");

  // svm infer
  auto* svm = app.add_subcommand("svm", "one-vs-all SVM inference");
  auto* infer = svm->add_subcommand("infer", "run a model over CSV samples");
  SvmArgs sa;
  infer->add_option("--model", sa.model_path, "libSVM-style model file")->required();
  infer->add_option("--input", sa.input_path, "CSV samples")->required();
  infer->add_option("--mode", sa.mode, "functional|grid|plain")->capture_default_str();
  infer->add_flag("--allow-slow", sa.allow_slow, "permit paper-scale grid runs");

  // sim sweep
  auto* sim = app.add_subcommand("sim", "intermittent execution");
  auto* sw = sim->add_subcommand("sweep", "latency/energy across power levels");
  std::vector<double> powers = {0.002, 0.020, 0.100};
  std::string sw_profile = "both", sw_out;
  std::size_t sw_n = 1024, fuzz = 0;
  unsigned sw_w = 16;
  sw->add_option("--powers", powers, "harvested power levels, W")
      ->delimiter(',')
      ->capture_default_str();
  sw->add_option("--profile", sw_profile, "modern|projected|both")
      ->capture_default_str();
  sw->add_option("--n", sw_n, "polynomial degree")->capture_default_str();
  sw->add_option("--bitwidth", sw_w, "residue width")->capture_default_str();
  sw->add_option("--out", sw_out, "CSV destination (default stdout)");
  sw->add_option("--interrupt-fuzz", fuzz,
                 "additionally run K randomized-schedule consistency checks");

  // offload
  auto* off = app.add_subcommand("offload", "offloading analysis");
  auto* t3 = off->add_subcommand("table3", "regenerate the option table");
  bool t3_csv = false;
  t3->add_flag("--csv", t3_csv, "machine-readable output");

  // bench
  auto* bench = app.add_subcommand("bench", "benchmarks");
  auto* pm = bench->add_subcommand("polymult", "counting-mode energy totals");
  std::string pm_profile = "modern";
  bool pm_check = false;
  pm->add_option("--profile", pm_profile, "modern|projected|both")
      ->capture_default_str();
  pm->add_flag("--check", pm_check, "verify the desk-size program bit-exactly");

  // let parent-level options (--seed, --preset) appear after the leaf
  for (auto* s : {he, svm, sim, off, bench, keygen, roundtrip, he_bench, infer,
                  sw, t3, pm}) {
    s->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> argvec(argv, argv + argc);
  try {
    if (*keygen || *roundtrip || *he_bench) {
      auto params = he_preset(he_pre);
      BfvContext ctx(params);
      Rng rng(seed);
      auto sk = ctx.gen_secret_key(rng);
      if (*keygen) {
        std::size_t nz = 0;
        for (auto v : sk.ternary) nz += v != 0;
        std::cout << "preset=" << he_pre << " n=" << params.n
                  << " primes=" << params.primes.size() << " t=" << params.t
                  << " key_nonzero=" << nz << "\n";
        return 0;
      }
      std::uniform_int_distribution<u64> uni(0, params.t - 1);
      std::vector<u64> values(params.n);
      for (auto& v : values) v = uni(rng);
      auto t0 = std::chrono::steady_clock::now();
      auto ct = ctx.encrypt(ctx.encode(values), sk, rng);
      auto t1 = std::chrono::steady_clock::now();
      auto back = ctx.decode(ctx.decrypt(ct, sk));
      auto t2 = std::chrono::steady_clock::now();
      if (back != values) {
        std::cerr << "roundtrip mismatch\n";
        return kExitConsistency;
      }
      std::cout << "roundtrip ok ciphertext_bytes=" << ciphertext_bytes(params)
                << "\n";
      if (*he_bench) {
        auto ms = [](auto a, auto b) {
          return std::chrono::duration<double, std::milli>(b - a).count();
        };
        auto t3a = std::chrono::steady_clock::now();
        auto sum = ctx.he_add(ct, ct);
        (void)sum;
        auto t4 = std::chrono::steady_clock::now();
        std::cout << "encrypt_ms=" << ms(t0, t1) << " decrypt_ms=" << ms(t1, t2)
                  << " add_ms=" << ms(t3a, t4)
                  << " budget_bits=" << ctx.noise_budget(ct, sk) << "\n";
      }
      return 0;
    }
    if (*infer) return run_svm_infer(sa, seed);
    if (*sw) {
      std::vector<std::string> profiles;
      if (sw_profile == "both") {
        profiles = {"modern", "projected"};
      } else {
        profiles = {sw_profile};
      }
      auto rows = sweep(powers, profiles, sw_n, sw_w);
      std::string header = "# config=" + config_hash(argvec) + " version=1\n";
      emit(sw_out, header, sweep_csv(rows));
      if (fuzz > 0) return run_fuzz(fuzz, seed);
      return 0;
    }
    if (*t3) {
      auto rows = table3();
      std::string header = "# config=" + config_hash(argvec) + " version=1\n";
      if (t3_csv) {
        std::cout << header << table3_csv(rows);
      } else {
        std::cout << table3_text(rows);
      }
      return 0;
    }
    if (*pm) return run_bench_polymult(pm_profile, pm_check);
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const parameter_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const integrity_error& e) {
    std::cerr << "integrity: " << e.what() << "\n";
    return kExitConsistency;
  } catch (const livelock_error& e) {
    std::cerr << "livelock: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
