#include "rat/offload.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace rat {

namespace {

void check(const ScenarioConfig& cfg) {
  if (cfg.alpha < 0 || cfg.alpha > 1) throw parameter_error("alpha outside [0,1]");
  if (cfg.e_ft_bit < 0 || cfg.e_fr_bit < 0 || cfg.e_rf_bit < 0 || cfg.e_f < 0) {
    throw parameter_error("energies must be non-negative");
  }
}

double e_ft(const ScenarioConfig& cfg) { return (double)cfg.input_bits * cfg.e_ft_bit; }
double e_fr(const ScenarioConfig& cfg) { return (double)cfg.input_bits * cfg.e_fr_bit; }
double e_rf(const ScenarioConfig& cfg) { return (double)cfg.result_bits * cfg.e_rf_bit; }

}  // namespace

Margin local_beats_remote(const ScenarioConfig& cfg) {
  check(cfg);
  double lhs = cfg.e_f + cfg.alpha * e_ft(cfg);
  double rhs = e_ft(cfg);
  return {lhs < rhs, rhs - lhs};
}

double alpha_threshold(const ScenarioConfig& cfg) {
  check(cfg);
  double ft = e_ft(cfg);
  if (ft <= 0) throw parameter_error("alpha threshold needs input_bits > 0");
  return 1.0 - cfg.e_f / ft;
}

Margin offload_beats_local(const ScenarioConfig& cfg, bool encrypt_inputs) {
  check(cfg);
  double lhs = (encrypt_inputs ? cfg.e_encrypt : 0.0) + e_fr(cfg) + e_rf(cfg) +
               cfg.e_decrypt;
  return {lhs < cfg.e_f, cfg.e_f - lhs};
}

OffloadLatencies latencies(const ScenarioConfig& cfg, double e_r_j) {
  check(cfg);
  if (cfg.p_f <= 0) throw parameter_error("P_F must be positive");
  OffloadLatencies out;
  out.option1_s = e_ft(cfg) / cfg.p_f;
  out.option2_s = cfg.e_f / cfg.p_f;
  if (cfg.p_r > 0) {
    out.option3_s = e_fr(cfg) / cfg.p_f + (e_r_j + e_rf(cfg)) / cfg.p_r;
  }
  // option 3 ties option 2 where E_FR/P_F + (E_R + E_RF)/P_R = E_F/P_F
  double headroom = cfg.e_f - e_fr(cfg);
  if (headroom > 0) {
    out.min_p_r_w = (e_r_j + e_rf(cfg)) * cfg.p_f / headroom;
  }
  return out;
}

std::vector<Table3Row> table3(std::size_t ciphertext_bytes) {
  struct Entry {
    const char* name;
    std::size_t features, quant_bits, classes;
    double e_f, e_r, paper_min;
    bool extrapolated;
  };
  // E_F back-solved from the published option-2 latencies at P_F = 60 uW;
  // the ADULT value was itself published as an extrapolation
  const Entry entries[] = {
      {"MNIST", 784, 3, 10, 27e-3, 1.188716, 3.36e-3, false},
      {"HAR", 561, 3, 6, 12.5e-3, 0.851282, 4.28e-3, false},
      {"ADULT", 14, 3, 2, 481.8e-6, 0.031736, 11.29e-3, true},
  };
  std::vector<Table3Row> rows;
  for (const auto& e : entries) {
    ScenarioConfig cfg;
    cfg.input_bits = e.features * e.quant_bits;
    cfg.result_bits = e.classes * ciphertext_bytes * 8;
    cfg.e_f = e.e_f;
    auto lat = latencies(cfg, e.e_r);
    Table3Row row;
    row.dataset = e.name;
    row.features = e.features;
    row.quant_bits = e.quant_bits;
    row.classes = e.classes;
    row.e_f_j = e.e_f;
    row.e_f_extrapolated = e.extrapolated;
    row.e_r_j = e.e_r;
    row.option1_s = lat.option1_s;
    row.option2_s = lat.option2_s;
    row.min_p_r_w = lat.min_p_r_w;
    row.paper_min_p_r_w = e.paper_min;
    rows.push_back(row);
  }
  return rows;
}

std::string table3_text(const std::vector<Table3Row>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "dataset" << std::right << std::setw(12)
     << "option1_s" << std::setw(12) << "option2_s" << std::setw(14)
     << "min_P_R_mW" << std::setw(14) << "published_mW" << std::setw(12)
     << "deviation" << '\n';
  for (const auto& r : rows) {
    double dev = 100.0 * (r.min_p_r_w - r.paper_min_p_r_w) / r.paper_min_p_r_w;
    os << std::left << std::setw(8) << r.dataset << std::right << std::fixed
       << std::setprecision(2) << std::setw(12) << r.option1_s << std::setw(12)
       << r.option2_s << std::setw(14) << r.min_p_r_w * 1e3 << std::setw(14)
       << r.paper_min_p_r_w * 1e3 << std::setprecision(1) << std::setw(11) << dev
       << "%" << os.widen('\n');
    os.unsetf(std::ios::fixed);
  }
  os << "result payload = classes x ciphertext; min_P_R from the latency "
        "inequality, published values include unobservable overheads\n";
  return os.str();
}

std::string table3_csv(const std::vector<Table3Row>& rows) {
  std::ostringstream os;
  os << "dataset,features,quant_bits,classes,e_f_j,e_f_extrapolated,e_r_j,"
        "option1_s,option2_s,min_p_r_w,paper_min_p_r_w\n";
  for (const auto& r : rows) {
    os << r.dataset << ',' << r.features << ',' << r.quant_bits << ','
       << r.classes << ',' << r.e_f_j << ',' << (r.e_f_extrapolated ? 1 : 0)
       << ',' << r.e_r_j << ',' << r.option1_s << ',' << r.option2_s << ','
       << r.min_p_r_w << ',' << r.paper_min_p_r_w << '\n';
  }
  return os.str();
}

}  // namespace rat
