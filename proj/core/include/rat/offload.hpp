// Energy and latency comparison of the three offloading options for a
// concealed sensing device: transmit raw inputs to the distant server, run
// inference locally, or offload encrypted inference to the nearby
// accelerator.  Regenerates the published option table from the stated
// constants.
#pragma once

#include <string>
#include <vector>

#include "rat/modmath.hpp"

namespace rat {

struct ScenarioConfig {
  double e_ft_bit = 400e-6;   // far transmit, J per bit
  double e_fr_bit = 158e-12;  // near link, J per bit, both directions
  double e_rf_bit = 158e-12;
  double p_f = 60e-6;         // sensing device power budget, W
  double p_r = 0;             // accelerator power, W
  double e_f = 0;             // local inference energy, J
  double e_encrypt = 60e-6;
  double e_decrypt = 60e-6;
  double alpha = 0;           // probability a result is worth reporting
  std::size_t input_bits = 0;
  std::size_t result_bits = 0;
};

struct Margin {
  bool holds = false;
  double margin_j = 0;  // right side minus left side
};

// local inference beats always-transmit: E_F + alpha * E_FT < E_FT
Margin local_beats_remote(const ScenarioConfig& cfg);

// the alpha below which local inference wins: 1 - E_F / E_FT
double alpha_threshold(const ScenarioConfig& cfg);

// encrypted offload beats local: E_enc + E_FR + E_RF + E_dec < E_F.
// encrypt_inputs = false drops E_encrypt (inputs already non-sensitive).
Margin offload_beats_local(const ScenarioConfig& cfg, bool encrypt_inputs = true);

struct OffloadLatencies {
  double option1_s = 0;  // transmit raw: input_bits * E_FT_bit / P_F
  double option2_s = 0;  // local: E_F / P_F
  double option3_s = 0;  // offload: E_FR/P_F + (E_R + E_RF)/P_R
  double min_p_r_w = 0;  // accelerator power where option 3 ties option 2
};

OffloadLatencies latencies(const ScenarioConfig& cfg, double e_r_j);

struct Table3Row {
  std::string dataset;
  std::size_t features = 0;
  std::size_t quant_bits = 0;  // transmitted bits per feature
  std::size_t classes = 0;
  double e_f_j = 0;
  bool e_f_extrapolated = false;
  double e_r_j = 0;
  double option1_s = 0;
  double option2_s = 0;
  double min_p_r_w = 0;        // this model
  double paper_min_p_r_w = 0;  // published value, reported side by side
};

// Regenerates the option table for the three published datasets; result
// payloads are class_count ciphertexts of the given byte size.
std::vector<Table3Row> table3(std::size_t ciphertext_bytes = 110592);

std::string table3_text(const std::vector<Table3Row>& rows);
std::string table3_csv(const std::vector<Table3Row>& rows);

}  // namespace rat
