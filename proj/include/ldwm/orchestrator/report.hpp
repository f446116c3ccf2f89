#pragma once

#include <string>
#include <vector>

#include "ldwm/orchestrator/config.hpp"

namespace ldwm {

struct ParamRow {
  std::string name;
  std::size_t count = 0;
};

/// Eight rows: world model, VQ-VAE, encoder, decoder, dynamics network,
/// policy network, world model + policy (training), encoder + policy
/// (inference). Encoder and decoder rows each include the K x E codebook.
std::vector<ParamRow> report_params(const RunConfig& cfg);
std::string format_param_table(const std::vector<ParamRow>& rows);

/// Parses metrics.csv text and renders one line chart per metric column
/// (x = iteration). Returns (column name, SVG document) pairs.
std::vector<std::pair<std::string, std::string>> plot_metrics(const std::string& csv_text);

}  // namespace ldwm
