#include "ldwm/orchestrator/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ldwm/codec/codec.hpp"

namespace ldwm {

std::vector<ParamRow> report_params(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  Rng rng(0);
  Codec<float> codec(cfg.codec, rng);
  DynamicsNetwork<float> dyn(cfg.dynamics, rng);
  Policy<float> policy(cfg.policy, rng);
  const std::size_t vq = count_params(codec, CodecPart::VqVae);
  const std::size_t enc = count_params(codec, CodecPart::Encoder);
  const std::size_t dec = count_params(codec, CodecPart::Decoder);
  const std::size_t dn = count_scalars(dyn.parameters());
  const std::size_t pn = count_scalars(policy.parameters());
  return {{"World model", vq + dn},
          {"VQ-VAE", vq},
          {"Encoder", enc},
          {"Decoder", dec},
          {"Dynamics network", dn},
          {"Policy network", pn},
          {"World model + policy (training)", vq + dn + pn},
          {"Encoder + policy (inference)", enc + pn}};
}

std::string format_param_table(const std::vector<ParamRow>& rows) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  for (const auto& r : rows) {
    os << r.name << std::string(width - r.name.size() + 2, ' ') << r.count << '\n';
  }
  return os.str();
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::string svg_chart(const std::string& title, const std::vector<double>& xs, const std::vector<double>& ys) {
  const double W = 480, H = 300, L = 60, R = 20, T = 30, B = 40;
  double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
  double y0 = *std::min_element(ys.begin(), ys.end()), y1 = *std::max_element(ys.begin(), ys.end());
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y0 -= 1, y1 += 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  char buf[160];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, H - B);
  os << buf;
  for (double v : {y0, y1}) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">%.4g</text>\n",
                  L - 4, py(v) + 3, v);
    os << buf;
  }
  for (double v : {x0, x1}) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">%.4g</text>\n",
                  px(v), H - B + 14, v);
    os << buf;
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 6
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">iteration</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(xs[i]), py(ys[i]));
    os << buf;
  }
  os << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#1f77b4\"/>\n", px(xs[i]), py(ys[i]));
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

std::vector<std::pair<std::string, std::string>> plot_metrics(const std::string& csv_text) {
  std::istringstream is(csv_text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("plot: empty metrics file");
  const auto header = split(line);
  if (header.empty() || header[0] != "iteration") throw std::invalid_argument("plot: first column must be iteration");
  std::vector<std::vector<double>> cols(header.size());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("plot: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        cols[i].push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw std::invalid_argument("plot: line " + std::to_string(lineno) + ": not a number '" + cells[i] + "'");
      }
    }
  }
  if (cols[0].empty()) throw std::invalid_argument("plot: no data rows");
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 1; i < header.size(); ++i) out.emplace_back(header[i], svg_chart(header[i], cols[0], cols[i]));
  return out;
}

}  // namespace ldwm
