#include "algan/blrs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace algan {

void BlrsConfig::validate() const {
  for (double v : {eta_g, eta_d, lambda_scale, c1, c2, floor, ceiling}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("blrs: rates and constants must be positive");
  }
  if (floor > ceiling) throw std::invalid_argument("blrs: floor exceeds ceiling");
  if (clamp && (eta_g < floor || eta_g > ceiling || eta_d < floor || eta_d > ceiling)) {
    throw std::invalid_argument("blrs: initial rates lie outside [floor, ceiling]");
  }
}

BlrsState BlrsState::initial(const BlrsConfig& cfg) {
  cfg.validate();
  BlrsState s;
  s.eta_g = cfg.eta_g;
  s.eta_d = cfg.eta_d;
  s.lambda_scale = cfg.lambda_scale;
  s.c1 = cfg.c1;
  s.c2 = cfg.c2;
  s.floor = cfg.floor;
  s.ceiling = cfg.ceiling;
  s.clamp = cfg.clamp;
  return s;
}

BlrsState blrs_step(const BlrsState& state, double g_loss, double d_loss, BlrsBranch* branch) {
  if (!std::isfinite(g_loss) || !std::isfinite(d_loss)) {
    throw std::invalid_argument("blrs: non-finite loss at epoch " + std::to_string(state.epoch));
  }
  if (state.epoch < 1) throw std::invalid_argument("blrs: epoch must be >= 1");
  BlrsState next = state;
  BlrsBranch taken = BlrsBranch::record;
  if (state.epoch > 1) {
    if (!state.prev_G_loss || !state.prev_D_loss) throw std::logic_error("blrs: missing previous losses");
    const double scaled_g = state.lambda_scale * std::abs(g_loss - *state.prev_G_loss);
    const double delta_d = std::abs(d_loss - *state.prev_D_loss);
    if (scaled_g > delta_d) {
      next.eta_g -= state.c1;
      next.eta_d += state.c2;
      taken = BlrsBranch::slow_generator;
    } else if (scaled_g < delta_d) {
      next.eta_g += state.c2;
      next.eta_d -= state.c1;
      taken = BlrsBranch::speed_generator;
    } else {
      taken = BlrsBranch::hold;
    }
    if (state.clamp) {
      next.eta_g = std::clamp(next.eta_g, state.floor, state.ceiling);
      next.eta_d = std::clamp(next.eta_d, state.floor, state.ceiling);
    }
  }
  next.prev_G_loss = g_loss;
  next.prev_D_loss = d_loss;
  next.epoch = state.epoch + 1;
  if (branch) *branch = taken;
  return next;
}

std::vector<BlrsTracePoint> blrs_trace(const BlrsState& initial, std::span<const std::pair<double, double>> losses) {
  if (losses.empty()) throw std::invalid_argument("blrs trace: empty loss sequence");
  std::vector<BlrsTracePoint> out;
  out.reserve(losses.size());
  BlrsState s = initial;
  for (const auto& [g, d] : losses) {
    const long epoch = s.epoch;
    s = blrs_step(s, g, d);
    out.push_back({epoch, s.eta_g, s.eta_d, g, d});
  }
  return out;
}

void write_blrs_trace_csv(std::ostream& out, std::span<const BlrsTracePoint> trace) {
  out << "epoch,eta_g,eta_d,g_loss,d_loss\n";
  char buf[160];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g\n", p.epoch, p.eta_g, p.eta_d, p.g_loss, p.d_loss);
    out << buf;
  }
}

std::vector<std::pair<double, double>> read_loss_log_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("loss log: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("loss log: missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t gi = column("g_loss"), di = column("d_loss");
  std::vector<std::pair<double, double>> out;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() <= std::max(gi, di)) throw std::invalid_argument("loss log: short row " + std::to_string(row));
    try {
      out.emplace_back(std::stod(cells[gi]), std::stod(cells[di]));
    } catch (const std::exception&) {
      throw std::invalid_argument("loss log: bad number on row " + std::to_string(row));
    }
  }
  return out;
}

}  // namespace algan
