#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace algan {

struct BlrsConfig {
  double eta_g = 2e-4;
  double eta_d = 1e-4;
  double lambda_scale = 5e-2;
  double c1 = 1e-6;
  double c2 = 1e-5;
  double floor = 1e-7;
  double ceiling = 1e-2;
  bool clamp = true;  // false follows the unbounded update exactly

  void validate() const;
};

struct BlrsState {
  double eta_g = 2e-4;
  double eta_d = 1e-4;
  std::optional<double> prev_G_loss;
  std::optional<double> prev_D_loss;
  double lambda_scale = 5e-2;
  double c1 = 1e-6;
  double c2 = 1e-5;
  long epoch = 1;  // epoch whose losses the next step consumes
  double floor = 1e-7;
  double ceiling = 1e-2;
  bool clamp = true;

  static BlrsState initial(const BlrsConfig& cfg = {});
  friend bool operator==(const BlrsState&, const BlrsState&) = default;
};

enum class BlrsBranch { record, slow_generator, speed_generator, hold };

/// One epoch of the coupled rate update. Epoch 1 only records the losses.
/// Afterwards, with dG = |g - prev_g| and dD = |d - prev_d|:
///   lambda dG > dD: eta_g -= c1, eta_d += c2
///   lambda dG < dD: eta_g += c2, eta_d -= c1
///   otherwise unchanged,
/// then both rates are clamped to [floor, ceiling] when clamping is on.
BlrsState blrs_step(const BlrsState& state, double g_loss, double d_loss, BlrsBranch* branch = nullptr);

struct BlrsTracePoint {
  long epoch;
  double eta_g;  // rates after consuming this epoch's losses
  double eta_d;
  double g_loss;
  double d_loss;
};

/// Folds blrs_step over (g_loss, d_loss) pairs.
std::vector<BlrsTracePoint> blrs_trace(const BlrsState& initial, std::span<const std::pair<double, double>> losses);

/// CSV with header epoch,eta_g,eta_d,g_loss,d_loss; reals printed with 17 digits.
void write_blrs_trace_csv(std::ostream& out, std::span<const BlrsTracePoint> trace);

/// Reads g_loss and d_loss columns from a CSV with a header row.
std::vector<std::pair<double, double>> read_loss_log_csv(std::istream& in);

}  // namespace algan
