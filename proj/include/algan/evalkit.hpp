#pragma once

#include "algan/features.hpp"

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace algan {

/// Inclusive coefficient range. last < 0 means "through the final row".
struct DimRange {
  Index first = 1;
  Index last = -1;

  static DimRange all() { return {0, -1}; }
};

inline constexpr double kMcdScale = 10.0 / std::numbers::ln10;

/// Frame-summed distortion (10/ln10) sqrt(2 sum_d (r_d - c_d)^2) and the frame count.
template <typename A, typename B>
double mcd_sum(const Eigen::MatrixBase<A>& ref, const Eigen::MatrixBase<B>& conv, DimRange dims = {}) {
  if (ref.rows() != conv.rows() || ref.cols() != conv.cols()) {
    throw std::invalid_argument("mcd: reference is " + std::to_string(ref.rows()) + "x" + std::to_string(ref.cols()) +
                                ", converted is " + std::to_string(conv.rows()) + "x" + std::to_string(conv.cols()));
  }
  const Index last = dims.last < 0 ? ref.rows() - 1 : dims.last;
  if (dims.first < 0 || last >= ref.rows() || dims.first > last) throw std::invalid_argument("mcd: bad dimension range");
  const Index n = last - dims.first + 1;
  const Eigen::ArrayXXd diff = ref.middleRows(dims.first, n).template cast<double>().array() -
                               conv.middleRows(dims.first, n).template cast<double>().array();
  return kMcdScale * (2.0 * diff.square().colwise().sum()).sqrt().sum();
}

/// Mean over frames of (10/ln10) sqrt(2 sum_d (r_d - c_d)^2). Coefficient 0 is
/// excluded by default.
template <typename A, typename B>
double mcd(const Eigen::MatrixBase<A>& ref, const Eigen::MatrixBase<B>& conv, DimRange dims = {}) {
  if (ref.cols() == 0) throw std::invalid_argument("mcd: no frames");
  return mcd_sum(ref, conv, dims) / static_cast<double>(ref.cols());
}

/// Frame-weighted MCD over paired utterances.
double mcd(const FeatureArchive& ref, const FeatureArchive& conv, DimRange dims = {});

struct EvalReport {
  double mcd_db = 0.0;
  std::vector<double> per_dim_mean_err;  // mean |ref - conv| per coefficient
  long n_frames = 0;
  std::vector<std::pair<std::string, std::string>> config;  // echoed settings, in order

  void validate() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate(const FeatureArchive& ref, const FeatureArchive& conv, DimRange dims = {});

enum class ReportFormat { csv, json };
ReportFormat parse_report_format(const std::string& text);

std::string report_to_json(const EvalReport& r);
std::string report_to_csv(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
EvalReport report_from_csv(const std::string& text);
void emit_report(const EvalReport& r, const std::filesystem::path& path, ReportFormat format);

}  // namespace algan
