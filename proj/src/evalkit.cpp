#include "algan/evalkit.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace algan {

namespace {

void check_pairing(const FeatureArchive& ref, const FeatureArchive& conv) {
  if (ref.mcep_dim != conv.mcep_dim) throw std::invalid_argument("mcd: archives differ in mcep_dim");
  if (ref.utterances.size() != conv.utterances.size()) {
    throw std::invalid_argument("mcd: archives hold " + std::to_string(ref.utterances.size()) + " and " +
                                std::to_string(conv.utterances.size()) + " utterances");
  }
  for (std::size_t u = 0; u < ref.utterances.size(); ++u) {
    if (ref.utterances[u].frames() != conv.utterances[u].frames()) {
      throw std::invalid_argument("mcd: utterance " + std::to_string(u) + " lengths differ");
    }
  }
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double mcd(const FeatureArchive& ref, const FeatureArchive& conv, DimRange dims) {
  check_pairing(ref, conv);
  double sum = 0.0;
  Index frames = 0;
  for (std::size_t u = 0; u < ref.utterances.size(); ++u) {
    sum += mcd_sum(ref.utterances[u].mcep, conv.utterances[u].mcep, dims);
    frames += ref.utterances[u].frames();
  }
  if (frames == 0) throw std::invalid_argument("mcd: no frames");
  return sum / static_cast<double>(frames);
}

void EvalReport::validate() const {
  if (!(mcd_db >= 0.0)) throw std::invalid_argument("eval report: mcd_db must be >= 0");
  if (n_frames <= 0) throw std::invalid_argument("eval report: n_frames must be > 0");
}

EvalReport evaluate(const FeatureArchive& ref, const FeatureArchive& conv, DimRange dims) {
  EvalReport r;
  r.mcd_db = mcd(ref, conv, dims);
  r.per_dim_mean_err.assign(ref.mcep_dim, 0.0);
  for (std::size_t u = 0; u < ref.utterances.size(); ++u) {
    const Eigen::ArrayXXd diff =
        (ref.utterances[u].mcep.cast<double>() - conv.utterances[u].mcep.cast<double>()).array().abs();
    const Eigen::VectorXd rows = diff.rowwise().sum();
    for (Index d = 0; d < rows.size(); ++d) r.per_dim_mean_err[static_cast<std::size_t>(d)] += rows[d];
    r.n_frames += ref.utterances[u].frames();
  }
  for (double& e : r.per_dim_mean_err) e /= static_cast<double>(r.n_frames);
  const Index last = dims.last < 0 ? ref.mcep_dim - 1 : dims.last;
  r.config = {{"dims", std::to_string(dims.first) + ".." + std::to_string(last)},
              {"utterances", std::to_string(ref.utterances.size())}};
  return r;
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  throw std::invalid_argument("report format must be csv or json, got '" + text + "'");
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mcd_db"] = r.mcd_db;
  j["n_frames"] = r.n_frames;
  j["per_dim_mean_err"] = r.per_dim_mean_err;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& r) {
  std::string out = "key,value\n";
  out += "mcd_db," + format_real(r.mcd_db) + "\n";
  out += "n_frames," + std::to_string(r.n_frames) + "\n";
  for (std::size_t d = 0; d < r.per_dim_mean_err.size(); ++d) {
    out += "per_dim_mean_err." + std::to_string(d) + "," + format_real(r.per_dim_mean_err[d]) + "\n";
  }
  for (const auto& [k, v] : r.config) {
    if (k.find(',') != std::string::npos || v.find(',') != std::string::npos) {
      throw std::invalid_argument("eval report: config entries may not contain commas");
    }
    out += "config." + k + "," + v + "\n";
  }
  return out;
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    EvalReport r;
    r.mcd_db = j.at("mcd_db").get<double>();
    r.n_frames = j.at("n_frames").get<long>();
    r.per_dim_mean_err = j.at("per_dim_mean_err").get<std::vector<double>>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad eval report json: ") + e.what());
  }
}

EvalReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "key,value") throw std::invalid_argument("eval report csv: bad header");
  EvalReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("eval report csv: malformed row '" + line + "'");
    const std::string key = line.substr(0, comma), value = line.substr(comma + 1);
    try {
      if (key == "mcd_db") {
        r.mcd_db = std::stod(value);
      } else if (key == "n_frames") {
        r.n_frames = std::stol(value);
      } else if (key.rfind("per_dim_mean_err.", 0) == 0) {
        const auto d = std::stoul(key.substr(17));
        if (d != r.per_dim_mean_err.size()) throw std::invalid_argument("out of order");
        r.per_dim_mean_err.push_back(std::stod(value));
      } else if (key.rfind("config.", 0) == 0) {
        r.config.emplace_back(key.substr(7), value);
      } else {
        throw std::invalid_argument("unknown key");
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("eval report csv: bad row '" + line + "'");
    }
  }
  return r;
}

void emit_report(const EvalReport& r, const std::filesystem::path& path, ReportFormat format) {
  r.validate();
  const std::string text = format == ReportFormat::json ? report_to_json(r) : report_to_csv(r);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace algan
