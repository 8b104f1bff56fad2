#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "algan/evalkit.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace algan;
using namespace algan::testing;

TEST_CASE("mcd closed forms") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(24, 7);
  CHECK(mcd(a, a) == 0.0);

  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(24, 1), conv = ref;
  conv(5, 0) = 1.0;
  CHECK(mcd(ref, conv) == doctest::Approx(10.0 / std::log(10.0) * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(std::abs(mcd(ref, conv) - 6.14185) < 1e-5);

  Eigen::MatrixXd energy = ref;
  energy(0, 0) = 3.0;
  CHECK(mcd(ref, energy) == 0.0);
  CHECK(mcd(ref, energy, DimRange::all()) > 0.0);
  CHECK(mcd(ref, conv, DimRange{6, 23}) == 0.0);

  CHECK_THROWS_AS(mcd(ref, Eigen::MatrixXd::Zero(24, 2)), std::invalid_argument);
  CHECK_THROWS_AS(mcd(ref, ref, DimRange{5, 30}), std::invalid_argument);
}

TEST_CASE("mcd properties") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd a(24, 9), b(24, 9);
    for (Index i = 0; i < a.size(); ++i) {
      a.data()[i] = n(rng);
      b.data()[i] = n(rng);
    }
    CHECK(mcd(a, b) == mcd(b, a));
    CHECK(mcd(a, b) >= 0.0);

    // single-frame homogeneity
    Eigen::MatrixXd r = a.col(0), c = b.col(0);
    const double k = 0.5 + trial;
    const Eigen::MatrixXd scaled = r + k * (c - r);
    CHECK(mcd(r, scaled) == doctest::Approx(k * mcd(r, c)).epsilon(1e-12));
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(24, 1), c = r;
  c(3, 0) = 0.75;
  c(9, 0) = -1.25;
  CHECK(mcd(r, (4.0 * c).eval()) == 4.0 * mcd(r, c));
}

TEST_CASE("archive mcd is frame weighted") {
  const auto a = synth_corpus(1, 3, 128, SpeakerProfile::preset("A"));
  const auto b = synth_corpus(1, 3, 128, SpeakerProfile::preset("B"));
  CHECK(mcd(a, a) == 0.0);
  double sum = 0.0;
  for (std::size_t u = 0; u < 3; ++u) sum += mcd(a.utterances[u].mcep, b.utterances[u].mcep) * 128;
  CHECK(mcd(a, b) == doctest::Approx(sum / 384).epsilon(1e-12));
  CHECK(mcd(a, b) == mcd(b, a));

  auto shorter = b;
  shorter.utterances.pop_back();
  CHECK_THROWS_AS(mcd(a, shorter), std::invalid_argument);
}

TEST_CASE("reports") {
  TempDir dir("eval");
  const auto a = synth_corpus(2, 2, 128, SpeakerProfile::preset("A"));
  const auto b = synth_corpus(2, 2, 128, SpeakerProfile::preset("B"));
  EvalReport r = evaluate(a, b);
  CHECK(r.n_frames == 256);
  CHECK(r.mcd_db == mcd(a, b));
  CHECK(r.per_dim_mean_err.size() == 24);
  r.config.emplace_back("seed", "2");

  emit_report(r, dir / "r.json", ReportFormat::json);
  emit_report(r, dir / "r.csv", ReportFormat::csv);
  const auto from_json = report_from_json(slurp(dir / "r.json"));
  const auto from_csv = report_from_csv(slurp(dir / "r.csv"));
  CHECK(from_json == r);
  CHECK(from_csv == r);
  CHECK(from_json == from_csv);

  emit_report(r, dir / "again.json", ReportFormat::json);
  CHECK(slurp(dir / "again.json") == slurp(dir / "r.json"));
  const std::string json = slurp(dir / "r.json");
  CHECK(json.find("mcd_db") < json.find("n_frames"));
  CHECK(json.find("n_frames") < json.find("per_dim_mean_err"));

  CHECK_THROWS_AS(emit_report(r, dir / "missing" / "r.csv", ReportFormat::csv), std::runtime_error);
  EvalReport empty;
  CHECK_THROWS_AS(emit_report(empty, dir / "e.csv", ReportFormat::csv), std::invalid_argument);
  CHECK_THROWS_AS(parse_report_format("xml"), std::invalid_argument);
  CHECK_THROWS_AS(report_from_csv("nope\n"), std::invalid_argument);
}
