#include "algan/blrs.hpp"
#include "algan/evalkit.hpp"
#include "algan/features.hpp"
#include "algan/log.hpp"
#include "algan/oracles.hpp"
#include "algan/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace algan;

namespace {

// Flags shared by every subcommand that resolves a TrainConfig.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<long> epochs;
  std::string alpha, beta;
  std::optional<int> precision;
  bool no_blrs_clamp = false;
  std::vector<std::string> overrides;

  void attach(CLI::App* app, bool training) {
    app->add_option("--config", config_path, "Flat key = value config file; flags override it")
        ->check(CLI::ExistingFile);
    app->add_flag("--no-blrs-clamp", no_blrs_clamp, "Disable the BLRS [floor, ceiling] guardrails");
    app->add_option("--set", overrides, "Extra KEY=VALUE config overrides (repeatable)");
    if (!training) return;
    app->add_option("--seed", seed, "Training seed (u64)");
    app->add_option("--epochs", epochs, "Number of epochs")->check(CLI::PositiveNumber);
    app->add_option("--alpha", alpha, "L1 weight of the adversarial loss");
    app->add_option("--beta", beta, "L2 weight of the adversarial loss");
    app->add_option("--precision", precision, "Scalar width: 32 or 64")->check(CLI::IsMember({32, 64}));
  }

  TrainConfig resolve() const {
    TrainConfig cfg = config_path.empty() ? TrainConfig::desk() : TrainConfig::from_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    if (!alpha.empty()) cfg.set("alpha", alpha);
    if (!beta.empty()) cfg.set("beta", beta);
    if (precision) cfg.precision = *precision;
    if (no_blrs_clamp) cfg.blrs.clamp = false;
    cfg.validate();
    return cfg;
  }
};

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ----------------------------------------------------------------- features

struct SynthArgs {
  std::uint64_t seed = 101;
  std::string speaker = "A";
  Index utterances = 20;
  Index frames = 256;
  std::string out, name;
};

int run_synth(const SynthArgs& a) {
  const auto dir = prepare_out(a.out);
  const std::string name = a.name.empty() ? a.speaker + ".algf" : a.name;
  const auto archive = synth_corpus(a.seed, a.utterances, a.frames, SpeakerProfile::preset(a.speaker));
  const auto bytes = write_archive(archive, dir / name);
  std::ostringstream cfg;
  cfg << "seed = " << a.seed << "\nspeaker = " << a.speaker << "\nutterances = " << a.utterances
      << "\nframes = " << a.frames << "\n";
  write_text(dir / (fs::path(name).stem().string() + ".cfg"), cfg.str());
  std::printf("%s %zu bytes, %ld frames\n", (dir / name).c_str(), bytes, static_cast<long>(archive.total_frames()));
  return 0;
}

int run_stats(const std::string& input, const std::string& out) {
  const auto dir = prepare_out(out);
  const auto stats = compute_speaker_stats(read_archive(input));
  write_stats_json(stats, dir / "stats.json");
  write_text(dir / "stats.cfg", "input = " + fs::absolute(input).string() + "\n");
  std::printf("logf0 mean %.6f std %.6f\n", stats.logf0_mu, stats.logf0_sigma);
  return 0;
}

// -------------------------------------------------------------------- train

template <typename S>
int run_train(const TrainConfig& cfg, const std::string& x_path, const std::string& y_path, const std::string& resume,
              const fs::path& dir) {
  Trainer<S> trainer(cfg, read_archive(x_path), read_archive(y_path));
  if (!resume.empty()) {
    if (!trainer.restore(load_checkpoint<S>(resume))) {
      throw std::runtime_error("checkpoint " + resume + " was written under a different configuration");
    }
    log::info("resumed after epoch " + std::to_string(trainer.epochs_done()));
  }
  write_text(dir / "config.txt", cfg.to_text());

  const auto reports = trainer.train([&](const Checkpoint<S>& ckpt) {
    char name[48];
    std::snprintf(name, sizeof name, "checkpoint-%06ld.algc", ckpt.epoch);
    save_checkpoint(ckpt, dir / name);
    log::info(std::string("wrote ") + name);
  });
  std::ofstream losses(dir / "losses.csv", std::ios::trunc);
  write_loss_report_csv(losses, reports);
  if (!losses) throw std::runtime_error("write failed for " + (dir / "losses.csv").string());

  const auto ckpt = trainer.checkpoint();
  save_checkpoint(ckpt, dir / "checkpoint.algc");
  const auto bytes = encode_checkpoint(ckpt);
  if (!reports.empty()) {
    std::printf("epoch %ld full %.6f eta_g %.6g eta_d %.6g\n", reports.back().epoch, reports.back().full,
                reports.back().eta_g, reports.back().eta_d);
  }
  std::printf("checkpoint %s fnv1a64 %s\n", (dir / "checkpoint.algc").c_str(), hex64(fnv1a64(bytes)).c_str());
  return 0;
}

// ------------------------------------------------------------------ convert

template <typename S>
FeatureArchive convert_with(const std::string& ckpt_path, const FeatureArchive& input, Direction direction) {
  return convert(load_checkpoint<S>(ckpt_path), input, direction);
}

int run_convert(const std::string& ckpt_path, const std::string& input, const std::string& direction,
                const std::string& out, const std::string& name) {
  const auto dir = prepare_out(out);
  const Direction d = parse_direction(direction);
  const auto archive = read_archive(input);
  const auto converted = checkpoint_precision(ckpt_path) == 64 ? convert_with<double>(ckpt_path, archive, d)
                                                               : convert_with<float>(ckpt_path, archive, d);
  write_archive(converted, dir / name);
  write_text(dir / (fs::path(name).stem().string() + ".cfg"), "checkpoint = " + fs::absolute(ckpt_path).string() +
                                                                 "\ninput = " + fs::absolute(input).string() +
                                                                 "\ndirection = " + to_string(d) + "\n");
  std::printf("%s %zu utterances\n", (dir / name).c_str(), converted.utterances.size());
  return 0;
}

// --------------------------------------------------------------------- eval

int run_mcd(const std::string& ref, const std::string& conv, const std::string& out, const std::string& format) {
  auto report = evaluate(read_archive(ref), read_archive(conv));
  report.config.emplace_back("reference", fs::path(ref).filename().string());
  report.config.emplace_back("converted", fs::path(conv).filename().string());
  if (!out.empty()) {
    const auto fmt = parse_report_format(format);
    const auto dir = prepare_out(out);
    emit_report(report, dir / ("mcd." + format), fmt);
  }
  std::printf("%.4f dB\n", report.mcd_db);
  return 0;
}

// ------------------------------------------------------------------- theory

int run_theory_check() {
  bool all = true;
  for (const auto& r : oracle::theory_checks()) {
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

int run_blrs_trace(const TrainConfig& cfg, const std::string& losses_path, const std::string& out) {
  std::ifstream in(losses_path);
  if (!in) throw std::runtime_error("cannot open " + losses_path);
  const auto losses = read_loss_log_csv(in);
  const auto trace = blrs_trace(BlrsState::initial(cfg.blrs), losses);
  if (out.empty()) {
    write_blrs_trace_csv(std::cout, trace);
    return 0;
  }
  const auto dir = prepare_out(out);
  std::ofstream f(dir / "blrs_trace.csv", std::ios::trunc);
  write_blrs_trace_csv(f, trace);
  if (!f) throw std::runtime_error("write failed for " + (dir / "blrs_trace.csv").string());
  write_text(dir / "config.txt", cfg.to_text());
  std::printf("%zu epochs, final eta_g %.6g eta_d %.6g\n", trace.size(), trace.empty() ? cfg.blrs.eta_g : trace.back().eta_g,
              trace.empty() ? cfg.blrs.eta_d : trace.back().eta_d);
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voice-conversion training on MCEP feature archives"};
  app.require_subcommand(1);
  app.fallthrough(false);

  auto* features = app.add_subcommand("features", "Synthetic corpora and speaker statistics");
  features->require_subcommand(1);
  SynthArgs synth;
  auto* synth_cmd = features->add_subcommand("synth", "Render a deterministic synthetic speaker corpus");
  synth_cmd->add_option("--seed", synth.seed, "Content seed (u64); one seed gives parallel speakers");
  synth_cmd->add_option("--speaker", synth.speaker, "Speaker preset")->check(CLI::IsMember({"A", "B"}));
  synth_cmd->add_option("--utterances", synth.utterances, "Utterance count")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frames", synth.frames, "Frames per utterance (>= 128)");
  synth_cmd->add_option("--name", synth.name, "Archive file name inside --out (default <speaker>.algf)");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  std::string stats_input, stats_out;
  auto* stats_cmd = features->add_subcommand("stats", "Per-speaker normalization statistics as JSON");
  stats_cmd->add_option("archive", stats_input, "Feature archive")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", stats_out, "Output directory")->required();

  ConfigFlags train_flags;
  std::string train_x, train_y, train_out, train_resume;
  auto* train_cmd = app.add_subcommand("train", "Train both generator/discriminator pairs");
  train_flags.attach(train_cmd, true);
  train_cmd->add_option("--x", train_x, "Source-speaker archive")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--y", train_y, "Target-speaker archive")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  std::string conv_ckpt, conv_input, conv_out, conv_name = "converted.algf", conv_dir = "x2y";
  auto* convert_cmd = app.add_subcommand("convert", "Convert an archive with a trained checkpoint");
  convert_cmd->add_option("--checkpoint", conv_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  convert_cmd->add_option("--input", conv_input, "Archive to convert")->required()->check(CLI::ExistingFile);
  convert_cmd->add_option("--direction", conv_dir, "x2y or y2x")->check(CLI::IsMember({"x2y", "y2x"}));
  convert_cmd->add_option("--name", conv_name, "Output file name inside --out");
  convert_cmd->add_option("--out", conv_out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Objective evaluation");
  eval->require_subcommand(1);
  std::string mcd_ref, mcd_conv, mcd_out, mcd_format = "json";
  auto* mcd_cmd = eval->add_subcommand("mcd", "Mel-cepstral distortion between paired archives");
  mcd_cmd->add_option("reference", mcd_ref, "Reference archive")->required()->check(CLI::ExistingFile);
  mcd_cmd->add_option("converted", mcd_conv, "Converted archive")->required()->check(CLI::ExistingFile);
  mcd_cmd->add_option("--out", mcd_out, "Write a report into this directory");
  mcd_cmd->add_option("--format", mcd_format, "Report format: json or csv")->check(CLI::IsMember({"json", "csv"}));

  auto* theory_cmd = app.add_subcommand("theory-check", "Run the closed-form oracle suite");

  ConfigFlags trace_flags;
  std::string trace_losses, trace_out;
  auto* trace_cmd = app.add_subcommand("blrs-trace", "Replay a loss log through the learning-rate schedule");
  trace_flags.attach(trace_cmd, false);
  trace_cmd->add_option("--losses", trace_losses, "CSV with g_loss and d_loss columns")
      ->required()
      ->check(CLI::ExistingFile);
  trace_cmd->add_option("--out", trace_out, "Output directory (default: CSV on stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    CLI::App* deepest = &app;
    while (!deepest->get_subcommands().empty()) deepest = deepest->get_subcommands().front();
    std::cerr << deepest->help();
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (stats_cmd->parsed()) return run_stats(stats_input, stats_out);
    if (train_cmd->parsed()) {
      const auto cfg = train_flags.resolve();
      const auto dir = prepare_out(train_out);
      return cfg.precision == 64 ? run_train<double>(cfg, train_x, train_y, train_resume, dir)
                                 : run_train<float>(cfg, train_x, train_y, train_resume, dir);
    }
    if (convert_cmd->parsed()) return run_convert(conv_ckpt, conv_input, conv_dir, conv_out, conv_name);
    if (mcd_cmd->parsed()) return run_mcd(mcd_ref, mcd_conv, mcd_out, mcd_format);
    if (theory_cmd->parsed()) return run_theory_check();
    if (trace_cmd->parsed()) return run_blrs_trace(trace_flags.resolve(), trace_losses, trace_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 2;
}
