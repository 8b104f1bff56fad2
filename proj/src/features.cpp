#include "algan/features.hpp"

#include "algan/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace algan {

Index FeatureArchive::total_frames() const {
  Index n = 0;
  for (const auto& u : utterances) n += u.frames();
  return n;
}

void FeatureArchive::validate() const {
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    const std::string where = "utterance " + std::to_string(i) + ": ";
    if (u.mcep.rows() != mcep_dim) {
      throw std::invalid_argument(where + "mcep has " + std::to_string(u.mcep.rows()) + " rows, archive dim is " +
                                  std::to_string(mcep_dim));
    }
    if (static_cast<Index>(u.f0.size()) != u.frames()) throw std::invalid_argument(where + "f0 length != frames");
    for (float v : u.f0)
      if (!(v >= 0.0f)) throw std::invalid_argument(where + "f0 must be >= 0");
    if (u.ap.data.size() != static_cast<std::size_t>(u.ap.rows) * u.ap.cols) {
      throw std::invalid_argument(where + "ap payload size does not match its shape");
    }
  }
}

namespace {

class Writer {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void raw(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == in_.size(); }
  void need(std::uint64_t bytes) const {
    if (bytes > in_.size() - pos_) throw std::runtime_error("truncated feature archive");
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_archive(const FeatureArchive& archive) {
  archive.validate();
  Writer w;
  w.raw("ALGF", 4);
  w.u16(archive.version);
  w.u16(archive.mcep_dim);
  w.u32(static_cast<std::uint32_t>(archive.utterances.size()));
  for (const auto& u : archive.utterances) {
    w.u32(static_cast<std::uint32_t>(u.frames()));
    for (Index i = 0; i < u.mcep.size(); ++i) w.f32(u.mcep.data()[i]);
    for (float v : u.f0) w.f32(v);
    w.u32(u.ap.rows);
    w.u32(u.ap.cols);
    for (float v : u.ap.data) w.f32(v);
  }
  return w.take();
}

FeatureArchive decode_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'A' || bytes[1] != 'L' || bytes[2] != 'G' || bytes[3] != 'F') {
    throw std::runtime_error("not a feature archive (bad magic)");
  }
  Reader r(bytes.subspan(4));
  FeatureArchive a;
  a.version = r.u16();
  if (a.version != FeatureArchive::kVersion) {
    throw std::runtime_error("unsupported feature archive version " + std::to_string(a.version));
  }
  a.mcep_dim = r.u16();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Utterance u;
    const std::uint32_t frames = r.u32();
    r.need((static_cast<std::uint64_t>(a.mcep_dim) + 1) * frames * 4);
    u.mcep.resize(a.mcep_dim, frames);
    for (Index k = 0; k < u.mcep.size(); ++k) u.mcep.data()[k] = r.f32();
    u.f0.resize(frames);
    for (auto& v : u.f0) v = r.f32();
    u.ap.rows = r.u32();
    u.ap.cols = r.u32();
    r.need(static_cast<std::uint64_t>(u.ap.rows) * u.ap.cols * 4);
    u.ap.data.resize(static_cast<std::size_t>(u.ap.rows) * u.ap.cols);
    for (auto& v : u.ap.data) v = r.f32();
    a.utterances.push_back(std::move(u));
  }
  if (!r.done()) throw std::runtime_error("feature archive has trailing bytes");
  a.validate();
  return a;
}

std::size_t write_archive(const FeatureArchive& archive, const std::filesystem::path& path) {
  const auto bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return bytes.size();
}

FeatureArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_archive(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

SpeakerProfile SpeakerProfile::preset(const std::string& name, Index mcep_dim) {
  SpeakerProfile p;
  p.name = name;
  p.offset.resize(static_cast<std::size_t>(mcep_dim));
  p.scale.resize(static_cast<std::size_t>(mcep_dim));
  for (Index d = 0; d < mcep_dim; ++d) {
    const double x = static_cast<double>(d);
    p.offset[static_cast<std::size_t>(d)] = 1.5 * std::exp(-x / 6.0) * std::cos(x);
    p.scale[static_cast<std::size_t>(d)] = 0.8 / (1.0 + 0.05 * x);
  }
  if (name == "A") return p;
  if (name == "B") {
    p.id = 1;
    for (Index d = 0; d < mcep_dim; ++d) {
      const double x = static_cast<double>(d);
      p.offset[static_cast<std::size_t>(d)] += 0.6 * std::sin(0.7 * x + 0.3);
      p.scale[static_cast<std::size_t>(d)] *= 1.0 + 0.35 * std::cos(1.3 * x);
    }
    p.logf0_mean = 5.3;
    p.logf0_std = 0.12;
    return p;
  }
  throw std::invalid_argument("unknown speaker profile '" + name + "' (expected A or B)");
}

double synth_phase(std::uint64_t seed, Index utterance, Index dim, int k) {
  const std::uint64_t h = derive_seed(seed, {0x70686173ULL, static_cast<std::uint64_t>(utterance),
                                             static_cast<std::uint64_t>(dim), static_cast<std::uint64_t>(k)});
  return 2.0 * std::numbers::pi * static_cast<double>(h >> 11) * 0x1.0p-53;
}

double synth_frequency(Index dim, int k) { return (k + 0.25 * static_cast<double>(dim % 4)) / 64.0; }

double synth_trajectory(std::uint64_t seed, Index utterance, Index dim, Index frame, const SpeakerProfile& profile) {
  double acc = 0.0;
  for (int k = 1; k <= kSynthComponents; ++k) {
    acc += std::sin(2.0 * std::numbers::pi * synth_frequency(dim, k) * static_cast<double>(frame) +
                    synth_phase(seed, utterance, dim, k)) /
           k;
  }
  const auto d = static_cast<std::size_t>(dim);
  return profile.offset.at(d) + profile.scale.at(d) * acc;
}

FeatureArchive synth_corpus(std::uint64_t seed, Index n_utterances, Index frames_per_utt, const SpeakerProfile& profile,
                            Index mcep_dim) {
  if (frames_per_utt < 128) {
    throw std::invalid_argument("synth_corpus: frames_per_utt must be >= 128, got " + std::to_string(frames_per_utt));
  }
  if (n_utterances < 0) throw std::invalid_argument("synth_corpus: negative utterance count");
  if (static_cast<Index>(profile.offset.size()) != mcep_dim || static_cast<Index>(profile.scale.size()) != mcep_dim) {
    throw std::invalid_argument("synth_corpus: profile dimension does not match mcep_dim");
  }
  FeatureArchive a;
  a.mcep_dim = static_cast<std::uint16_t>(mcep_dim);
  std::mt19937_64 rng(derive_seed(seed, {0x6e6f6973ULL, profile.id}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index u = 0; u < n_utterances; ++u) {
    Utterance utt;
    utt.mcep.resize(mcep_dim, frames_per_utt);
    for (Index d = 0; d < mcep_dim; ++d) {
      for (Index t = 0; t < frames_per_utt; ++t) {
        const double noise = profile.noise_std > 0.0 ? profile.noise_std * normal(rng) : 0.0;
        utt.mcep(d, t) = static_cast<float>(synth_trajectory(seed, u, d, t, profile) + noise);
      }
    }
    const double f0_phase = synth_phase(seed, u, -1, 0);
    utt.f0.resize(static_cast<std::size_t>(frames_per_utt));
    for (Index t = 0; t < frames_per_utt; ++t) {
      const double z = 0.8 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 97.0 + f0_phase) +
                       0.6 * normal(rng);
      const bool voiced = (t + 13 * u) % 60 < 48;
      utt.f0[static_cast<std::size_t>(t)] =
          voiced ? static_cast<float>(std::exp(profile.logf0_mean + profile.logf0_std * z)) : 0.0f;
    }
    utt.ap.rows = static_cast<std::uint32_t>(frames_per_utt);
    utt.ap.cols = profile.ap_cols;
    utt.ap.data.resize(static_cast<std::size_t>(utt.ap.rows) * utt.ap.cols);
    for (std::uint32_t t = 0; t < utt.ap.rows; ++t) {
      for (std::uint32_t c = 0; c < utt.ap.cols; ++c) {
        utt.ap.data[t * utt.ap.cols + c] =
            static_cast<float>(0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * t / 31.0 + c));
      }
    }
    a.utterances.push_back(std::move(utt));
  }
  return a;
}

LogF0Stats logf0_stats(std::span<const double> f0) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : f0) {
    if (v > 0.0) {
      sum += std::log(v);
      ++n;
    }
  }
  if (n < 2) throw std::invalid_argument("logf0 stats need at least 2 voiced frames, got " + std::to_string(n));
  const double mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : f0) {
    if (v > 0.0) ss += (std::log(v) - mu) * (std::log(v) - mu);
  }
  return {mu, std::sqrt(ss / static_cast<double>(n))};
}

SpeakerStats compute_speaker_stats(const FeatureArchive& archive) {
  archive.validate();
  const Index total = archive.total_frames();
  if (total == 0) throw std::invalid_argument("speaker stats: archive has no frames");
  SpeakerStats s;
  std::vector<double> f0;
  f0.reserve(static_cast<std::size_t>(total));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(archive.mcep_dim);
  for (const auto& u : archive.utterances) {
    for (float v : u.f0) f0.push_back(v);
    mean += u.mcep.cast<double>().rowwise().sum();
  }
  mean /= static_cast<double>(total);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(archive.mcep_dim);
  for (const auto& u : archive.utterances) {
    var += (u.mcep.cast<double>().colwise() - mean).array().square().rowwise().sum().matrix();
  }
  var /= static_cast<double>(total);
  const auto lf = logf0_stats(f0);
  s.logf0_mu = lf.mu;
  s.logf0_sigma = lf.sigma;
  s.mcep_mean.assign(mean.data(), mean.data() + mean.size());
  for (Index d = 0; d < var.size(); ++d) s.mcep_std.push_back(std::sqrt(var[d]));
  return s;
}

std::string stats_to_json(const SpeakerStats& stats) {
  nlohmann::ordered_json j;
  j["logf0_mu"] = stats.logf0_mu;
  j["logf0_sigma"] = stats.logf0_sigma;
  j["mcep_mean"] = stats.mcep_mean;
  j["mcep_std"] = stats.mcep_std;
  return j.dump(2) + "\n";
}

SpeakerStats stats_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SpeakerStats s;
    s.logf0_mu = j.at("logf0_mu").get<double>();
    s.logf0_sigma = j.at("logf0_sigma").get<double>();
    s.mcep_mean = j.at("mcep_mean").get<std::vector<double>>();
    s.mcep_std = j.at("mcep_std").get<std::vector<double>>();
    if (s.mcep_mean.size() != s.mcep_std.size()) throw std::invalid_argument("mcep_mean and mcep_std lengths differ");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad stats json: ") + e.what());
  }
}

void write_stats_json(const SpeakerStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << stats_to_json(stats);
}

SpeakerStats read_stats_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return stats_from_json(ss.str());
}

std::vector<double> logf0_convert(std::span<const double> f0, const SpeakerStats& src, const SpeakerStats& tgt) {
  if (!(src.logf0_sigma > 0.0)) throw std::invalid_argument("logf0 convert: source sigma is zero");
  std::vector<double> out(f0.size(), 0.0);
  const double gain = tgt.logf0_sigma / src.logf0_sigma;
  for (std::size_t i = 0; i < f0.size(); ++i) {
    if (f0[i] > 0.0) out[i] = std::exp((std::log(f0[i]) - src.logf0_mu) * gain + tgt.logf0_mu);
  }
  return out;
}

std::vector<Index> draw_frame_indices(Index total, Index n, std::mt19937_64& rng) {
  if (n < 0) throw std::invalid_argument("sample_frames: negative frame count");
  if (total < n) {
    throw std::invalid_argument("sample_frames: archive has " + std::to_string(total) + " frames, cannot draw " +
                                std::to_string(n) + " (lower frames_per_batch in the config)");
  }
  std::vector<Index> pool(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, total - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

FeatureMatrix sample_frames(const FeatureArchive& archive, Index n, std::mt19937_64& rng) {
  const auto indices = draw_frame_indices(archive.total_frames(), n, rng);
  std::vector<Index> starts;  // first global frame of each utterance
  Index offset = 0;
  for (const auto& u : archive.utterances) {
    starts.push_back(offset);
    offset += u.frames();
  }
  FeatureMatrix out(archive.mcep_dim, n);
  for (Index c = 0; c < n; ++c) {
    const Index g = indices[static_cast<std::size_t>(c)];
    const auto owner = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), g) - starts.begin() - 1);
    const auto& utt = archive.utterances[owner];
    out.col(c) = utt.mcep.col(g - starts[owner]);
  }
  return out;
}

namespace {
void check_stats_dim(const SpeakerStats& stats, Index dim) {
  if (static_cast<Index>(stats.mcep_mean.size()) != dim || static_cast<Index>(stats.mcep_std.size()) != dim) {
    throw std::invalid_argument("mcep stats have " + std::to_string(stats.mcep_mean.size()) +
                                " dims, features have " + std::to_string(dim));
  }
}
}  // namespace

template <typename S>
Tensor<S> mcep_normalize(const Tensor<S>& x, const SpeakerStats& stats) {
  if (x.ndim() != 2) throw std::invalid_argument("mcep_normalize: expected dims x frames");
  const Index dims = x.dim(0), frames = x.dim(1);
  check_stats_dim(stats, dims);
  Tensor<S> out(x.shape());
  for (Index d = 0; d < dims; ++d) {
    const double sd = stats.mcep_std[static_cast<std::size_t>(d)];
    if (!(sd > 0.0)) throw std::invalid_argument("mcep_normalize: zero std in dimension " + std::to_string(d));
    const double mu = stats.mcep_mean[static_cast<std::size_t>(d)];
    for (Index t = 0; t < frames; ++t) {
      out[d * frames + t] = static_cast<S>((static_cast<double>(x[d * frames + t]) - mu) / sd);
    }
  }
  return out;
}

template <typename S>
Tensor<S> mcep_denormalize(const Tensor<S>& z, const SpeakerStats& stats) {
  if (z.ndim() != 2) throw std::invalid_argument("mcep_denormalize: expected dims x frames");
  const Index dims = z.dim(0), frames = z.dim(1);
  check_stats_dim(stats, dims);
  Tensor<S> out(z.shape());
  for (Index d = 0; d < dims; ++d) {
    const double sd = stats.mcep_std[static_cast<std::size_t>(d)];
    if (!(sd > 0.0)) throw std::invalid_argument("mcep_denormalize: zero std in dimension " + std::to_string(d));
    const double mu = stats.mcep_mean[static_cast<std::size_t>(d)];
    for (Index t = 0; t < frames; ++t) {
      out[d * frames + t] = static_cast<S>(static_cast<double>(z[d * frames + t]) * sd + mu);
    }
  }
  return out;
}

template <typename S>
Tensor<S> to_tensor(const FeatureMatrix& m) {
  Tensor<S> t({m.rows(), m.cols()});
  for (Index i = 0; i < m.size(); ++i) t[i] = static_cast<S>(m.data()[i]);
  return t;
}

template <typename S>
FeatureMatrix to_feature_matrix(const Tensor<S>& t) {
  if (t.ndim() != 2) throw std::invalid_argument("to_feature_matrix: expected a 2D tensor");
  FeatureMatrix m(t.dim(0), t.dim(1));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(t[i]);
  return m;
}

#define ALGAN_INSTANTIATE(S)                                                  \
  template Tensor<S> mcep_normalize(const Tensor<S>&, const SpeakerStats&);   \
  template Tensor<S> mcep_denormalize(const Tensor<S>&, const SpeakerStats&); \
  template Tensor<S> to_tensor(const FeatureMatrix&);                         \
  template FeatureMatrix to_feature_matrix(const Tensor<S>&);

ALGAN_INSTANTIATE(float)
ALGAN_INSTANTIATE(double)

}  // namespace algan
