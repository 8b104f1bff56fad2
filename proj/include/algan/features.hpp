#pragma once

#include "algan/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace algan {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Opaque aperiodicity payload, carried through conversion untouched.
struct ApBlock {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;  // row-major, rows * cols values

  friend bool operator==(const ApBlock&, const ApBlock&) = default;
};

struct Utterance {
  FeatureMatrix mcep;      // mcep_dim x frames
  std::vector<float> f0;   // Hz per frame, 0 = unvoiced
  ApBlock ap;

  Index frames() const { return mcep.cols(); }
  friend bool operator==(const Utterance& a, const Utterance& b) {
    return a.mcep.rows() == b.mcep.rows() && a.mcep.cols() == b.mcep.cols() && a.mcep == b.mcep && a.f0 == b.f0 &&
           a.ap == b.ap;
  }
};

struct FeatureArchive {
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  std::uint16_t mcep_dim = 24;
  std::vector<Utterance> utterances;

  Index total_frames() const;
  /// Checks shapes and f0 >= 0; throws on the first violation.
  void validate() const;
  friend bool operator==(const FeatureArchive&, const FeatureArchive&) = default;
};

/// Binary layout, little-endian:
///   "ALGF" | u16 version | u16 mcep_dim | u32 n_utts
///   per utterance: u32 frames | f32 mcep[mcep_dim * frames] (row-major)
///                  | f32 f0[frames] | u32 ap_rows | u32 ap_cols | f32 ap[rows * cols]
std::vector<std::uint8_t> encode_archive(const FeatureArchive& archive);
FeatureArchive decode_archive(std::span<const std::uint8_t> bytes);

std::size_t write_archive(const FeatureArchive& archive, const std::filesystem::path& path);
FeatureArchive read_archive(const std::filesystem::path& path);

/// Per-speaker rendering of the shared synthetic content.
struct SpeakerProfile {
  std::string name = "A";
  std::uint64_t id = 0;              // decorrelates noise between speakers
  std::vector<double> offset;        // per-dimension shift
  std::vector<double> scale;         // per-dimension gain
  double noise_std = 0.05;
  double logf0_mean = 4.8;           // ln Hz
  double logf0_std = 0.15;
  std::uint32_t ap_cols = 2;

  /// Built-in speakers "A" and "B"; B is shifted and rescaled per dimension.
  static SpeakerProfile preset(const std::string& name, Index mcep_dim = 24);
};

inline constexpr int kSynthComponents = 3;

/// Phase of sinusoid k for (utterance, dimension); depends only on the content seed.
double synth_phase(std::uint64_t seed, Index utterance, Index dim, int k);

/// Noise-free MCEP value at one frame:
///   offset_d + scale_d * sum_k sin(2 pi freq(d, k) t + phase) / k.
double synth_trajectory(std::uint64_t seed, Index utterance, Index dim, Index frame, const SpeakerProfile& profile);

/// Frequency (cycles per frame) of component k in dimension d.
double synth_frequency(Index dim, int k);

/// Deterministic corpus. `seed` fixes the content, so two profiles rendered
/// from one seed form a parallel pair. Requires frames_per_utt >= 128.
FeatureArchive synth_corpus(std::uint64_t seed, Index n_utterances, Index frames_per_utt, const SpeakerProfile& profile,
                            Index mcep_dim = 24);

struct SpeakerStats {
  double logf0_mu = 0.0;
  double logf0_sigma = 0.0;
  std::vector<double> mcep_mean;
  std::vector<double> mcep_std;

  friend bool operator==(const SpeakerStats&, const SpeakerStats&) = default;
};

struct LogF0Stats {
  double mu;
  double sigma;
};

/// Mean and population standard deviation of ln f0 over voiced frames.
LogF0Stats logf0_stats(std::span<const double> f0);

/// Statistics over every frame of the archive.
SpeakerStats compute_speaker_stats(const FeatureArchive& archive);

void write_stats_json(const SpeakerStats& stats, const std::filesystem::path& path);
SpeakerStats read_stats_json(const std::filesystem::path& path);
std::string stats_to_json(const SpeakerStats& stats);
SpeakerStats stats_from_json(const std::string& text);

/// exp((ln f0 - mu_src) / sigma_src * sigma_tgt + mu_tgt) on voiced frames; zeros stay zero.
std::vector<double> logf0_convert(std::span<const double> f0, const SpeakerStats& src, const SpeakerStats& tgt);

/// Aperiodicity is passed through unchanged.
inline const ApBlock& ap_passthrough(const ApBlock& ap) { return ap; }

/// n frames drawn without replacement across the whole archive, columns in draw order.
FeatureMatrix sample_frames(const FeatureArchive& archive, Index n, std::mt19937_64& rng);

/// Global frame indices used by sample_frames (partial Fisher-Yates).
std::vector<Index> draw_frame_indices(Index total, Index n, std::mt19937_64& rng);

template <typename S>
Tensor<S> mcep_normalize(const Tensor<S>& x, const SpeakerStats& stats);
template <typename S>
Tensor<S> mcep_denormalize(const Tensor<S>& z, const SpeakerStats& stats);

template <typename S>
Tensor<S> to_tensor(const FeatureMatrix& m);
template <typename S>
FeatureMatrix to_feature_matrix(const Tensor<S>& t);

}  // namespace algan
