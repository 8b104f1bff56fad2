#pragma once

#include "algan/adam.hpp"
#include "algan/blrs.hpp"
#include "algan/features.hpp"
#include "algan/losses.hpp"
#include "algan/networks.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace algan {

enum class UpdateOrder { generators_first, discriminators_first };
enum class Direction { x2y, y2x };

std::string to_string(Direction d);
Direction parse_direction(const std::string& text);

struct TrainConfig {
  std::uint64_t seed = 1;
  long epochs = 200;
  Index frames_per_batch = 128;
  long batches_per_epoch = 1;
  BlrsConfig blrs;
  LossWeights weights;
  TargetLabels labels;
  MinMode min_mode = MinMode::scalar;
  UpdateOrder update_order = UpdateOrder::generators_first;
  bool freeze_discriminators = false;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  long checkpoint_interval = 0;  // 0 = only at the end
  int precision = 32;
  std::string model = "desk";    // desk | full

  /// Full-size networks, 1.5e4 epochs.
  static TrainConfig full();
  static TrainConfig desk() { return {}; }

  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config() const;
  void validate() const;

  /// Flat `key = value` text, one key per line, fixed order.
  std::string to_text() const;
  /// Applies one key. Unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);
  /// Applies every `key = value` line of `text` ('#' starts a comment).
  void apply_text(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& path, const TrainConfig& base);
  static TrainConfig from_file(const std::filesystem::path& path) { return from_file(path, TrainConfig{}); }

  /// FNV-1a over the keys that shape training dynamics (epochs and the
  /// checkpoint interval are excluded so a run can be extended on resume).
  std::uint64_t hash() const;

  friend bool operator==(const TrainConfig& a, const TrainConfig& b) { return a.to_text() == b.to_text(); }
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename S>
struct Checkpoint {
  TrainConfig config;
  long epoch = 0;  // completed epochs
  SpeakerStats stats_x;
  SpeakerStats stats_y;
  std::vector<Tensor<S>> g_xy, g_yx, d_x, d_y;
  AdamState<S> adam_g_xy, adam_g_yx, adam_d_x, adam_d_y;
  BlrsState blrs;
};

/// Layout, little-endian:
///   "ALGC" | u16 version | u8 scalar bytes | u64 config hash | i64 epoch
///   | str config text | stats x | stats y | 4 parameter sets | 4 Adam states | BLRS state
template <typename S>
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<S>& ckpt);
template <typename S>
Checkpoint<S> decode_checkpoint(std::span<const std::uint8_t> bytes);
template <typename S>
std::size_t save_checkpoint(const Checkpoint<S>& ckpt, const std::filesystem::path& path);
template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path);

/// Scalar width (4 or 8) stored in a checkpoint file, without decoding it.
int checkpoint_precision(const std::filesystem::path& path);

void write_loss_report_csv(std::ostream& out, std::span<const LossReport> reports);
std::vector<LossReport> read_loss_report_csv(std::istream& in);

/// Losses from one mini-batch.
struct StepLosses {
  double adv_G_xy = 0.0, adv_G_yx = 0.0, adv_D_x = 0.0, adv_D_y = 0.0, rec = 0.0, id = 0.0;
  double generator_objective(const LossWeights& w) const { return adv_G_xy + adv_G_yx + w.w_rec * rec + w.w_id * id; }
  double discriminator_objective() const { return adv_D_x + adv_D_y; }
};

template <typename S>
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const FeatureArchive& corpus_x, const FeatureArchive& corpus_y);
  // Networks hold shared graph leaves, so copies would alias parameters.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Trains the next epoch and returns its report.
  LossReport run_epoch();
  /// Trains until config().epochs. `on_checkpoint` is called every
  /// checkpoint_interval epochs and after the last one.
  std::vector<LossReport> train(const std::function<void(const Checkpoint<S>&)>& on_checkpoint = {});

  /// One mini-batch at the current rates; exposed for tests.
  StepLosses step(long epoch, long batch);

  Checkpoint<S> checkpoint() const;
  /// Restores networks, optimizer and BLRS state. Returns false (and warns)
  /// when the checkpoint was written under a different configuration.
  bool restore(const Checkpoint<S>& ckpt);

  long epochs_done() const { return blrs_.epoch - 1; }
  const TrainConfig& config() const { return cfg_; }
  const BlrsState& blrs_state() const { return blrs_; }
  const SpeakerStats& stats_x() const { return stats_x_; }
  const SpeakerStats& stats_y() const { return stats_y_; }

  /// Seed of the sampling stream for (epoch, batch).
  std::uint64_t batch_seed(long epoch, long batch) const;
  /// Normalized batches drawn for (epoch, batch).
  std::pair<Tensor<S>, Tensor<S>> draw_batch(long epoch, long batch) const;

  Generator<S> g_xy, g_yx;
  Discriminator<S> d_x, d_y;

 private:
  void generator_phase(const Var<S>& x, const Var<S>& y, StepLosses& out);
  void discriminator_phase(const Var<S>& x, const Var<S>& y, StepLosses& out);

  TrainConfig cfg_;
  FeatureArchive corpus_x_, corpus_y_;
  SpeakerStats stats_x_, stats_y_;
  std::vector<Var<S>> params_g_xy_, params_g_yx_, params_d_x_, params_d_y_;
  AdamState<S> adam_g_xy_, adam_g_yx_, adam_d_x_, adam_d_y_;
  BlrsState blrs_;
};

template <typename S>
using FeatureMap = std::function<Var<S>(const Var<S>&)>;

/// Converts every utterance: normalize with `src`, map through `g` in
/// non-overlapping tiles of width `tile` (tail zero-padded, then truncated),
/// denormalize with `tgt`. F0 goes through logf0_convert and AP is copied.
template <typename S>
FeatureArchive convert_archive(const FeatureArchive& archive, const FeatureMap<S>& g, const SpeakerStats& src,
                               const SpeakerStats& tgt, Index tile = 128);

/// Uses the checkpoint's generator and corpus statistics for `direction`.
template <typename S>
FeatureArchive convert(const Checkpoint<S>& ckpt, const FeatureArchive& archive, Direction direction);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace algan
