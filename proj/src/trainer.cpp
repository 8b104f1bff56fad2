#include "algan/trainer.hpp"

#include "algan/log.hpp"
#include "algan/rng.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace algan {

std::string to_string(Direction d) { return d == Direction::x2y ? "x2y" : "y2x"; }

Direction parse_direction(const std::string& text) {
  if (text == "x2y") return Direction::x2y;
  if (text == "y2x") return Direction::y2x;
  throw std::invalid_argument("direction must be x2y or y2x, got '" + text + "'");
}

// ---------------------------------------------------------------- config

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("config key '" + key + "' expects a real number, got '" + v + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::string config_text(const TrainConfig& c, bool dynamics_only) {
  std::string out;
  auto line = [&](const char* key, const std::string& value) { out += std::string(key) + " = " + value + "\n"; };
  line("model", c.model);
  line("precision", std::to_string(c.precision));
  line("seed", std::to_string(c.seed));
  if (!dynamics_only) line("epochs", std::to_string(c.epochs));
  line("frames_per_batch", std::to_string(c.frames_per_batch));
  line("batches_per_epoch", std::to_string(c.batches_per_epoch));
  line("eta_g", format_double(c.blrs.eta_g));
  line("eta_d", format_double(c.blrs.eta_d));
  line("blrs_lambda", format_double(c.blrs.lambda_scale));
  line("blrs_c1", format_double(c.blrs.c1));
  line("blrs_c2", format_double(c.blrs.c2));
  line("blrs_floor", format_double(c.blrs.floor));
  line("blrs_ceiling", format_double(c.blrs.ceiling));
  line("blrs_clamp", c.blrs.clamp ? "true" : "false");
  line("alpha", format_double(c.weights.alpha));
  line("beta", format_double(c.weights.beta));
  line("w_rec", format_double(c.weights.w_rec));
  line("w_id", format_double(c.weights.w_id));
  line("label_a", format_double(c.labels.a));
  line("label_b", format_double(c.labels.b));
  line("label_c", format_double(c.labels.c));
  line("min_mode", c.min_mode == MinMode::scalar ? "scalar" : "elementwise");
  line("update_order", c.update_order == UpdateOrder::generators_first ? "generators_first" : "discriminators_first");
  line("freeze_discriminators", c.freeze_discriminators ? "true" : "false");
  line("adam_beta1", format_double(c.adam_beta1));
  line("adam_beta2", format_double(c.adam_beta2));
  if (!dynamics_only) line("checkpoint_interval", std::to_string(c.checkpoint_interval));
  return out;
}

}  // namespace

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.model = "full";
  c.epochs = 15000;
  return c;
}

GeneratorConfig TrainConfig::generator_config() const {
  return model == "full" ? GeneratorConfig::full() : GeneratorConfig::desk();
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
  return model == "full" ? DiscriminatorConfig::full() : DiscriminatorConfig::desk();
}

void TrainConfig::validate() const {
  if (model != "desk" && model != "full") throw std::invalid_argument("config: model must be desk or full");
  if (precision != 32 && precision != 64) throw std::invalid_argument("config: precision must be 32 or 64");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batches_per_epoch < 1) throw std::invalid_argument("config: batches_per_epoch must be >= 1");
  if (checkpoint_interval < 0) throw std::invalid_argument("config: checkpoint_interval must be >= 0");
  const Index multiple = std::max(generator_config().width_multiple(), discriminator_config().min_width());
  if (frames_per_batch < multiple || frames_per_batch % multiple != 0) {
    throw std::invalid_argument("config: frames_per_batch must be a positive multiple of " + std::to_string(multiple));
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("config: Adam betas must lie in [0, 1)");
  }
  blrs.validate();
  weights.validate();
  labels.validate();
}

std::string TrainConfig::to_text() const { return config_text(*this, false); }

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "model") model = v;
  else if (key == "precision") precision = parse_int<int>(key, v);
  else if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
  else if (key == "epochs") epochs = parse_int<long>(key, v);
  else if (key == "frames_per_batch") frames_per_batch = parse_int<Index>(key, v);
  else if (key == "batches_per_epoch") batches_per_epoch = parse_int<long>(key, v);
  else if (key == "eta_g") blrs.eta_g = parse_double(key, v);
  else if (key == "eta_d") blrs.eta_d = parse_double(key, v);
  else if (key == "blrs_lambda") blrs.lambda_scale = parse_double(key, v);
  else if (key == "blrs_c1") blrs.c1 = parse_double(key, v);
  else if (key == "blrs_c2") blrs.c2 = parse_double(key, v);
  else if (key == "blrs_floor") blrs.floor = parse_double(key, v);
  else if (key == "blrs_ceiling") blrs.ceiling = parse_double(key, v);
  else if (key == "blrs_clamp") blrs.clamp = parse_bool(key, v);
  else if (key == "alpha") weights.alpha = parse_double(key, v);
  else if (key == "beta") weights.beta = parse_double(key, v);
  else if (key == "w_rec") weights.w_rec = parse_double(key, v);
  else if (key == "w_id") weights.w_id = parse_double(key, v);
  else if (key == "label_a") labels.a = parse_double(key, v);
  else if (key == "label_b") labels.b = parse_double(key, v);
  else if (key == "label_c") labels.c = parse_double(key, v);
  else if (key == "min_mode") {
    if (v == "scalar") min_mode = MinMode::scalar;
    else if (v == "elementwise") min_mode = MinMode::elementwise;
    else throw std::invalid_argument("config key 'min_mode' expects scalar or elementwise, got '" + v + "'");
  } else if (key == "update_order") {
    if (v == "generators_first") update_order = UpdateOrder::generators_first;
    else if (v == "discriminators_first") update_order = UpdateOrder::discriminators_first;
    else throw std::invalid_argument("config key 'update_order' expects generators_first or discriminators_first");
  } else if (key == "freeze_discriminators") freeze_discriminators = parse_bool(key, v);
  else if (key == "adam_beta1") adam_beta1 = parse_double(key, v);
  else if (key == "adam_beta2") adam_beta2 = parse_double(key, v);
  else if (key == "checkpoint_interval") checkpoint_interval = parse_int<long>(key, v);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

void TrainConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  long lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path, const TrainConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c = base;
  c.apply_text(ss.str());
  return c;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t TrainConfig::hash() const {
  const std::string text = config_text(*this, true);
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ------------------------------------------------------------ checkpoint

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    const auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::little) {
      bytes.insert(bytes.end(), raw.begin(), raw.end());
    } else {
      bytes.insert(bytes.end(), raw.rbegin(), raw.rend());
    }
  }
  void str(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void reals(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put(x);
  }
  template <typename S>
  void tensor(const Tensor<S>& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(t.ndim()));
    for (Index d : t.shape()) put<std::uint64_t>(static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) put(t[i]);
  }
  template <typename S>
  void tensors(const std::vector<Tensor<S>>& ts) {
    put<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) tensor(t);
  }
  void opt(const std::optional<double>& v) {
    put<std::uint8_t>(v.has_value());
    put(v.value_or(0.0));
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<std::uint8_t, sizeof(T)> raw;
    std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), sizeof(T), raw.begin());
    if constexpr (std::endian::native != std::endian::little) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    return std::bit_cast<T>(raw);
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::vector<double> reals() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(double));
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  template <typename S>
  Tensor<S> tensor() {
    const auto rank = get<std::uint32_t>();
    if (rank > 8) throw std::runtime_error("corrupt checkpoint: tensor rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<Index>(get<std::uint64_t>()));
      count *= static_cast<std::uint64_t>(shape.back());
    }
    need(count * sizeof(S));
    Tensor<S> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = get<S>();
    return t;
  }
  template <typename S>
  std::vector<Tensor<S>> tensors() {
    const auto n = get<std::uint32_t>();
    std::vector<Tensor<S>> out;
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(tensor<S>());
    return out;
  }
  std::optional<double> opt() {
    const bool has = get<std::uint8_t>() != 0;
    const double v = get<double>();
    return has ? std::optional<double>(v) : std::nullopt;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw std::runtime_error("truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_stats(Writer& w, const SpeakerStats& s) {
  w.put(s.logf0_mu);
  w.put(s.logf0_sigma);
  w.reals(s.mcep_mean);
  w.reals(s.mcep_std);
}

SpeakerStats get_stats(Reader& r) {
  SpeakerStats s;
  s.logf0_mu = r.get<double>();
  s.logf0_sigma = r.get<double>();
  s.mcep_mean = r.reals();
  s.mcep_std = r.reals();
  return s;
}

template <typename S>
void put_adam(Writer& w, const AdamState<S>& a) {
  w.put(a.step_count);
  w.put(a.beta1);
  w.put(a.beta2);
  w.put(a.epsilon);
  w.tensors(a.first_moment);
  w.tensors(a.second_moment);
}

template <typename S>
AdamState<S> get_adam(Reader& r) {
  AdamState<S> a;
  a.step_count = r.get<std::uint64_t>();
  a.beta1 = r.get<double>();
  a.beta2 = r.get<double>();
  a.epsilon = r.get<double>();
  a.first_moment = r.tensors<S>();
  a.second_moment = r.tensors<S>();
  return a;
}

void put_blrs(Writer& w, const BlrsState& s) {
  w.put(s.eta_g);
  w.put(s.eta_d);
  w.opt(s.prev_G_loss);
  w.opt(s.prev_D_loss);
  w.put(s.lambda_scale);
  w.put(s.c1);
  w.put(s.c2);
  w.put<std::int64_t>(s.epoch);
  w.put(s.floor);
  w.put(s.ceiling);
  w.put<std::uint8_t>(s.clamp);
}

BlrsState get_blrs(Reader& r) {
  BlrsState s;
  s.eta_g = r.get<double>();
  s.eta_d = r.get<double>();
  s.prev_G_loss = r.opt();
  s.prev_D_loss = r.opt();
  s.lambda_scale = r.get<double>();
  s.c1 = r.get<double>();
  s.c2 = r.get<double>();
  s.epoch = static_cast<long>(r.get<std::int64_t>());
  s.floor = r.get<double>();
  s.ceiling = r.get<double>();
  s.clamp = r.get<std::uint8_t>() != 0;
  return s;
}

constexpr char kCheckpointMagic[4] = {'A', 'L', 'G', 'C'};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <typename S>
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<S>& c) {
  Writer w;
  for (char ch : kCheckpointMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(ch));
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint8_t>(sizeof(S));
  w.put<std::uint64_t>(c.config.hash());
  w.put<std::int64_t>(c.epoch);
  w.str(c.config.to_text());
  put_stats(w, c.stats_x);
  put_stats(w, c.stats_y);
  for (const auto* p : {&c.g_xy, &c.g_yx, &c.d_x, &c.d_y}) w.tensors(*p);
  for (const auto* a : {&c.adam_g_xy, &c.adam_g_yx, &c.adam_d_x, &c.adam_d_y}) put_adam(w, *a);
  put_blrs(w, c.blrs);
  return std::move(w.bytes);
}

template <typename S>
Checkpoint<S> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw std::runtime_error("not a checkpoint (bad magic)");
  }
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto width = r.get<std::uint8_t>();
  if (width != sizeof(S)) {
    throw std::runtime_error("checkpoint holds " + std::to_string(8 * width) + "-bit parameters, expected " +
                             std::to_string(8 * sizeof(S)));
  }
  const auto stored_hash = r.get<std::uint64_t>();
  Checkpoint<S> c;
  c.epoch = static_cast<long>(r.get<std::int64_t>());
  c.config = TrainConfig{};
  c.config.apply_text(r.str());
  if (c.config.hash() != stored_hash) throw std::runtime_error("corrupt checkpoint: config hash does not match");
  c.stats_x = get_stats(r);
  c.stats_y = get_stats(r);
  c.g_xy = r.tensors<S>();
  c.g_yx = r.tensors<S>();
  c.d_x = r.tensors<S>();
  c.d_y = r.tensors<S>();
  c.adam_g_xy = get_adam<S>(r);
  c.adam_g_yx = get_adam<S>(r);
  c.adam_d_x = get_adam<S>(r);
  c.adam_d_y = get_adam<S>(r);
  c.blrs = get_blrs(r);
  if (!r.done()) throw std::runtime_error("corrupt checkpoint: trailing bytes");
  return c;
}

template <typename S>
std::size_t save_checkpoint(const Checkpoint<S>& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
  return bytes.size();
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint<S>(bytes);
}

int checkpoint_precision(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 7 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw std::runtime_error("not a checkpoint (bad magic)");
  }
  return bytes[6] * 8;
}

// ------------------------------------------------------------ loss report

void write_loss_report_csv(std::ostream& out, std::span<const LossReport> reports) {
  out << "epoch,adv_G_xy,adv_G_yx,adv_D_x,adv_D_y,rec,id,full,eta_g,eta_d\n";
  char buf[512];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.adv_G_xy,
                  r.adv_G_yx, r.adv_D_x, r.adv_D_y, r.rec, r.id, r.full, r.eta_g, r.eta_d);
    out << buf;
  }
}

std::vector<LossReport> read_loss_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,adv_G_xy,adv_G_yx,adv_D_x,adv_D_y,rec,id,full,eta_g,eta_d") {
    throw std::invalid_argument("loss report: unexpected header");
  }
  std::vector<LossReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossReport r;
    const int n = std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.adv_G_xy,
                              &r.adv_G_yx, &r.adv_D_x, &r.adv_D_y, &r.rec, &r.id, &r.full, &r.eta_g, &r.eta_d);
    if (n != 10) throw std::invalid_argument("loss report: malformed row '" + line + "'");
    out.push_back(r);
  }
  return out;
}

// --------------------------------------------------------------- trainer

namespace {

enum Stream : std::uint64_t { kGxy = 1, kGyx, kDx, kDy, kBatch };

template <typename S>
void zero_grads(std::vector<Var<S>>& params) {
  for (auto& p : params) p.zero_grad();
}

template <typename S>
std::vector<Tensor<S>> values_of(const std::vector<Var<S>>& params) {
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

}  // namespace

template <typename S>
Trainer<S>::Trainer(const TrainConfig& cfg, const FeatureArchive& corpus_x, const FeatureArchive& corpus_y)
    : g_xy(cfg.generator_config(), derive_seed(cfg.seed, {kGxy})),
      g_yx(cfg.generator_config(), derive_seed(cfg.seed, {kGyx})),
      d_x(cfg.discriminator_config(), derive_seed(cfg.seed, {kDx})),
      d_y(cfg.discriminator_config(), derive_seed(cfg.seed, {kDy})),
      cfg_(cfg),
      corpus_x_(corpus_x),
      corpus_y_(corpus_y) {
  cfg_.validate();
  if (cfg_.precision != static_cast<int>(8 * sizeof(S))) {
    throw std::invalid_argument("trainer: config asks for " + std::to_string(cfg_.precision) +
                                "-bit training but the trainer is " + std::to_string(8 * sizeof(S)) + "-bit");
  }
  const Index dim = g_xy.config().input_dim;
  for (const auto* c : {&corpus_x_, &corpus_y_}) {
    c->validate();
    if (c->mcep_dim != dim) {
      throw std::invalid_argument("trainer: corpus mcep_dim " + std::to_string(c->mcep_dim) +
                                  " does not match model input " + std::to_string(dim));
    }
    if (c->total_frames() < cfg_.frames_per_batch) {
      throw std::invalid_argument("trainer: corpus too small (" + std::to_string(c->total_frames()) +
                                  " frames, need at least frames_per_batch = " +
                                  std::to_string(cfg_.frames_per_batch) + ")");
    }
  }
  stats_x_ = compute_speaker_stats(corpus_x_);
  stats_y_ = compute_speaker_stats(corpus_y_);
  params_g_xy_ = g_xy.parameters();
  params_g_yx_ = g_yx.parameters();
  params_d_x_ = d_x.parameters();
  params_d_y_ = d_y.parameters();
  adam_g_xy_ = AdamState<S>(values_of(params_g_xy_), cfg_.adam_beta1, cfg_.adam_beta2);
  adam_g_yx_ = AdamState<S>(values_of(params_g_yx_), cfg_.adam_beta1, cfg_.adam_beta2);
  adam_d_x_ = AdamState<S>(values_of(params_d_x_), cfg_.adam_beta1, cfg_.adam_beta2);
  adam_d_y_ = AdamState<S>(values_of(params_d_y_), cfg_.adam_beta1, cfg_.adam_beta2);
  blrs_ = BlrsState::initial(cfg_.blrs);
}

template <typename S>
std::uint64_t Trainer<S>::batch_seed(long epoch, long batch) const {
  return derive_seed(cfg_.seed, {kBatch, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch)});
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> Trainer<S>::draw_batch(long epoch, long batch) const {
  std::mt19937_64 rng(batch_seed(epoch, batch));
  auto x = mcep_normalize(to_tensor<S>(sample_frames(corpus_x_, cfg_.frames_per_batch, rng)), stats_x_);
  auto y = mcep_normalize(to_tensor<S>(sample_frames(corpus_y_, cfg_.frames_per_batch, rng)), stats_y_);
  return {std::move(x), std::move(y)};
}

template <typename S>
void Trainer<S>::generator_phase(const Var<S>& x, const Var<S>& y, StepLosses& out) {
  for (auto* ps : {&params_g_xy_, &params_g_yx_, &params_d_x_, &params_d_y_}) zero_grads(*ps);
  const auto& w = cfg_.weights;
  const Var<S> fake_y = g_xy(x);
  const Var<S> fake_x = g_yx(y);
  Var<S> score_y, score_x;
  {
    NoGradGuard no_grad;  // the real-data terms do not depend on the generators
    score_y = d_y(y);
    score_x = d_x(x);
  }
  const Var<S> adv_xy = adversarial_loss_G<S>(score_y, d_y(fake_y), cfg_.labels, w, cfg_.min_mode);
  const Var<S> adv_yx = adversarial_loss_G<S>(score_x, d_x(fake_x), cfg_.labels, w, cfg_.min_mode);
  Var<S> total = add(adv_xy, adv_yx);

  auto cycle = [&] { return mean(abs(sub(g_yx(fake_y), x))) + mean(abs(sub(g_xy(fake_x), y))); };
  auto identity = [&] { return mean(abs(sub(g_yx(x), x))) + mean(abs(sub(g_xy(y), y))); };
  Var<S> rec, id;
  if (w.w_rec > 0.0) {
    rec = cycle();
    total = add(total, mul_scalar(rec, static_cast<S>(w.w_rec)));
  } else {
    NoGradGuard no_grad;
    rec = cycle();
  }
  if (w.w_id > 0.0) {
    id = identity();
    total = add(total, mul_scalar(id, static_cast<S>(w.w_id)));
  } else {
    NoGradGuard no_grad;
    id = identity();
  }
  out.adv_G_xy = static_cast<double>(adv_xy.value().item());
  out.adv_G_yx = static_cast<double>(adv_yx.value().item());
  out.rec = static_cast<double>(rec.value().item());
  out.id = static_cast<double>(id.value().item());
  if (!std::isfinite(out.generator_objective(w))) return;  // reported by step()
  backward(total);
  adam_step(params_g_xy_, adam_g_xy_, blrs_.eta_g);
  adam_step(params_g_yx_, adam_g_yx_, blrs_.eta_g);
}

template <typename S>
void Trainer<S>::discriminator_phase(const Var<S>& x, const Var<S>& y, StepLosses& out) {
  for (auto* ps : {&params_g_xy_, &params_g_yx_, &params_d_x_, &params_d_y_}) zero_grads(*ps);
  Var<S> fake_y, fake_x;
  {
    NoGradGuard no_grad;
    fake_y = g_xy(x).detach();
    fake_x = g_yx(y).detach();
  }
  const Var<S> adv_dy = adversarial_loss_D<S>(d_y, y, fake_y, cfg_.labels, cfg_.weights, cfg_.min_mode);
  const Var<S> adv_dx = adversarial_loss_D<S>(d_x, x, fake_x, cfg_.labels, cfg_.weights, cfg_.min_mode);
  out.adv_D_y = static_cast<double>(adv_dy.value().item());
  out.adv_D_x = static_cast<double>(adv_dx.value().item());
  if (!std::isfinite(out.discriminator_objective())) return;
  if (cfg_.freeze_discriminators) return;
  backward(add(adv_dx, adv_dy));
  adam_step(params_d_x_, adam_d_x_, blrs_.eta_d);
  adam_step(params_d_y_, adam_d_y_, blrs_.eta_d);
}

template <typename S>
StepLosses Trainer<S>::step(long epoch, long batch) {
  const auto [xt, yt] = draw_batch(epoch, batch);
  const Var<S> x(xt), y(yt);
  StepLosses out;
  if (cfg_.update_order == UpdateOrder::generators_first) {
    generator_phase(x, y, out);
    if (std::isfinite(out.generator_objective(cfg_.weights))) discriminator_phase(x, y, out);
  } else {
    discriminator_phase(x, y, out);
    if (std::isfinite(out.discriminator_objective())) generator_phase(x, y, out);
  }
  if (!std::isfinite(out.generator_objective(cfg_.weights)) || !std::isfinite(out.discriminator_objective())) {
    char seed[32];
    std::snprintf(seed, sizeof seed, "0x%016llx", static_cast<unsigned long long>(batch_seed(epoch, batch)));
    char losses[256];
    std::snprintf(losses, sizeof losses, "adv_G_xy=%g adv_G_yx=%g adv_D_x=%g adv_D_y=%g rec=%g id=%g", out.adv_G_xy,
                  out.adv_G_yx, out.adv_D_x, out.adv_D_y, out.rec, out.id);
    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) +
                             " (batch seed " + seed + "): " + losses);
  }
  return out;
}

template <typename S>
LossReport Trainer<S>::run_epoch() {
  const long epoch = blrs_.epoch;
  LossReport report;
  report.epoch = epoch;
  report.eta_g = blrs_.eta_g;
  report.eta_d = blrs_.eta_d;
  double g_sum = 0.0, d_sum = 0.0;
  for (long b = 0; b < cfg_.batches_per_epoch; ++b) {
    const StepLosses s = step(epoch, b);
    report.adv_G_xy += s.adv_G_xy;
    report.adv_G_yx += s.adv_G_yx;
    report.adv_D_x += s.adv_D_x;
    report.adv_D_y += s.adv_D_y;
    report.rec += s.rec;
    report.id += s.id;
    g_sum += s.generator_objective(cfg_.weights);
    d_sum += s.discriminator_objective();
  }
  const auto n = static_cast<double>(cfg_.batches_per_epoch);
  for (double* v : {&report.adv_G_xy, &report.adv_G_yx, &report.adv_D_x, &report.adv_D_y, &report.rec, &report.id}) {
    *v /= n;
  }
  report.finalize(cfg_.weights);
  blrs_ = blrs_step(blrs_, g_sum / n, d_sum / n);
  if (log::level() >= log::Level::debug) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %ld full=%.6g eta_g=%.6g eta_d=%.6g", epoch, report.full, report.eta_g,
                  report.eta_d);
    log::debug(buf);
  }
  return report;
}

template <typename S>
std::vector<LossReport> Trainer<S>::train(const std::function<void(const Checkpoint<S>&)>& on_checkpoint) {
  std::vector<LossReport> reports;
  while (epochs_done() < cfg_.epochs) {
    reports.push_back(run_epoch());
    const long done = epochs_done();
    const bool interval = cfg_.checkpoint_interval > 0 && done % cfg_.checkpoint_interval == 0;
    if (on_checkpoint && (interval || done == cfg_.epochs)) on_checkpoint(checkpoint());
    if (log::level() >= log::Level::info && (done % 10 == 0 || done == cfg_.epochs)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %ld/%ld full loss %.6g", done, cfg_.epochs, reports.back().full);
      log::info(buf);
    }
  }
  return reports;
}

template <typename S>
Checkpoint<S> Trainer<S>::checkpoint() const {
  Checkpoint<S> c;
  c.config = cfg_;
  c.epoch = epochs_done();
  c.stats_x = stats_x_;
  c.stats_y = stats_y_;
  c.g_xy = values_of(params_g_xy_);
  c.g_yx = values_of(params_g_yx_);
  c.d_x = values_of(params_d_x_);
  c.d_y = values_of(params_d_y_);
  c.adam_g_xy = adam_g_xy_;
  c.adam_g_yx = adam_g_yx_;
  c.adam_d_x = adam_d_x_;
  c.adam_d_y = adam_d_y_;
  c.blrs = blrs_;
  return c;
}

template <typename S>
bool Trainer<S>::restore(const Checkpoint<S>& c) {
  if (c.config.generator_config() != cfg_.generator_config() ||
      c.config.discriminator_config() != cfg_.discriminator_config()) {
    throw std::invalid_argument("restore: checkpoint networks differ from the configured model");
  }
  if (c.blrs.epoch != c.epoch + 1) throw std::invalid_argument("restore: checkpoint epoch and BLRS state disagree");
  g_xy.load_parameters(c.g_xy);
  g_yx.load_parameters(c.g_yx);
  d_x.load_parameters(c.d_x);
  d_y.load_parameters(c.d_y);
  adam_g_xy_ = c.adam_g_xy;
  adam_g_yx_ = c.adam_g_yx;
  adam_d_x_ = c.adam_d_x;
  adam_d_y_ = c.adam_d_y;
  blrs_ = c.blrs;
  const bool same = c.config.hash() == cfg_.hash();
  if (!same) log::warn("resuming from a checkpoint written under a different training configuration");
  return same;
}

// ------------------------------------------------------------ conversion

template <typename S>
FeatureArchive convert_archive(const FeatureArchive& archive, const FeatureMap<S>& g, const SpeakerStats& src,
                               const SpeakerStats& tgt, Index tile) {
  archive.validate();
  if (tile <= 0) throw std::invalid_argument("convert: tile width must be positive");
  const Index dims = archive.mcep_dim;
  if (static_cast<Index>(src.mcep_mean.size()) != dims || static_cast<Index>(tgt.mcep_mean.size()) != dims) {
    throw std::invalid_argument("convert: archive mcep_dim " + std::to_string(dims) +
                                " does not match the statistics dimension");
  }
  NoGradGuard no_grad;
  FeatureArchive out;
  out.mcep_dim = archive.mcep_dim;
  for (const auto& utt : archive.utterances) {
    const Index frames = utt.frames();
    const Tensor<S> z = mcep_normalize(to_tensor<S>(utt.mcep), src);
    const Index padded = (frames + tile - 1) / tile * tile;
    Tensor<S> mapped({dims, frames});
    for (Index start = 0; start < padded; start += tile) {
      Tensor<S> piece({dims, tile});
      const Index width = std::min(tile, frames - start);
      piece.matrix(dims).leftCols(width) = z.matrix(dims).middleCols(start, width);
      const Var<S> result = g(Var<S>(piece));
      if (result.shape() != Shape{dims, tile}) {
        throw std::invalid_argument("convert: mapping returned " + to_string(result.shape()) + " for a " +
                                    to_string(piece.shape()) + " tile");
      }
      mapped.matrix(dims).middleCols(start, width) = result.value().matrix(dims).leftCols(width);
    }
    Utterance converted;
    converted.mcep = to_feature_matrix(mcep_denormalize(mapped, tgt));
    const std::vector<double> f0(utt.f0.begin(), utt.f0.end());
    const auto f0_out = logf0_convert(f0, src, tgt);
    converted.f0.assign(f0_out.begin(), f0_out.end());
    converted.ap = ap_passthrough(utt.ap);
    out.utterances.push_back(std::move(converted));
  }
  return out;
}

template <typename S>
FeatureArchive convert(const Checkpoint<S>& ckpt, const FeatureArchive& archive, Direction direction) {
  const GeneratorConfig gcfg = ckpt.config.generator_config();
  if (archive.mcep_dim != gcfg.input_dim) {
    throw std::invalid_argument("convert: archive mcep_dim " + std::to_string(archive.mcep_dim) +
                                " does not match model input " + std::to_string(gcfg.input_dim));
  }
  Generator<S> gen(gcfg, 0);
  const bool forward = direction == Direction::x2y;
  gen.load_parameters(forward ? ckpt.g_xy : ckpt.g_yx);
  const auto& src = forward ? ckpt.stats_x : ckpt.stats_y;
  const auto& tgt = forward ? ckpt.stats_y : ckpt.stats_x;
  const Index tile = std::max<Index>(128, gcfg.width_multiple());
  return convert_archive<S>(archive, [&](const Var<S>& v) { return gen(v); }, src, tgt, tile);
}

#define ALGAN_INSTANTIATE(S)                                                                               \
  template class Trainer<S>;                                                                               \
  template std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<S>&);                              \
  template Checkpoint<S> decode_checkpoint(std::span<const std::uint8_t>);                                 \
  template std::size_t save_checkpoint(const Checkpoint<S>&, const std::filesystem::path&);                \
  template Checkpoint<S> load_checkpoint(const std::filesystem::path&);                                    \
  template FeatureArchive convert_archive(const FeatureArchive&, const FeatureMap<S>&, const SpeakerStats&, \
                                          const SpeakerStats&, Index);                                     \
  template FeatureArchive convert(const Checkpoint<S>&, const FeatureArchive&, Direction);

ALGAN_INSTANTIATE(float)
ALGAN_INSTANTIATE(double)

}  // namespace algan
