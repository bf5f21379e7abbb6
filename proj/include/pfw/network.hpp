#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/fourier.hpp"
#include "pfw/io.hpp"

namespace pfw {

/// Flat parameter storage. SIMD-aligned so that the alignment of every layer
/// view depends only on the architecture, never on where the heap happened to
/// place the buffer; this keeps repeated runs in one process bit-identical.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Fully connected tanh network core with optional identity skips between
/// consecutive equal-width hidden layers and a scalar linear output.
/// Parameters live in one flat vector; layer views are Eigen maps. Flat
/// layout: per hidden layer the weight block (column-major) then the bias,
/// finally the output weights and output bias.
class DenseCore {
 public:
  DenseCore(int in_width, std::vector<int> hidden, bool skips = true)
      : in_width_(in_width), hidden_(std::move(hidden)), skips_(skips) {
    if (in_width_ < 1) throw ConfigError("network: input width must be positive");
    if (hidden_.empty()) throw ConfigError("network: need at least one hidden layer");
    for (int h : hidden_)
      if (h < 1) throw ConfigError("network: hidden widths must be positive");
    std::size_t off = 0;
    int w = in_width_;
    for (int h : hidden_) {
      weight_off_.push_back(off);
      off += static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
      bias_off_.push_back(off);
      off += static_cast<std::size_t>(h);
      w = h;
    }
    out_weight_off_ = off;
    off += static_cast<std::size_t>(w);
    out_bias_off_ = off;
    off += 1;
    params_.assign(off, 0.0);
  }

  int in_width() const { return in_width_; }
  int layer_count() const { return static_cast<int>(hidden_.size()); }
  const std::vector<int>& hidden() const { return hidden_; }
  int layer_in_width(int i) const { return i == 0 ? in_width_ : hidden_[static_cast<std::size_t>(i - 1)]; }
  int layer_out_width(int i) const { return hidden_[static_cast<std::size_t>(i)]; }
  bool skips_enabled() const { return skips_; }

  /// Identity skip feeds the output of hidden layer i when its input and
  /// output widths match; mismatched widths simply have no skip.
  bool skip_at(int i) const {
    return skips_ && i > 0 && layer_in_width(i) == layer_out_width(i);
  }

  std::size_t param_count() const { return params_.size(); }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(int i) const {
    return {params_.data() + weight_off_[static_cast<std::size_t>(i)], layer_out_width(i),
            layer_in_width(i)};
  }
  Eigen::Map<Eigen::MatrixXd> weight(int i) {
    return {params_.data() + weight_off_[static_cast<std::size_t>(i)], layer_out_width(i),
            layer_in_width(i)};
  }
  Eigen::Map<const Eigen::VectorXd> bias(int i) const {
    return {params_.data() + bias_off_[static_cast<std::size_t>(i)], layer_out_width(i)};
  }
  Eigen::Map<Eigen::VectorXd> bias(int i) {
    return {params_.data() + bias_off_[static_cast<std::size_t>(i)], layer_out_width(i)};
  }
  Eigen::Map<const Eigen::RowVectorXd> out_weight() const {
    return {params_.data() + out_weight_off_, hidden_.back()};
  }
  Eigen::Map<Eigen::RowVectorXd> out_weight() {
    return {params_.data() + out_weight_off_, hidden_.back()};
  }
  double out_bias() const { return params_[out_bias_off_]; }
  double& out_bias() { return params_[out_bias_off_]; }

  std::size_t weight_offset(int i) const { return weight_off_[static_cast<std::size_t>(i)]; }
  std::size_t bias_offset(int i) const { return bias_off_[static_cast<std::size_t>(i)]; }
  std::size_t out_weight_offset() const { return out_weight_off_; }
  std::size_t out_bias_offset() const { return out_bias_off_; }

  /// Name of the parameter block containing flat coordinate `coord`.
  std::string block_name(std::size_t coord) const {
    for (int i = 0; i < layer_count(); ++i) {
      if (coord < bias_off_[static_cast<std::size_t>(i)]) return "W" + std::to_string(i + 1);
      std::size_t next = (i + 1 < layer_count()) ? weight_off_[static_cast<std::size_t>(i + 1)]
                                                 : out_weight_off_;
      if (coord < next) return "b" + std::to_string(i + 1);
    }
    return coord < out_bias_off_ ? "W_out" : "b_out";
  }

  /// He (fan-in) initialization: weights drawn from N(0, 2/fan_in), biases
  /// zero. The draw order is fixed (layer by layer, storage order) so a seed
  /// fully determines the parameters.
  void init_kaiming(std::uint64_t seed) {
    Rng rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (int i = 0; i < layer_count(); ++i) {
      double stddev = std::sqrt(2.0 / static_cast<double>(layer_in_width(i)));
      auto w = weight(i);
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = stddev * rng.normal();
    }
    double stddev = std::sqrt(2.0 / static_cast<double>(hidden_.back()));
    auto ow = out_weight();
    for (Eigen::Index c = 0; c < ow.cols(); ++c) ow(c) = stddev * rng.normal();
  }

 private:
  int in_width_;
  std::vector<int> hidden_;
  bool skips_;
  std::vector<std::size_t> weight_off_, bias_off_;
  std::size_t out_weight_off_ = 0, out_bias_off_ = 0;
  ParamVector params_;
};

/// Space-time field network: periodic Fourier features of x (passed through
/// tanh) concatenated with the raw time input feed the dense core.
class PeriodicNet {
 public:
  PeriodicNet(FourierConfig fourier, std::vector<int> hidden, bool skips = true)
      : fourier_(fourier), core_(1 + fourier.feature_count(), std::move(hidden), skips) {
    fourier_.validate();
  }

  /// Network that evaluates exactly to `value` everywhere (zero weights,
  /// output bias set); all derivatives vanish identically.
  static PeriodicNet constant(const FourierConfig& fourier, std::vector<int> hidden,
                              double value) {
    PeriodicNet net(fourier, std::move(hidden));
    net.core_.out_bias() = value;
    return net;
  }

  void init_kaiming(std::uint64_t seed) {
    core_.init_kaiming(seed);
    init_seed = seed;
  }

  int dim() const { return fourier_.dim; }
  const FourierConfig& fourier() const { return fourier_; }
  DenseCore& core() { return core_; }
  const DenseCore& core() const { return core_; }

  std::uint64_t init_seed = 0;
  long iterations = 0;  // training iterations recorded in checkpoints

 private:
  FourierConfig fourier_;
  DenseCore core_;
};

/// Scalar potential-derivative network f(phi): plain tanh MLP from the field
/// value to the potential derivative, no Fourier layer.
class PotentialNet {
 public:
  explicit PotentialNet(std::vector<int> hidden = {20, 20, 20}, bool skips = true)
      : core_(1, std::move(hidden), skips) {}

  void init_kaiming(std::uint64_t seed) {
    core_.init_kaiming(seed);
    init_seed = seed;
  }

  DenseCore& core() { return core_; }
  const DenseCore& core() const { return core_; }

  std::uint64_t init_seed = 0;
  long iterations = 0;

 private:
  DenseCore core_;
};

// ---------------------------------------------------------------------------
// Checkpoints: flat little-endian float64 parameter array plus a JSON header
// describing the architecture, the Fourier map, the init seed, and the
// number of training iterations.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr std::array<char, 8> kCheckpointMagic = {'P', 'F', 'W', 'N', 'E', 'T', '0', '1'};

inline nlohmann::json arch_header(const DenseCore& core) {
  return {{"hidden", core.hidden()}, {"skips", core.skips_enabled()}};
}

inline void check_param_count(const nlohmann::json& header, const io::FramedFile& file) {
  std::size_t expect = header.at("param_count").get<std::size_t>();
  if (file.payload.size() != expect)
    throw IoError("checkpoint parameter count mismatch: header says " + std::to_string(expect) +
                  ", payload has " + std::to_string(file.payload.size()));
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const PeriodicNet& net) {
  nlohmann::json header = {
      {"format", "pfw-network"},
      {"format_version", 1},
      {"endianness", "little"},
      {"kind", "periodic"},
      {"architecture", detail::arch_header(net.core())},
      {"fourier",
       {{"dim", net.fourier().dim},
        {"modes", std::vector<int>(net.fourier().modes.begin(),
                                   net.fourier().modes.begin() + net.fourier().dim)},
        {"period", std::vector<double>(net.fourier().period.begin(),
                                       net.fourier().period.begin() + net.fourier().dim)}}},
      {"seed", net.init_seed},
      {"iteration", net.iterations},
      {"param_count", net.core().param_count()}};
  io::write_framed(path, detail::kCheckpointMagic, header, net.core().params());
}

inline void save_checkpoint(const std::string& path, const PotentialNet& net) {
  nlohmann::json header = {{"format", "pfw-network"},
                           {"format_version", 1},
                           {"endianness", "little"},
                           {"kind", "potential"},
                           {"architecture", detail::arch_header(net.core())},
                           {"seed", net.init_seed},
                           {"iteration", net.iterations},
                           {"param_count", net.core().param_count()}};
  io::write_framed(path, detail::kCheckpointMagic, header, net.core().params());
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
  return io::read_framed(path, detail::kCheckpointMagic).header;
}

inline PeriodicNet load_periodic_checkpoint(const std::string& path) {
  io::FramedFile file = io::read_framed(path, detail::kCheckpointMagic);
  try {
    const auto& h = file.header;
    if (h.at("kind").get<std::string>() != "periodic")
      throw IoError("checkpoint is not a periodic (field) network: " + path);
    if (h.at("endianness").get<std::string>() != "little")
      throw IoError("checkpoint written on a big-endian host: " + path);
    FourierConfig fc;
    fc.dim = h.at("fourier").at("dim").get<int>();
    auto modes = h.at("fourier").at("modes").get<std::vector<int>>();
    auto period = h.at("fourier").at("period").get<std::vector<double>>();
    if (fc.dim < 1 || fc.dim > kMaxDim || modes.size() != static_cast<std::size_t>(fc.dim) ||
        period.size() != static_cast<std::size_t>(fc.dim))
      throw IoError("checkpoint has an inconsistent Fourier block: " + path);
    for (int a = 0; a < fc.dim; ++a) {
      fc.modes[a] = modes[static_cast<std::size_t>(a)];
      fc.period[a] = period[static_cast<std::size_t>(a)];
    }
    PeriodicNet net(fc, h.at("architecture").at("hidden").get<std::vector<int>>(),
                    h.at("architecture").at("skips").get<bool>());
    detail::check_param_count(h, file);
    net.core().params().assign(file.payload.begin(), file.payload.end());
    net.init_seed = h.at("seed").get<std::uint64_t>();
    net.iterations = h.at("iteration").get<long>();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid checkpoint header in " + path + ": " + e.what());
  }
}

inline PotentialNet load_potential_checkpoint(const std::string& path) {
  io::FramedFile file = io::read_framed(path, detail::kCheckpointMagic);
  try {
    const auto& h = file.header;
    if (h.at("kind").get<std::string>() != "potential")
      throw IoError("checkpoint is not a potential network: " + path);
    if (h.at("endianness").get<std::string>() != "little")
      throw IoError("checkpoint written on a big-endian host: " + path);
    PotentialNet net(h.at("architecture").at("hidden").get<std::vector<int>>(),
                     h.at("architecture").at("skips").get<bool>());
    detail::check_param_count(h, file);
    net.core().params().assign(file.payload.begin(), file.payload.end());
    net.init_seed = h.at("seed").get<std::uint64_t>();
    net.iterations = h.at("iteration").get<long>();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid checkpoint header in " + path + ": " + e.what());
  }
}

}  // namespace pfw
