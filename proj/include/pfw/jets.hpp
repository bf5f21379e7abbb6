#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/fourier.hpp"
#include "pfw/network.hpp"

namespace pfw::ad {

/// Which input derivatives to propagate besides the value. Requesting the
/// Laplacian requires the gradient (its propagation rule consumes it), so
/// `lap` implies `grad`.
struct DerivSpec {
  bool time = false;
  bool grad = false;
  bool lap = false;
};

namespace detail {

inline double tanh_scalar(double z) { return 1.0 - 2.0 / (std::exp(2.0 * z) + 1.0); }

/// Expression template for the elementwise tanh used everywhere in the
/// library. The algebraic identity tanh(z) = 1 - 2/(exp(2z)+1) routes the
/// computation through the vectorized exponential.
template <class Derived>
auto tanh_expr(const Eigen::ArrayBase<Derived>& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

}  // namespace detail

/// Per-point derivative bundle of the scalar network output.
struct EvalResult {
  double value = 0.0;
  double dtime = 0.0;
  std::array<double, kMaxDim> grad = {0.0, 0.0};
  double lap = 0.0;
};

/// Batched exact evaluation of a dense tanh network together with the
/// requested input derivatives, plus the matching exact reverse pass for
/// parameter gradients.
///
/// Activations of every layer are matrices of shape (width x C*n) where the
/// C column blocks hold, in order, the value, the time derivative, the
/// spatial gradient components, and the Laplacian of each neuron at each of
/// the n sample points. Affine layers act identically on every block; the
/// tanh stage mixes blocks through the chain rule:
///   y   = tanh(z)
///   y_t = s1 z_t,          y_xa = s1 z_xa,
///   lap y = s1 lap z + s2 sum_a z_xa^2,
/// with s1 = 1-y^2 (tanh'), s2 = -2 y s1 (tanh''). The reverse pass uses in
/// addition s3 = s1 (6y^2-2) (tanh''').
///
/// Two front-ends share the machinery: the periodic front-end feeds
/// tanh-wrapped Fourier features of x plus the raw t input (field networks);
/// the scalar front-end feeds a raw scalar (potential networks), and can
/// also backpropagate to that input so potential gradients chain into the
/// field network.
class JetBatch {
 public:
  /// Periodic front-end.
  JetBatch(const PeriodicNet& net, DerivSpec spec)
      : core_(&net.core()), fourier_(&net.fourier()), dim_(net.fourier().dim) {
    init_spec(spec);
  }

  /// Scalar front-end (potential networks); value-only.
  explicit JetBatch(const PotentialNet& net) : core_(&net.core()), fourier_(nullptr), dim_(0) {
    if (core_->in_width() != 1)
      throw ConfigError("scalar jet batch requires an input width of 1");
    init_spec(DerivSpec{});
  }

  int size() const { return n_; }
  int components() const { return comps_; }

  /// Forward pass at space-time points (periodic front-end only).
  void forward(std::span<const Point> pts) {
    if (fourier_ == nullptr) throw ConfigError("this batch was built for scalar inputs");
    stage(static_cast<int>(pts.size()));
    fill_periodic_inputs(pts);
    run_layers();
  }

  /// Forward pass at raw scalar inputs (scalar front-end only).
  void forward_values(std::span<const double> inputs) {
    if (fourier_ != nullptr) throw ConfigError("this batch was built for space-time points");
    stage(static_cast<int>(inputs.size()));
    auto& a0 = acts_.front();
    for (int j = 0; j < n_; ++j) a0(0, j) = inputs[static_cast<std::size_t>(j)];
    run_layers();
  }

  const Eigen::ArrayXd& value() const { return out_[0]; }
  const Eigen::ArrayXd& dtime() const { return out_[static_cast<std::size_t>(need(bt_))]; }
  const Eigen::ArrayXd& grad(int axis) const {
    return out_[static_cast<std::size_t>(need(bx_ + axis))];
  }
  const Eigen::ArrayXd& lap() const { return out_[static_cast<std::size_t>(need(bl_))]; }

  /// Adjoint seeds; zeroed by every forward pass.
  Eigen::ArrayXd& value_bar() { return bar_[0]; }
  Eigen::ArrayXd& dtime_bar() { return bar_[static_cast<std::size_t>(need(bt_))]; }
  Eigen::ArrayXd& grad_bar(int axis) { return bar_[static_cast<std::size_t>(need(bx_ + axis))]; }
  Eigen::ArrayXd& lap_bar() { return bar_[static_cast<std::size_t>(need(bl_))]; }

  /// Reverse pass: accumulates d(sum_j sum_c bar_c[j] * out_c[j])/d(params)
  /// into `param_grad` (length = param_count). When `input_value_bar` is
  /// non-null (scalar front-end), also emits the adjoint of each input.
  void backward(std::span<double> param_grad, Eigen::ArrayXd* input_value_bar = nullptr) {
    if (param_grad.size() != core_->param_count())
      throw ConfigError("parameter gradient span has the wrong length");
    const int L = core_->layer_count();
    const int cn = comps_ * n_;
    // Output layer.
    obar_.resize(1, cn);
    for (int c = 0; c < comps_; ++c)
      obar_.middleCols(c * n_, n_) = bar_[static_cast<std::size_t>(c)].matrix().transpose();
    {
      auto wbar = Eigen::Map<Eigen::RowVectorXd>(param_grad.data() + core_->out_weight_offset(),
                                                 core_->hidden().back());
      wbar.noalias() += obar_ * acts_[static_cast<std::size_t>(L)].transpose();
      param_grad[core_->out_bias_offset()] += obar_.middleCols(0, n_).sum();
      abar_.resize(core_->hidden().back(), cn);
      abar_.noalias() = core_->out_weight().transpose() * obar_;
    }
    // Hidden layers, last to first.
    for (int i = L - 1; i >= 0; --i) {
      const int h = core_->layer_out_width(i);
      const int w = core_->layer_in_width(i);
      const auto& Z = pre_[static_cast<std::size_t>(i)];
      const auto& Y = tanh_val_[static_cast<std::size_t>(i)];
      s1_.resize(h, n_);
      s1_ = 1.0 - Y.square();
      s2_.resize(h, n_);
      s2_ = -2.0 * Y * s1_;
      zbar_.resize(h, cn);
      auto zbar_v = zbar_.middleCols(0, n_).array();
      zbar_v = abar_.middleCols(0, n_).array() * s1_;
      if (bt_ >= 0) {
        auto zt = Z.middleCols(bt_ * n_, n_).array();
        auto at_bar = abar_.middleCols(bt_ * n_, n_).array();
        zbar_.middleCols(bt_ * n_, n_).array() = at_bar * s1_;
        zbar_v += at_bar * s2_ * zt;
      }
      if (bl_ >= 0) {
        q_.resize(h, n_);
        q_.setZero();
        for (int a = 0; a < dim_; ++a) q_ += Z.middleCols((bx_ + a) * n_, n_).array().square();
        s3_.resize(h, n_);
        s3_ = s1_ * (6.0 * Y.square() - 2.0);
        auto zl = Z.middleCols(bl_ * n_, n_).array();
        auto al_bar = abar_.middleCols(bl_ * n_, n_).array();
        zbar_.middleCols(bl_ * n_, n_).array() = al_bar * s1_;
        zbar_v += al_bar * (s2_ * zl + s3_ * q_);
        for (int a = 0; a < dim_; ++a) {
          auto zx = Z.middleCols((bx_ + a) * n_, n_).array();
          auto ax_bar = abar_.middleCols((bx_ + a) * n_, n_).array();
          zbar_.middleCols((bx_ + a) * n_, n_).array() = ax_bar * s1_ + al_bar * s2_ * 2.0 * zx;
          zbar_v += ax_bar * s2_ * zx;
        }
      } else if (bx_ >= 0) {
        for (int a = 0; a < dim_; ++a) {
          auto zx = Z.middleCols((bx_ + a) * n_, n_).array();
          auto ax_bar = abar_.middleCols((bx_ + a) * n_, n_).array();
          zbar_.middleCols((bx_ + a) * n_, n_).array() = ax_bar * s1_;
          zbar_v += ax_bar * s2_ * zx;
        }
      }
      {
        auto wbar = Eigen::Map<Eigen::MatrixXd>(param_grad.data() + core_->weight_offset(i), h, w);
        wbar.noalias() += zbar_ * acts_[static_cast<std::size_t>(i)].transpose();
        auto bbar = Eigen::Map<Eigen::VectorXd>(param_grad.data() + core_->bias_offset(i), h);
        bbar.noalias() += zbar_.middleCols(0, n_).rowwise().sum();
      }
      if (i > 0 || input_value_bar != nullptr) {
        prev_bar_.resize(w, cn);
        prev_bar_.noalias() = core_->weight(i).transpose() * zbar_;
        if (core_->skip_at(i)) prev_bar_ += abar_;
        abar_.swap(prev_bar_);
      }
    }
    if (input_value_bar != nullptr) {
      input_value_bar->resize(n_);
      *input_value_bar = abar_.row(0).middleCols(0, n_).array().transpose();
    }
  }

 private:
  void init_spec(DerivSpec spec) {
    if (spec.lap) spec.grad = true;
    spec_ = spec;
    int b = 1;
    bt_ = spec.time ? b++ : -1;
    if (spec.grad) {
      bx_ = b;
      b += dim_;
    } else {
      bx_ = -1;
    }
    bl_ = spec.lap ? b++ : -1;
    comps_ = b;
    out_.resize(static_cast<std::size_t>(comps_));
    bar_.resize(static_cast<std::size_t>(comps_));
  }

  static int need(int block) {
    if (block < 0) throw ConfigError("derivative component was not requested");
    return block;
  }

  void stage(int n) {
    if (n <= 0) throw ConfigError("empty evaluation batch");
    n_ = n;
    const int L = core_->layer_count();
    acts_.resize(static_cast<std::size_t>(L) + 1);
    pre_.resize(static_cast<std::size_t>(L));
    tanh_val_.resize(static_cast<std::size_t>(L));
    acts_[0].resize(core_->in_width(), comps_ * n_);
    acts_[0].setZero();
  }

  void fill_periodic_inputs(std::span<const Point> pts) {
    const int f = fourier_->feature_count();
    fv_.resize(static_cast<std::size_t>(f));
    fx0_.resize(static_cast<std::size_t>(f));
    fx1_.resize(static_cast<std::size_t>(f));
    fl_.resize(static_cast<std::size_t>(f));
    auto& a0 = acts_.front();
    const bool want_grad = bx_ >= 0;
    const bool want_lap = bl_ >= 0;
    for (int j = 0; j < n_; ++j) {
      const Point& p = pts[static_cast<std::size_t>(j)];
      a0(0, j) = p.t;                       // raw time input
      if (bt_ >= 0) a0(0, bt_ * n_ + j) = 1.0;
      periodic_feature_jets(*fourier_, p.x, fv_.data(), (want_grad || want_lap) ? fx0_.data() : nullptr,
                            (dim_ == 2 && (want_grad || want_lap)) ? fx1_.data() : nullptr,
                            want_lap ? fl_.data() : nullptr);
      for (int i = 0; i < f; ++i) {
        std::size_t is = static_cast<std::size_t>(i);
        double y = detail::tanh_scalar(fv_[is]);
        double s1 = 1.0 - y * y;
        a0(1 + i, j) = y;
        if (want_grad) {
          a0(1 + i, bx_ * n_ + j) = s1 * fx0_[is];
          if (dim_ == 2) a0(1 + i, (bx_ + 1) * n_ + j) = s1 * fx1_[is];
        }
        if (want_lap) {
          double q = fx0_[is] * fx0_[is] + (dim_ == 2 ? fx1_[is] * fx1_[is] : 0.0);
          a0(1 + i, bl_ * n_ + j) = s1 * fl_[is] - 2.0 * y * s1 * q;
        }
      }
    }
  }

  void run_layers() {
    const int L = core_->layer_count();
    for (int i = 0; i < L; ++i) {
      const int h = core_->layer_out_width(i);
      auto& Z = pre_[static_cast<std::size_t>(i)];
      auto& A = acts_[static_cast<std::size_t>(i) + 1];
      auto& Y = tanh_val_[static_cast<std::size_t>(i)];
      Z.resize(h, comps_ * n_);
      Z.noalias() = core_->weight(i) * acts_[static_cast<std::size_t>(i)];
      Z.middleCols(0, n_).colwise() += core_->bias(i);
      Y.resize(h, n_);
      Y = detail::tanh_expr(Z.middleCols(0, n_).array());
      A.resize(h, comps_ * n_);
      A.middleCols(0, n_) = Y.matrix();
      s1_.resize(h, n_);
      s1_ = 1.0 - Y.square();
      if (bt_ >= 0)
        A.middleCols(bt_ * n_, n_).array() = s1_ * Z.middleCols(bt_ * n_, n_).array();
      if (bx_ >= 0)
        for (int a = 0; a < dim_; ++a)
          A.middleCols((bx_ + a) * n_, n_).array() =
              s1_ * Z.middleCols((bx_ + a) * n_, n_).array();
      if (bl_ >= 0) {
        q_.resize(h, n_);
        q_.setZero();
        for (int a = 0; a < dim_; ++a) q_ += Z.middleCols((bx_ + a) * n_, n_).array().square();
        A.middleCols(bl_ * n_, n_).array() =
            s1_ * Z.middleCols(bl_ * n_, n_).array() - 2.0 * Y * s1_ * q_;
      }
      if (core_->skip_at(i)) A += acts_[static_cast<std::size_t>(i)];
    }
    // Linear scalar output.
    const auto& last = acts_[static_cast<std::size_t>(L)];
    orow_.resize(1, comps_ * n_);
    orow_.noalias() = core_->out_weight() * last;
    orow_.middleCols(0, n_).array() += core_->out_bias();
    for (int c = 0; c < comps_; ++c) {
      auto& o = out_[static_cast<std::size_t>(c)];
      auto& bar = bar_[static_cast<std::size_t>(c)];
      o.resize(n_);
      o = orow_.middleCols(c * n_, n_).row(0).array().transpose();
      bar.resize(n_);
      bar.setZero();
    }
  }

  const DenseCore* core_;
  const FourierConfig* fourier_;
  int dim_;
  DerivSpec spec_;
  int comps_ = 1, bt_ = -1, bx_ = -1, bl_ = -1;
  int n_ = 0;

  std::vector<Eigen::MatrixXd> acts_;   // layer inputs/outputs, acts_[0] = features
  std::vector<Eigen::MatrixXd> pre_;    // pre-activation jets per hidden layer
  std::vector<Eigen::ArrayXXd> tanh_val_;
  std::vector<Eigen::ArrayXd> out_, bar_;
  Eigen::MatrixXd orow_, obar_, abar_, zbar_, prev_bar_;
  Eigen::ArrayXXd s1_, s2_, s3_, q_;
  std::vector<double> fv_, fx0_, fx1_, fl_;
};

/// Exact value and requested input derivatives of the field network at one
/// space-time point.
inline EvalResult eval_with_input_derivs(const PeriodicNet& net, const Point& p, DerivSpec spec) {
  JetBatch batch(net, spec);
  batch.forward(std::span<const Point>(&p, 1));
  EvalResult r;
  r.value = batch.value()[0];
  if (spec.time) r.dtime = batch.dtime()[0];
  if (spec.grad || spec.lap)
    for (int a = 0; a < net.dim(); ++a) r.grad[static_cast<std::size_t>(a)] = batch.grad(a)[0];
  if (spec.lap) r.lap = batch.lap()[0];
  return r;
}

/// Batched field values (no derivatives).
inline std::vector<double> eval_values(const PeriodicNet& net, std::span<const Point> pts) {
  JetBatch batch(net, DerivSpec{});
  batch.forward(pts);
  return {batch.value().data(), batch.value().data() + pts.size()};
}

/// Potential-network value at a single input.
inline double potential_value(const PotentialNet& net, double u) {
  JetBatch batch(net);
  batch.forward_values(std::span<const double>(&u, 1));
  return batch.value()[0];
}

/// Batched potential-network values.
inline std::vector<double> potential_values(const PotentialNet& net, std::span<const double> u) {
  JetBatch batch(net);
  batch.forward_values(u);
  return {batch.value().data(), batch.value().data() + u.size()};
}

// ---------------------------------------------------------------------------
// Loss graphs and gradient verification
// ---------------------------------------------------------------------------

/// A scalar loss as a differentiable function of the trainable parameters of
/// one or more networks, with a flat joint parameter vector.
class LossGraph {
 public:
  virtual ~LossGraph() = default;
  virtual std::size_t param_count() const = 0;
  virtual double get_param(std::size_t i) const = 0;
  virtual void set_param(std::size_t i, double v) = 0;
  virtual std::string block_name(std::size_t i) const = 0;
  /// Forward evaluation only.
  virtual double value() = 0;
  /// Forward + reverse; accumulates into grad (caller zeroes it).
  virtual double value_and_gradient(std::span<double> grad) = 0;
};

/// Exact gradient of the loss graph; rejects non-finite losses and gradient
/// entries (naming the parameter block) rather than returning poison.
inline std::vector<double> param_gradient(LossGraph& graph) {
  std::vector<double> grad(graph.param_count(), 0.0);
  double loss = graph.value_and_gradient(grad);
  if (!std::isfinite(loss)) throw NumericsError("loss is not finite");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i]))
      throw NumericsError("gradient entry " + std::to_string(i) + " in block " +
                          graph.block_name(i) + " is not finite");
  }
  return grad;
}

struct GradCheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of the analytic gradient. The comparison is
///   |analytic - fd| / max(|analytic|, |fd|, floor) < tol,
/// floor = 1e-2 * max(1, |loss|): below the floor a finite difference of a
/// ~O(1) loss is dominated by roundoff (~1e-16/step), so tiny entries are
/// effectively checked absolutely at tol * floor.
inline GradCheckResult verify_gradient(LossGraph& graph, double step, double tol,
                                       std::size_t max_coords = 0, std::uint64_t seed = 0) {
  std::vector<double> grad = param_gradient(graph);
  double f0 = graph.value();
  double floor = 1e-2 * std::max(1.0, std::fabs(f0));
  GradCheckResult res;
  std::size_t count = graph.param_count();
  std::vector<std::size_t> coords;
  if (max_coords == 0 || max_coords >= count) {
    coords.resize(count);
    for (std::size_t i = 0; i < count; ++i) coords[i] = i;
  } else {
    Rng rng(derive_seed(seed, stream::kGradCheck));
    coords.resize(max_coords);
    for (auto& c : coords) c = static_cast<std::size_t>(rng.below(count));
  }
  for (std::size_t i : coords) {
    double saved = graph.get_param(i);
    graph.set_param(i, saved + step);
    double fp = graph.value();
    graph.set_param(i, saved - step);
    double fm = graph.value();
    graph.set_param(i, saved);
    double fd = (fp - fm) / (2.0 * step);
    double denom = std::max({std::fabs(grad[i]), std::fabs(fd), floor});
    double rel = std::fabs(grad[i] - fd) / denom;
    ++res.checked;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_coord = i;
      res.analytic_at_worst = grad[i];
      res.numeric_at_worst = fd;
    }
  }
  res.ok = res.max_rel_err < tol;
  return res;
}

}  // namespace pfw::ad
