#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/network.hpp"

using namespace pfw;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::current_path() / "tmp_test_network";
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

FourierConfig fourier_1d() {
  FourierConfig cfg;
  cfg.dim = 1;
  cfg.modes = {5, 5};
  cfg.period = {2.0, 2.0};
  return cfg;
}

}  // namespace

TEST_CASE("parameter bookkeeping for the standard 1D field network") {
  PeriodicNet net(fourier_1d(), {50, 50, 50}, true);
  const DenseCore& core = net.core();
  // Input width: time plus 2m+1 periodic features.
  CHECK(core.in_width() == 12);
  CHECK(core.layer_count() == 3);
  // (12*50 + 50) + 2*(50*50 + 50) + (50 + 1).
  CHECK(core.param_count() == 5801);
  CHECK(core.params().size() == 5801);
  CHECK(net.dim() == 1);

  // Skip connections only between equal-width consecutive hidden layers.
  CHECK_FALSE(core.skip_at(0));
  CHECK(core.skip_at(1));
  CHECK(core.skip_at(2));

  PeriodicNet uneven(fourier_1d(), {30, 50}, true);
  CHECK_FALSE(uneven.core().skip_at(1));
}

TEST_CASE("block names cover every coordinate") {
  PotentialNet net({20, 20, 20}, true);
  const DenseCore& core = net.core();
  CHECK(core.in_width() == 1);
  CHECK(core.block_name(0) == "W1");
  CHECK(core.block_name(core.bias_offset(0)) == "b1");
  CHECK(core.block_name(core.weight_offset(1)) == "W2");
  CHECK(core.block_name(core.out_weight_offset()) == "W_out");
  CHECK(core.block_name(core.out_bias_offset()) == "b_out");
}

TEST_CASE("Kaiming initialization statistics and determinism") {
  PeriodicNet a(fourier_1d(), {50, 50, 50}, true);
  PeriodicNet b(fourier_1d(), {50, 50, 50}, true);
  a.init_kaiming(77);
  b.init_kaiming(77);
  CHECK(a.core().params() == b.core().params());
  b.init_kaiming(78);
  CHECK(a.core().params() != b.core().params());

  // Hidden-layer weights: N(0, 2/fan_in) with fan_in = 50 -> var 0.04.
  auto w = a.core().weight(1);
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c) {
      sum += w(r, c);
      sq += w(r, c) * w(r, c);
    }
  double n = static_cast<double>(w.size());
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(var == Catch::Approx(2.0 / 50.0).epsilon(0.2));

  // Biases start at zero.
  auto bias = a.core().bias(0);
  for (int r = 0; r < bias.rows(); ++r) CHECK(bias(r) == 0.0);
  CHECK(a.core().out_bias() == 0.0);
}

TEST_CASE("constant network metadata") {
  PeriodicNet c = PeriodicNet::constant(fourier_1d(), {10, 10}, 0.75);
  CHECK(c.core().out_bias() == 0.75);
  // All other parameters are zero.
  double acc = 0.0;
  for (double p : c.core().params()) acc += std::fabs(p);
  CHECK(acc == 0.75);
}

TEST_CASE("checkpoints round-trip periodic networks") {
  TempDir tmp;
  PeriodicNet net(fourier_1d(), {30, 30}, true);
  net.init_kaiming(123);
  net.init_seed = 123;
  net.iterations = 456;
  save_checkpoint(tmp.file("phi.net"), net);

  PeriodicNet back = load_periodic_checkpoint(tmp.file("phi.net"));
  CHECK(back.core().params() == net.core().params());
  CHECK(back.init_seed == 123);
  CHECK(back.iterations == 456);
  CHECK(back.fourier().modes[0] == 5);
  CHECK(back.dim() == 1);

  // A potential checkpoint is not a periodic checkpoint.
  PotentialNet f({20, 20}, true);
  f.init_kaiming(9);
  save_checkpoint(tmp.file("f.net"), f);
  CHECK_THROWS_AS(load_periodic_checkpoint(tmp.file("f.net")), IoError);
  PotentialNet fback = load_potential_checkpoint(tmp.file("f.net"));
  CHECK(fback.core().params() == f.core().params());
  CHECK_THROWS_AS(load_potential_checkpoint(tmp.file("phi.net")), IoError);
  CHECK_THROWS_AS(load_periodic_checkpoint(tmp.file("missing.net")), IoError);
}

TEST_CASE("2D periodic network width accounts for the product features") {
  FourierConfig cfg;
  cfg.dim = 2;
  cfg.modes = {5, 5};
  cfg.period = {2.0, 2.0};
  PeriodicNet net(cfg, {100, 100, 100, 100}, true);
  CHECK(net.core().in_width() == 101);  // t + 4*5*5 features
  CHECK(net.dim() == 2);
}
