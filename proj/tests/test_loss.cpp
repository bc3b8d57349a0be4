#include <doctest.h>

#include <cmath>
#include <limits>

#include "estformer/grad_check.hpp"
#include "estformer/loss.hpp"
#include "estformer/ops.hpp"
#include "support.hpp"

using namespace estformer;

namespace {

double naive_fmse(const Tensor& gt, const Tensor& sr) {
  double total = 0.0;
  for (std::size_t r = 0; r < gt.rows(); ++r) {
    std::vector<double> d(gt.cols());
    for (std::size_t t = 0; t < gt.cols(); ++t) d[t] = gt.at(r, t) - sr.at(r, t);
    for (const auto& c : oracle::dft(d)) total += std::norm(c);
  }
  return total;
}

double sum_sq_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("fmse equals the full-spectrum sum and T times the squared error") {
  Rng rng(1);
  const Tensor a = oracle::random_tensor({2, 8}, rng), b = oracle::random_tensor({2, 8}, rng);
  CHECK(fmse(a, b).item() == doctest::Approx(naive_fmse(a, b)).epsilon(1e-12));
  CHECK(fmse(a, a).item() == 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(5), t = 1 + rng.uniform_index(40);
    const Tensor x = oracle::random_tensor({m, t}, rng, -3.0, 3.0), y = oracle::random_tensor({m, t}, rng);
    const double v = fmse(x, y).item();
    CHECK(v == doctest::Approx(static_cast<double>(t) * sum_sq_diff(x, y)).epsilon(1e-9));
    if (t <= 16) CHECK(v == doctest::Approx(naive_fmse(x, y)).epsilon(1e-9));
  }
  CHECK_THROWS(fmse(Tensor({2, 8}), Tensor({2, 7})));
}

TEST_CASE("mae_loss") {
  CHECK(mae_loss(Tensor({1, 2}, {1.0, -1.0}), Tensor({1, 2}, {-1.0, 1.0})).item() == 4.0);
  Rng rng(2);
  const Tensor a = oracle::random_tensor({3, 7}, rng), b = oracle::random_tensor({3, 7}, rng);
  double expect = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) expect += std::abs(a[i] - b[i]);
  CHECK(mae_loss(a, b).item() == doctest::Approx(expect).epsilon(1e-14));
  CHECK(mae_loss(a, a).item() == 0.0);
  CHECK_THROWS(mae_loss(a, Tensor({7, 3})));
}

TEST_CASE("loss gradients pass central differences") {
  Rng rng(3);
  Tensor a = oracle::random_tensor({3, 10}, rng), b = oracle::random_tensor({3, 10}, rng);
  a.set_requires_grad(true);
  CHECK(grad_check([&] { return fmse(b, a); }, {a}, 1e-5).max_rel_error < 1e-6);
  CHECK(grad_check([&] { return mae_loss(b, a); }, {a}, 1e-6).max_rel_error < 1e-4);
}

TEST_CASE("auto-weighted loss closed forms") {
  const auto scalar = [](double v) {
    Tensor t({1}, {v});
    t.set_requires_grad(true);
    return t;
  };
  const Tensor f = scalar(3.0), m = scalar(5.0);
  {
    const WeightedLoss w = auto_weighted_loss(f, m, scalar(0.0), scalar(0.0));
    CHECK(w.total.item() == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(w.breakdown.sigma1_sq == 1.0);
    CHECK(w.breakdown.fmse == 3.0);
    CHECK(w.breakdown.mae == 5.0);
  }
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const double fv = rng.uniform(0.1, 100.0), mv = rng.uniform(0.1, 100.0);
    const double s1v = rng.uniform(-3.0, 3.0), s2v = rng.uniform(-3.0, 3.0);
    Tensor s1 = scalar(s1v), s2 = scalar(s2v);
    const Tensor fv_t = scalar(fv), mv_t = scalar(mv);
    Tape tape;
    WeightedLoss w;
    {
      TapeScope scope(tape);
      w = auto_weighted_loss(fv_t, mv_t, s1, s2);
    }
    const double expect = fv / (2 * std::exp(s1v)) + mv / (2 * std::exp(s2v)) + 0.5 * (s1v + s2v);
    CHECK(w.total.item() == doctest::Approx(expect).epsilon(1e-14));
    CHECK(w.breakdown.total == doctest::Approx(expect).epsilon(1e-14));
    CHECK(w.breakdown.sigma2_sq == doctest::Approx(std::exp(s2v)).epsilon(1e-15));
    tape.backward(w.total);
    CHECK(s1.grad()[0] == doctest::Approx(-fv / (2 * std::exp(s1v)) + 0.5).epsilon(1e-8));
    CHECK(s2.grad()[0] == doctest::Approx(-mv / (2 * std::exp(s2v)) + 0.5).epsilon(1e-8));
    CHECK(fv_t.grad()[0] == doctest::Approx(1.0 / (2 * std::exp(s1v))).epsilon(1e-12));
  }
}

TEST_CASE("minimizing over s1 gives log fmse") {
  const double fv = 7.5;
  Tensor s1({1}, {0.0});
  s1.set_requires_grad(true);
  const Tensor f({1}, {fv}), m({1}, {1.0}), s2({1}, {0.0});
  for (int it = 0; it < 60; ++it) {
    s1.zero_grad();
    Tape tape;
    Tensor total;
    {
      TapeScope scope(tape);
      total = auto_weighted_loss(f, m, s1, s2).total;
    }
    tape.backward(total);
    // Newton step on 0.5 (f e^-s + s): gradient 0.5 (1 - f e^-s), curvature 0.5 f e^-s.
    const double g = s1.grad()[0], h = 0.5 * fv * std::exp(-s1.item());
    s1.mutable_data()[0] -= g / h;
  }
  CHECK(s1.item() == doctest::Approx(std::log(fv)).epsilon(1e-12));
}

TEST_CASE("nmse, snr and pcc") {
  Rng rng(5);
  const Tensor gt = oracle::random_tensor({4, 20}, rng);
  CHECK(nmse(gt, gt) == 0.0);
  CHECK(pcc(gt, gt) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(snr_db(gt, gt), MetricError);
  const Tensor zeros({4, 20});
  CHECK(nmse(gt, zeros) == 1.0);
  CHECK(snr_db(gt, zeros) == 0.0);
  CHECK_THROWS_AS(nmse(zeros, gt), MetricError);
  CHECK_THROWS_AS(pcc(gt, zeros), MetricError);

  const Tensor sr = oracle::random_tensor({4, 20}, rng);
  double num = 0.0, den = 0.0, corr = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    double mg = 0.0, ms = 0.0;
    for (std::size_t t = 0; t < 20; ++t) mg += gt.at(r, t) / 20.0, ms += sr.at(r, t) / 20.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < 20; ++t) {
      const double g = gt.at(r, t), s = sr.at(r, t);
      num += (g - s) * (g - s);
      den += g * g;
      sxy += (g - mg) * (s - ms);
      sxx += (g - mg) * (g - mg);
      syy += (s - ms) * (s - ms);
    }
    corr += sxy / std::sqrt(sxx * syy) / 4.0;
  }
  CHECK(nmse(gt, sr) == doctest::Approx(num / den).epsilon(1e-14));
  CHECK(snr_db(gt, sr) == -10.0 * std::log10(nmse(gt, sr)));
  CHECK(pcc(gt, sr) == doctest::Approx(corr).epsilon(1e-13));
  CHECK_THROWS(nmse(gt, Tensor({4, 19})));
}

TEST_CASE("pcc is invariant to positive per-row affine maps") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(6), t = 3 + rng.uniform_index(30);
    const Tensor gt = oracle::random_tensor({rows, t}, rng), sr = oracle::random_tensor({rows, t}, rng);
    Tensor mapped = sr.clone();
    for (std::size_t r = 0; r < rows; ++r) {
      const double a = rng.uniform(0.01, 100.0), b = rng.uniform(-10.0, 10.0);
      for (std::size_t c = 0; c < t; ++c) mapped.mutable_data()[r * t + c] = a * sr.at(r, c) + b;
    }
    CHECK(pcc(gt, mapped) == doctest::Approx(pcc(gt, sr)).epsilon(1e-10));
  }
}

TEST_CASE("reported NMSE and SNR pairs agree") {
  // Rows of the reference hyperparameter sweep (64-channel recordings): mean
  // NMSE and mean SNR in dB, both rounded to the printed precision.
  const std::pair<double, double> rows[] = {{0.188, 7.254}, {0.189, 7.241}, {0.188, 7.263}, {0.189, 7.245},
                                            {0.189, 7.225}, {0.188, 7.262}, {0.187, 7.283}, {0.187, 7.289},
                                            {0.186, 7.295}, {0.188, 7.266}, {0.187, 7.281}};
  for (const auto& [n, s] : rows) CHECK(std::abs(snr_from_nmse(n) - s) < 0.05);
  CHECK(snr_from_nmse(0.188) == doctest::Approx(7.258).epsilon(1e-4));
  CHECK(snr_from_nmse(1.0) == 0.0);
}
