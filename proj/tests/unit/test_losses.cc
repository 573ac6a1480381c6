#include <cmath>
#include <numeric>

#include "doctest.h"

#include "cola/errors.h"
#include "cola/losses.h"
#include "cola/ops.h"
#include "support/oracles.h"

using cola::Rng;
using cola::Tensor2;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Direct evaluation in extended precision.
long double nce_reference(const std::vector<double>& q, const std::vector<double>& p,
                          const Tensor2& negs, double tau) {
  auto unit = [](std::span<const double> v) {
    long double n = 0;
    for (double x : v) n += static_cast<long double>(x) * x;
    n = std::sqrt(n);
    std::vector<long double> out;
    for (double x : v) out.push_back(x / n);
    return out;
  };
  auto dot = [](const std::vector<long double>& a, const std::vector<long double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  const auto uq = unit(q), up = unit(p);
  const long double pos = std::exp(dot(uq, up) / tau);
  long double denom = pos;
  for (std::size_t s = 0; s < negs.rows(); ++s) denom += std::exp(dot(uq, unit(negs.row(s))) / tau);
  return -std::log(pos / denom);
}

}  // namespace

TEST_CASE("top-k mean examples") {
  const Tensor2 col = Tensor2::from_rows({{0.9}, {0.5}, {0.1}, {0.3}});
  CHECK(cola::video_class_scores(col, 2).aggregate[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(cola::video_class_scores(col, 4).aggregate[0] == doctest::Approx(0.45).epsilon(1e-15));
}

TEST_CASE("top-k mean against a full-sort oracle") {
  Rng rng(1);
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const Tensor2 a = oracle::random_tensor(rng, 6, 3, -2.0, 2.0);
    const std::size_t k = 1 + rng.below(6);
    const auto score = cola::video_class_scores(a, k);
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> col;
      for (std::size_t t = 0; t < 6; ++t) col.push_back(a(t, c));
      std::sort(col.rbegin(), col.rend());
      const double mean = std::accumulate(col.begin(), col.begin() + k, 0.0) / k;
      CHECK(score.aggregate[c] == doctest::Approx(mean).epsilon(1e-14));
    }
    const auto p = cola::softmax(score.aggregate);
    for (std::size_t c = 0; c < 3; ++c) CHECK(score.probabilities[c] == doctest::Approx(p[c]));
  }
}

TEST_CASE("action loss examples") {
  CHECK(cola::action_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cola::action_loss(std::vector<double>{0.25, 0.25, 0.25, 0.25},
                          std::vector<double>{0.5, 0, 0.5, 0}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(cola::action_loss(std::vector<double>{1.0 - 1e-15, 1e-15}, std::vector<double>{1, 0}) < 1e-12);
  std::size_t clamps = 0;
  const double clamped = cola::action_loss(std::vector<double>{0.0, 1.0}, std::vector<double>{1, 0}, &clamps);
  CHECK(clamps == 1);
  CHECK(clamped == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("normalized labels are uniform over positives") {
  const auto y = cola::normalized_labels(std::vector<int>{3, 1}, 4);
  CHECK(y == std::vector<double>{0.0, 0.5, 0.0, 0.5});
}

TEST_CASE("action loss gradient: finite differences, nonzero only at top-k rows") {
  Rng rng(2);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    Tensor2 a = oracle::random_tensor(rng, 7, 3, -2.0, 2.0);
    const std::size_t k = 1 + rng.below(4);
    const auto y = cola::normalized_labels(std::vector<int>{static_cast<int>(rng.below(3))}, 3);
    auto objective = [&] {
      return cola::action_loss(cola::video_class_scores(a, k).probabilities, y);
    };
    const auto score = cola::video_class_scores(a, k);
    const Tensor2 g = cola::action_loss_grad(score, y, 7);
    for (std::size_t t = 0; t < 7; ++t) {
      for (std::size_t c = 0; c < 3; ++c) {
        const bool selected = std::find(score.topk[c].begin(), score.topk[c].end(), t) != score.topk[c].end();
        if (!selected) CHECK(g(t, c) == 0.0);
        CHECK(std::abs(oracle::central_difference(objective, a(t, c), 1e-6) - g(t, c)) < 1e-7);
      }
    }
  }
}

TEST_CASE("NCE closed-form anchors") {
  const double tau = 0.07;
  const std::vector<double> x = {1, 0, 0};
  const Tensor2 orth = Tensor2::from_rows({{0, 1, 0}, {0, 0, 1}});
  CHECK(std::abs(cola::nce_term(x, x, orth, tau) - std::log1p(2.0 * std::exp(-1.0 / tau))) < 1e-9);
  const std::vector<double> q = {1, 0, 0, 0};
  const Tensor2 negs = Tensor2::from_rows({{0, 0, 1, 0}, {0, 0, 0, 1}});
  CHECK(std::abs(cola::nce_term(q, std::vector<double>{0, 1, 0, 0}, negs, tau) - std::log(3.0)) < 1e-9);
}

TEST_CASE("NCE against an extended-precision oracle") {
  Rng rng(3);
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 2 + rng.below(8), S = 1 + rng.below(6);
    const auto q = random_vec(rng, dim), p = random_vec(rng, dim);
    const Tensor2 negs = oracle::random_tensor(rng, S, dim);
    const long double ref = nce_reference(q, p, negs, 0.07);
    const double got = cola::nce_term(q, p, negs, 0.07);
    CHECK(std::abs(got - static_cast<double>(ref)) <= 1e-10 * std::max(1.0, static_cast<double>(std::abs(ref))));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("NCE is scale invariant") {
  Rng rng(4);
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 4, S = 3;
    auto q = random_vec(rng, dim), p = random_vec(rng, dim);
    Tensor2 negs = oracle::random_tensor(rng, S, dim);
    const double base = cola::nce_term(q, p, negs, 0.07);
    const double a = rng.uniform(0.01, 100.0), b = rng.uniform(0.01, 100.0);
    for (double& v : q) v *= a;
    for (double& v : p) v *= b;
    for (std::size_t s = 0; s < S; ++s) {
      const double c = rng.uniform(0.01, 100.0);
      for (double& v : negs.row(s)) v *= c;
    }
    CHECK(std::abs(cola::nce_term(q, p, negs, 0.07) - base) < 1e-10);
  }
}

TEST_CASE("NCE decreases as the positive aligns with the query") {
  const std::vector<double> q = {1, 0};
  const Tensor2 negs = Tensor2::from_rows({{-0.3, 1.0}});
  double prev = 1e300;
  for (int i = 0; i <= 10; ++i) {
    const double angle = 3.0 * (1.0 - i / 10.0);
    const double value = cola::nce_term(q, std::vector<double>{std::cos(angle), std::sin(angle)}, negs, 0.07);
    CHECK(value < prev);
    prev = value;
  }
}

TEST_CASE("NCE gradient matches finite differences; zero norm is rejected") {
  Rng rng(5);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    auto q = random_vec(rng, 5), p = random_vec(rng, 5);
    Tensor2 negs = oracle::random_tensor(rng, 3, 5);
    auto objective = [&] { return cola::nce_term(q, p, negs, 0.5); };
    const auto r = cola::nce_term_with_grad(q, p, negs, 0.5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(oracle::central_difference(objective, q[i], 1e-6) - r.grad_query[i]) < 1e-6);
      CHECK(std::abs(oracle::central_difference(objective, p[i], 1e-6) - r.grad_positive[i]) < 1e-6);
    }
    for (std::size_t i = 0; i < negs.size(); ++i)
      CHECK(std::abs(oracle::central_difference(objective, negs.data()[i], 1e-6) - r.grad_negatives.data()[i]) < 1e-6);
  }
  CHECK_THROWS_AS(cola::nce_term(std::vector<double>{0, 0}, std::vector<double>{1, 0},
                                 Tensor2::from_rows({{0, 1}}), 0.07),
                  cola::DegenerateVectorError);
}

TEST_CASE("SniCo: empty hard sets give zero and the degenerate flag") {
  Rng rng(6);
  const Tensor2 x = oracle::random_tensor(rng, 6, 3, 0.1, 1.0);
  cola::SnippetSets sets;
  sets.easy_action = {0, 1};
  sets.easy_background = {4, 5};
  sets.k_easy = 2;
  const auto r = cola::snico_loss(x, sets, {}, rng);
  CHECK(r.loss == 0.0);
  CHECK(r.degenerate);
}

TEST_CASE("SniCo: one query per side is the sum of two NCE terms") {
  const Tensor2 x = Tensor2::from_rows({{1.0, 0.2}, {0.9, 0.1}, {0.3, 1.0}, {0.1, 0.8}});
  cola::SnippetSets sets;
  sets.hard_action = {1};
  sets.hard_background = {2};
  sets.easy_action = {0};
  sets.easy_background = {3};
  sets.k_easy = 1;
  sets.k_hard = 1;
  Rng rng(7);
  const auto r = cola::snico_loss(x, sets, {.tau = 0.07}, rng);
  const double ha = cola::nce_term(x.row(1), x.row(0), Tensor2::from_rows({{0.1, 0.8}}), 0.07);
  const double hb = cola::nce_term(x.row(2), x.row(3), Tensor2::from_rows({{1.0, 0.2}}), 0.07);
  CHECK(r.hard_action_term == doctest::Approx(ha).epsilon(1e-15));
  CHECK(r.hard_background_term == doctest::Approx(hb).epsilon(1e-15));
  CHECK(r.loss == doctest::Approx(ha + hb).epsilon(1e-15));

  cola::LossConfig only_ha;
  only_ha.refinement = cola::Refinement::kHardActionOnly;
  CHECK(cola::snico_loss(x, sets, only_ha, rng).loss == doctest::Approx(cola::nce_term(x.row(1), x.row(0), Tensor2::from_rows({{0.1, 0.8}}), 0.07)));
}

TEST_CASE("SniCo: negatives are capped by the available easy snippets") {
  Rng rng(8);
  const Tensor2 x = oracle::random_tensor(rng, 10, 4, 0.1, 1.0);
  cola::SnippetSets sets;
  sets.hard_action = {4, 5};
  sets.hard_background = {6};
  sets.easy_action = {0, 1, 2};
  sets.easy_background = {8, 9};
  sets.k_easy = 3;
  cola::LossConfig config;
  config.negatives = 0;
  CHECK(cola::snico_loss(x, sets, config, rng).negatives_used == 3);
  config.negatives = 1;
  CHECK(cola::snico_loss(x, sets, config, rng).negatives_used == 1);
}

TEST_CASE("SniCo: zero-norm rows are skipped and counted") {
  Tensor2 x = Tensor2::from_rows({{1, 0}, {0, 0}, {0, 1}, {0.5, 0.5}});
  cola::SnippetSets sets;
  sets.hard_action = {1, 3};
  sets.easy_action = {0};
  sets.easy_background = {2};
  sets.k_easy = 1;
  Rng rng(9);
  const auto r = cola::snico_loss(x, sets, {}, rng);
  CHECK(r.skipped_pairs == 1);
  CHECK(r.hard_action_term == doctest::Approx(cola::nce_term(x.row(3), x.row(0), Tensor2::from_rows({{0, 1}}), 0.07)));
}

TEST_CASE("SniCo: gradient descent on a toy instance lowers the loss") {
  // Two clusters plus one hard point on each side.
  Tensor2 x = Tensor2::from_rows({{1.0, 0.1}, {0.9, 0.2}, {0.1, 1.0}, {0.2, 0.9}, {0.5, 0.6}, {0.6, 0.5}});
  cola::SnippetSets sets;
  sets.easy_action = {0, 1};
  sets.easy_background = {2, 3};
  sets.hard_action = {4};
  sets.hard_background = {5};
  sets.k_easy = 2;
  sets.k_hard = 1;
  cola::LossConfig config;
  auto loss_at = [&] {
    Rng rng(1);
    return cola::snico_loss(x, sets, config, rng);
  };
  const double start = loss_at().loss;
  double prev = start;
  for (int step = 0; step < 50; ++step) {
    const auto r = loss_at();
    x.add_scaled(r.grad_embedded, -0.01);
    const double now = loss_at().loss;
    CHECK(now <= prev + 1e-12);
    prev = now;
  }
  CHECK(prev < 0.5 * start);
}

TEST_CASE("total loss") {
  CHECK(cola::total_loss(2.0, 3.0, 0.01) == doctest::Approx(2.03).epsilon(1e-15));
  CHECK(cola::total_loss(1.7, 5.0, 0.0) == 1.7);
  CHECK(cola::total_loss(1.7, 0.0, 0.01) == 1.7);
}
