#include <doctest.h>

#include <cmath>
#include <random>

#include "mscare/kernels.hpp"
#include "mscare/loss.hpp"
#include "test_support.hpp"

using namespace mscare;

namespace {

// Direct scalar evaluation of the generalized Dice formula.
double scalar_gd(const std::vector<std::vector<double>>& g, const std::vector<std::vector<double>>& p,
                 const std::vector<bool>& mask) {
  const double eps = 1e-7;
  double num = 0, den = 0;
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (!mask[l]) continue;
    double sg = 0;
    for (double x : g[l]) sg += x;
    const double w = 1.0 / ((sg + eps) * (sg + eps));
    for (std::size_t i = 0; i < g[l].size(); ++i) {
      num += w * g[l][i] * p[l][i];
      den += w * (g[l][i] + p[l][i]);
    }
  }
  return 1.0 - 2.0 * (num + eps) / (den + eps);
}

std::vector<std::vector<double>> rows(const Tensor<double>& t) {
  std::vector<std::vector<double>> out(t.channels());
  for (int c = 0; c < t.channels(); ++c) out[c].assign(t.channel(c), t.channel(c) + t.channel_size());
  return out;
}

struct Case {
  Tensor<double> gt, prob;
  std::vector<bool> mask;
};

Case random_case(std::mt19937_64& rng) {
  const int nc = 2 + static_cast<int>(rng() % 5);
  const Shape3 s{1 + int(rng() % 4), 1 + int(rng() % 4), 1 + int(rng() % 5)};
  std::vector<uint8_t> cls(voxel_count(s));
  for (auto& c : cls) c = static_cast<uint8_t>(rng() % nc);
  Case k;
  k.gt = one_hot<double>(cls, s, nc);
  k.prob = nn::softmax(test::random_tensor<double>({nc, s[0], s[1], s[2]}, rng, -3, 3));
  k.mask.assign(nc, false);
  k.mask[0] = true;
  for (int c = 1; c < nc; ++c) k.mask[c] = rng() % 2;
  return k;
}

}  // namespace

TEST_CASE("hand example: two channels, four voxels") {
  Tensor<double> gt(2, Shape3{1, 1, 4}), prob(2, Shape3{1, 1, 4});
  const double g1[4] = {1, 1, 0, 0}, p1[4] = {0.8, 0.6, 0.1, 0.2};
  for (int i = 0; i < 4; ++i) {
    gt.channel(1)[i] = g1[i];
    gt.channel(0)[i] = 1 - g1[i];
    prob.channel(1)[i] = p1[i];
    prob.channel(0)[i] = 1 - p1[i];
  }
  // Channel 0: sum g = 2, sum gp = 0.9 + 0.8 = 1.7, sum (g+p) = 2 + 2.3 = 4.3.
  // Channel 1: sum g = 2, sum gp = 1.4, sum (g+p) = 2 + 1.7 = 3.7.
  const double e = 1e-7, w = 1.0 / ((2 + e) * (2 + e));
  const double expected = 1.0 - 2.0 * (w * (1.7 + 1.4) + e) / (w * (4.3 + 3.7) + e);
  CHECK(std::abs(generalized_dice_loss(gt, prob, {true, true}) - expected) <= 1e-9);
  CHECK(std::abs(generalized_dice_loss(gt, prob, {true, true}) - scalar_gd(rows(gt), rows(prob), {true, true})) <=
        1e-9);
}

TEST_CASE("perfect overlap and disjoint foregrounds") {
  std::vector<uint8_t> cls = {0, 1, 1, 2, 0, 2, 1, 0};
  const auto gt = one_hot<double>(cls, {2, 2, 2}, 3);
  CHECK(std::abs(generalized_dice_loss(gt, gt, {true, true, true})) <= 1e-6);
  std::vector<uint8_t> a = {0, 0, 1, 1}, b = {1, 1, 0, 0};
  const auto ga = one_hot<double>(a, {1, 1, 4}, 2), gb = one_hot<double>(b, {1, 1, 4}, 2);
  CHECK(generalized_dice_loss(ga, gb, {true, true}) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("scalar formula oracle on random tensors") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    const Case k = random_case(rng);
    const double a = generalized_dice_loss(k.gt, k.prob, k.mask);
    CHECK(std::abs(a - scalar_gd(rows(k.gt), rows(k.prob), k.mask)) <= 1e-9);
    CHECK(a >= -1e-12);
    CHECK(a <= 1.0 + 1e-12);
  }
}

TEST_CASE("masked loss equals the loss on channel-restricted arrays") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Case k = random_case(rng);
    std::vector<int> keep;
    for (int c = 0; c < k.gt.channels(); ++c)
      if (k.mask[c]) keep.push_back(c);
    Tensor<double> g(static_cast<int>(keep.size()), k.gt.spatial()), p(static_cast<int>(keep.size()), k.gt.spatial());
    for (std::size_t j = 0; j < keep.size(); ++j) {
      std::copy(k.gt.channel(keep[j]), k.gt.channel(keep[j]) + g.channel_size(), g.channel(int(j)));
      std::copy(k.prob.channel(keep[j]), k.prob.channel(keep[j]) + p.channel_size(), p.channel(int(j)));
    }
    const double masked = generalized_dice_loss(k.gt, k.prob, k.mask);
    const double restricted = generalized_dice_loss(g, p, std::vector<bool>(keep.size(), true));
    CHECK(std::abs(masked - restricted) <= 1e-12);
  }
}

TEST_CASE("gradient with respect to probabilities") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    Case k = random_case(rng);
    Tensor<double> d;
    generalized_dice_loss(k.gt, k.prob, k.mask, &d);
    for (int c = 0; c < k.prob.channels(); ++c) {
      for (std::size_t i = 0; i < k.prob.channel_size(); ++i) {
        if (!k.mask[c]) {
          CHECK(d.channel(c)[i] == 0.0);
          continue;
        }
        const double v = k.prob.channel(c)[i];
        const double h = 1e-6;
        k.prob.channel(c)[i] = v + h;
        const double fp = generalized_dice_loss(k.gt, k.prob, k.mask);
        k.prob.channel(c)[i] = v - h;
        const double fm = generalized_dice_loss(k.gt, k.prob, k.mask);
        k.prob.channel(c)[i] = v;
        CHECK(d.channel(c)[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("head term scatters head channels into the class list") {
  std::mt19937_64 rng(12);
  const Shape3 s{2, 3, 2};
  const auto logits = test::random_tensor<double>({4, s[0], s[1], s[2]}, rng, -2, 2);
  std::vector<uint8_t> cls(voxel_count(s));
  const std::vector<int> map = {0, 1, 3, 4};  // G3 stage-2 layout
  for (auto& c : cls) c = static_cast<uint8_t>(map[rng() % 4]);
  const auto gt = one_hot<double>(cls, s, 6);
  const std::vector<bool> avail = {true, true, false, true, true, false};

  // Oracle: softmax over the head, then the loss over the head's own channels.
  const auto p = nn::softmax(logits);
  Tensor<double> g4(4, s);
  for (int c = 0; c < 4; ++c) std::copy(gt.channel(map[c]), gt.channel(map[c]) + g4.channel_size(), g4.channel(c));
  const double expected = generalized_dice_loss(g4, p, {true, true, true, true});

  Tensor<double> d;
  CHECK(std::abs(head_dice_term(logits, map, gt, avail, &d) - expected) <= 1e-12);
  CHECK(d.shape == logits.shape);

  Tensor<double> probe = logits;
  for (std::size_t i = 0; i < probe.size(); i += 5) {
    const double v = probe.data[i], h = 1e-6;
    probe.data[i] = v + h;
    const double fp = head_dice_term<double>(probe, map, gt, avail, nullptr);
    probe.data[i] = v - h;
    const double fm = head_dice_term<double>(probe, map, gt, avail, nullptr);
    probe.data[i] = v;
    CHECK(d.data[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("argument checks") {
  Tensor<double> a(2, Shape3{1, 1, 2}), b(3, Shape3{1, 1, 2});
  CHECK_THROWS_AS(generalized_dice_loss(a, b, {true, true}), Error);
  CHECK_THROWS_AS(generalized_dice_loss(a, a, {false, false}), Error);
  CHECK_THROWS_AS(generalized_dice_loss(a, a, {true}), Error);
}
