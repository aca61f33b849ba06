#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "dermamap/nn/optim.hpp"
#include "dermamap/nn/tensor.hpp"
#include "dermamap/rng.hpp"

using namespace dermamap;
using nn::Tape;
using nn::Tensor;

namespace {

using Builder =
    std::function<Tape<double>::Id(Tape<double>&, const std::vector<Tape<double>::Id>&)>;

// Central finite differences against the tape's analytic gradients.
void check_gradients(const Builder& build, std::vector<Tensor<double>> inputs,
                     double h = 1e-6, double tol = 1e-6) {
  Tape<double> tape(true);
  std::vector<Tape<double>::Id> ids;
  for (const auto& t : inputs) ids.push_back(tape.leaf(t, true));
  const auto root = build(tape, ids);
  REQUIRE(tape.val(root).numel() == 1);
  tape.backward(root);

  for (size_t p = 0; p < inputs.size(); ++p) {
    const auto& analytic = tape.grad(ids[p]);
    for (int64_t i = 0; i < inputs[p].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor<double>> shifted = inputs;
        shifted[p].v[size_t(i)] += delta;
        Tape<double> t2(false);
        std::vector<Tape<double>::Id> ids2;
        for (const auto& t : shifted) ids2.push_back(t2.leaf(t, false));
        return t2.val(build(t2, ids2)).v[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double a = analytic.v.empty() ? 0.0 : analytic.v[size_t(i)];
      const double scale = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      CHECK_MESSAGE(std::fabs(a - numeric) / scale < tol,
                    "param ", p, " elem ", i, ": analytic ", a, " numeric ",
                    numeric);
    }
  }
}

Tensor<double> rand_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.v) v = rng.normal(0.0, scale);
  return t;
}

}  // namespace

TEST_CASE("gradcheck: dense ops") {
  Rng rng(1);
  SUBCASE("matmul + bias") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mean_all(t.add_bias(t.matmul(in[0], in[1]), in[2]));
        },
        {rand_tensor({3, 4}, rng), rand_tensor({4, 5}, rng), rand_tensor({5}, rng)});
  }
  SUBCASE("activations") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mean_all(t.sigmoid(t.gelu(in[0])));
        },
        {rand_tensor({4, 6}, rng)});
  }
  SUBCASE("relu away from the kink") {
    Tensor<double> x({3, 3});
    double vals[9] = {-1.3, 0.7, 2.1, -0.4, 0.9, -2.2, 1.5, 0.3, -0.8};
    for (int i = 0; i < 9; ++i) x.v[size_t(i)] = vals[i];
    check_gradients(
        [](Tape<double>& t, const auto& in) { return t.mean_all(t.relu(in[0])); },
        {x});
  }
  SUBCASE("layernorm") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mean_all(t.layernorm(in[0], in[1], in[2]));
        },
        {rand_tensor({5, 8}, rng), rand_tensor({8}, rng, 0.5),
         rand_tensor({8}, rng, 0.5)},
        1e-6, 5e-6);
  }
  SUBCASE("softmax") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          // Weighted sum makes the gradient non-trivial.
          auto p = t.softmax(in[0]);
          return t.mean_all(t.mul(p, in[1]));
        },
        {rand_tensor({4, 5}, rng), rand_tensor({4, 5}, rng)});
  }
}

TEST_CASE("gradcheck: attention-shaped ops") {
  Rng rng(2);
  SUBCASE("bmm and bmm_nt") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          const auto s = t.bmm_nt(in[0], in[1], 0.5);
          return t.mean_all(t.bmm(s, in[2]));
        },
        {rand_tensor({2, 3, 4}, rng), rand_tensor({2, 5, 4}, rng),
         rand_tensor({2, 5, 4}, rng)});
  }
  SUBCASE("split/merge heads") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          const int B = 2, T = 3, H = 2, dh = 2;
          auto q = t.split_heads(in[0], 0, B, T, H, dh);
          auto k = t.split_heads(in[0], 1, B, T, H, dh);
          auto v = t.split_heads(in[0], 2, B, T, H, dh);
          auto att = t.softmax(t.bmm_nt(q, k, 1.0 / std::sqrt(2.0)));
          auto ctx = t.merge_heads(t.bmm(att, v), B, T, H, dh);
          return t.mean_all(ctx);
        },
        {rand_tensor({6, 12}, rng)});
  }
  SUBCASE("token concat and slice") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          auto cat = t.concat_tokens(in[0], in[1]);
          return t.mean_all(t.slice_tokens(cat, 1, 4));
        },
        {rand_tensor({2, 2, 3}, rng), rand_tensor({2, 3, 3}, rng)});
  }
  SUBCASE("broadcast batch") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mean_all(t.broadcast_batch(in[0], 3));
        },
        {rand_tensor({2, 4}, rng)});
  }
}

TEST_CASE("gradcheck: conv and pooling") {
  Rng rng(3);
  SUBCASE("conv3x3 with bias") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mean_all(t.add_channel_bias(t.conv3x3(in[0], in[1]), in[2]));
        },
        {rand_tensor({2, 3, 6, 6}, rng), rand_tensor({4, 3, 3, 3}, rng),
         rand_tensor({4}, rng)},
        1e-6, 5e-6);
  }
  SUBCASE("avgpool") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mean_all(t.avgpool2(in[0]));
        },
        {rand_tensor({2, 3, 4, 4}, rng)});
  }
  SUBCASE("pool reductions over points") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          auto pooled = t.concat_features(t.mean_axis1(in[0]), t.max_axis1(in[0]));
          return t.mean_all(pooled);
        },
        {rand_tensor({2, 5, 3}, rng)});
  }
}

TEST_CASE("gradcheck: losses") {
  Rng rng(4);
  SUBCASE("mse") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          return t.mse_mean(in[0], {0.3, -0.2, 0.8, 0.1});
        },
        {rand_tensor({4}, rng)});
  }
  SUBCASE("normalized gram + infonce") {
    check_gradients(
        [](Tape<double>& t, const auto& in) {
          const auto zn = t.l2_normalize_rows(in[0]);
          const auto s = t.gram(zn);
          return t.mean_all(t.info_nce(s, {1, 0, 3, 2}, 0.5));
        },
        {rand_tensor({4, 6}, rng)},
        1e-6, 5e-6);
  }
}

TEST_CASE("infonce contract checks") {
  Tape<double> t(true);
  auto z = t.leaf(Tensor<double>({2, 3}, 1.0), true);
  auto s = t.gram(t.l2_normalize_rows(z));
  CHECK_THROWS_AS(t.info_nce(s, {1}, 0.5), Error);        // length mismatch
  CHECK_THROWS_AS(t.info_nce(s, {0, 1}, 0.5), Error);     // self pair
  CHECK_THROWS_AS(t.info_nce(s, {1, 0}, 0.0), Error);     // bad temperature
  CHECK_NOTHROW(t.info_nce(s, {1, 0}, 0.5));
  Tensor<double> zero({2, 2});
  auto zz = t.leaf(zero, false);
  CHECK_THROWS_AS(t.l2_normalize_rows(zz), Error);        // zero-norm latent
}

TEST_CASE("adam decreases a quadratic and skips frozen params") {
  nn::ParamStore<float> store;
  Tensor<float> w0({4}, 2.0f);
  const int wi = store.add("w", w0, true);
  const int fi = store.add("frozen", Tensor<float>({2}, 3.0f), false);
  nn::Adam<float> adam;
  const auto frozen_before = store.at(fi).value.v;
  double first_loss = -1.0, last_loss = -1.0;
  for (int step = 0; step < 200; ++step) {
    auto& p = store.at(wi);
    double loss = 0.0;
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      loss += 0.5 * double(p.value.v[size_t(i)]) * double(p.value.v[size_t(i)]);
      p.grad.v[size_t(i)] = p.value.v[size_t(i)];
    }
    if (first_loss < 0) first_loss = loss;
    last_loss = loss;
    adam.step(store, 0.05);
    store.zero_grads();
  }
  CHECK(last_loss < 0.01 * first_loss);
  CHECK(store.at(fi).value.v == frozen_before);
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(nn::cosine_lr(1e-3, 0, 50) == doctest::Approx(1e-3));
  CHECK(nn::cosine_lr(1e-3, 50, 50) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nn::cosine_lr(1e-3, 25, 50) == doctest::Approx(5e-4));
}

TEST_CASE("tape determinism across runs") {
  Rng rng(9);
  const auto x = rand_tensor({8, 16}, rng);
  const auto w = rand_tensor({16, 16}, rng);
  auto run = [&]() {
    Tape<double> t(true);
    auto xi = t.leaf(x, true);
    auto wi = t.leaf(w, true);
    auto y = t.mean_all(t.gelu(t.matmul(xi, wi)));
    t.backward(y);
    return std::make_pair(t.val(y).v[0], t.grad(wi).v);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
