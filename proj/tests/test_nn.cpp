#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gradcases.hpp"
#include "spgraph/errors.hpp"
#include "spgraph/nn/checkpoint.hpp"
#include "spgraph/nn/gradcheck.hpp"
#include "spgraph/nn/ops.hpp"
#include "spgraph/nn/optim.hpp"
#include "test_util.hpp"

using namespace spgraph;
using nn::Tensor;

TEST_CASE("softmax of equal logits is uniform") {
  auto x = Tensor<double>::full({9}, 0.3);
  auto s = nn::softmax(x, 0);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 9).epsilon(1e-15));
}

TEST_CASE("leaky relu slope") {
  auto y = nn::leaky_relu(Tensor<double>::from({2}, {-1.0, 2.0}), 0.01);
  CHECK(y.data()[0] == doctest::Approx(-0.01));
  CHECK(y.data()[1] == 2.0);
}

TEST_CASE("scatter add into slots") {
  std::vector<int64_t> idx{0, 0, 1};
  auto y = nn::scatter_add_rows(Tensor<double>::from({3}, {1, 2, 3}), idx, 2);
  CHECK(y.data()[0] == 3.0);
  CHECK(y.data()[1] == 3.0);
}

TEST_CASE("shape mismatch is an invalid argument") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 2});
  CHECK_THROWS_AS(nn::add(a, b), InvalidArgument);
  CHECK_THROWS_AS(nn::matmul(a, a), InvalidArgument);
  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(nn::reshape(a, {4}), InvalidArgument);
}

TEST_CASE("grad check of a quadratic is exact") {
  std::mt19937_64 rng(3);
  auto p = testutil::random_tensor(rng, {4, 3});
  auto report = nn::grad_check([&] { return nn::sum(nn::mul(p, p)); }, {{"p", p}});
  CHECK(report.pass);
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad check reports non-finite losses") {
  auto p = Tensor<double>::full({1}, 1.0, true);
  CHECK_THROWS_AS(nn::grad_check([&] { return nn::scale(p, std::numeric_limits<double>::infinity()); }, {{"p", p}}),
                  NumericError);
}

TEST_CASE("every op matches central differences over 20 seeds") {
  for (const auto& c : testutil::op_grad_cases()) {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      const auto report = c.run(seed);
      INFO(c.name << " seed " << seed << " err " << report.max_rel_error);
      CHECK(report.pass);
    }
  }
}

TEST_CASE("no-grad guard builds no graph") {
  auto p = Tensor<double>::full({2}, 1.0, true);
  {
    nn::NoGradGuard guard;
    auto y = nn::mul(p, p);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(nn::mul(p, p).requires_grad());
}

TEST_CASE("adam decreases a quadratic") {
  auto p = Tensor<float>::from({2}, {3.0f, -2.0f}, true);
  nn::Adam adam({{"p", p}}, {0.1f});
  float first = 0, last = 0;
  for (int i = 0; i < 100; ++i) {
    auto loss = nn::sum(nn::mul(p, p));
    loss.backward();
    if (i == 0) first = loss.item();
    last = loss.item();
    adam.step();
  }
  CHECK(last < 0.1f * first);
}

TEST_CASE("checkpoint round trip") {
  const auto path = std::filesystem::temp_directory_path() / "spgraph_test_ckpt.bin";
  auto a = Tensor<float>::from({2, 2}, {1, 2, 3, 4}, true);
  auto b = Tensor<float>::from({3}, {-1, 0.5f, 7}, true);
  nn::save_checkpoint(path, {{"a", a}, {"b", b}}, {{"note", "x"}});
  const auto ck = nn::load_checkpoint(path);
  CHECK(ck.meta.at("note") == "x");
  CHECK(ck.tensors.at("b").values == std::vector<float>{-1, 0.5f, 7});
  CHECK(ck.tensors.at("a").shape == nn::Shape{2, 2});

  auto a2 = Tensor<float>::zeros({2, 2}, true);
  auto b2 = Tensor<float>::zeros({3}, true);
  std::vector<nn::Parameter> params{{"a", a2}, {"b", b2}};
  nn::restore_parameters(ck, params);
  CHECK(std::vector<float>(a2.data().begin(), a2.data().end()) == std::vector<float>{1, 2, 3, 4});

  auto bad = Tensor<float>::zeros({4}, true);
  std::vector<nn::Parameter> wrong{{"a", bad}};
  CHECK_THROWS_AS(nn::restore_parameters(ck, wrong), FormatError);
  CHECK_THROWS_AS(nn::load_checkpoint(path.string() + ".missing"), MissingFile);
  std::filesystem::remove(path);
}
