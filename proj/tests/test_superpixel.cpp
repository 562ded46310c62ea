#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcases.hpp"
#include "spgraph/errors.hpp"
#include "spgraph/nn/gradcheck.hpp"
#include "spgraph/nn/ops.hpp"
#include "spgraph/superpixel.hpp"
#include "spgraph/superpixel_net.hpp"
#include "spgraph/synth.hpp"
#include "test_util.hpp"

using namespace spgraph;
using nn::Tensor;

namespace {

std::vector<int> valid_ids(const Neighborhood& nb) {
  std::vector<int> out;
  for (int k = 0; k < kCandidates; ++k)
    if (nb.valid[static_cast<size_t>(k)]) out.push_back(nb.ids[static_cast<size_t>(k)]);
  std::sort(out.begin(), out.end());
  return out;
}

// Hard association: pixel p belongs to the candidate slot holding owner[p].
Tensor<double> hard_q(const CandidateTable& table, const std::vector<int>& owner) {
  const size_t plane = static_cast<size_t>(table.grid.width) * table.grid.height;
  std::vector<double> q(kCandidates * plane, 0.0);
  for (size_t p = 0; p < plane; ++p)
    for (int k = 0; k < kCandidates; ++k)
      if (table.at(k, p) == owner[p]) q[static_cast<size_t>(k) * plane + p] = 1.0;
  return Tensor<double>::from({kCandidates, table.grid.height, table.grid.width}, std::move(q));
}

SuperpixelConfig tiny_config() {
  SuperpixelConfig c;
  c.cell = 4;
  c.levels = 2;
  c.base_width = 4;
  c.feat_channels = 4;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("neighborhood ids") {
  const CellGrid grid(64, 64, 16);
  CHECK(valid_ids(neighborhood(35, 20, grid)) == std::vector<int>{1, 2, 3, 5, 6, 7, 9, 10, 11});
  const auto corner = neighborhood(0, 0, grid);
  CHECK(valid_ids(corner) == std::vector<int>{0, 1, 4, 5});
  CHECK(std::count(corner.valid.begin(), corner.valid.end(), false) == 5);
  CHECK(corner.ids[0] == -1);
  CHECK(valid_ids(neighborhood(8, 8, CellGrid(16, 16, 16))) == std::vector<int>{0});
}

TEST_CASE("aggregate by hand") {
  // 1x2 image, a single cell: two pixels with Q 1 and 0.5 on superpixel 0.
  const CellGrid grid(2, 1, 2);
  const CandidateTable table(grid);
  std::vector<double> q(kCandidates * 2, 0.0);
  const size_t centre = 4;
  q[centre * 2 + 0] = 1.0;
  q[centre * 2 + 1] = 0.5;
  const auto qt = Tensor<double>::from({kCandidates, 1, 2}, q);
  const auto v = Tensor<double>::from({2, 1, 2}, {1.0, 0.0, 0.0, 1.0});
  const auto h = aggregate(v, qt, table);
  CHECK(superpixel_mass<double>(qt.data(), table)[0] == doctest::Approx(1.5));
  CHECK(h.data()[0] == doctest::Approx(2.0 / 3.0));
  CHECK(h.data()[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("disperse with uniform corner association") {
  const CellGrid grid(32, 32, 16);
  const CandidateTable table(grid);
  const size_t plane = 32 * 32;
  std::vector<double> q(kCandidates * plane, 0.0);
  for (size_t p = 0; p < plane; ++p)
    for (int k = 0; k < kCandidates; ++k)
      if (table.at(k, p) >= 0) q[static_cast<size_t>(k) * plane + p] = 0.25;
  const auto qt = Tensor<double>::from({kCandidates, 32, 32}, q);
  const auto h = Tensor<double>::from({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  const auto rec = disperse(h, qt, table);
  CHECK(rec.data()[0] == doctest::Approx(0.5));
  CHECK(rec.data()[plane] == doctest::Approx(0.5));
}

TEST_CASE("aggregate and disperse round trip under hard association") {
  std::mt19937_64 rng(4);
  const CellGrid grid(48, 32, 8);
  const CandidateTable table(grid);
  const size_t plane = 48 * 32;
  // Each pixel picks a random valid candidate; values are constant per owner.
  std::vector<int> owner(plane);
  for (size_t p = 0; p < plane; ++p) {
    std::vector<int> ids;
    for (int k = 0; k < kCandidates; ++k)
      if (table.at(k, p) >= 0) ids.push_back(table.at(k, p));
    owner[p] = ids[std::uniform_int_distribution<size_t>(0, ids.size() - 1)(rng)];
  }
  std::vector<double> per_sp(static_cast<size_t>(grid.count()) * 3);
  // Multiples of 1/8 keep the weighted means exact in floating point.
  for (double& x : per_sp) x = static_cast<double>(std::uniform_int_distribution<int>(-16, 16)(rng)) / 8.0;
  std::vector<double> v(3 * plane);
  for (int c = 0; c < 3; ++c)
    for (size_t p = 0; p < plane; ++p) v[c * plane + p] = per_sp[static_cast<size_t>(owner[p]) * 3 + c];
  const auto vt = Tensor<double>::from({3, 32, 48}, v);
  const auto qt = hard_q(table, owner);
  const auto h = aggregate(vt, qt, table);
  const auto mass = superpixel_mass<double>(qt.data(), table);
  for (int n = 0; n < grid.count(); ++n) {
    if (mass[static_cast<size_t>(n)] < kEmptyMass) continue;
    for (int c = 0; c < 3; ++c) CHECK(h.data()[static_cast<size_t>(n) * 3 + c] == per_sp[static_cast<size_t>(n) * 3 + c]);
  }
  const auto rec = disperse(h, qt, table);
  for (size_t i = 0; i < v.size(); ++i) CHECK(rec.data()[i] == v[i]);
}

TEST_CASE("empty superpixel falls back to its cell-centre pixel") {
  const CellGrid grid(8, 4, 4);
  const CandidateTable table(grid);
  // Every pixel belongs to superpixel 0, so superpixel 1 is empty.
  const auto qt = hard_q(table, std::vector<int>(32, 0));
  std::vector<double> v(32);
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto h = aggregate(Tensor<double>::from({1, 4, 8}, v), qt, table);
  // Centre of cell 1 is pixel (6, 2).
  CHECK(h.data()[1] == 2 * 8 + 6);
}

TEST_CASE("positions") {
  const CellGrid grid(8, 8, 4);
  const CandidateTable table(grid);
  std::vector<int> owner(64);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) owner[static_cast<size_t>(y * 8 + x)] = grid.cell_of(x, y);
  // Superpixel 0 keeps only the 2x2 block at the origin; the rest of cell 0
  // goes to superpixel 1.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (x >= 2 || y >= 2) owner[static_cast<size_t>(y * 8 + x)] = 1;
  const auto pos = positions(hard_q(table, owner), table);
  // Pixel (x, y) sits at (x/g, y/g); the block's mean pixel is (0.5, 0.5).
  CHECK(pos.centroids.data()[0] == doctest::Approx(0.5 / 4.0));
  CHECK(pos.centroids.data()[1] == doctest::Approx(0.5 / 4.0));

  // Uniform association on a 3x3 grid of 3 px cells is symmetric about pixel (4, 4).
  const CellGrid big(9, 9, 3);
  const CandidateTable bt(big);
  const size_t plane = 81;
  std::vector<double> q(kCandidates * plane, 0.0);
  for (size_t p = 0; p < plane; ++p) {
    int valid = 0;
    for (int k = 0; k < kCandidates; ++k) valid += bt.at(k, p) >= 0;
    for (int k = 0; k < kCandidates; ++k)
      if (bt.at(k, p) >= 0) q[static_cast<size_t>(k) * plane + p] = 1.0 / valid;
  }
  const auto pp = positions(Tensor<double>::from({kCandidates, 9, 9}, q), bt);
  const size_t p = 4 * 9 + 4;
  CHECK(pp.reconstructed.data()[p] == doctest::Approx(4.0 / 3.0));
  CHECK(pp.reconstructed.data()[plane + p] == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("superpixel losses") {
  const auto h = Tensor<double>::from({2, 1, 2}, {1, 0, 0, 1});
  const auto p = Tensor<double>::from({2, 1, 2}, {0.1, 0.2, 0.3, 0.4});
  CHECK(loss_superpixel(h, h, p, p, 0.003).item() == doctest::Approx(0.0).epsilon(1e-5));
  const auto rec = Tensor<double>::from({2, 1, 2}, {0.8, 0.3, 0.2, 0.7});
  const auto p2 = Tensor<double>::from({2, 1, 2}, {0.1, 0.2, 0.3, 1.4});
  const double ce = -(std::log(0.8) + std::log(0.7)) / 2;
  CHECK(loss_superpixel(h, rec, p, p2, 0.0).item() == doctest::Approx(ce));
  CHECK(loss_superpixel(h, rec, p, p2, 0.5).item() == doctest::Approx(ce + 0.5 * 0.5));
  const auto logits = Tensor<double>::from({2, 1, 2}, {0, 0, 0, 0});
  CHECK(loss_semantic(h, logits).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("loss gradients over 10 seeds") {
  for (const auto& c : testutil::loss_grad_cases()) {
    if (c.name == "loss_g") continue;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      const auto report = c.run(seed);
      INFO(c.name << " seed " << seed << " err " << report.max_rel_error);
      CHECK(report.pass);
    }
  }
}

TEST_CASE("hard assignment ties and one-hot") {
  const CellGrid grid(64, 64, 16);
  const CandidateTable table(grid);
  const size_t plane = 64 * 64;
  std::vector<double> q(kCandidates * plane, 1.0 / 9.0);
  const auto m = hard_assign<double>(q, table);
  CHECK(m.at(20, 20) == 0);
  const size_t p = 20 * 64 + 20;
  for (int k = 0; k < kCandidates; ++k) q[static_cast<size_t>(k) * plane + p] = k == 6 ? 1.0 : 0.0;
  CHECK(hard_assign<double>(q, table).at(20, 20) == table.at(6, p));
}

TEST_CASE("hard assignment stays inside the candidate set") {
  std::mt19937_64 rng(8);
  const CellGrid grid(40, 24, 8);
  const CandidateTable table(grid);
  const size_t plane = 40 * 24;
  for (int t = 0; t < 5; ++t) {
    const auto q = testutil::random_association(rng, table.ids, plane);
    const auto m = hard_assign<double>(q, table);
    for (size_t p = 0; p < plane; ++p) {
      bool found = false;
      for (int k = 0; k < kCandidates; ++k) found |= table.at(k, p) == m.data[p];
      CHECK(found);
    }
  }
}

TEST_CASE("untrained network gives uniform association over valid candidates") {
  SuperpixelConfig c;
  c.seed = 3;
  const SuperpixelNet<float> net(c);
  const auto rgb = rgb_tensor<float>(synth_scene(64, 1, 2).tile.rgb);
  const auto out = net.forward(rgb);
  const size_t plane = 64 * 64;
  const auto q = out.q.data();
  const size_t interior = 20 * 64 + 20, corner = 0;
  for (int k = 0; k < kCandidates; ++k) CHECK(q[k * plane + interior] == doctest::Approx(1.0 / 9.0).epsilon(1e-6));
  double corner_sum = 0;
  for (int k = 0; k < kCandidates; ++k) {
    const float v = q[k * plane + corner];
    CHECK((v == 0.0f || std::abs(v - 0.25f) < 1e-6f));
    corner_sum += v;
  }
  CHECK(corner_sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("association sums to one and the forward pass is deterministic") {
  SuperpixelConfig c = tiny_config();
  c.zero_init_heads = false;
  const SuperpixelNet<float> a(c), b(c);
  const auto rgb = rgb_tensor<float>(synth_scene(64, 2, 9).tile.rgb);
  const auto oa = a.forward(rgb), ob = b.forward(rgb);
  CHECK(std::equal(oa.q.data().begin(), oa.q.data().end(), ob.q.data().begin()));
  CHECK(std::equal(oa.features.data().begin(), oa.features.data().end(), ob.features.data().begin()));
  const CandidateTable table(CellGrid(64, 64, c.cell));
  const size_t plane = 64 * 64;
  for (size_t p = 0; p < plane; ++p) {
    double s = 0;
    for (int k = 0; k < kCandidates; ++k) {
      const float v = oa.q.data()[k * plane + p];
      if (table.at(k, p) < 0) CHECK(v == 0.0f);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("masking candidates keeps the order of the rest") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    auto logits = testutil::random_tensor<double>(rng, {kCandidates}, -3, 3, false);
    const auto full = nn::softmax(logits, 0);
    std::vector<double> masked(logits.data().begin(), logits.data().end());
    const int drop = static_cast<int>(rng() % kCandidates);
    masked[static_cast<size_t>(drop)] = -1e30;
    const auto part = nn::softmax(Tensor<double>::from({kCandidates}, masked), 0);
    for (int i = 0; i < kCandidates; ++i)
      for (int j = 0; j < kCandidates; ++j) {
        if (i == drop || j == drop) continue;
        CHECK((full.data()[i] < full.data()[j]) == (part.data()[i] < part.data()[j]));
      }
    CHECK(part.data()[drop] == 0.0);
  }
}

TEST_CASE("indivisible dimensions are rejected") {
  const SuperpixelNet<float> net(SuperpixelConfig{});
  CHECK_THROWS_AS(net.forward(Tensor<float>::zeros({3, 60, 64})), InvalidArgument);
}

TEST_CASE("full-network loss gradient on a 12x12 tile") {
  SuperpixelConfig c = tiny_config();
  c.zero_init_heads = false;
  SuperpixelNet<double> net(c);
  const auto tile = synth_scene(64, 1, 4).tile;
  Raster<float> crop(12, 12, 3);
  Mask mask(12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      for (int ch = 0; ch < 3; ++ch) crop.at(x, y, ch) = tile.rgb.at(x + 20, y + 20, ch);
      mask.at(x, y) = static_cast<uint8_t>((x + y) % 5 < 2);
    }
  const auto rgb = rgb_tensor<double>(crop);
  const auto report =
      nn::grad_check([&] { return superpixel_losses(net, net.forward(rgb), mask).total; }, net.params());
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.pass);
}

TEST_CASE("superpixel config json round trip") {
  SuperpixelConfig c = tiny_config();
  c.ablate_semantic = true;
  c.lambda = 0.01;
  const auto back = SuperpixelConfig::from_json(c.to_json());
  CHECK(back.cell == 4);
  CHECK(back.ablate_semantic);
  CHECK(back.lambda == 0.01);
}
