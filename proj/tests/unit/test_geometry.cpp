#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "adqsim/errors.hpp"
#include "adqsim/geometry.hpp"
#include "adqsim/rng.hpp"
#include "support/writhe_oracle.hpp"

using namespace adq;
using geom::CapsuleChain;
using geom::Vec3;

namespace {

CapsuleChain straight_chain(int n, double spacing = 0.02) {
  CapsuleChain c;
  for (int i = 0; i < n; ++i) c.vertices.emplace_back(i * spacing, 0.0, 0.0);
  c.rest_lengths.assign(n - 1, spacing);
  c.pin_index = 0;
  c.pull_index = n - 1;
  return c;
}

}  // namespace

TEST_CASE("writhe of planar curves is zero") {
  CapsuleChain c;
  Rng rng(7);
  for (int i = 0; i < 24; ++i)
    c.vertices.emplace_back(0.05 * i, rng.uniform(-0.3, 0.3), 0.0);
  c.rest_lengths.assign(23, 1.0);
  c.pin_index = 0;
  c.pull_index = 23;
  CHECK(std::abs(geom::writhe(c)) < 1e-9);
}

TEST_CASE("writhe is invariant under rigid motion") {
  const CapsuleChain c = geom::make_knot(geom::KnotKind::kLooseOverhand, 48, 0.5, 3);
  const double w0 = geom::writhe(c);

  CapsuleChain moved = c;
  const double yaw = 0.83, pitch = -0.41;
  Eigen::Matrix3d rz, ry;
  rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
  ry << std::cos(pitch), 0, std::sin(pitch), 0, 1, 0, -std::sin(pitch), 0,
      std::cos(pitch);
  for (Vec3& v : moved.vertices) v = rz * ry * v + Vec3(1.5, -2.0, 0.7);
  CHECK(std::abs(geom::writhe(moved) - w0) < 1e-9);
}

TEST_CASE("per-pair solid angle matches dense quadrature") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec3 a0 = rng.unit_vector() * rng.uniform(0.2, 1.0);
    const Vec3 a1 = a0 + rng.unit_vector() * rng.uniform(0.1, 0.5);
    const Vec3 b0 = rng.unit_vector() * rng.uniform(0.2, 1.0) + Vec3(1.5, 0, 0);
    const Vec3 b1 = b0 + rng.unit_vector() * rng.uniform(0.1, 0.5);
    const double exact = geom::segment_pair_writhe(a0, a1, b0, b1);
    const double quad = testsupport::quadrature_pair_writhe(a0, a1, b0, b1);
    CHECK(std::abs(exact - quad) < 1e-6 * (std::abs(quad) + 1e-6));
  }
}

TEST_CASE("pair kernel is symmetric in segment order") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 a0 = rng.unit_vector(), a1 = a0 + rng.unit_vector() * 0.4;
    const Vec3 b0 = rng.unit_vector() + Vec3(2, 0, 0),
               b1 = b0 + rng.unit_vector() * 0.4;
    CHECK(std::abs(geom::segment_pair_writhe(a0, a1, b0, b1) -
                   geom::segment_pair_writhe(b0, b1, a0, a1)) < 1e-12);
  }
}

TEST_CASE("trefoil writhe matches the quadrature oracle within 2 percent") {
  const CapsuleChain c = geom::make_knot(geom::KnotKind::kLooseOverhand, 64, 0.5, 5);
  const double exact = geom::writhe(c);
  const double oracle = testsupport::quadrature_writhe(c.vertices, 14);
  CHECK(std::abs(exact) > 0.5);  // an overhand curve is genuinely writhed
  CHECK(std::abs(exact - oracle) < 0.02 * std::abs(oracle));
}

TEST_CASE("mirror reflection flips the writhe sign") {
  const CapsuleChain c = geom::make_knot(geom::KnotKind::kLooseOverhand, 48, 0.5, 9);
  CHECK(std::abs(geom::writhe(geom::mirrored(c)) + geom::writhe(c)) < 1e-9);
}

TEST_CASE("edge subdivision changes trefoil writhe by less than 1 percent") {
  const CapsuleChain c = geom::make_knot(geom::KnotKind::kLooseOverhand, 64, 0.5, 5);
  std::vector<Vec3> refined;
  for (size_t i = 0; i + 1 < c.vertices.size(); ++i) {
    refined.push_back(c.vertices[i]);
    refined.push_back(0.5 * (c.vertices[i] + c.vertices[i + 1]));
  }
  refined.push_back(c.vertices.back());
  const double w = geom::polyline_writhe(c.vertices);
  const double w2 = geom::polyline_writhe(refined);
  CHECK(std::abs(w - w2) < 0.01 * std::abs(w));
}

TEST_CASE("writhe rejects non-finite vertices") {
  CapsuleChain c = straight_chain(10);
  c.vertices[4].y() = std::nan("");
  CHECK_THROWS_AS(geom::writhe(c), ContractError);
}

TEST_CASE("free end length") {
  CapsuleChain c = straight_chain(12, 0.03);
  c.pull_index = 10;  // pull side is the high-index end, tip is vertex 11

  SUBCASE("empty contact set means no entanglement") {
    CHECK(geom::free_end_length(c, {}) == 0.0);
  }
  SUBCASE("contact adjacent to the tip spans one edge") {
    // edge 9 covers vertices 9 and 10; nearest involved vertex to tip 11 is 10
    const std::vector<geom::EdgePair> contacts = {{2, 9}};
    CHECK(std::abs(geom::free_end_length(c, contacts) - 0.03) < 1e-12);
  }
  SUBCASE("arc length to a known contact vertex matches direct summation") {
    const std::vector<geom::EdgePair> contacts = {{3, 6}};
    // nearest involved vertex to the tip is 7 (edge 6 covers 6 and 7)
    double expected = 0.0;
    for (int e = 7; e <= 10; ++e) expected += c.rest_lengths[e];
    CHECK(std::abs(geom::free_end_length(c, contacts) - expected) < 1e-12);
  }
  SUBCASE("closer contact to the tip gives shorter length") {
    double prev = 1e9;
    for (int e = 2; e <= 9; ++e) {
      const double len = geom::free_end_length(c, {{0, e}});
      CHECK(len <= prev);
      prev = len;
    }
  }
  SUBCASE("pull side selects the tip") {
    CapsuleChain low = c;
    low.pull_index = 2;
    low.pin_index = 10;
    const std::vector<geom::EdgePair> contacts = {{5, 8}};
    // tip is vertex 0; nearest involved vertex is 5
    CHECK(std::abs(geom::free_end_length(low, contacts) - 5 * 0.03) < 1e-12);
  }
}

TEST_CASE("make_knot determinism and uniform resampling") {
  const auto a = geom::make_knot(geom::KnotKind::kLooseOverhand, 48, 0.5, 1);
  const auto b = geom::make_knot(geom::KnotKind::kLooseOverhand, 48, 0.5, 1);
  REQUIRE(a.vertices.size() == b.vertices.size());
  for (size_t i = 0; i < a.vertices.size(); ++i)
    CHECK(a.vertices[i] == b.vertices[i]);  // bitwise identical

  const double rest = a.rest_lengths.front();
  for (int e = 0; e < a.edge_count(); ++e)
    CHECK(std::abs(a.edge_length(e) - rest) < 1e-6);
}

TEST_CASE("double knot carries more writhe than a single") {
  const auto single = geom::make_knot(geom::KnotKind::kLooseOverhand, 64, 0.5, 2);
  const auto dbl = geom::make_knot(geom::KnotKind::kLooseDouble, 64, 0.5, 2);
  CHECK(std::abs(geom::writhe(dbl)) > std::abs(geom::writhe(single)));
}

TEST_CASE("make_knot rejects too few vertices") {
  CHECK_THROWS_AS(geom::make_knot(geom::KnotKind::kLooseOverhand, 23, 0.5, 0),
                  ConfigError);
  CHECK_THROWS_AS(geom::make_knot(geom::KnotKind::kLooseDouble, 39, 0.5, 0),
                  ConfigError);
  CHECK_NOTHROW(geom::make_knot(geom::KnotKind::kLooseOverhand, 24, 0.5, 0));
}

TEST_CASE("chain JSON round trip") {
  const auto a = geom::make_knot(geom::KnotKind::kTightOverhand, 32, 0.4, 7);
  nlohmann::json j;
  geom::to_json(j, a);
  CapsuleChain back;
  geom::from_json(j, back);
  REQUIRE(back.vertices.size() == a.vertices.size());
  for (size_t i = 0; i < a.vertices.size(); ++i)
    CHECK((back.vertices[i] - a.vertices[i]).norm() == 0.0);
  CHECK(back.pin_index == a.pin_index);
  CHECK(back.pull_index == a.pull_index);
  CHECK(back.radius == a.radius);
}

TEST_CASE("chain validation catches broken invariants") {
  CapsuleChain c = straight_chain(10);
  SUBCASE("pin equals pull") {
    c.pull_index = c.pin_index;
    CHECK_THROWS_AS(c.validate(), ContractError);
  }
  SUBCASE("radius must be positive") {
    c.radius = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
  }
  SUBCASE("too few vertices") {
    CapsuleChain tiny = straight_chain(7);
    CHECK_THROWS_AS(tiny.validate(), ContractError);
  }
}
