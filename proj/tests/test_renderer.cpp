#include "helpers.hpp"

#include "snerf/errors.hpp"
#include "snerf/instrument.hpp"

#include <doctest.h>

using namespace snerf;
using testing::constant_field;
using testing::micro_arch;
using testing::rel_err;

namespace {

RayBatchT<double> manual_rays(double t_near, double t_far, int m = 1) {
  RayBatchT<double> r;
  r.origins = MatrixX<double>::Zero(3, m);
  r.directions = MatrixX<double>::Zero(3, m);
  r.directions.row(2).setConstant(-1.0);
  r.t_near = VectorX<double>::Constant(m, t_near);
  r.t_far = VectorX<double>::Constant(m, t_far);
  for (int i = 0; i < m; ++i) r.pixel_ids.push_back({0, 0, i});
  r.hits.assign(std::size_t(m), 1);
  return r;
}

Bounds unit_bounds() {
  Bounds b;
  b.lo = Vector3d::Constant(-1.0);
  b.hi = Vector3d::Constant(1.0);
  return b;
}

// Opacity of the centre ray through a homogeneous cube of density s and side 2.
double homogeneous_opacity(double s, int n) {
  const auto f = constant_field<double>(unit_bounds(), Vector3d(0.2, 0.4, 0.6), s);
  const auto cam = testing::axis_camera(3.0, 1, 10.0);
  const auto rays = generate_rays<double>(cam, {{0, 0, 0}}, f.bounds());
  RenderConfig cfg;
  cfg.n_samples = n;
  RenderCache<double> cache;
  render_rays(f, rays, cfg, &cache);
  return cache.composites.at(0).opacity;
}

}  // namespace

TEST_SUITE("renderer") {

TEST_CASE("ray geometry") {
  const auto cam = testing::axis_camera(4.0, 65, 50.0);
  const Bounds b = unit_bounds();

  SUBCASE("centre pixel looks along the forward axis") {
    const auto r = generate_rays<double>(cam, {{0, 32, 32}}, b);
    CHECK((r.directions.col(0) - cam.forward()).norm() < 1e-12);
    CHECK(r.t_near[0] == doctest::Approx(3.0));
    CHECK(r.t_far[0] == doctest::Approx(5.0));
  }
  SUBCASE("horizontal neighbours differ only horizontally on the image plane") {
    const auto r = generate_rays<double>(cam, {{0, 10, 20}, {0, 10, 21}}, b);
    const Vector3d a = cam.rotation.transpose() * r.directions.col(0);
    const Vector3d c = cam.rotation.transpose() * r.directions.col(1);
    const Vector3d pa = a / -a.z(), pc = c / -c.z();
    CHECK(std::abs(pa.y() - pc.y()) < 1e-12);
    CHECK(pc.x() - pa.x() == doctest::Approx(1.0 / cam.focal));
  }
  SUBCASE("corner angle follows pinhole trigonometry") {
    const auto r = generate_rays<double>(cam, {{0, 0, 0}}, b);
    const double half_diag = std::hypot(32.0, 32.0);
    const double angle = std::acos(std::clamp(r.directions.col(0).dot(cam.forward()), -1.0, 1.0));
    CHECK(angle == doctest::Approx(std::atan2(half_diag, cam.focal)).epsilon(1e-9));
  }
  SUBCASE("directions are unit and near precedes far") {
    const auto r = generate_rays<float>(cam, all_pixels(cam), b);
    for (Index i = 0; i < r.size(); ++i) {
      CHECK(std::abs(r.directions.col(i).norm() - 1.0f) < 1e-6f);
      CHECK(r.t_near[i] < r.t_far[i]);
      CHECK(r.t_near[i] >= float(kMinNear));
    }
  }
  SUBCASE("camera inside the bounds clamps near to a positive minimum") {
    const auto inside = testing::axis_camera(0.5, 3, 2.0);
    const auto r = generate_rays<double>(inside, {{0, 1, 1}}, b);
    CHECK(r.t_near[0] == kMinNear);
    CHECK(r.t_far[0] == doctest::Approx(1.5));
  }
  SUBCASE("out of range pixels are rejected") {
    CHECK_THROWS_AS(generate_rays<double>(cam, {{0, 65, 0}}, b), std::out_of_range);
    CHECK_THROWS_AS(generate_rays<double>(cam, {{0, 0, -1}}, b), std::out_of_range);
  }
  SUBCASE("generation is deterministic") {
    const auto a = generate_rays<float>(cam, all_pixels(cam), b);
    const auto c = generate_rays<float>(cam, all_pixels(cam), b);
    CHECK(a.directions == c.directions);
    CHECK(a.t_near == c.t_near);
  }
}

TEST_CASE("sample placement") {
  RenderConfig cfg;
  SUBCASE("two midpoint samples on [0, 1]") {
    cfg.n_samples = 2;
    const auto s = sample_points(manual_rays(0.0, 1.0), cfg);
    CHECK(s.t(0, 0) == doctest::Approx(0.25));
    CHECK(s.t(1, 0) == doctest::Approx(0.75));
    CHECK(s.deltas(0, 0) == doctest::Approx(0.5));
    CHECK(s.deltas(1, 0) == doctest::Approx(0.25));
    CHECK(s.positions(2, 1) == doctest::Approx(-0.75));
  }
  SUBCASE("stratified samples stay in their bins and repeat under a seed") {
    cfg.n_samples = 16;
    cfg.stratified = true;
    cfg.seed = 77;
    const auto rays = manual_rays(0.5, 2.5, 8);
    const auto a = sample_points(rays, cfg);
    const auto b = sample_points(rays, cfg);
    CHECK(a.t == b.t);
    for (Index r = 0; r < a.t.cols(); ++r)
      for (int k = 0; k < 16; ++k) {
        CHECK(a.t(k, r) >= 0.5 + k * 0.125 - 1e-12);
        CHECK(a.t(k, r) <= 0.5 + (k + 1) * 0.125 + 1e-12);
        CHECK(a.deltas(k, r) > 0.0);
      }
    cfg.seed = 78;
    CHECK_FALSE(sample_points(rays, cfg).t == a.t);
  }
  SUBCASE("fewer than two samples is invalid") {
    cfg.n_samples = 1;
    CHECK_THROWS_AS(sample_points(manual_rays(0.0, 1.0), cfg), std::invalid_argument);
  }
}

TEST_CASE("compositing examples") {
  const Vec3<double> bg(0.9, 0.8, 0.7);
  SUBCASE("zero density shows the background") {
    const MatrixX<double> colors = MatrixX<double>::Constant(3, 4, 0.3);
    const auto r = composite<double>(colors, VectorX<double>::Zero(4), VectorX<double>::Constant(4, 0.1), bg);
    CHECK(r.opacity == 0.0);
    CHECK((r.pixel - bg).norm() == 0.0);
  }
  SUBCASE("a saturated single sample shows its colour") {
    const MatrixX<double> colors = Vec3<double>(0.1, 0.5, 0.2);
    const auto r = composite<double>(colors, VectorX<double>::Constant(1, 1e4), VectorX<double>::Constant(1, 1.0), bg);
    CHECK(r.opacity == doctest::Approx(1.0));
    CHECK((r.pixel - colors.col(0)).norm() < 1e-12);
  }
}

TEST_CASE("homogeneous medium opacity converges to the Beer-Lambert value") {
  const double s = 0.5, ell = 2.0;
  const double exact = 1.0 - std::exp(-s * ell);
  double prev = INFINITY;
  for (int n : {8, 32, 128, 512}) {
    const double err = std::abs(homogeneous_opacity(s, n) - exact);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("weights are non-negative and transmittance never increases") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 30;
    VectorX<double> sig(n), del(n);
    for (int k = 0; k < n; ++k) {
      sig[k] = trial % 7 == 0 ? 1e6 : e(rng);
      del[k] = 0.01 + e(rng);
    }
    const auto r = composite<double>(MatrixX<double>::Constant(3, n, 0.5), sig, del, Vec3<double>::Zero());
    CHECK((r.weights.array() >= 0.0).all());
    CHECK(r.weights.sum() <= 1.0 + 1e-12);
    CHECK(r.opacity >= 0.0);
    for (int k = 0; k < n; ++k) CHECK(r.transmittance[k + 1] <= r.transmittance[k]);
  }
}

TEST_CASE("composite backward matches central differences") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 1.5);
  const int n = 7;
  MatrixX<double> colors(3, n);
  VectorX<double> sig(n), del(n);
  for (Index i = 0; i < colors.size(); ++i) colors.data()[i] = u(rng) / 1.5;
  for (int k = 0; k < n; ++k) {
    sig[k] = u(rng);
    del[k] = u(rng) * 0.3;
  }
  const Vec3<double> bg(0.3, 0.6, 0.9), g(0.7, -1.1, 0.4);
  const auto fwd = composite<double>(colors, sig, del, bg);
  MatrixX<double> gc(3, n);
  VectorX<double> gs(n);
  composite_backward<double>(colors, del, bg, fwd, g, gc, gs);
  const double h = 1e-6;
  auto probe = [&](const MatrixX<double>& c, const VectorX<double>& s) {
    return g.dot(composite<double>(c, s, del, bg).pixel);
  };
  for (int k = 0; k < n; ++k) {
    VectorX<double> sp = sig, sm = sig;
    sp[k] += h;
    sm[k] -= h;
    CHECK(rel_err(gs[k], (probe(colors, sp) - probe(colors, sm)) / (2 * h)) < 1e-6);
    for (int ch = 0; ch < 3; ++ch) {
      MatrixX<double> cp = colors, cm = colors;
      cp(ch, k) += h;
      cm(ch, k) -= h;
      CHECK(rel_err(gc(ch, k), (probe(cp, sig) - probe(cm, sig)) / (2 * h)) < 1e-6);
    }
  }
}

TEST_CASE("an opaque constant field renders its colour") {
  const Vector3d c(0.2, 0.7, 0.4);
  const auto f = constant_field<double>(unit_bounds(), c, 60.0);
  const auto cam = testing::axis_camera(3.5, 16, 20.0);
  const auto rays = generate_rays<double>(cam, all_pixels(cam), f.bounds());
  RenderConfig cfg;
  cfg.n_samples = 32;
  const MatrixX<double> out = render_rays(f, rays, cfg);
  int checked = 0;
  for (Index i = 0; i < rays.size(); ++i) {
    if (rays.t_far[i] - rays.t_near[i] < 0.5) continue;  // grazing corner rays see little medium
    CHECK((out.col(i) - c).norm() < 1e-6);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("render_rays gradient matches central differences") {
  const RadianceField<double> f(micro_arch(), unit_bounds(), 12);
  const auto cam = testing::axis_camera(3.0, 9, 8.0);
  const auto rays = generate_rays<double>(cam, {{0, 4, 4}, {0, 2, 6}, {0, 7, 1}}, f.bounds());
  RenderConfig cfg;
  cfg.n_samples = 16;
  cfg.background = Vector3d(0.2, 0.5, 0.8);
  for (Index ray = 0; ray < rays.size(); ++ray) {
    for (int ch = 0; ch < 3; ++ch) {
      RenderCache<double> cache;
      render_rays(f, rays, cfg, &cache);
      MatrixX<double> g = MatrixX<double>::Zero(3, rays.size());
      g(ch, ray) = 1.0;
      VectorX<double> grad;
      render_rays_backward<double>(f, cache, cfg, g, grad);
      double worst = 0.0;
      for (Index p = 0; p < f.parameter_count(); ++p) {
        auto fp = f, fm = f;
        fp.parameters()[p] += 1e-5;
        fm.parameters()[p] -= 1e-5;
        const double fd = (render_rays(fp, rays, cfg)(ch, ray) - render_rays(fm, rays, cfg)(ch, ray)) / 2e-5;
        worst = std::max(worst, rel_err(grad[p], fd, 1e-7));
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("image rendering") {
  const Field f(FieldArchitecture{}, unit_bounds(), 3);
  const auto cam = testing::axis_camera(3.0, 40, 30.0);
  RenderConfig cfg;
  cfg.n_samples = 16;

  SUBCASE("tile size never changes pixel values") {
    cfg.tile_size = 16;
    const auto tiled = render_image(f, cam, cfg);
    cfg.tile_size = 4096;
    const auto whole = render_image(f, cam, cfg);
    cfg.tile_size = 7;
    const auto odd = render_image(f, cam, cfg);
    CHECK(tiled == whole);
    CHECK(odd == whole);
  }
  SUBCASE("image equals per-pixel render_rays calls") {
    const auto img = render_image(f, cam, cfg);
    for (int r = 0; r < cam.height; r += 3)
      for (int c = 0; c < cam.width; c += 5) {
        const auto rays = generate_rays<float>(cam, {{0, r, c}}, f.bounds());
        const MatrixX<float> one = render_rays(f, rays, cfg);
        CHECK(img.pixel(r, c) == one.col(0).transpose());
      }
  }
  SUBCASE("rendering never touches the style feature extractor") {
    instrument::reset();
    const auto big = render_image(f, testing::axis_camera(3.0, 128, 90.0), cfg);
    CHECK(big.height() == 128);
    const auto st = instrument::stats();
    CHECK(st.extractor_forward_calls == 0);
    CHECK(st.extractor_steps == 0);
    CHECK(st.coupled_steps == 0);
  }
  SUBCASE("rays that miss the bounds show the background") {
    cfg.background = Vector3d(0.1, 0.2, 0.3);
    const auto away = look_at(Vector3d(0, 0, 3), Vector3d(0, 0, 6), Vector3d::UnitY(), 10.0, 8, 8);
    const auto img = render_image(f, away, cfg);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) CHECK((img.pixel(r, c).transpose().cast<double>() - cfg.background).norm() < 1e-7);
  }
  SUBCASE("the optional opacity image matches per-ray compositing") {
    ImageBuffer alpha;
    const auto img = render_image(f, cam, cfg, 0, &alpha);
    CHECK(img == render_image(f, cam, cfg));
    REQUIRE(alpha.height() == cam.height);
    REQUIRE(alpha.channels() == 1);
    for (int r = 0; r < cam.height; r += 7)
      for (int c = 0; c < cam.width; c += 3) {
        const auto rays = generate_rays<float>(cam, {{0, r, c}}, f.bounds());
        RenderCache<float> cache;
        render_rays(f, rays, cfg, &cache);
        const float expect = rays.hits[0] ? float(cache.composites.at(0).opacity) : 0.0f;
        CHECK(alpha(r, c, 0) == expect);
      }
    const auto away = look_at(Vector3d(0, 0, 3), Vector3d(0, 0, 6), Vector3d::UnitY(), 10.0, 8, 8);
    render_image(f, away, cfg, 0, &alpha);
    CHECK(alpha.pixels().isZero(0.0f));
  }
  SUBCASE("non-finite radiance is reported with the offending ray") {
    Field bad = f;
    bad.parameters()[bad.density_layer().bias_offset] = std::numeric_limits<float>::quiet_NaN();
    const auto rays = generate_rays<float>(cam, {{0, 20, 20}}, f.bounds());
    try {
      render_rays(bad, rays, cfg);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 20") != std::string::npos);
      CHECK(msg.find("col 20") != std::string::npos);
    }
  }
  SUBCASE("invalid configuration is rejected") {
    cfg.background = Vector3d(1.5, 0, 0);
    CHECK_THROWS_AS(render_image(f, cam, cfg), std::invalid_argument);
  }
}

}  // TEST_SUITE
