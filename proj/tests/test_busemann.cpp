#include <catch2/catch_amalgamated.hpp>

#include "horolab/busemann.hpp"
#include "horolab/rng.hpp"
#include "oracles.hpp"

using namespace horolab;
using Catch::Approx;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}

MetricModel model_h15() {
  return MetricModel::heintze(heintze_diag(vec2(-1.0, -1.5)));
}

MetricModel model_perturbed() {
  return MetricModel::perturbed(heintze_diag(vec2(-1.2, -1.5)), 0.05,
                                {ChartPoint(0.0, vec2(0, 0)), 2.0});
}

// horizontal unit ray from the chart origin; its ideal endpoint in the
// half-space picture is the boundary point e_1
BoundaryDirection horizontal_ray(const MetricModel& m) {
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(m.dim());
  dir(1) = 1.0;
  return BoundaryDirection::ray(m, ChartPoint(0.0, Eigen::VectorXd::Zero(m.n())),
                                dir);
}

}  // namespace

TEST_CASE("busemann value at the distinguished point is minus the height") {
  MetricModel m = model_h15();
  BoundaryDirection xi = BoundaryDirection::special();
  ChartPoint x0(0.0, vec2(0, 0));
  ChartPoint x(1.3, vec2(0.4, -0.7));
  BusemannValue b = busemann_value(m, xi, x, x0, 20.0);
  CHECK(b.value == Approx(-1.3).margin(1e-7));
  CHECK(b.monotone);
  CHECK(b.error_est < 1e-5);

  BusemannValue zero = busemann_value(m, xi, x0, x0, 20.0);
  CHECK(zero.value == Approx(0.0).margin(1e-9));

  CHECK_THROWS_AS(busemann_value(m, xi, x, x0, 5.0), DomainError);
}

TEST_CASE("busemann value toward a ray matches the half-space closed form") {
  MetricModel m = MetricModel::hyperbolic(2);
  BoundaryDirection xi = horizontal_ray(m);
  Eigen::VectorXd ideal = vec2(1.0, 0.0);  // boundary point of the ray
  ChartPoint x0(0.0, vec2(0, 0));
  for (const ChartPoint& x :
       {ChartPoint(0.0, vec2(0.4, 0.3)), ChartPoint(-0.5, vec2(-0.6, 0.2)),
        ChartPoint(0.7, vec2(0.1, -0.8))}) {
    double expect = oracles::busemann_toward_boundary_point(ideal, x, x0);
    BusemannValue got = busemann_value(m, xi, x, x0, 20.0);
    CHECK(got.value == Approx(expect).margin(1e-4));
    CHECK(got.monotone);
  }
}

TEST_CASE("busemann field value is sharp for ray boundary points") {
  MetricModel m = MetricModel::hyperbolic(2);
  BoundaryDirection xi = horizontal_ray(m);
  BusemannField field(m, xi);
  Eigen::VectorXd ideal = vec2(1.0, 0.0);
  ChartPoint x0(0.0, vec2(0, 0));
  ChartPoint x(0.2, vec2(-0.3, 0.5));
  double expect = oracles::busemann_toward_boundary_point(ideal, x, x0);
  CHECK(field.value(x) == Approx(expect).margin(1e-8));
}

TEST_CASE("busemann gradient frames") {
  SECTION("distinguished point: normal is the vertical direction") {
    MetricModel m = model_h15();
    HorosphericalFrame f = busemann_gradient(
        m, BoundaryDirection::special(), ChartPoint(0.8, vec2(0.1, 0.4)));
    CHECK(f.normal.dt == 1.0);
    CHECK(f.normal.dy.norm() == 0.0);
    // Gram matrix of (normal, tangent frame) is the identity
    Eigen::MatrixXd all(3, 3);
    all.col(0) = f.normal.full();
    all.rightCols(2) = f.tangent;
    Eigen::MatrixXd gram = all.transpose() * metric_eval(m, f.base) * all;
    CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-9);
  }

  SECTION("hyperbolic ray: normal matches the half-space direction") {
    MetricModel m = MetricModel::hyperbolic(2);
    BoundaryDirection xi = horizontal_ray(m);
    Eigen::VectorXd ideal = vec2(1.0, 0.0);
    for (const ChartPoint& x :
         {ChartPoint(0.0, vec2(0.3, 0.4)), ChartPoint(-0.4, vec2(-0.2, 0.6))}) {
      HorosphericalFrame f = busemann_gradient(m, xi, x);
      TangentVec expect = oracles::direction_toward_boundary_point(ideal, x);
      CHECK((f.normal.full() - expect.full()).norm() < 1e-5);
    }
  }
}

TEST_CASE("horospherical flow") {
  SECTION("distinguished point: vertical translation") {
    MetricModel m = model_h15();
    BoundaryDirection xi = BoundaryDirection::special();
    ChartPoint x(0.3, vec2(0.5, -0.2));
    ChartPoint moved = flow_phi(m, xi, x, 2.5);
    CHECK(moved.t == Approx(2.8).margin(0.0));
    CHECK((moved.y - x.y).norm() == 0.0);
    CHECK((flow_phi(m, xi, x, 0.0).full() - x.full()).norm() == 0.0);
  }

  SECTION("ray: lowers the busemann value by the flow time") {
    MetricModel m = MetricModel::hyperbolic(2);
    BoundaryDirection xi = horizontal_ray(m);
    BusemannField field(m, xi);
    ChartPoint x(0.0, vec2(0.3, -0.4));
    double b0 = field.value(x);
    for (double t : {1.0, 3.0, -2.0}) {
      ChartPoint moved = flow_phi(m, xi, x, t);
      CHECK(field.value(moved) == Approx(b0 - t).margin(1e-6));
    }
  }

  SECTION("ray: one-parameter group property") {
    MetricModel m = MetricModel::hyperbolic(2);
    BoundaryDirection xi = horizontal_ray(m);
    ChartPoint x(0.1, vec2(-0.2, 0.3));
    ChartPoint ab = flow_phi(m, xi, flow_phi(m, xi, x, 0.8), 1.4);
    ChartPoint sum = flow_phi(m, xi, x, 2.2);
    CHECK((ab.full() - sum.full()).norm() < 1e-7);
  }
}

TEST_CASE("stable riccati solutions") {
  SECTION("hyperbolic horospheres are umbilic with curvature one") {
    MetricModel m = MetricModel::hyperbolic(3);
    RiccatiState st = stable_riccati(m, BoundaryDirection::special(),
                                     ChartPoint(0.2, vec3(0.1, -0.4, 0.3)), 20.0);
    CHECK((st.U - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-9);
  }

  SECTION("diagonal models: principal curvatures |a_i|") {
    MetricModel m = model_h15();
    RiccatiState st = stable_riccati(m, BoundaryDirection::special(),
                                     ChartPoint(-0.4, vec2(0.7, 0.2)), 40.0);
    Eigen::VectorXd expect = vec2(1.0, 1.5);
    CHECK((st.U.diagonal() - expect).norm() < 1e-6);
    CHECK(std::abs(st.U(0, 1)) < 1e-8);
  }

  SECTION("doubling the backward horizon is already converged") {
    MetricModel m = model_h15();
    ChartPoint x(0.0, vec2(0.4, -0.3));
    RiccatiState a = stable_riccati(m, BoundaryDirection::special(), x, 20.0);
    RiccatiState b = stable_riccati(m, BoundaryDirection::special(), x, 40.0);
    CHECK((a.U - b.U).norm() < 1e-6);
  }

  SECTION("perturbed model: closed-form shape operator at the special point") {
    MetricModel m = model_perturbed();
    // U = diag(-a_i) - eps (d b / d t) I on the conformally scaled slices
    for (const ChartPoint& x :
         {ChartPoint(0.5, vec2(0.3, -0.2)), ChartPoint(-0.8, vec2(1.0, 0.4)),
          ChartPoint(1.2, vec2(-0.5, 0.9))}) {
      RiccatiState st = stable_riccati(m, BoundaryDirection::special(), x, 24.0);
      double r2 = (x.t * x.t + x.y.squaredNorm()) / 4.0;  // R = 2
      double dbdt = 0.0;
      if (r2 < 1.0) {
        double w = 1.0 - r2;
        dbdt = 3.0 * w * w * (-2.0 * x.t / 4.0);
      }
      Eigen::MatrixXd expect = vec2(1.2, 1.5).asDiagonal();
      expect -= 0.05 * dbdt * Eigen::MatrixXd::Identity(2, 2);
      CHECK((st.U - expect).norm() < 1e-6);
    }
  }

  SECTION("spectrum lies in the comparison window [1, 2 sqrt(1 - tau)]") {
    MetricModel m = model_h15();
    RiccatiState st = stable_riccati(m, BoundaryDirection::special(),
                                     ChartPoint(0.3, vec2(-0.6, 0.8)), 20.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(st.U);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    CHECK(lo >= 1.0 - 1e-8);
    CHECK(hi <= 2.0 * std::sqrt(1.0 - m.params.tau) + 1e-8);
  }
}

TEST_CASE("flow derivative via stable Jacobi propagation") {
  SECTION("hyperbolic: uniform e^{-t} contraction") {
    MetricModel m = MetricModel::hyperbolic(3);
    BoundaryDirection xi = BoundaryDirection::special();
    ChartPoint x(0.0, vec3(0.2, -0.1, 0.5));
    HorosphericalFrame f = busemann_gradient(m, xi, x);
    for (double t : {0.5, 2.0, 7.0}) {
      Eigen::MatrixXd J = dflow(m, xi, x, t, f);
      CHECK((J - std::exp(-t) * Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-9);
    }
  }

  SECTION("diagonal model: rates e^{a_i t} on the slice axes") {
    MetricModel m = model_h15();
    BoundaryDirection xi = BoundaryDirection::special();
    ChartPoint x(0.2, vec2(0.4, 0.1));
    HorosphericalFrame f = busemann_gradient(m, xi, x);
    Eigen::MatrixXd J = dflow(m, xi, x, 3.0, f);
    CHECK(J(0, 0) == Approx(std::exp(-3.0)).epsilon(1e-9));
    CHECK(J(1, 1) == Approx(std::exp(-4.5)).epsilon(1e-9));
    CHECK(std::abs(J(0, 1)) + std::abs(J(1, 0)) < 1e-11);
    // norm never beats e^{-t}, inverse never beats e^{2 sqrt(1-tau) t}
    CHECK(operator_norm(J) <= std::exp(-3.0) * (1.0 + 1e-6));
    CHECK(operator_norm(J.inverse()) <= std::exp(1.5 * 3.0) * (1.0 + 1e-6));
  }

  SECTION("negative times invert the upstream propagator") {
    MetricModel m = model_h15();
    BoundaryDirection xi = BoundaryDirection::special();
    ChartPoint x(0.5, vec2(-0.3, 0.2));
    HorosphericalFrame f = busemann_gradient(m, xi, x);
    Eigen::MatrixXd J = dflow(m, xi, x, -2.0, f);
    CHECK(J(0, 0) == Approx(std::exp(2.0)).epsilon(1e-8));
    CHECK(J(1, 1) == Approx(std::exp(3.0)).epsilon(1e-8));
  }

  SECTION("perturbed model: closed-form diagonal propagator") {
    MetricModel m = model_perturbed();
    BoundaryDirection xi = BoundaryDirection::special();
    ChartPoint x(-1.0, vec2(0.5, -0.3));
    HorosphericalFrame f = busemann_gradient(m, xi, x);
    double t = 2.5;
    Eigen::MatrixXd J = dflow(m, xi, x, t, f);
    ChartPoint xt = x;
    xt.t += t;
    double delta_b = m.bump_value(xt.t, xt.y) - m.bump_value(x.t, x.y);
    CHECK(J(0, 0) == Approx(std::exp(-1.2 * t + 0.05 * delta_b)).epsilon(1e-5));
    CHECK(J(1, 1) == Approx(std::exp(-1.5 * t + 0.05 * delta_b)).epsilon(1e-5));
  }

  SECTION("cocycle property along the ray") {
    MetricModel m = model_perturbed();
    BoundaryDirection xi = BoundaryDirection::special();
    BusemannField field(m, xi);
    ChartPoint x(-0.8, vec2(0.4, 0.6));
    HorosphericalFrame f = field.frame(x);
    StableFlow flow(m, field, x, f.tangent, 5.0);
    Eigen::MatrixXd whole = flow.dphi(5.0);
    Eigen::MatrixXd first = flow.dphi(2.0);
    StableFlow tail(m, field, flow.point(2.0), flow.frame(2.0), 3.0);
    CHECK((tail.dphi(3.0) * first - whole).norm() < 1e-6);
  }

  SECTION("ray boundary point: propagator against flow finite differences") {
    MetricModel m = MetricModel::hyperbolic(2);
    BoundaryDirection xi = horizontal_ray(m);
    BusemannField field(m, xi);
    ChartPoint x(0.0, vec2(0.25, -0.35));
    HorosphericalFrame f = field.frame(x);
    double t = 1.5;
    StableFlow flow(m, field, x, f.tangent, t);
    Eigen::MatrixXd J = flow.dphi(t);
    CHECK((J - std::exp(-t) * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-7);

    // central differences of the flow across the frame directions
    const double delta = 1e-4;
    Eigen::MatrixXd Ft = flow.frame(t);
    Eigen::MatrixXd Gt = metric_eval(m, flow.point(t));
    for (int c = 0; c < 2; ++c) {
      ChartPoint xp = ChartPoint::from_full(x.full() + delta * f.tangent.col(c));
      ChartPoint xm = ChartPoint::from_full(x.full() - delta * f.tangent.col(c));
      Eigen::VectorXd diff =
          (flow_phi(m, xi, xp, t).full() - flow_phi(m, xi, xm, t).full()) /
          (2.0 * delta);
      Eigen::VectorXd in_frame = Ft.transpose() * Gt * diff;
      CHECK((in_frame - J.col(c)).norm() < 2e-4);
    }
  }
}
