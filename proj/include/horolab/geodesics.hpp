#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "horolab/models.hpp"
#include "horolab/ode.hpp"

namespace horolab {

// Unit-speed state of the geodesic flow.
struct GeodesicState {
  ChartPoint p;
  TangentVec v;
};

inline GeodesicState unit_state(const MetricModel& m, const ChartPoint& p,
                                const Eigen::VectorXd& dir) {
  const double nn = metric_norm(m, p, dir);
  require(nn > 1e-300, "unit_state: zero direction");
  return {p, TangentVec::at(p, dir / nn)};
}

namespace detail {

// out = -Gamma(p)(v, w), the transport/acceleration contraction. Uses the
// warped-product closed form away from the bump, assembled symbols inside it.
inline void connection_contract(const MetricModel& m, const ChartPoint& p,
                                const Eigen::VectorXd& v,
                                const Eigen::VectorXd& w, Eigen::VectorXd& out) {
  const int n = m.n();
  if (m.base_exact_near(p, 0.0)) {
    Eigen::MatrixXd H, Hd;
    slice_metric(m.params, p.t, &H, &Hd);
    Eigen::MatrixXd W = 0.5 * H.llt().solve(Hd);
    out(0) = 0.5 * v.tail(n).dot(Hd * w.tail(n));
    out.tail(n) = -(v(0) * (W * w.tail(n)) + w(0) * (W * v.tail(n)));
    return;
  }
  auto gam = christoffel(m, p);
  for (int mu = 0; mu <= n; ++mu) out(mu) = -v.dot(gam[mu] * w);
}

}  // namespace detail

// Dense geodesic with optional parallel-transported columns.
// State layout: [x (d), v (d), frame column 0 (d), frame column 1 (d), ...].
class GeodesicPath {
 public:
  int d = 0;
  int frame_cols = 0;
  double T = 0.0;  // signed flow time = signed arclength for unit states
  OdeSolution sol;

  ChartPoint point_at(double u) const {
    return ChartPoint::from_full(sol.eval(u).head(d));
  }
  Eigen::VectorXd velocity_at(double u) const {
    return sol.eval(u).segment(d, d);
  }
  GeodesicState state_at(double u) const {
    Eigen::VectorXd s = sol.eval(u);
    ChartPoint p = ChartPoint::from_full(s.head(d));
    return {p, TangentVec::at(p, s.segment(d, d))};
  }
  Eigen::MatrixXd frame_at(double u) const {
    Eigen::VectorXd s = sol.eval(u);
    Eigen::MatrixXd F(d, frame_cols);
    for (int c = 0; c < frame_cols; ++c) F.col(c) = s.segment(2 * d + c * d, d);
    return F;
  }
  ChartPoint endpoint() const {
    return ChartPoint::from_full(sol.nodes.back().y.head(d));
  }
  double length() const { return std::abs(T); }

  double speed_drift(const MetricModel& m) const {
    double worst = 0.0;
    for (const auto& nd : sol.nodes) {
      ChartPoint p = ChartPoint::from_full(nd.y.head(d));
      double s = metric_dot(m, p, nd.y.segment(d, d), nd.y.segment(d, d));
      worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
  }
};

struct GeodesicIntegrateOptions {
  double h_max = 0.25;
  bool store = true;
};

// Integrate the geodesic equation x'' + Gamma(x)(x',x') = 0 for flow time T,
// parallel-transporting the optional frame columns alongside.
inline GeodesicPath integrate_geodesic(
    const MetricModel& m, const GeodesicState& start, double T,
    double tol = 1e-10, const std::optional<Eigen::MatrixXd>& frame0 = {},
    const GeodesicIntegrateOptions& gopt = {}) {
  require(std::isfinite(T), "integrate_geodesic: non-finite time");
  require(tol > 0.0, "integrate_geodesic: tolerance must be positive");
  const int d = m.dim();
  const double speed = metric_dot(m, start.p, start.v.full(), start.v.full());
  if (std::abs(speed - 1.0) > 1e-9)
    throw DomainError("integrate_geodesic: state is not unit speed");

  const int nf = frame0 ? static_cast<int>(frame0->cols()) : 0;
  Eigen::VectorXd s0(d * (2 + nf));
  s0.head(d) = start.p.full();
  s0.segment(d, d) = start.v.full();
  for (int c = 0; c < nf; ++c) s0.segment(2 * d + c * d, d) = frame0->col(c);

  auto rhs = [&m, d, nf](double, const Eigen::VectorXd& s) {
    Eigen::VectorXd out(s.size());
    ChartPoint p = ChartPoint::from_full(s.head(d));
    Eigen::VectorXd v = s.segment(d, d);
    out.head(d) = v;
    Eigen::VectorXd tmp(d);
    detail::connection_contract(m, p, v, v, tmp);
    out.segment(d, d) = tmp;
    for (int c = 0; c < nf; ++c) {
      detail::connection_contract(m, p, v, s.segment(2 * d + c * d, d), tmp);
      out.segment(2 * d + c * d, d) = tmp;
    }
    return out;
  };

  OdeOptions opt;
  opt.rtol = tol;
  opt.atol = tol * 1e-2;
  opt.h_max = gopt.h_max;
  opt.store = gopt.store;
  GeodesicPath path;
  path.d = d;
  path.frame_cols = nf;
  path.T = T;
  path.sol = integrate_rk45(rhs, 0.0, s0, T, opt);
  return path;
}

// Endpoint of the unit-speed geodesic from x with direction v after time t.
inline ChartPoint exp_map(const MetricModel& m, const ChartPoint& x,
                          const TangentVec& v, double t) {
  GeodesicIntegrateOptions go;
  go.store = false;
  return integrate_geodesic(m, {x, v}, t, 1e-11, {}, go).endpoint();
}

struct ShootOptions {
  double tol = 1e-9;             // target endpoint mismatch, metric units
  int max_iter = 80;
  double integrate_rtol = 1e-12;
  double max_distance = 30.0;    // exponential shooting sensitivity beyond
  double h_max = 0.25;
};

struct ShootingResult {
  double distance = 0.0;
  TangentVec initial_direction;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Eigen::VectorXd shoot_state(const MetricModel& m, const ChartPoint& x,
                                   const Eigen::VectorXd& dir, double L,
                                   const ShootOptions& opt) {
  GeodesicIntegrateOptions go;
  go.store = false;
  go.h_max = opt.h_max;
  GeodesicState st = unit_state(m, x, dir);
  GeodesicPath p = integrate_geodesic(m, st, L, opt.integrate_rtol, {}, go);
  return p.sol.nodes.back().y;  // [position, velocity]
}

inline Eigen::VectorXd shoot_endpoint(const MetricModel& m, const ChartPoint& x,
                                      const Eigen::VectorXd& dir, double L,
                                      const ShootOptions& opt) {
  return shoot_state(m, x, dir, L, opt).head(m.dim());
}

// Damped Newton on (direction, length). The residual is the chart endpoint
// mismatch expressed in a g(target)-orthonormal frame, so its Euclidean norm
// is the metric size of the miss. The attainable mismatch is limited by the
// integration error magnified by the metric at the target (deep targets in a
// horospherical chart carry exponential weights), which sets the
// convergence floor.
inline ShootingResult shoot_newton(const MetricModel& m, const ChartPoint& x,
                                   const ChartPoint& target,
                                   Eigen::VectorXd dir, double L,
                                   const ShootOptions& opt) {
  const int d = m.dim();
  const Eigen::VectorXd tgt = target.full();
  const Eigen::MatrixXd Gt = metric_eval(m, target);
  Eigen::MatrixXd Lt = Eigen::LLT<Eigen::MatrixXd>(Gt).matrixL().transpose();
  const double amp = std::sqrt(
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Gt).eigenvalues()
          .maxCoeff());

  auto residual = [&](const Eigen::VectorXd& dd, double ll) {
    return (Lt * (shoot_endpoint(m, x, dd, ll, opt) - tgt)).eval();
  };

  Eigen::VectorXd r = residual(dir, L);
  double rn = r.norm();
  auto floor_at = [&](double ll) {
    return std::max(amp, 1.0) * (1.0 + ll) * 30.0 * opt.integrate_rtol +
           50.0 * 2.3e-16 * std::exp(std::min(ll, 35.0)) * (1.0 + ll);
  };
  double tol_eff = std::max(opt.tol, floor_at(L));

  ShootingResult res;
  Eigen::VectorXd jac_col_norm = Eigen::VectorXd::Constant(d, -1.0);
  int it = 0;
  for (; it < opt.max_iter && rn > tol_eff; ++it) {
    // orthonormal complement of dir at x spans the direction unknowns
    Eigen::MatrixXd G = metric_eval(m, x);
    Eigen::MatrixXd basis(d, d + 1);
    basis.col(0) = dir / metric_norm(m, x, dir);
    basis.rightCols(d) = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd on = gram_schmidt(G, basis);
    if (on.cols() < d) throw NumericalError("shoot: frame construction failed");
    on = on.leftCols(d).eval();

    Eigen::MatrixXd J(d, d);
    for (int k = 0; k < d; ++k) {
      double scale = jac_col_norm(k) > 0 ? jac_col_norm(k)
                                         : std::exp(std::min(L, 25.0));
      double delta = std::clamp(0.05 * rn / scale, 1e-12, 1e-4);
      Eigen::VectorXd rp;
      if (k < d - 1) {
        rp = residual(dir + delta * on.col(k + 1), L);
      } else {
        rp = residual(dir, L + delta);
      }
      J.col(k) = (rp - r) / delta;
      jac_col_norm(k) = std::max(J.col(k).norm(), 1e-12);
    }
    Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) throw NumericalError("shoot: singular Jacobian");
    // cap the angular step to keep the retraction sane
    double ang = step.head(d - 1).norm();
    if (ang > 0.5) step *= 0.5 / ang;
    if (std::abs(step(d - 1)) > 0.5 * (1.0 + L))
      step *= 0.5 * (1.0 + L) / std::abs(step(d - 1));

    double alpha = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 8; ++ls) {
      Eigen::VectorXd dir_try = dir;
      for (int k = 0; k + 1 < d; ++k)
        dir_try += (alpha * step(k)) * on.col(k + 1);
      double L_try = std::clamp(L + alpha * step(d - 1), 1e-9,
                                opt.max_distance + 6.0);
      Eigen::VectorXd r_try = residual(dir_try, L_try);
      if (r_try.norm() < rn * (1.0 - 1e-4 * alpha) || r_try.norm() < tol_eff) {
        dir = dir_try / metric_norm(m, x, dir_try);
        L = L_try;
        r = r_try;
        rn = r.norm();
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;
    tol_eff = std::max(opt.tol, floor_at(L));
  }

  // The leftover mismatch is transverse-dominated and biases the length
  // only at second order once the along-track component is zeroed; a short
  // secant pass on L does that.
  if (rn > 1e-13) {
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd st = shoot_state(m, x, dir, L, opt);
      Eigen::VectorXd miss = st.head(d) - tgt;
      Eigen::VectorXd vel = st.tail(d);
      double par = miss.dot(Gt * vel);
      if (!(std::abs(par) > 1e-14) || std::abs(par) > rn) break;
      L -= par;
    }
    r = residual(dir, L);
    rn = r.norm();
  }

  res.distance = L;
  res.initial_direction = TangentVec::at(x, dir / metric_norm(m, x, dir));
  res.residual = rn;
  res.iterations = it;
  res.converged = rn <= std::max(opt.tol, floor_at(L)) * 1.5;
  return res;
}

// quadrature estimate of the g-length of the straight chart segment
inline double chord_length(const MetricModel& m, const ChartPoint& x,
                           const ChartPoint& y) {
  const Eigen::VectorXd a = x.full(), b = y.full();
  const Eigen::VectorXd dl = b - a;
  double len = 0.0;
  const int N = 8;  // composite Simpson
  double prev = metric_norm(m, x, dl);
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd mid = a + dl * ((i + 0.5) / N);
    Eigen::VectorXd nxt = a + dl * (double(i + 1) / N);
    double fm = metric_norm(m, ChartPoint::from_full(mid), dl);
    double fn = metric_norm(m, ChartPoint::from_full(nxt), dl);
    len += (prev + 4.0 * fm + fn) / (6.0 * N);
    prev = fn;
  }
  return len;
}

}  // namespace detail

// Two-point boundary value problem by Newton shooting over the initial
// direction and length. Distances are unique in nonpositive curvature; pairs
// beyond max_distance are refused.
inline ShootingResult distance_bvp(const MetricModel& m, const ChartPoint& x,
                                   const ChartPoint& y,
                                   const ShootOptions& opt = {},
                                   const ShootingResult* warm = nullptr) {
  require(x.finite() && y.finite(), "distance_bvp: non-finite input");
  const int d = m.dim();
  if ((x.full() - y.full()).norm() == 0.0) {
    ShootingResult r;
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(d);
    e0(0) = 1.0;
    r.initial_direction = TangentVec::at(x, e0);
    r.converged = true;
    return r;
  }

  Eigen::VectorXd dir;
  double L;
  if (warm && warm->converged) {
    dir = warm->initial_direction.full();
    L = warm->distance;
  } else {
    dir = y.full() - x.full();
    L = detail::chord_length(m, x, y);
  }

  if (L > 3.0 * opt.max_distance + 20.0)
    throw GeometryError("distance_bvp: pair beyond supported distance range");

  ShootingResult res;
  if (!warm && L > 14.0) {
    // continuation along the chart segment toward the target
    const Eigen::VectorXd a = x.full(), b = y.full();
    int legs = static_cast<int>(std::ceil(L / 8.0));
    ShootOptions loose = opt;
    loose.tol = std::max(opt.tol, 1e-7);
    ShootingResult stage;
    bool have = false;
    for (int k = 1; k <= legs; ++k) {
      ChartPoint zk = ChartPoint::from_full(a + (b - a) * (double(k) / legs));
      const ShootOptions& o = (k == legs) ? opt : loose;
      Eigen::VectorXd d0 = have ? stage.initial_direction.full() : (zk.full() - a);
      double L0 = have ? stage.distance + L / legs : detail::chord_length(m, x, zk);
      stage = detail::shoot_newton(m, x, zk, d0, L0, o);
      have = true;
    }
    res = stage;
  } else {
    res = detail::shoot_newton(m, x, y, dir, L, opt);
  }

  if (res.converged && res.distance > opt.max_distance)
    throw GeometryError("distance_bvp: geodesic distance exceeds supported range");
  if (!res.converged)
    throw SolverError("distance_bvp: shooting did not converge", res.residual);
  return res;
}

}  // namespace horolab
