#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "horolab/geodesics.hpp"
#include "horolab/linalg.hpp"
#include "horolab/models.hpp"

namespace horolab {

// A point xi on the geometric boundary: either the chart's distinguished
// point (t -> +infinity) or the endpoint of an explicit geodesic ray.
struct BoundaryDirection {
  enum class Kind { SpecialPoint, Ray };
  Kind kind = Kind::SpecialPoint;
  ChartPoint base;   // Ray only
  TangentVec dir;    // Ray only, unit

  static BoundaryDirection special() { return {}; }

  static BoundaryDirection ray(const MetricModel& m, const ChartPoint& base,
                               const Eigen::VectorXd& dir) {
    BoundaryDirection b;
    b.kind = Kind::Ray;
    b.base = base;
    b.dir = unit_state(m, base, dir).v;
    return b;
  }
};

// Unit normal toward xi (= -grad B) plus a g-orthonormal tangent frame.
struct HorosphericalFrame {
  ChartPoint base;
  TangentVec normal;
  Eigen::MatrixXd tangent;  // dim x n chart components
};

namespace detail {

inline Eigen::MatrixXd tangent_frame_from_normal(const MetricModel& m,
                                                 const ChartPoint& p,
                                                 const Eigen::VectorXd& normal) {
  const int d = m.dim();
  Eigen::MatrixXd basis(d, d + 1);
  basis.col(0) = normal;
  basis.rightCols(d) = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd on = gram_schmidt(metric_eval(m, p), basis);
  if (on.cols() < d)
    throw NumericalError("horospherical frame construction failed");
  return on.rightCols(d - 1);
}

}  // namespace detail

// Busemann function and asymptotic direction field of a fixed (model, xi)
// pair. The distinguished point has closed forms; a ray point is evaluated
// by shooting toward targets marched up the defining ray until the value and
// the direction pass a doubling Cauchy test. Evaluations are cached and
// reused as warm starts, so clustered queries (curve integration, frames)
// stay cheap.
class BusemannField {
 public:
  struct Eval {
    double B = 0.0;
    double error_est = 0.0;
    Eigen::VectorXd normal;  // unit chart vector toward xi
    double T_used = 0.0;
  };

  BusemannField(const MetricModel& m, const BoundaryDirection& xi)
      : model_(&m), xi_(xi) {
    if (xi_.kind == BoundaryDirection::Kind::Ray) {
      require(xi_.base.horo_dim() == m.n(), "boundary ray dimension mismatch");
      extend_ray(28.0);
    }
  }

  const MetricModel& model() const { return *model_; }
  const BoundaryDirection& xi() const { return xi_; }
  bool special() const {
    return xi_.kind == BoundaryDirection::Kind::SpecialPoint;
  }

  Eval eval(const ChartPoint& p) const {
    if (special()) {
      Eval e;
      e.B = -p.t;
      e.error_est = 0.0;
      e.normal = Eigen::VectorXd::Zero(model_->dim());
      e.normal(0) = 1.0;
      return e;
    }
    return eval_ray(p);
  }

  double value(const ChartPoint& p) const { return eval(p).B; }

  Eigen::VectorXd normal(const ChartPoint& p) const { return eval(p).normal; }

  HorosphericalFrame frame(const ChartPoint& p) const {
    Eval e = eval(p);
    HorosphericalFrame f;
    f.base = p;
    f.normal = TangentVec::at(p, e.normal);
    f.tangent = detail::tangent_frame_from_normal(*model_, p, e.normal);
    return f;
  }

  // point on the defining ray at arclength T (Ray kind only)
  ChartPoint ray_point(double T) const {
    extend_ray(T);
    return ray_.point_at(T);
  }

 private:
  void extend_ray(double T) const {
    if (xi_.kind != BoundaryDirection::Kind::Ray) return;
    if (ray_.sol.nodes.empty() || ray_len_ < T) {
      double target = std::max({T, 28.0, ray_len_ * 2.0});
      if (target > 96.0)
        throw SolverError("busemann field: defining ray extension beyond cap",
                          target);
      GeodesicIntegrateOptions go;
      go.h_max = 0.25;
      ray_ = integrate_geodesic(*model_, {xi_.base, xi_.dir}, target, 1e-11, {},
                                go);
      ray_len_ = target;
    }
  }

  struct CacheEntry {
    Eigen::VectorXd pfull;
    Eigen::VectorXd dir;
    double B = 0.0;
    double err = 0.0;
    double T_val = 0.0, L_val = 0.0;  // value stage: moderate distance, the
                                      // shooting floor grows like e^d
    double T_dir = 0.0, L_dir = 0.0;  // direction stage: Cauchy-validated
  };

  Eval make_eval(const CacheEntry& e) const {
    Eval out;
    out.B = e.B;
    out.error_est = e.err;
    out.normal = e.dir;
    out.T_used = e.T_dir;
    return out;
  }

  Eval eval_ray(const ChartPoint& p) const {
    const double warm_radius = 0.25;
    const CacheEntry* warm = nullptr;
    double best = warm_radius;
    Eigen::VectorXd pf = p.full();
    for (const auto& e : cache_) {
      double dd = (e.pfull - pf).norm();
      if (dd < best) {
        best = dd;
        warm = &e;
      }
    }
    if (warm && best < 1e-12) return make_eval(*warm);

    ShootOptions sopt;
    sopt.tol = 1e-10;
    sopt.max_distance = 44.0;

    CacheEntry entry;
    entry.pfull = pf;
    if (warm) {
      // re-shoot at the neighbour's validated targets
      ShootingResult rv = detail::shoot_newton(
          *model_, p, ray_point(warm->T_val), warm->dir, warm->L_val, sopt);
      if (rv.converged) {
        entry.B = rv.distance - warm->T_val;
        entry.err = warm->err;
        entry.T_val = warm->T_val;
        entry.L_val = rv.distance;
        if (warm->T_dir > warm->T_val) {
          ShootingResult rd = detail::shoot_newton(*model_, p,
                                                   ray_point(warm->T_dir),
                                                   warm->dir, warm->L_dir, sopt);
          if (rd.converged) {
            entry.dir = rd.initial_direction.full();
            entry.T_dir = warm->T_dir;
            entry.L_dir = rd.distance;
          }
        }
        if (entry.dir.size() == 0) {
          entry.dir = rv.initial_direction.full();
          entry.T_dir = warm->T_val;
          entry.L_dir = rv.distance;
        }
        cache_.push_back(entry);
        return make_eval(cache_.back());
      }
    }

    // Cold start: walk the target up the defining ray in moderate arclength
    // legs, warm-chaining the direction and length. The value is taken from
    // the first leg at comfortably asymptotic distance (truncation ~ e^{-2d}
    // while the shooting floor grows like e^d with the target depth); the
    // direction keeps doubling the distance until it is Cauchy below 1e-7.
    bool have_val = false, have_check = false, have_prev = false;
    Eigen::VectorXd dir_check;
    double d_check = 0.0, B_prev = 0.0;
    ShootingResult res;
    res.converged = false;
    double T = 0.0, T_last = 0.0;
    for (int stage = 0; stage < 20; ++stage) {
      ChartPoint target = ray_point(T);
      Eigen::VectorXd d0 =
          res.converged ? res.initial_direction.full() : (target.full() - pf);
      double L0 = res.converged ? res.distance + (T - T_last)
                                : detail::chord_length(*model_, p, target);
      res = detail::shoot_newton(*model_, p, target, d0, L0, sopt);
      if (!res.converged)
        throw SolverError("busemann field: shooting toward the ray failed",
                          res.residual);
      T_last = T;
      const double dcur = res.distance;
      const double B_here = dcur - T;
      Eigen::VectorXd dir_here = res.initial_direction.full();

      if (dcur >= 12.0) {
        if (!have_val) {
          entry.B = B_here;
          entry.T_val = T;
          entry.L_val = dcur;
          double floor = std::exp(std::min(dcur, 40.0)) * 2e-15;
          entry.err = have_prev ? std::abs(B_here - B_prev) + floor
                                : std::exp(-1.6 * dcur) + floor;
          have_val = true;
        }
        if (!have_check) {
          dir_check = dir_here;
          d_check = dcur;
          have_check = true;
        } else if (dcur >= 1.9 * d_check) {
          double change = metric_norm(*model_, p, dir_here - dir_check);
          if (change < 1e-7) {
            entry.dir = dir_here;
            entry.T_dir = T;
            entry.L_dir = dcur;
            cache_.push_back(entry);
            return make_eval(cache_.back());
          }
          dir_check = dir_here;
          d_check = dcur;
        }
      }
      B_prev = B_here;
      have_prev = true;
      T += 6.0;
    }
    throw SolverError("busemann field: asymptotic direction did not converge",
                      0.0);
  }

  const MetricModel* model_;
  BoundaryDirection xi_;
  mutable GeodesicPath ray_;
  mutable double ray_len_ = 0.0;
  mutable std::vector<CacheEntry> cache_;
};

// ---------------------------------------------------------------------------
// public operations

struct BusemannValue {
  double value = 0.0;
  double error_est = 0.0;
  double T_used = 0.0;
  bool monotone = true;
};

// Estimator B_T = d(x, c(T)) - d(x0, c(T)) along the ray c defining xi,
// evaluated at T/2 and T; nonincreasing in T up to solver noise. Distances
// to the receding targets are warm-chained up the ray in moderate legs.
inline BusemannValue busemann_value(const MetricModel& m,
                                    const BoundaryDirection& xi,
                                    const ChartPoint& x, const ChartPoint& x0,
                                    double T = 20.0) {
  require(T >= 10.0, "busemann_value: T below T_min = 10");
  BusemannField field(m, xi);
  ShootOptions sopt;
  sopt.max_distance = 44.0;
  sopt.tol = 1e-10;

  auto ray_at = [&](double tt) -> ChartPoint {
    if (xi.kind == BoundaryDirection::Kind::Ray) return field.ray_point(tt);
    ChartPoint c = x0;
    c.t += tt;
    return c;
  };
  const ChartPoint anchor =
      xi.kind == BoundaryDirection::Kind::Ray ? xi.base : x0;

  // distance from q to c(T'), chaining T' = 6, 12, ... for warm starts
  struct Chain {
    bool live = false;
    double T = 0.0;
    ShootingResult res;
  };
  auto advance = [&](const ChartPoint& q, Chain& ch, double tt) -> double {
    while (!ch.live || ch.T < tt - 1e-12) {
      // the first leg aims at the ray base, which sits in the working
      // region; deeper targets are reached by warm continuation only
      double Tn = ch.live ? std::min(tt, ch.T + 6.0) : 0.0;
      ChartPoint target = ray_at(Tn);
      Eigen::VectorXd chord = target.full() - q.full();
      if (chord.norm() < 1e-14) {
        ch.res = ShootingResult{};
        ch.res.converged = true;
        Eigen::VectorXd up = Eigen::VectorXd::Zero(m.dim());
        up(0) = 1.0;
        ch.res.initial_direction = TangentVec::at(q, up);
        ch.T = Tn;
        ch.live = true;
        continue;
      }
      // the warm direction is useless once the target crosses to the other
      // side of q (possible on the first legs); restart from the chord then,
      // but keep the triangle-inequality length estimate
      bool warm_ok = ch.live && ch.res.distance > 1e-9 &&
                     metric_dot(m, q, ch.res.initial_direction.full(), chord) > 0.0;
      Eigen::VectorXd d0 = warm_ok ? ch.res.initial_direction.full() : chord;
      double L0 = ch.live
                      ? std::min(detail::chord_length(m, q, target),
                                 ch.res.distance + (Tn - ch.T))
                      : detail::chord_length(m, q, target);
      ch.res = detail::shoot_newton(m, q, target, d0, L0, sopt);
      if (!ch.res.converged)
        throw SolverError("busemann_value: shooting toward the ray failed",
                          ch.res.residual);
      ch.T = Tn;
      ch.live = true;
    }
    return ch.res.distance;
  };

  Chain cx, cx0;
  const bool x0_on_ray = (x0.full() - anchor.full()).norm() < 1e-14;
  auto B_at = [&](double tt) {
    double dx = advance(x, cx, tt);
    double dx0 = x0_on_ray ? tt : advance(x0, cx0, tt);
    return dx - dx0;
  };

  BusemannValue out;
  double Bh = B_at(T / 2.0);
  double Bf = B_at(T);
  out.value = Bf;
  out.error_est = std::abs(Bf - Bh);
  out.T_used = T;
  out.monotone = Bf <= Bh + 1e-8;
  return out;
}

inline HorosphericalFrame busemann_gradient(const MetricModel& m,
                                            const BoundaryDirection& xi,
                                            const ChartPoint& x) {
  return BusemannField(m, xi).frame(x);
}

// Point at arclength t along the asymptotic geodesic from x toward xi;
// positive t moves toward xi and lowers B by t.
inline ChartPoint flow_phi(const MetricModel& m, const BoundaryDirection& xi,
                           const ChartPoint& x, double t) {
  require(std::abs(t) <= 30.0, "flow_phi: |t| beyond supported range");
  if (xi.kind == BoundaryDirection::Kind::SpecialPoint) {
    ChartPoint out = x;
    out.t += t;
    return out;
  }
  BusemannField field(m, xi);
  Eigen::VectorXd nrm = field.normal(x);
  if (t == 0.0) return x;
  return exp_map(m, x, TangentVec::at(x, nrm), t);
}

// ---------------------------------------------------------------------------
// stable Riccati / Jacobi propagation along a ray toward xi

struct RiccatiProfile {
  double step = 0.0;
  std::vector<Eigen::MatrixXd> U;   // at s = k * step, ascending from 0
  std::vector<Eigen::MatrixXd> Ud;  // dU/ds at the same nodes

  Eigen::MatrixXd eval(double s) const {
    const int last = static_cast<int>(U.size()) - 1;
    double w = s / step;
    int k = std::clamp(static_cast<int>(std::floor(w)), 0, last - 1);
    double u = w - k;
    double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * U[k] + (u3 - 2 * u2 + u) * step * Ud[k] +
           (-2 * u3 + 3 * u2) * U[k + 1] + (u3 - u2) * step * Ud[k + 1];
  }
};

struct RiccatiState {
  Eigen::MatrixXd U;      // shape operator at x in the supplied frame
  GeodesicPath along;     // the ray used for the sweep
  RiccatiProfile profile; // U along the ray, s in [0, T_back]
};

namespace detail {

// Backward sweep of U' = U^2 + R_c from U(T_back) = I down to s = 0 along a
// precomputed ray with parallel frame columns.
inline RiccatiProfile riccati_backward(const MetricModel& m,
                                       const GeodesicPath& ray, double T_back,
                                       double step) {
  const int d = m.dim();
  const int n = m.n();
  const int steps = std::max(4, static_cast<int>(std::ceil(T_back / step)));
  const double h = T_back / steps;

  auto rc_at = [&](double s) -> Eigen::MatrixXd {
    Eigen::VectorXd st = ray.sol.eval(s);
    ChartPoint p = ChartPoint::from_full(st.head(d));
    Eigen::VectorXd v = st.segment(d, d);
    // re-orthonormalize the transported frame against the velocity; the
    // curvature operator is sensitive to integrator drift in the columns
    Eigen::MatrixXd F(d, n + 1);
    F.col(0) = v;
    for (int c = 0; c < n; ++c) F.col(c + 1) = st.segment(2 * d + c * d, d);
    Eigen::MatrixXd on = gram_schmidt(metric_eval(m, p), F);
    if (on.cols() < n + 1)
      throw NumericalError("riccati: degenerate transported frame");
    return curvature_operator(m, p, v, on.rightCols(n));
  };

  auto rhs = [&](double s, const Eigen::VectorXd& u) -> Eigen::VectorXd {
    Eigen::Map<const Eigen::MatrixXd> U(u.data(), n, n);
    Eigen::MatrixXd dU = U * U + rc_at(s);
    dU = 0.5 * (dU + dU.transpose()).eval();
    if (!dU.allFinite() || U.norm() > 1e3)
      throw NumericalError("riccati: blow-up, curvature data not negative");
    return Eigen::Map<Eigen::VectorXd>(dU.data(), n * n);
  };

  Eigen::MatrixXd U0 = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd u0 = Eigen::Map<Eigen::VectorXd>(U0.data(), n * n);
  auto nodes = integrate_rk4_grid(rhs, T_back, u0, 0.0, steps);

  RiccatiProfile prof;
  prof.step = h;
  prof.U.resize(steps + 1);
  prof.Ud.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    const auto& nd = nodes[steps - k];  // reorder to ascending s
    Eigen::Map<const Eigen::MatrixXd> U(nd.y.data(), n, n);
    Eigen::Map<const Eigen::MatrixXd> Ud(nd.f.data(), n, n);
    prof.U[k] = 0.5 * (U + U.transpose());
    prof.Ud[k] = 0.5 * (Ud + Ud.transpose());
  }
  return prof;
}

inline Eigen::MatrixXd magnus_step(const RiccatiProfile& prof, double s_from,
                                   double h) {
  static const double off = std::sqrt(3.0) / 6.0;
  if (h <= 0.0)
    return Eigen::MatrixXd::Identity(prof.U.front().rows(),
                                     prof.U.front().cols());
  Eigen::MatrixXd U1 = prof.eval(s_from + (0.5 - off) * h);
  Eigen::MatrixXd U2 = prof.eval(s_from + (0.5 + off) * h);
  Eigen::MatrixXd Om = -0.5 * h * (U1 + U2) +
                       (std::sqrt(3.0) * h * h / 12.0) * (U2 * U1 - U1 * U2);
  return expm(Om);
}

}  // namespace detail

struct StableFlowOptions {
  double T_back = 20.0;       // extra ray length behind the last needed time
  double riccati_step = 0.0125;
  double ray_tol = 1e-12;
  double ray_h_max = 0.025;
};

// Derivative of the horospherical flow along the ray from x toward xi,
// restricted to the horosphere tangent: the stable Jacobi propagator
// J' = -U(s) J in a parallel-transported orthonormal frame.
class StableFlow {
 public:
  StableFlow(const MetricModel& m, const BusemannField& field,
             const ChartPoint& x, const Eigen::MatrixXd& tangent_frame,
             double t_max, const StableFlowOptions& opt = {})
      : model_(&m), t_max_(t_max), opt_(opt) {
    const double total = t_max + opt.T_back;
    Eigen::VectorXd nrm = field.normal(x);
    GeodesicIntegrateOptions go;
    go.h_max = opt.ray_h_max;
    ray_ = integrate_geodesic(m, {x, TangentVec::at(x, nrm)}, total,
                              opt.ray_tol, tangent_frame, go);
    profile_ = detail::riccati_backward(m, ray_, total, opt.riccati_step);
    // cumulative Magnus products on the profile grid covering [0, t_max]
    const int n = m.n();
    grid_step_ = profile_.step;
    int cells = static_cast<int>(std::ceil(t_max / grid_step_)) + 1;
    cum_.resize(cells + 1);
    cum_[0] = Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < cells; ++k)
      cum_[k + 1] =
          detail::magnus_step(profile_, k * grid_step_, grid_step_) * cum_[k];
  }

  Eigen::MatrixXd dphi(double t) const {
    require(t >= 0.0 && t <= t_max_ + 1e-9, "stable flow: t out of range");
    int k = std::min(static_cast<int>(std::floor(t / grid_step_)),
                     static_cast<int>(cum_.size()) - 2);
    return detail::magnus_step(profile_, k * grid_step_, t - k * grid_step_) *
           cum_[k];
  }

  ChartPoint point(double t) const { return ray_.point_at(t); }
  GeodesicState state(double t) const { return ray_.state_at(t); }
  Eigen::MatrixXd frame(double t) const { return ray_.frame_at(t); }
  const RiccatiProfile& profile() const { return profile_; }
  const GeodesicPath& ray() const { return ray_; }

 private:
  const MetricModel* model_;
  double t_max_;
  StableFlowOptions opt_;
  GeodesicPath ray_;
  RiccatiProfile profile_;
  double grid_step_ = 0.0;
  std::vector<Eigen::MatrixXd> cum_;
};

// U at x: backward Riccati along the ray toward xi, seeded with the identity
// at distance T_back; any bounded seed lands on the stable solution.
inline RiccatiState stable_riccati(const MetricModel& m,
                                   const BoundaryDirection& xi,
                                   const ChartPoint& x, double T_back = 20.0) {
  require(T_back >= 10.0, "stable_riccati: T_back below 10");
  BusemannField field(m, xi);
  HorosphericalFrame fr = field.frame(x);
  GeodesicIntegrateOptions go;
  go.h_max = 0.025;
  GeodesicPath ray =
      integrate_geodesic(m, {x, fr.normal}, T_back, 1e-12, fr.tangent, go);
  RiccatiState st;
  st.profile = detail::riccati_backward(m, ray, T_back, 0.0125);
  st.U = st.profile.U.front();
  st.along = std::move(ray);
  return st;
}

// Matrix of D phi_t restricted to the horosphere tangent space, from the
// supplied frame at x to its parallel transport at phi_t(x). For t < 0 the
// inverse propagator from the downstream point is used.
inline Eigen::MatrixXd dflow(const MetricModel& m, const BoundaryDirection& xi,
                             const ChartPoint& x, double t,
                             const HorosphericalFrame& frame) {
  BusemannField field(m, xi);
  if (t >= 0.0) {
    StableFlow flow(m, field, x, frame.tangent, t);
    return flow.dphi(t);
  }
  // move down first, carrying the frame along the same ray
  GeodesicIntegrateOptions go;
  go.h_max = 0.025;
  Eigen::VectorXd nrm = field.normal(x);
  GeodesicPath down = integrate_geodesic(m, {x, TangentVec::at(x, nrm)}, t,
                                         1e-12, frame.tangent, go);
  ChartPoint xd = down.endpoint();
  Eigen::MatrixXd Fd = down.frame_at(t);
  StableFlow flow(m, field, xd, Fd, -t);
  Eigen::MatrixXd J = flow.dphi(-t);
  return J.inverse();
}

}  // namespace horolab
