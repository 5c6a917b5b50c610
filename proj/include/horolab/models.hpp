#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "horolab/linalg.hpp"
#include "horolab/rng.hpp"
#include "horolab/types.hpp"

namespace horolab {

// Parameters of the solvable model G_A: an n x n contraction generator A
// whose spectrum has real parts in [-2 sqrt(1-tau), -1], the pinching
// parameter tau in (0,1), and the period l of the distinguished translation.
// Moving toward the distinguished boundary point (t -> +infinity) contracts
// horospherical norms.
struct HeintzeParams {
  Eigen::MatrixXd A;
  double tau = 0.0;
  double l = 1.0;
  bool pinched = false;   // spectrum check outcome; non-pinched sets are
                          // accepted and flagged, not rejected
  bool is_diagonal = false;
  Eigen::VectorXd a;      // diagonal of A when is_diagonal

  int n() const { return static_cast<int>(A.rows()); }
};

namespace detail {

inline void finish_params(HeintzeParams& p, double tau_user) {
  const int n = p.n();
  require(n >= 2, "horosphere dimension must be at least 2");
  p.is_diagonal = true;
  for (int i = 0; i < n && p.is_diagonal; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && p.A(i, j) != 0.0) {
        p.is_diagonal = false;
        break;
      }
  if (p.is_diagonal) p.a = p.A.diagonal();

  Eigen::EigenSolver<Eigen::MatrixXd> es(p.A, /*computeEigenvectors=*/false);
  double rmin = 1e300, rmax = -1e300;
  for (int i = 0; i < n; ++i) {
    double r = -es.eigenvalues()(i).real();  // contraction rate
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  if (std::isfinite(tau_user)) {
    p.tau = tau_user;
  } else {
    p.tau = 1.0 - rmax * rmax / 4.0;  // tightest tau matching the spectrum
  }
  const double tol = 1e-9;
  p.pinched = p.tau > 0.0 && p.tau < 1.0 && rmin >= 1.0 - tol &&
              rmax <= 2.0 * std::sqrt(1.0 - p.tau) + tol;
}

}  // namespace detail

inline HeintzeParams heintze_diag(const Eigen::VectorXd& a, double l = 1.0,
                                  double tau = std::nan("")) {
  HeintzeParams p;
  p.A = a.asDiagonal();
  p.l = l;
  detail::finish_params(p, tau);
  return p;
}

inline HeintzeParams heintze_matrix(const Eigen::MatrixXd& A, double l = 1.0,
                                    double tau = std::nan("")) {
  HeintzeParams p;
  p.A = A;
  p.l = l;
  detail::finish_params(p, tau);
  return p;
}

enum class ModelKind { Heintze, Hyperbolic, Perturbed };

// Compactly supported C^2 bump used by the perturbed model.
struct BumpSpec {
  ChartPoint center;
  double radius = 1.0;
};

// A chart metric on R x R^n of the form dt^2 + h_t(y).
//  - Heintze: h_t = (e^{tA})^T e^{tA} applied to dy, flat slices.
//  - Hyperbolic(n): the A = -I special case, constant curvature -1.
//  - Perturbed: a Heintze base with the slice block scaled by
//    exp(2 eps b(p)) on a compactly supported bump b; it coincides with the
//    base outside the bump support.
class MetricModel {
 public:
  ModelKind kind = ModelKind::Hyperbolic;
  HeintzeParams params;
  double eps = 0.0;
  BumpSpec bump;

  static MetricModel heintze(HeintzeParams p) {
    MetricModel m;
    m.kind = ModelKind::Heintze;
    m.params = std::move(p);
    return m;
  }

  static MetricModel hyperbolic(int n) {
    MetricModel m;
    m.kind = ModelKind::Hyperbolic;
    m.params = heintze_diag(Eigen::VectorXd::Constant(n, -1.0));
    return m;
  }

  static MetricModel perturbed(HeintzeParams base, double eps, BumpSpec b) {
    require(b.radius > 0.0, "bump radius must be positive");
    require(b.center.horo_dim() == base.n(), "bump center dimension mismatch");
    MetricModel m;
    m.kind = ModelKind::Perturbed;
    m.params = std::move(base);
    m.eps = eps;
    m.bump = std::move(b);
    return m;
  }

  int n() const { return params.n(); }
  int dim() const { return n() + 1; }

  // bump profile (1 - (r/R)^2)^3 inside radius R, zero outside
  double bump_value(double t, const Eigen::VectorXd& y) const {
    if (kind != ModelKind::Perturbed || eps == 0.0) return 0.0;
    const double dt = t - bump.center.t;
    const double r2 =
        (dt * dt + (y - bump.center.y).squaredNorm()) / (bump.radius * bump.radius);
    if (r2 >= 1.0) return 0.0;
    const double w = 1.0 - r2;
    return w * w * w;
  }

  // true when the metric provably equals the base at distance `pad` around p
  bool base_exact_near(const ChartPoint& p, double pad) const {
    if (kind != ModelKind::Perturbed || eps == 0.0) return true;
    const double dt = p.t - bump.center.t;
    const double r =
        std::sqrt(dt * dt + (p.y - bump.center.y).squaredNorm());
    return r > bump.radius + pad;
  }
};

namespace detail {

// slice block H(t) = (e^{tA})^T e^{tA} and its first two t-derivatives
inline void slice_metric(const HeintzeParams& p, double t, Eigen::MatrixXd* H,
                         Eigen::MatrixXd* Hdot = nullptr,
                         Eigen::MatrixXd* Hddot = nullptr) {
  const int n = p.n();
  if (p.is_diagonal) {
    Eigen::VectorXd w(n), wd(n), wdd(n);
    for (int i = 0; i < n; ++i) {
      w(i) = std::exp(2.0 * p.a(i) * t);
      wd(i) = 2.0 * p.a(i) * w(i);
      wdd(i) = 2.0 * p.a(i) * wd(i);
    }
    *H = w.asDiagonal();
    if (Hdot) *Hdot = wd.asDiagonal();
    if (Hddot) *Hddot = wdd.asDiagonal();
    return;
  }
  Eigen::MatrixXd E = expm(t * p.A);
  *H = E.transpose() * E;
  if (Hdot) *Hdot = p.A.transpose() * (*H) + (*H) * p.A;
  if (Hddot)
    *Hddot = p.A.transpose() * (*Hdot) + (*Hdot) * p.A;
}

}  // namespace detail

// G(p): symmetric positive-definite, with G_tt = 1 and no t-y coupling for
// all model kinds supported here.
inline Eigen::MatrixXd metric_eval(const MetricModel& m, const ChartPoint& p) {
  if (!p.finite()) throw DomainError("metric_eval: non-finite point");
  require(p.horo_dim() == m.n(), "metric_eval: dimension mismatch");
  Eigen::MatrixXd H;
  detail::slice_metric(m.params, p.t, &H);
  const int d = m.dim();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, d);
  G(0, 0) = 1.0;
  if (m.kind == ModelKind::Perturbed && m.eps != 0.0) {
    const double b = m.bump_value(p.t, p.y);
    if (b != 0.0) H *= std::exp(2.0 * m.eps * b);
  }
  G.bottomRightCorner(m.n(), m.n()) = H;
  return G;
}

inline double metric_dot(const MetricModel& m, const ChartPoint& p,
                         const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  Eigen::MatrixXd G = metric_eval(m, p);
  return u.dot(G * v);
}

inline double metric_norm(const MetricModel& m, const ChartPoint& p,
                          const Eigen::VectorXd& u) {
  return std::sqrt(std::max(0.0, metric_dot(m, p, u, u)));
}

// Central finite differences of metric_eval, relative step 1e-4.
inline std::vector<Eigen::MatrixXd> christoffel_fd(const MetricModel& m,
                                                   const ChartPoint& p) {
  const int d = m.dim();
  std::vector<Eigen::MatrixXd> gam(d, Eigen::MatrixXd::Zero(d, d));
  Eigen::VectorXd x = p.full();
  std::vector<Eigen::MatrixXd> dG(d);
  for (int k = 0; k < d; ++k) {
    double h = 1e-4 * (1.0 + std::abs(x(k)));
    volatile double xp = x(k) + h;
    volatile double xm = x(k) - h;
    if (xp == x(k) || xm == x(k))
      throw NumericalError("christoffel: finite-difference step underflow");
    Eigen::VectorXd ep = x, em = x;
    ep(k) += h;
    em(k) -= h;
    dG[k] = (metric_eval(m, ChartPoint::from_full(ep)) -
             metric_eval(m, ChartPoint::from_full(em))) /
            (2.0 * h);
  }
  Eigen::MatrixXd Ginv = metric_eval(m, p).inverse();
  for (int mu = 0; mu < d; ++mu)
    for (int al = 0; al < d; ++al)
      for (int be = al; be < d; ++be) {
        double s = 0.0;
        for (int nu = 0; nu < d; ++nu)
          s += Ginv(mu, nu) * (dG[al](nu, be) + dG[be](al, nu) - dG[nu](al, be));
        gam[mu](al, be) = 0.5 * s;
        gam[mu](be, al) = gam[mu](al, be);
      }
  return gam;
}

// Christoffel symbols Gamma[mu](alpha, beta) of the Levi-Civita connection.
// Closed form for Heintze/Hyperbolic (and for perturbed points whose FD
// stencil stays outside the bump), central differences of metric_eval inside
// the bump.
inline std::vector<Eigen::MatrixXd> christoffel(const MetricModel& m,
                                                const ChartPoint& p) {
  if (!p.finite()) throw DomainError("christoffel: non-finite point");
  const int d = m.dim();
  const int n = m.n();
  const double fd_pad = 2e-4 * (1.0 + std::abs(p.t) + p.y.norm());
  if (!m.base_exact_near(p, fd_pad)) return christoffel_fd(m, p);

  std::vector<Eigen::MatrixXd> gam(d, Eigen::MatrixXd::Zero(d, d));
  Eigen::MatrixXd H, Hd;
  detail::slice_metric(m.params, p.t, &H, &Hd);
  Eigen::MatrixXd W = 0.5 * H.llt().solve(Hd);  // Gamma^i_{t j}
  gam[0].bottomRightCorner(n, n) = -0.5 * Hd;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      gam[i + 1](0, j + 1) = W(i, j);
      gam[i + 1](j + 1, 0) = W(i, j);
    }
  return gam;
}

// Fully lowered curvature tensor R_{mu nu alpha beta} with the convention
// K(u,v) = R(u,v,u,v) / (|u|^2 |v|^2 - <u,v>^2) and K = -1 in Hyperbolic(n).
struct RiemannTensor {
  int d = 0;
  Eigen::VectorXd data;

  explicit RiemannTensor(int dim) : d(dim), data(Eigen::VectorXd::Zero(dim * dim * dim * dim)) {}
  double& at(int m, int n, int a, int b) {
    return data(((m * d + n) * d + a) * d + b);
  }
  double at(int m, int n, int a, int b) const {
    return data(((m * d + n) * d + a) * d + b);
  }
  double contract(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                  const Eigen::VectorXd& w, const Eigen::VectorXd& z) const {
    double s = 0.0;
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) {
        if (u(m) == 0.0 && v(n) == 0.0) continue;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            s += at(m, n, a, b) * u(m) * v(n) * w(a) * z(b);
      }
    return s;
  }
};

// Closed-form curvature of the unperturbed warped metrics dt^2 + h_t.
// Valid wherever the model coincides with its Heintze base.
inline RiemannTensor riemann_analytic(const MetricModel& m, const ChartPoint& p) {
  require(m.base_exact_near(p, 0.0),
          "riemann_analytic: not available inside the bump");
  const int n = m.n();
  Eigen::MatrixXd H, Hd, Hdd;
  detail::slice_metric(m.params, p.t, &H, &Hd, &Hdd);
  Eigen::MatrixXd Rtt = -0.5 * Hdd + 0.25 * Hd * H.llt().solve(Hd);
  RiemannTensor R(n + 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      // R_{t i t j} block with full antisymmetry in the index pairs
      R.at(0, i + 1, 0, j + 1) = Rtt(i, j);
      R.at(i + 1, 0, j + 1, 0) = Rtt(i, j);
      R.at(0, i + 1, j + 1, 0) = -Rtt(i, j);
      R.at(i + 1, 0, 0, j + 1) = -Rtt(i, j);
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          R.at(i + 1, j + 1, k + 1, l + 1) =
              0.25 * (Hd(i, l) * Hd(j, k) - Hd(i, k) * Hd(j, l));
  return R;
}

// Curvature tensor by central differences of christoffel.
inline RiemannTensor riemann_fd(const MetricModel& m, const ChartPoint& p) {
  const int d = m.dim();
  Eigen::VectorXd x = p.full();
  std::vector<std::vector<Eigen::MatrixXd>> dGam(d);
  for (int k = 0; k < d; ++k) {
    double h = 1e-4 * (1.0 + std::abs(x(k)));
    Eigen::VectorXd ep = x, em = x;
    ep(k) += h;
    em(k) -= h;
    auto gp = christoffel(m, ChartPoint::from_full(ep));
    auto gm = christoffel(m, ChartPoint::from_full(em));
    dGam[k].resize(d);
    for (int mu = 0; mu < d; ++mu) dGam[k][mu] = (gp[mu] - gm[mu]) / (2.0 * h);
  }
  auto gam = christoffel(m, p);
  Eigen::MatrixXd G = metric_eval(m, p);
  RiemannTensor R(d);
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          double up = dGam[a][mu](nu, b) - dGam[b][mu](nu, a);
          for (int s = 0; s < d; ++s)
            up += gam[mu](s, a) * gam[s](nu, b) - gam[mu](s, b) * gam[s](nu, a);
          // lower the first index on the fly
          for (int lam = 0; lam < d; ++lam) R.at(lam, nu, a, b) += G(lam, mu) * up;
        }
  return R;
}

inline double sectional_from_riemann(const RiemannTensor& R,
                                     const Eigen::MatrixXd& G,
                                     const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& v,
                                     double degenerate_tol = 1e-10) {
  const double guu = u.dot(G * u);
  const double gvv = v.dot(G * v);
  const double guv = u.dot(G * v);
  const double gram = guu * gvv - guv * guv;
  if (!(gram > degenerate_tol * std::max(1.0, guu * gvv)))
    throw DomainError("sectional curvature: degenerate plane");
  return R.contract(u, v, u, v) / gram;
}

// Sectional curvature of span(u, v) through the finite-difference curvature
// tensor built from christoffel.
inline double sectional_curvature(const MetricModel& m, const ChartPoint& p,
                                  const TangentVec& u, const TangentVec& v) {
  require(u.finite() && v.finite(), "sectional_curvature: non-finite input");
  RiemannTensor R = riemann_fd(m, p);
  return sectional_from_riemann(R, metric_eval(m, p), u.full(), v.full());
}

// Restriction of the curvature operator X -> R(X, v)v to the span of the
// columns of `frame`, expressed in that frame. This is the matrix driving
// Jacobi and Riccati propagation along a geodesic with velocity v.
inline Eigen::MatrixXd curvature_operator(const MetricModel& m,
                                          const ChartPoint& p,
                                          const Eigen::VectorXd& v,
                                          const Eigen::MatrixXd& frame) {
  const int k = static_cast<int>(frame.cols());
  RiemannTensor R = m.base_exact_near(p, 2e-4 * (1.0 + std::abs(p.t) + p.y.norm()))
                        ? riemann_analytic(m, p)
                        : riemann_fd(m, p);
  Eigen::MatrixXd out(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j) {
      double val = R.contract(frame.col(j), v, frame.col(i), v);
      out(i, j) = val;
      out(j, i) = val;
    }
  return out;
}

struct SampleBox {
  ChartPoint lo;
  ChartPoint hi;
};

struct PinchingReport {
  double kappa_min = 0.0;
  double kappa_max = 0.0;
  double tau_est = 0.0;
  bool violation = false;   // kappa_max above -1 + tol
  ChartPoint argmin;
  ChartPoint argmax;
};

// Extremal sampled sectional curvatures over random planes in `box`.
inline PinchingReport pinching_check(const MetricModel& m, const SampleBox& box,
                                     int count, std::uint64_t seed = 12345,
                                     double tol = 1e-3) {
  require(count >= 1, "pinching_check: count must be >= 1");
  CounterRng rng(seed);
  const int d = m.dim();
  PinchingReport rep;
  rep.kappa_min = 1e300;
  rep.kappa_max = -1e300;
  for (int s = 0; s < count; ++s) {
    ChartPoint p(rng.uniform(box.lo.t, box.hi.t), Eigen::VectorXd(m.n()));
    for (int i = 0; i < m.n(); ++i)
      p.y(i) = rng.uniform(box.lo.y(i), box.hi.y(i));
    Eigen::MatrixXd G = metric_eval(m, p);
    Eigen::MatrixXd pair(d, 2);
    pair.col(0) = rng.normal_vector(d);
    pair.col(1) = rng.normal_vector(d);
    Eigen::MatrixXd on = gram_schmidt(G, pair);
    if (on.cols() < 2) {
      --s;  // resample a degenerate draw
      continue;
    }
    RiemannTensor R = riemann_fd(m, p);
    double kappa = sectional_from_riemann(R, G, on.col(0), on.col(1));
    if (kappa < rep.kappa_min) {
      rep.kappa_min = kappa;
      rep.argmin = p;
    }
    if (kappa > rep.kappa_max) {
      rep.kappa_max = kappa;
      rep.argmax = p;
    }
  }
  rep.tau_est = 1.0 - std::abs(rep.kappa_min) / 4.0;
  rep.violation = rep.kappa_max > -1.0 + tol || rep.kappa_min < -4.0 - tol;
  return rep;
}

}  // namespace horolab
