#pragma once

// Closed-form reference values in the upper half-space model of hyperbolic
// space, mapped to the horospherical chart (t, y) <-> (x = y, z = e^t) with
// metric dt^2 + e^{-2t} |dy|^2. Everything here is test-only and independent
// of the library's integration / shooting code paths.

#include <cmath>

#include <Eigen/Dense>

#include "horolab/types.hpp"

namespace oracles {

struct HalfSpacePoint {
  Eigen::VectorXd x;  // boundary-parallel coordinates
  double z = 1.0;     // height
};

inline HalfSpacePoint to_half_space(const horolab::ChartPoint& p) {
  return {p.y, std::exp(p.t)};
}

inline horolab::ChartPoint to_chart(const HalfSpacePoint& q) {
  return horolab::ChartPoint(std::log(q.z), q.x);
}

inline double hyperbolic_distance(const horolab::ChartPoint& a,
                                  const horolab::ChartPoint& b) {
  HalfSpacePoint p = to_half_space(a), q = to_half_space(b);
  double num = (p.x - q.x).squaredNorm() + (p.z - q.z) * (p.z - q.z);
  return std::acosh(1.0 + num / (2.0 * p.z * q.z));
}

// distance between points on a common horosphere {t = s} with chart offset dy
inline double same_horosphere_distance(double s, double dy_norm) {
  return 2.0 * std::asinh(0.5 * std::exp(-s) * dy_norm);
}

// Busemann function toward the finite boundary point xi (z = 0 plane),
// normalized to vanish at x0.
inline double busemann_toward_boundary_point(const Eigen::VectorXd& xi,
                                             const horolab::ChartPoint& p,
                                             const horolab::ChartPoint& x0) {
  HalfSpacePoint a = to_half_space(p), b = to_half_space(x0);
  double va = std::log(((a.x - xi).squaredNorm() + a.z * a.z) / a.z);
  double vb = std::log(((b.x - xi).squaredNorm() + b.z * b.z) / b.z);
  return va - vb;
}

// Unit chart-velocity at p of the geodesic ray from p toward the finite
// boundary point xi.
inline horolab::TangentVec direction_toward_boundary_point(
    const Eigen::VectorXd& xi, const horolab::ChartPoint& p) {
  HalfSpacePoint a = to_half_space(p);
  Eigen::VectorXd dx = xi - a.x;
  double rho_p = dx.norm();
  horolab::TangentVec out;
  out.base = p;
  if (rho_p < 1e-300) {  // straight down
    out.dt = -1.0;
    out.dy = Eigen::VectorXd::Zero(p.horo_dim());
    return out;
  }
  Eigen::VectorXd h = dx / rho_p;
  double rho_c = (rho_p * rho_p - a.z * a.z) / (2.0 * rho_p);
  double R = std::sqrt(rho_c * rho_c + a.z * a.z);
  // unit half-space velocity (d rho, d z) = z (z, rho_c) / R toward xi
  double drho = a.z * a.z / R;
  double dz = a.z * rho_c / R;
  // moving toward xi must increase rho; the formula already has drho > 0
  out.dt = dz / a.z;
  out.dy = drho * h;
  return out;
}

// Endpoint after arclength s along the geodesic from p with unit chart
// velocity v (closed-form circle/vertical integration).
inline horolab::ChartPoint geodesic_endpoint(const horolab::ChartPoint& p,
                                             const horolab::TangentVec& v,
                                             double s) {
  HalfSpacePoint a = to_half_space(p);
  // half-space velocity components
  Eigen::VectorXd vx = v.dy;            // d x / ds
  double vz = v.dt * a.z;               // d z / ds
  double c = vx.norm() / a.z;           // sech(sigma0) * sigma'
  double w = vz / a.z;                  // -tanh(sigma0) * sigma'
  if (c < 1e-14) {                      // vertical geodesic
    HalfSpacePoint out{a.x, a.z * std::exp(w * s)};
    return to_chart(out);
  }
  Eigen::VectorXd h = vx / vx.norm();
  double sp = 1.0;  // sigma' sign; c = sech * sigma' > 0 forces sigma' = +1
  double sigma0 = std::atanh(std::clamp(-w / sp, -1.0 + 1e-16, 1.0 - 1e-16));
  double R = a.z / c;
  double rho_c = -R * std::tanh(sigma0);  // rho measured from a.x along h
  double sigma = sigma0 + sp * s;
  double rho = rho_c + R * std::tanh(sigma);
  double z = R / std::cosh(sigma);
  HalfSpacePoint out{a.x + rho * h, z};
  return to_chart(out);
}

// Ideal endpoint (boundary coordinates) of the ray from p with velocity v;
// only valid when the ray does not go straight up.
inline Eigen::VectorXd ideal_endpoint(const horolab::ChartPoint& p,
                                      const horolab::TangentVec& v) {
  HalfSpacePoint a = to_half_space(p);
  Eigen::VectorXd vx = v.dy;
  double vz = v.dt * a.z;
  double c = vx.norm() / a.z;
  double w = vz / a.z;
  Eigen::VectorXd h = vx / vx.norm();
  double sigma0 = std::atanh(std::clamp(-w, -1.0 + 1e-16, 1.0 - 1e-16));
  double R = a.z / c;
  double rho_c = -R * std::tanh(sigma0);
  return a.x + (rho_c + R) * h;
}

}  // namespace oracles
