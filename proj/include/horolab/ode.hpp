#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "horolab/types.hpp"

namespace horolab {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_max = std::numeric_limits<double>::infinity();
  double h_init = 0.0;  // 0 = automatic
  bool store = true;    // keep dense nodes
  long max_steps = 4000000;
  // applied to the state after every accepted step (projection hooks)
  std::function<void(double, Eigen::VectorXd&)> postprocess;
};

struct OdeNode {
  double u;
  Eigen::VectorXd y;
  Eigen::VectorXd f;
};

// Dense solution: cubic Hermite interpolation between accepted steps.
class OdeSolution {
 public:
  std::vector<OdeNode> nodes;
  double u0 = 0.0, u1 = 0.0;

  bool forward() const { return u1 >= u0; }

  Eigen::VectorXd eval(double u) const {
    if (nodes.size() == 1) return nodes.front().y;
    const bool fw = forward();
    // clamp to the integration range
    if ((fw && u <= nodes.front().u) || (!fw && u >= nodes.front().u))
      return nodes.front().y;
    if ((fw && u >= nodes.back().u) || (!fw && u <= nodes.back().u))
      return nodes.back().y;
    std::size_t lo = 0, hi = nodes.size() - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      if (fw ? (nodes[mid].u <= u) : (nodes[mid].u >= u))
        lo = mid;
      else
        hi = mid;
    }
    const OdeNode& a = nodes[lo];
    const OdeNode& b = nodes[hi];
    const double h = b.u - a.u;
    const double s = (u - a.u) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * a.y + (s3 - 2 * s2 + s) * h * a.f +
           (-2 * s3 + 3 * s2) * b.y + (s3 - s2) * h * b.f;
  }
};

// Embedded Dormand-Prince 5(4) with PI step control.
template <class Rhs>
OdeSolution integrate_rk45(Rhs&& rhs, double u0, Eigen::VectorXd y0, double u1,
                           const OdeOptions& opt = {}) {
  static const double A[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double C[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static const double E[7] = {71.0 / 57600,    0.0,          -71.0 / 16695,
                              71.0 / 1920,     -17253.0 / 339200,
                              22.0 / 525,      -1.0 / 40};

  OdeSolution sol;
  sol.u0 = u0;
  sol.u1 = u1;
  const double span = u1 - u0;
  Eigen::VectorXd f0 = rhs(u0, y0);
  sol.nodes.push_back({u0, y0, f0});
  if (span == 0.0) return sol;
  const double dir = span > 0 ? 1.0 : -1.0;

  double h = opt.h_init > 0 ? opt.h_init : std::min(0.01 * std::abs(span), 0.1);
  h = std::min(h, opt.h_max);

  double u = u0;
  Eigen::VectorXd y = y0, f = f0;
  Eigen::VectorXd k[7];
  double err_prev = 1.0;
  long steps = 0;
  while (dir * (u1 - u) > 0) {
    if (++steps > opt.max_steps)
      throw NumericalError("ode: step budget exhausted at u=" + std::to_string(u));
    if (!(h > (std::abs(u) + std::abs(span)) * 1e-15 + 1e-300))
      throw NumericalError("ode: step size collapse at u=" + std::to_string(u));
    const double hstep = std::min(h, std::abs(u1 - u));
    const double hs = dir * hstep;
    k[0] = f;
    for (int i = 1; i < 7; ++i) {
      Eigen::VectorXd yi = y;
      for (int j = 0; j < i; ++j)
        if (A[i][j] != 0.0) yi += (hs * A[i][j]) * k[j];
      k[i] = rhs(u + C[i] * hs, yi);
    }
    Eigen::VectorXd ynew = y;
    for (int j = 0; j < 6; ++j)
      if (A[6][j] != 0.0) ynew += (hs * A[6][j]) * k[j];
    // k[6] computed at (u+hs, ynew) already by the loop above (C[6]=1, row 6)
    Eigen::VectorXd errv = Eigen::VectorXd::Zero(y.size());
    for (int j = 0; j < 7; ++j)
      if (E[j] != 0.0) errv += (hs * E[j]) * k[j];
    double err = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double sc = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
      double e = errv(i) / sc;
      err += e * e;
    }
    err = std::sqrt(err / y.size());

    if (err <= 1.0) {
      u += hs;
      y = ynew;
      if (opt.postprocess) opt.postprocess(u, y);
      f = opt.postprocess ? rhs(u, y) : Eigen::VectorXd(k[6]);
      if (opt.store) sol.nodes.push_back({u, y, f});
      // PI controller
      double fac = 0.9 * std::pow(err > 1e-30 ? err : 1e-30, -0.7 / 5.0) *
                   std::pow(err_prev, 0.4 / 5.0);
      err_prev = std::max(err, 1e-30);
      h = std::min(std::max(h, hstep) * std::clamp(fac, 0.2, 5.0), opt.h_max);
    } else {
      h = hstep * std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
    }
  }
  if (!opt.store) sol.nodes.push_back({u, y, f});
  return sol;
}

// Fixed-step classical RK4 with node storage; used where the driving data is
// smooth and a predictable grid matters more than adaptivity.
template <class Rhs>
std::vector<OdeNode> integrate_rk4_grid(Rhs&& rhs, double u0,
                                        Eigen::VectorXd y0, double u1,
                                        int steps) {
  std::vector<OdeNode> out;
  out.reserve(steps + 1);
  const double h = (u1 - u0) / steps;
  Eigen::VectorXd y = std::move(y0);
  for (int i = 0; i < steps; ++i) {
    const double u = u0 + i * h;
    Eigen::VectorXd k1 = rhs(u, y);
    out.push_back({u, y, k1});
    Eigen::VectorXd k2 = rhs(u + 0.5 * h, y + 0.5 * h * k1);
    Eigen::VectorXd k3 = rhs(u + 0.5 * h, y + 0.5 * h * k2);
    Eigen::VectorXd k4 = rhs(u + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  out.push_back({u1, y, rhs(u1, y)});
  return out;
}

}  // namespace horolab
