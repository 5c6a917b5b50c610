#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace horolab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input (non-finite point, degenerate plane, point off the horosphere).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Breakdown of a numerical scheme (step collapse, FD underflow, eigensolver).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Newton shooting or limit procedure did not converge; carries best residual.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual(residual) {}
  double residual = 0.0;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

// Point (t, y) in a horospherical chart: t is the height along the
// distinguished geodesic direction, y the coordinates on the reference
// horosphere. Horospheres must have dimension n >= 2.
struct ChartPoint {
  double t = 0.0;
  Eigen::VectorXd y;

  ChartPoint() = default;
  ChartPoint(double t_, Eigen::VectorXd y_) : t(t_), y(std::move(y_)) {}

  int horo_dim() const { return static_cast<int>(y.size()); }
  int dim() const { return horo_dim() + 1; }

  Eigen::VectorXd full() const {
    Eigen::VectorXd out(dim());
    out(0) = t;
    out.tail(horo_dim()) = y;
    return out;
  }

  static ChartPoint from_full(const Eigen::VectorXd& v) {
    return ChartPoint(v(0), v.tail(v.size() - 1));
  }

  bool finite() const { return std::isfinite(t) && y.allFinite(); }
};

// Tangent vector (dt, dy) at a chart point.
struct TangentVec {
  ChartPoint base;
  double dt = 0.0;
  Eigen::VectorXd dy;

  TangentVec() = default;
  TangentVec(ChartPoint base_, double dt_, Eigen::VectorXd dy_)
      : base(std::move(base_)), dt(dt_), dy(std::move(dy_)) {}

  Eigen::VectorXd full() const {
    Eigen::VectorXd out(dy.size() + 1);
    out(0) = dt;
    out.tail(dy.size()) = dy;
    return out;
  }

  static TangentVec at(const ChartPoint& p, const Eigen::VectorXd& v) {
    return TangentVec(p, v(0), v.tail(v.size() - 1));
  }

  bool finite() const {
    return base.finite() && std::isfinite(dt) && dy.allFinite();
  }
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw DomainError(msg);
}

}  // namespace horolab
