#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace vfpp {

struct LmOptions {
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  double cost_tolerance = 1e-12;  // relative cost change
  double step_tolerance = 1e-12;  // step norm
  int max_iterations = 200;
};

struct LmReport {
  int iterations = 0;
  double initial_cost = 0;
  double final_cost = 0;
  bool converged = false;
  /// Cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;
};

/// Problem callbacks for states living on a manifold: `retract` applies a
/// tangent-space step. Cost is half the squared residual norm.
template <typename State>
struct LmProblem {
  std::function<Eigen::VectorXd(const State&)> residuals;
  std::function<Eigen::MatrixXd(const State&)> jacobian;
  std::function<State(const State&, const Eigen::VectorXd&)> retract;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. Only steps that lower
/// the cost are accepted, so the cost history is non-increasing.
template <typename State>
LmReport levenberg_marquardt(State& state, const LmProblem<State>& prob, const LmOptions& opt = {}) {
  LmReport rep;
  Eigen::VectorXd r = prob.residuals(state);
  double cost = 0.5 * r.squaredNorm();
  rep.initial_cost = cost;
  rep.cost_history.push_back(cost);
  double lambda = opt.initial_damping;
  for (int it = 0; it < opt.max_iterations; ++it) {
    rep.iterations = it + 1;
    if (cost == 0.0) {
      rep.converged = true;
      break;
    }
    const Eigen::MatrixXd J = prob.jacobian(state);
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd diag = A.diagonal().cwiseMax(1e-12);
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd Ad = A;
      Ad.diagonal() += lambda * diag;
      const Eigen::VectorXd step = Ad.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= opt.damping_factor;
      } else {
        State cand = prob.retract(state, step);
        Eigen::VectorXd rc = prob.residuals(cand);
        const double cand_cost = 0.5 * rc.squaredNorm();
        if (std::isfinite(cand_cost) && cand_cost < cost) {
          const double rel = (cost - cand_cost) / cost;
          state = std::move(cand);
          r = std::move(rc);
          cost = cand_cost;
          rep.cost_history.push_back(cost);
          lambda = std::max(lambda / opt.damping_factor, 1e-15);
          accepted = true;
          if (rel < opt.cost_tolerance || step.norm() < opt.step_tolerance) rep.converged = true;
        } else {
          if (step.norm() < opt.step_tolerance) {
            // No descent is possible at this resolution: stationary point.
            rep.converged = true;
            break;
          }
          lambda *= opt.damping_factor;
        }
      }
      if (lambda > 1e16) {
        rep.converged = true;
        break;
      }
    }
    if (rep.converged) break;
  }
  rep.final_cost = cost;
  return rep;
}

}  // namespace vfpp
