#include "vps/geometry/least_squares.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "vps/error.hpp"
#include "vps/geometry/robust.hpp"

namespace vps {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Per-residual block index, -1 when uncovered.
struct Layout {
  std::vector<ResidualBlock> blocks;
  std::vector<int> owner;
};

Layout make_layout(const LeastSquaresProblem& problem) {
  Layout layout;
  layout.blocks = problem.residual_blocks();
  layout.owner.assign(static_cast<size_t>(problem.residual_size()), -1);
  for (size_t b = 0; b < layout.blocks.size(); ++b) {
    const auto& block = layout.blocks[b];
    for (Eigen::Index i = block.offset; i < block.offset + block.size; ++i) {
      layout.owner[static_cast<size_t>(i)] = static_cast<int>(b);
    }
  }
  return layout;
}

double cost_of(const Layout& layout, const Eigen::VectorXd& r) {
  double cost = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (layout.owner[static_cast<size_t>(i)] < 0) cost += 0.5 * r(i) * r(i);
  }
  for (const auto& block : layout.blocks) {
    const double n = r.segment(block.offset, block.size).norm();
    cost += block.weight *
            (block.huber_delta > 0.0 ? huber(n, block.huber_delta).loss : 0.5 * n * n);
  }
  return cost;
}

// sqrt of the IRLS weight per residual at the current point.
Eigen::VectorXd sqrt_weights(const Layout& layout, const Eigen::VectorXd& r) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(r.size());
  for (const auto& block : layout.blocks) {
    double weight = block.weight;
    if (block.huber_delta > 0.0) {
      weight *= huber(r.segment(block.offset, block.size).norm(), block.huber_delta).weight;
    }
    w.segment(block.offset, block.size).setConstant(std::sqrt(weight));
  }
  return w;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

double robust_cost(const LeastSquaresProblem& problem, const Eigen::VectorXd& residuals) {
  return cost_of(make_layout(problem), residuals);
}

Triplets numeric_jacobian(const LeastSquaresProblem& problem, const Eigen::VectorXd& x,
                          double step) {
  const Eigen::Index m = problem.residual_size();
  const Eigen::Index n = problem.tangent_size();
  Triplets out;
  Eigen::VectorXd rp(m), rm(m), delta = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    delta(j) = step;
    problem.evaluate(problem.plus(x, delta), rp, nullptr);
    delta(j) = -step;
    problem.evaluate(problem.plus(x, delta), rm, nullptr);
    delta(j) = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double d = (rp(i) - rm(i)) / (2.0 * step);
      if (d != 0.0) out.emplace_back(static_cast<int>(i), static_cast<int>(j), d);
    }
  }
  return out;
}

SolverResult solve_least_squares(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0,
                                 const SolverOptions& options) {
  const Layout layout = make_layout(problem);
  const Eigen::Index m = problem.residual_size();
  const Eigen::Index n = problem.tangent_size();

  SolverResult result;
  result.parameters = x0;

  Eigen::VectorXd r(m);
  problem.evaluate(x0, r, nullptr);
  if (!all_finite(r)) throw NonFiniteError("residuals are not finite at the initial point");
  double cost = cost_of(layout, r);
  result.initial_cost = cost;
  result.final_cost = cost;
  result.cost_history.push_back(cost);
  if (m == 0 || n == 0 || cost == 0.0) {
    result.converged = true;
    return result;
  }

  Eigen::VectorXd x = x0;
  double mu = options.initial_damping;
  double nu = 2.0;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  Eigen::VectorXd r_trial(m);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;

    Triplets triplets;
    if (problem.analytic_jacobian()) {
      problem.evaluate(x, r, &triplets);
    } else {
      problem.evaluate(x, r, nullptr);
      triplets = numeric_jacobian(problem, x, options.numeric_step);
    }
    SparseMatrix jac(m, n);
    jac.setFromTriplets(triplets.begin(), triplets.end());

    const Eigen::VectorXd sw = sqrt_weights(layout, r);
    const SparseMatrix wj = sw.asDiagonal() * jac;
    const Eigen::VectorXd wr = sw.cwiseProduct(r);
    const SparseMatrix hessian = SparseMatrix(wj.transpose()) * wj;
    const Eigen::VectorXd gradient = wj.transpose() * wr;
    if (gradient.lpNorm<Eigen::Infinity>() == 0.0) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd diag = hessian.diagonal();
    for (Eigen::Index i = 0; i < n; ++i) diag(i) = std::clamp(diag(i), 1e-6, 1e32);

    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      SparseMatrix damping(n, n);
      damping.reserve(Eigen::VectorXi::Constant(n, 1));
      for (Eigen::Index i = 0; i < n; ++i) damping.insert(i, i) = mu * diag(i);
      ldlt.compute(hessian + damping);
      if (ldlt.info() != Eigen::Success) {
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e32) {
          stop = true;
          break;
        }
        continue;
      }
      const Eigen::VectorXd step = ldlt.solve(-gradient);
      if (!all_finite(step)) throw NonFiniteError("solver produced a non-finite update");

      const Eigen::VectorXd x_trial = problem.plus(x, step);
      problem.evaluate(x_trial, r_trial, nullptr);
      const double trial_cost =
          all_finite(r_trial) ? cost_of(layout, r_trial) : std::numeric_limits<double>::infinity();
      const double predicted = -(gradient.dot(step) + 0.5 * step.dot(hessian * step));
      const double actual = cost - trial_cost;

      if (std::isfinite(trial_cost) && actual > 0.0) {
        const double rho = predicted > 0.0 ? actual / predicted : 0.5;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        x = x_trial;
        const double previous = cost;
        cost = trial_cost;
        result.cost_history.push_back(cost);
        accepted = true;
        if (actual <= options.relative_tolerance * previous || cost == 0.0) stop = true;
      } else {
        mu *= nu;
        nu *= 2.0;
        // No representable decrease left: at a minimum up to round-off.
        if (mu > 1e32 || step.norm() <= 1e-15 * (x.norm() + 1e-15)) {
          stop = true;
          break;
        }
      }
    }
    if (stop) {
      result.converged = true;
      break;
    }
  }

  result.parameters = x;
  result.final_cost = cost;
  return result;
}

}  // namespace vps
