#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace vps {

using Triplets = std::vector<Eigen::Triplet<double>>;

// A contiguous run of residuals that is robustified as one unit: its cost is
// weight * huber(||r_block||, huber_delta), or weight * ||r_block||^2 / 2 when
// huber_delta is zero.
struct ResidualBlock {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  double huber_delta = 0.0;
  double weight = 1.0;
};

// Nonlinear least-squares problem over a parameter vector that may live on a
// manifold: `plus` applies a tangent-space step, the Jacobian is taken with
// respect to that step.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;

  virtual Eigen::Index parameter_size() const = 0;
  virtual Eigen::Index tangent_size() const { return parameter_size(); }
  virtual Eigen::Index residual_size() const = 0;

  // Fills `residuals` (pre-sized by the caller) at `x`. When `jacobian` is
  // non-null and analytic_jacobian() is true, appends d residual / d tangent.
  virtual void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& residuals,
                        Triplets* jacobian) const = 0;
  virtual bool analytic_jacobian() const { return false; }

  virtual Eigen::VectorXd plus(const Eigen::VectorXd& x, const Eigen::VectorXd& delta) const {
    return x + delta;
  }

  // Residuals not covered by any block are plain squares with weight one.
  virtual std::vector<ResidualBlock> residual_blocks() const { return {}; }
};

struct SolverOptions {
  int max_iterations = 100;
  // Stop once an accepted step lowers the cost by less than this fraction.
  double relative_tolerance = 1e-10;
  double initial_damping = 1e-4;
  // Central-difference step for problems without analytic derivatives.
  double numeric_step = 1e-6;
};

struct SolverResult {
  Eigen::VectorXd parameters;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  // Cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;
};

// Levenberg-Marquardt with Marquardt diagonal scaling and IRLS weights for
// robust blocks. Throws NonFiniteError on non-finite residuals at the start
// or non-finite steps.
SolverResult solve_least_squares(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0,
                                 const SolverOptions& options = {});

// Robust cost of a residual vector under the problem's block layout.
double robust_cost(const LeastSquaresProblem& problem, const Eigen::VectorXd& residuals);

// Central-difference Jacobian in the tangent space.
Triplets numeric_jacobian(const LeastSquaresProblem& problem, const Eigen::VectorXd& x,
                          double step = 1e-6);

// Problem built from callables; Euclidean parameters, numeric derivatives
// unless a Jacobian callable is supplied.
class FunctionProblem : public LeastSquaresProblem {
 public:
  using ResidualFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
  using JacobianFn = std::function<void(const Eigen::VectorXd&, Triplets&)>;

  FunctionProblem(Eigen::Index parameters, Eigen::Index residuals, ResidualFn fn,
                  JacobianFn jacobian = nullptr, std::vector<ResidualBlock> blocks = {})
      : parameters_(parameters),
        residuals_(residuals),
        fn_(std::move(fn)),
        jacobian_(std::move(jacobian)),
        blocks_(std::move(blocks)) {}

  Eigen::Index parameter_size() const override { return parameters_; }
  Eigen::Index residual_size() const override { return residuals_; }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Triplets* jac) const override {
    fn_(x, r);
    if (jac != nullptr && jacobian_) jacobian_(x, *jac);
  }
  bool analytic_jacobian() const override { return static_cast<bool>(jacobian_); }
  std::vector<ResidualBlock> residual_blocks() const override { return blocks_; }

 private:
  Eigen::Index parameters_;
  Eigen::Index residuals_;
  ResidualFn fn_;
  JacobianFn jacobian_;
  std::vector<ResidualBlock> blocks_;
};

}  // namespace vps
