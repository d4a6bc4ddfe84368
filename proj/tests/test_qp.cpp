#include <doctest.h>

#include <sstream>

#include <Eigen/Dense>

#include "bgmpc/qp.hpp"
#include "bgmpc/rng.hpp"

using namespace bgmpc;

namespace {

// Projected gradient on a box-constrained strictly convex QP; the
// independent oracle for solver checks. Runs to a fixed point.
Eigen::VectorXd projected_gradient(const Eigen::MatrixXd& h, const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h)
                               .eigenvalues()
                               .maxCoeff();
  const double step = 1.0 / lipschitz;
  Eigen::VectorXd x = 0.5 * (lo + hi);
  for (int it = 0; it < 2000000; ++it) {
    Eigen::VectorXd g = h * x + q;
    Eigen::VectorXd xn = (x - step * g).cwiseMax(lo).cwiseMin(hi);
    const double move = (xn - x).lpNorm<Eigen::Infinity>();
    x = xn;
    if (move < 1e-12) break;
  }
  return x;
}

// f - g with g(y) = -1/2 x'Hx - support(y); zero at an exact optimum.
double duality_gap(const QuadraticProgram& qp, const QpSolution& sol) {
  Eigen::MatrixXd h(qp.hessian());
  const Eigen::VectorXd& x = sol.primal;
  double support = 0.0;
  int r = 0;
  for (; r < qp.num_equalities(); ++r) support += qp.eq_rhs()(r) * sol.dual(r);
  for (int i = 0; i < qp.num_inequalities(); ++i, ++r) {
    const double y = sol.dual(r);
    if (y > 0) support += qp.in_hi()[static_cast<std::size_t>(i)] * y;
    if (y < 0) support += qp.in_lo()[static_cast<std::size_t>(i)] * y;
  }
  for (int i = 0; i < qp.num_vars(); ++i) {
    if (qp.lower_bounds()(i) == -kInf && qp.upper_bounds()(i) == kInf) continue;
    const double y = sol.dual(r++);
    if (y > 0) support += qp.upper_bounds()(i) * y;
    if (y < 0) support += qp.lower_bounds()(i) * y;
  }
  const double primal = 0.5 * x.dot(h * x) + qp.linear().dot(x);
  const double dual = -0.5 * x.dot(h * x) - support;
  return std::abs(primal - dual);
}

}  // namespace

TEST_CASE("active bound: min x^2 s.t. x >= 1") {
  QuadraticProgram qp(1);
  qp.add_quadratic(0, 0, 1.0);
  qp.set_bounds(0, 1.0, kInf);
  auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.primal(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("unconstrained quadratic lands on the vertex") {
  QuadraticProgram qp(2);
  // (x-3)^2 + (y+1)^2
  qp.add_quadratic(0, 0, 1.0);
  qp.add_linear(0, -6.0);
  qp.add_constant(9.0);
  qp.add_quadratic(1, 1, 1.0);
  qp.add_linear(1, 2.0);
  qp.add_constant(1.0);
  auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.primal(0) == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(sol.primal(1) == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(0.0).scale(1.0).epsilon(1e-7));
}

TEST_CASE("equality-constrained split: min x^2 + y^2 s.t. x + y = 1") {
  QuadraticProgram qp(2);
  qp.add_quadratic(0, 0, 1.0);
  qp.add_quadratic(1, 1, 1.0);
  qp.add_equality({{0, 1.0}, {1, 1.0}}, 1.0, "sum");
  auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.primal(0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(sol.primal(1) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(sol.objective == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("random box QPs match the projected-gradient oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 19);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = rng.gaussian();
    Eigen::MatrixXd h = m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd q(n), lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      q(i) = 3.0 * rng.gaussian();
      const double a = 2.0 * rng.gaussian(), b = 2.0 * rng.gaussian();
      lo(i) = std::min(a, b);
      hi(i) = std::max(a, b);
    }

    QuadraticProgram qp(n);
    for (int i = 0; i < n; ++i) {
      qp.add_quadratic(i, i, 0.5 * h(i, i));
      for (int j = i + 1; j < n; ++j) qp.add_quadratic(i, j, h(i, j));
      qp.add_linear(i, q(i));
      qp.set_bounds(i, lo(i), hi(i));
    }
    auto sol = solve(qp);
    REQUIRE(sol.status == QpStatus::optimal);
    Eigen::VectorXd ref = projected_gradient(h, q, lo, hi);
    CHECK((sol.primal - ref).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(duality_gap(qp, sol) < 1e-6);
  }
}

TEST_CASE("two solves of the same program are bit-identical") {
  Rng rng(7);
  const int n = 12;
  QuadraticProgram qp(n);
  for (int i = 0; i < n; ++i) {
    qp.add_quadratic(i, i, 1.0 + rng.uniform());
    qp.add_linear(i, rng.gaussian());
    qp.set_bounds(i, -1.0, 1.0);
  }
  qp.add_equality({{0, 1.0}, {5, -2.0}}, 0.25);
  auto a = solve(qp);
  auto b = solve(qp);
  REQUIRE(a.status == QpStatus::optimal);
  REQUIRE(a.primal.size() == b.primal.size());
  for (int i = 0; i < n; ++i) CHECK(a.primal(i) == b.primal(i));
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("conflicting constraints are certified infeasible") {
  QuadraticProgram qp(1);
  qp.add_quadratic(0, 0, 1.0);
  qp.add_inequality({{0, 1.0}}, 2.0, kInf, "x_at_least_2");
  qp.set_bounds(0, -kInf, 1.0);
  auto sol = solve(qp);
  CHECK(sol.status == QpStatus::infeasible);
  CHECK(sol.message.find("infeasible") != std::string::npos);
}

TEST_CASE("unbounded direction is certified dual infeasible") {
  QuadraticProgram qp(2);
  qp.add_quadratic(0, 0, 1.0);
  qp.add_linear(1, -1.0);  // -y unbounded below
  qp.set_bounds(1, 0.0, kInf);
  auto sol = solve(qp);
  CHECK(sol.status == QpStatus::unbounded);
}

TEST_CASE("hessian PSD validation by attempted factorization") {
  QuadraticProgram qp(2);
  qp.add_quadratic(0, 0, -1.0);  // concave
  CHECK_THROWS_AS(solve(qp), std::invalid_argument);
}

TEST_CASE("variable slicing by kind, entity and time") {
  // 3 buildings x 3 steps plus one stray generator variable.
  QuadraticProgram qp(10);
  int idx = 0;
  for (int t = 1; t <= 3; ++t)
    for (int b = 1; b <= 3; ++b) {
      qp.set_name(idx, {Quantity::hvac, b, t, 1000.0});
      qp.add_quadratic(idx, idx, 1.0);
      qp.add_linear(idx, -2.0 * (10 * t + b));  // optimum at 10 t + b
      ++idx;
    }
  qp.set_name(9, {Quantity::setpoint, 1, 0, 1.0});
  qp.add_quadratic(9, 9, 1.0);
  auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);

  Eigen::VectorXd one_bldg = variable_slice(qp, sol, Quantity::hvac, 1, 1, 3);
  REQUIRE(one_bldg.size() == 3);
  CHECK(one_bldg(0) == doctest::Approx(11000.0).epsilon(1e-6));  // unit scale applied
  CHECK(one_bldg(2) == doctest::Approx(31000.0).epsilon(1e-6));

  Eigen::VectorXd final_step = variable_slice(qp, sol, Quantity::hvac, std::nullopt, 3, 3);
  REQUIRE(final_step.size() == 3);
  CHECK(final_step(1) == doctest::Approx(32000.0).epsilon(1e-6));

  Eigen::VectorXd all = variable_slice(qp, sol, Quantity::hvac, std::nullopt, 1, 3);
  REQUIRE(all.size() == 9);
  // Assembly order within a time step is preserved.
  CHECK(all(0) == doctest::Approx(11000.0).epsilon(1e-6));
  CHECK(all(8) == doctest::Approx(33000.0).epsilon(1e-6));

  CHECK_THROWS_AS(variable_slice(qp, sol, Quantity::zone_temp, std::nullopt, 1, 3),
                  std::invalid_argument);
}

TEST_CASE("dump writes the documented triplet records") {
  QuadraticProgram qp(2);
  qp.add_quadratic(0, 0, 2.0);
  qp.add_linear(1, -1.0);
  qp.add_equality({{0, 1.0}, {1, 1.0}}, 3.0, "bal");
  qp.add_inequality({{0, 1.0}}, 0.0, 1.0);
  qp.set_bounds(1, 0.0, 5.0);
  qp.set_name(0, {Quantity::setpoint, 1, 0, 1.0});

  std::ostringstream out;
  qp.dump(out);
  const std::string text = out.str();
  CHECK(text.find("# qp-dump v1") != std::string::npos);
  CHECK(text.find("nvar 2") != std::string::npos);
  CHECK(text.find("H 0 0 4") != std::string::npos);  // 1/2 x'Hx convention
  CHECK(text.find("Aeq 0 0 1") != std::string::npos);
  CHECK(text.find("beq 0 3") != std::string::npos);
  CHECK(text.find("lin 0 0 1") != std::string::npos);
  CHECK(text.find("box 1 0 5") != std::string::npos);
  CHECK(text.find("name 0 setpoint 1 0 1") != std::string::npos);
}

TEST_CASE("warm start does not change the answer") {
  QuadraticProgram qp(3);
  for (int i = 0; i < 3; ++i) {
    qp.add_quadratic(i, i, 1.0 + i);
    qp.set_bounds(i, -2.0, 2.0);
  }
  qp.add_linear(0, 1.0);
  qp.add_equality({{0, 1.0}, {1, 1.0}, {2, 1.0}}, 1.5);
  auto cold = solve(qp);
  Eigen::VectorXd hint = cold.primal;
  auto warm = solve(qp, {}, &hint);
  REQUIRE(warm.status == QpStatus::optimal);
  CHECK((warm.primal - cold.primal).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(warm.iterations <= cold.iterations);
}
