#include "bgmpc/qp.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace bgmpc {

const char* to_string(Quantity q) {
  switch (q) {
    case Quantity::setpoint: return "setpoint";
    case Quantity::regulation: return "regulation";
    case Quantity::angle: return "angle";
    case Quantity::frequency: return "frequency";
    case Quantity::hvac: return "hvac";
    case Quantity::wall_temp: return "wall_temp";
    case Quantity::zone_temp: return "zone_temp";
    case Quantity::generic: return "generic";
  }
  return "?";
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::unbounded: return "unbounded";
    case QpStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

QuadraticProgram::QuadraticProgram(int n_vars) : n_(n_vars) {
  if (n_vars <= 0) throw std::invalid_argument("QP needs at least one variable");
  q_ = Eigen::VectorXd::Zero(n_);
  xl_ = Eigen::VectorXd::Constant(n_, -kInf);
  xu_ = Eigen::VectorXd::Constant(n_, kInf);
  names_.resize(static_cast<std::size_t>(n_));
}

void QuadraticProgram::add_quadratic(int i, int j, double coeff) {
  if (i < 0 || i >= n_ || j < 0 || j >= n_)
    throw std::out_of_range("add_quadratic: variable index");
  if (coeff == 0.0) return;
  if (i == j) {
    h_trips_.emplace_back(i, i, 2.0 * coeff);
  } else {
    h_trips_.emplace_back(i, j, coeff);
    h_trips_.emplace_back(j, i, coeff);
  }
}

void QuadraticProgram::add_linear(int i, double coeff) {
  if (i < 0 || i >= n_) throw std::out_of_range("add_linear: variable index");
  q_(i) += coeff;
}

int QuadraticProgram::add_equality(Row row, double rhs, std::string label) {
  const int r = static_cast<int>(eq_rhs_.size());
  for (const auto& [c, v] : row) {
    if (c < 0 || c >= n_) throw std::out_of_range("add_equality: variable index");
    eq_trips_.emplace_back(r, c, v);
  }
  eq_rhs_.push_back(rhs);
  eq_labels_.push_back(label.empty() ? "eq[" + std::to_string(r) + "]" : std::move(label));
  return r;
}

int QuadraticProgram::add_inequality(Row row, double lo, double hi, std::string label) {
  if (lo > hi) throw std::invalid_argument("add_inequality: lo > hi");
  const int r = static_cast<int>(in_lo_.size());
  for (const auto& [c, v] : row) {
    if (c < 0 || c >= n_) throw std::out_of_range("add_inequality: variable index");
    in_trips_.emplace_back(r, c, v);
  }
  in_lo_.push_back(lo);
  in_hi_.push_back(hi);
  in_labels_.push_back(label.empty() ? "ineq[" + std::to_string(r) + "]" : std::move(label));
  return r;
}

void QuadraticProgram::set_bounds(int var, double lo, double hi) {
  if (var < 0 || var >= n_) throw std::out_of_range("set_bounds: variable index");
  xl_(var) = std::max(xl_(var), lo);
  xu_(var) = std::min(xu_(var), hi);
}

void QuadraticProgram::set_name(int var, VarName name) {
  names_.at(static_cast<std::size_t>(var)) = name;
}

std::optional<int> QuadraticProgram::find_variable(Quantity kind, int entity, int time) const {
  for (int i = 0; i < n_; ++i) {
    const auto& nm = names_[static_cast<std::size_t>(i)];
    if (nm.kind == kind && nm.entity == entity && nm.time == time) return i;
  }
  return std::nullopt;
}

Eigen::SparseMatrix<double> QuadraticProgram::hessian() const {
  Eigen::SparseMatrix<double> h(n_, n_);
  h.setFromTriplets(h_trips_.begin(), h_trips_.end());
  return h;
}

Eigen::SparseMatrix<double> QuadraticProgram::eq_matrix() const {
  Eigen::SparseMatrix<double> a(num_equalities(), n_);
  a.setFromTriplets(eq_trips_.begin(), eq_trips_.end());
  return a;
}

Eigen::SparseMatrix<double> QuadraticProgram::in_matrix() const {
  Eigen::SparseMatrix<double> a(num_inequalities(), n_);
  a.setFromTriplets(in_trips_.begin(), in_trips_.end());
  return a;
}

const Eigen::VectorXd& QuadraticProgram::eq_rhs() const {
  eq_rhs_vec_ =
      Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(), static_cast<Eigen::Index>(eq_rhs_.size()));
  return eq_rhs_vec_;
}

double QuadraticProgram::objective_value(const Eigen::VectorXd& x) const {
  double quad = 0.0;
  for (const auto& t : h_trips_) quad += t.value() * x(t.row()) * x(t.col());
  return 0.5 * quad + q_.dot(x) + constant_;
}

void QuadraticProgram::validate() const {
  for (int i = 0; i < n_; ++i)
    if (xl_(i) > xu_(i))
      throw std::invalid_argument("variable " + std::to_string(i) + ": lower bound above upper");
  for (std::size_t r = 0; r < in_lo_.size(); ++r)
    if (in_lo_[r] > in_hi_[r])
      throw std::invalid_argument("inequality " + in_labels_[r] + ": lo > hi");

  if (!h_trips_.empty()) {
    Eigen::SparseMatrix<double> h = hessian();
    double scale = 0.0;
    for (int k = 0; k < h.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it)
        scale = std::max(scale, std::abs(it.value()));
    Eigen::SparseMatrix<double> shifted = h;
    Eigen::SparseMatrix<double> id(n_, n_);
    id.setIdentity();
    shifted += (1e-10 * std::max(1.0, scale)) * id;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(shifted);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("hessian is not positive semidefinite");
  }
}

void QuadraticProgram::dump(std::ostream& out) const {
  out.precision(17);
  out << "# qp-dump v1\n";
  out << "nvar " << n_ << "\n";
  out << "neq " << num_equalities() << " nineq " << num_inequalities() << "\n";
  out << "constant " << constant_ << "\n";
  for (const auto& t : h_trips_)
    if (t.row() <= t.col()) out << "H " << t.row() << " " << t.col() << " " << t.value() << "\n";
  for (int i = 0; i < n_; ++i)
    if (q_(i) != 0.0) out << "q " << i << " " << q_(i) << "\n";
  for (const auto& t : eq_trips_) out << "Aeq " << t.row() << " " << t.col() << " " << t.value() << "\n";
  for (std::size_t r = 0; r < eq_rhs_.size(); ++r) out << "beq " << r << " " << eq_rhs_[r] << "\n";
  for (const auto& t : in_trips_) out << "Ain " << t.row() << " " << t.col() << " " << t.value() << "\n";
  for (std::size_t r = 0; r < in_lo_.size(); ++r)
    out << "lin " << r << " " << in_lo_[r] << " " << in_hi_[r] << "\n";
  for (int i = 0; i < n_; ++i)
    if (xl_(i) != -kInf || xu_(i) != kInf)
      out << "box " << i << " " << xl_(i) << " " << xu_(i) << "\n";
  for (int i = 0; i < n_; ++i) {
    const auto& nm = names_[static_cast<std::size_t>(i)];
    if (nm.kind != Quantity::generic)
      out << "name " << i << " " << to_string(nm.kind) << " " << nm.entity << " " << nm.time
          << " " << nm.unit_scale << "\n";
  }
}

// ---------------------------------------------------------------------------
// Operator-splitting solver.

namespace {

struct Stacked {
  Eigen::SparseMatrix<double> h;  // n x n
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> a;  // m x n, rows: [eq; ineq; boxed vars]
  Eigen::VectorXd l, u;
  std::vector<int> box_var;       // variable index per box row
  int n = 0, m = 0, m_eq = 0, m_in = 0;

  const std::string& label(const QuadraticProgram& qp, int r) const {
    if (r < m_eq) return qp.eq_label(r);
    if (r < m_eq + m_in) return qp.in_label(r - m_eq);
    static thread_local std::string s;
    s = "bounds[var " + std::to_string(box_var[static_cast<std::size_t>(r - m_eq - m_in)]) + "]";
    const auto& nm = qp.name(box_var[static_cast<std::size_t>(r - m_eq - m_in)]);
    if (nm.kind != Quantity::generic)
      s = std::string("bounds[") + to_string(nm.kind) + " entity " + std::to_string(nm.entity) +
          " t " + std::to_string(nm.time) + "]";
    return s;
  }
};

Stacked stack_problem(const QuadraticProgram& qp) {
  Stacked s;
  s.n = qp.num_vars();
  s.m_eq = qp.num_equalities();
  s.m_in = qp.num_inequalities();
  s.h = qp.hessian();
  s.q = qp.linear();

  for (int i = 0; i < s.n; ++i)
    if (qp.lower_bounds()(i) != -kInf || qp.upper_bounds()(i) != kInf) s.box_var.push_back(i);
  const int m_box = static_cast<int>(s.box_var.size());
  s.m = s.m_eq + s.m_in + m_box;

  Eigen::SparseMatrix<double> a_eq = qp.eq_matrix();
  Eigen::SparseMatrix<double> a_in = qp.in_matrix();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(a_eq.nonZeros() + a_in.nonZeros()) +
                static_cast<std::size_t>(m_box));
  for (int k = 0; k < a_eq.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a_eq, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < a_in.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a_in, k); it; ++it)
      trips.emplace_back(s.m_eq + static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  for (int b = 0; b < m_box; ++b)
    trips.emplace_back(s.m_eq + s.m_in + b, s.box_var[static_cast<std::size_t>(b)], 1.0);
  s.a.resize(s.m, s.n);
  s.a.setFromTriplets(trips.begin(), trips.end());

  s.l.resize(s.m);
  s.u.resize(s.m);
  for (int r = 0; r < s.m_eq; ++r) s.l(r) = s.u(r) = qp.eq_rhs()(r);
  for (int r = 0; r < s.m_in; ++r) {
    s.l(s.m_eq + r) = qp.in_lo()[static_cast<std::size_t>(r)];
    s.u(s.m_eq + r) = qp.in_hi()[static_cast<std::size_t>(r)];
  }
  for (int b = 0; b < m_box; ++b) {
    s.l(s.m_eq + s.m_in + b) = qp.lower_bounds()(s.box_var[static_cast<std::size_t>(b)]);
    s.u(s.m_eq + s.m_in + b) = qp.upper_bounds()(s.box_var[static_cast<std::size_t>(b)]);
  }
  return s;
}

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

struct Scaling {
  Eigen::VectorXd d;  // variable scaling, x = d .* x_hat
  Eigen::VectorXd e;  // row scaling
  double c = 1.0;     // cost scaling
};

// Modified Ruiz equilibration of [H A'; A 0] plus cost normalization.
Scaling ruiz_equilibrate(Stacked& s) {
  Scaling sc;
  sc.d = Eigen::VectorXd::Ones(s.n);
  sc.e = Eigen::VectorXd::Ones(s.m);
  sc.c = 1.0;

  for (int pass = 0; pass < 10; ++pass) {
    Eigen::VectorXd cx = Eigen::VectorXd::Zero(s.n);
    Eigen::VectorXd ry = Eigen::VectorXd::Zero(s.m);
    for (int k = 0; k < s.h.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.h, k); it; ++it)
        cx(it.col()) = std::max(cx(it.col()), std::abs(it.value()));
    for (int k = 0; k < s.a.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.a, k); it; ++it) {
        cx(it.col()) = std::max(cx(it.col()), std::abs(it.value()));
        ry(it.row()) = std::max(ry(it.row()), std::abs(it.value()));
      }
    Eigen::VectorXd dx(s.n), dy(s.m);
    for (int i = 0; i < s.n; ++i)
      dx(i) = cx(i) > 0.0 ? 1.0 / std::sqrt(clip(cx(i), 1e-8, 1e8)) : 1.0;
    for (int r = 0; r < s.m; ++r)
      dy(r) = ry(r) > 0.0 ? 1.0 / std::sqrt(clip(ry(r), 1e-8, 1e8)) : 1.0;

    s.h = dx.asDiagonal() * s.h * dx.asDiagonal();
    s.q = dx.cwiseProduct(s.q);
    s.a = dy.asDiagonal() * s.a * dx.asDiagonal();
    sc.d = sc.d.cwiseProduct(dx);
    sc.e = sc.e.cwiseProduct(dy);

    // Cost normalization.
    Eigen::VectorXd hcol = Eigen::VectorXd::Zero(s.n);
    for (int k = 0; k < s.h.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.h, k); it; ++it)
        hcol(it.col()) = std::max(hcol(it.col()), std::abs(it.value()));
    const double mean_h = s.n > 0 ? hcol.sum() / s.n : 0.0;
    double denom = std::max(mean_h, s.q.lpNorm<Eigen::Infinity>());
    if (denom > 0.0) {
      const double gamma = 1.0 / clip(denom, 1e-8, 1e8);
      s.h *= gamma;
      s.q *= gamma;
      sc.c *= gamma;
    }
  }

  for (int r = 0; r < s.m; ++r) {
    if (s.l(r) != -kInf) s.l(r) *= sc.e(r);
    if (s.u(r) != kInf) s.u(r) *= sc.e(r);
  }
  return sc;
}

class KktSolver {
 public:
  void factorize(const Stacked& s, double sigma, const Eigen::VectorXd& rho) {
    const int nn = s.n + s.m;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(s.h.nonZeros() + 2 * s.a.nonZeros() + nn));
    for (int k = 0; k < s.h.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.h, k); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < s.n; ++i) trips.emplace_back(i, i, sigma);
    for (int k = 0; k < s.a.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.a, k); it; ++it) {
        trips.emplace_back(s.n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
        trips.emplace_back(static_cast<int>(it.col()), s.n + static_cast<int>(it.row()),
                           it.value());
      }
    for (int r = 0; r < s.m; ++r) trips.emplace_back(s.n + r, s.n + r, -1.0 / rho(r));
    Eigen::SparseMatrix<double> kkt(nn, nn);
    kkt.setFromTriplets(trips.begin(), trips.end());
    if (first_) {
      ldlt_.analyzePattern(kkt);
      first_ = false;
    }
    ldlt_.factorize(kkt);
    ok_ = ldlt_.info() == Eigen::Success;
  }

  bool ok() const { return ok_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return ldlt_.solve(rhs); }

 private:
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool first_ = true;
  bool ok_ = false;
};

struct Residuals {
  double prim_scaled = kInf, dual_scaled = kInf;
  double prim = kInf, dual = kInf;
};

Residuals compute_residuals(const Stacked& s, const Scaling& sc, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  Residuals r;
  Eigen::VectorXd ax = s.a * x;
  Eigen::VectorXd rp = ax - z;
  Eigen::VectorXd rd = s.h * x + s.q + s.a.transpose() * y;
  r.prim_scaled = rp.size() > 0 ? rp.lpNorm<Eigen::Infinity>() : 0.0;
  r.dual_scaled = rd.lpNorm<Eigen::Infinity>();
  r.prim = rp.size() > 0 ? rp.cwiseQuotient(sc.e).lpNorm<Eigen::Infinity>() : 0.0;
  r.dual = rd.cwiseQuotient(sc.d).lpNorm<Eigen::Infinity>() / sc.c;
  return r;
}

struct PolishResult {
  Eigen::VectorXd x, y;
  double rp = kInf, rd = kInf;
  bool signs_ok = false;
  bool solved = false;
  // Feasible + stationary + sign-consistent at tolerance eps: a full KKT
  // certificate, sufficient for global optimality of a convex program.
  bool certified(double eps) const { return solved && signs_ok && rp <= eps && rd <= eps; }
};

// Equality-KKT solve on one pinned set. sides[r]: 0 inactive, -1 lower,
// +1 upper, 2 equality.
PolishResult solve_pinned(const Stacked& raw, const std::vector<int>& sides, double eps) {
  PolishResult out;
  std::vector<int> active;
  std::vector<double> active_rhs;
  std::vector<int> active_side;
  for (int r = 0; r < raw.m; ++r) {
    const int side = sides[static_cast<std::size_t>(r)];
    if (side == 0) continue;
    active.push_back(r);
    active_rhs.push_back(side == 1 ? raw.u(r) : raw.l(r));
    active_side.push_back(side == 2 ? 0 : side);
  }

  const int ma = static_cast<int>(active.size());
  const int nn = raw.n + ma;
  std::vector<int> row_to_active(static_cast<std::size_t>(raw.m), -1);
  for (int i = 0; i < ma; ++i) row_to_active[static_cast<std::size_t>(active[i])] = i;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> pol;
  // A tiny regularization keeps the system quasi-definite; retry once
  // stronger if the unpivoted factorization stumbles.
  for (double reg : {1e-9, 1e-6}) {
    std::vector<Eigen::Triplet<double>> tr;
    for (int k = 0; k < raw.h.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator hit(raw.h, k); hit; ++hit)
        tr.emplace_back(static_cast<int>(hit.row()), static_cast<int>(hit.col()), hit.value());
    for (int i = 0; i < raw.n; ++i) tr.emplace_back(i, i, reg);
    for (int k = 0; k < raw.a.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator ait(raw.a, k); ait; ++ait) {
        const int ar = row_to_active[static_cast<std::size_t>(ait.row())];
        if (ar < 0) continue;
        tr.emplace_back(raw.n + ar, static_cast<int>(ait.col()), ait.value());
        tr.emplace_back(static_cast<int>(ait.col()), raw.n + ar, ait.value());
      }
    for (int i = 0; i < ma; ++i) tr.emplace_back(raw.n + i, raw.n + i, -reg);
    Eigen::SparseMatrix<double> kpol(nn, nn);
    kpol.setFromTriplets(tr.begin(), tr.end());
    pol.compute(kpol);
    if (pol.info() == Eigen::Success) break;
  }
  if (pol.info() != Eigen::Success) return out;

  Eigen::VectorXd rhs(nn);
  rhs.head(raw.n) = -raw.q;
  for (int i = 0; i < ma; ++i) rhs(raw.n + i) = active_rhs[static_cast<std::size_t>(i)];
  Eigen::VectorXd sv = pol.solve(rhs);
  // Iterative refinement against the unregularized operator; bail out when
  // it stalls (inconsistent or rank-deficient pin set).
  double prev_norm = kInf;
  for (int pass = 0; pass < 10; ++pass) {
    Eigen::VectorXd xs = sv.head(raw.n);
    Eigen::VectorXd ys = sv.tail(ma);
    Eigen::VectorXd axs = raw.a * xs;
    Eigen::VectorXd y_full = Eigen::VectorXd::Zero(raw.m);
    for (int i = 0; i < ma; ++i) y_full(active[static_cast<std::size_t>(i)]) = ys(i);
    Eigen::VectorXd r2(nn);
    r2.head(raw.n) = rhs.head(raw.n) - (raw.h * xs + raw.a.transpose() * y_full);
    for (int i = 0; i < ma; ++i)
      r2(raw.n + i) = rhs(raw.n + i) - axs(active[static_cast<std::size_t>(i)]);
    const double norm = r2.lpNorm<Eigen::Infinity>();
    if (norm < 1e-14 || norm > 0.9 * prev_norm) break;
    prev_norm = norm;
    sv += pol.solve(r2);
  }

  out.x = sv.head(raw.n);
  out.y = Eigen::VectorXd::Zero(raw.m);
  out.signs_ok = true;
  for (int i = 0; i < ma; ++i) {
    const double yv = sv(raw.n + i);
    out.y(active[static_cast<std::size_t>(i)]) = yv;
    if (active_side[static_cast<std::size_t>(i)] < 0 && yv > eps) out.signs_ok = false;
    if (active_side[static_cast<std::size_t>(i)] > 0 && yv < -eps) out.signs_ok = false;
  }
  Eigen::VectorXd ax = raw.a * out.x;
  out.rp = 0.0;
  for (int r = 0; r < raw.m; ++r) {
    if (raw.l(r) != -kInf) out.rp = std::max(out.rp, raw.l(r) - ax(r));
    if (raw.u(r) != kInf) out.rp = std::max(out.rp, ax(r) - raw.u(r));
  }
  out.rd = (raw.h * out.x + raw.q + raw.a.transpose() * out.y).lpNorm<Eigen::Infinity>();
  out.solved = std::isfinite(out.rp) && std::isfinite(out.rd);
  return out;
}

// Pin set guessed from a candidate point, then a few bounded correction
// rounds: drop pinned rows whose multipliers come out wrong-signed, pin
// rows the candidate violates, re-solve. A KKT-certified outcome is a
// global optimum; anything else is only a candidate for screening.
PolishResult attempt_polish(const Stacked& raw, const Eigen::VectorXd& x_cand,
                            const Eigen::VectorXd& y_cand, double eps,
                            int max_rounds = 1) {
  std::vector<int> sides(static_cast<std::size_t>(raw.m), 0);
  const Eigen::VectorXd ax_cand = raw.a * x_cand;
  for (int r = 0; r < raw.m; ++r) {
    const double slack_tol = 1e-5 * (1.0 + std::abs(ax_cand(r)));
    if (raw.l(r) == raw.u(r)) sides[static_cast<std::size_t>(r)] = 2;
    else if (y_cand(r) < 0.0 && raw.l(r) != -kInf && ax_cand(r) - raw.l(r) <= slack_tol)
      sides[static_cast<std::size_t>(r)] = -1;
    else if (y_cand(r) > 0.0 && raw.u(r) != kInf && raw.u(r) - ax_cand(r) <= slack_tol)
      sides[static_cast<std::size_t>(r)] = 1;
  }

  PolishResult out;
  for (int round = 0; round < max_rounds; ++round) {
    out = solve_pinned(raw, sides, eps);
    if (std::getenv("BGMPC_QP_TRACE")) {
      int na = 0;
      for (int v : sides) na += v != 0;
      std::fprintf(stderr, "qp-asrounds round=%d active=%d solved=%d rp=%.3e rd=%.3e signs=%d\n",
                   round, na, out.solved, out.rp, out.rd, out.signs_ok);
    }
    if (!out.solved || out.certified(eps) || round + 1 == max_rounds) return out;

    Eigen::VectorXd ax = raw.a * out.x;
    bool changed = false;
    for (int r = 0; r < raw.m; ++r) {
      auto& side = sides[static_cast<std::size_t>(r)];
      if (side == 2) continue;
      if (side == -1 && out.y(r) > eps) {
        side = 0;
        changed = true;
      } else if (side == 1 && out.y(r) < -eps) {
        side = 0;
        changed = true;
      } else if (side == 0) {
        if (raw.l(r) != -kInf && ax(r) < raw.l(r) - eps) {
          side = -1;
          changed = true;
        } else if (raw.u(r) != kInf && ax(r) > raw.u(r) + eps) {
          side = 1;
          changed = true;
        }
      }
    }
    if (!changed) return out;
  }
  return out;
}

}  // namespace

QpSolution solve(const QuadraticProgram& qp, const QpTolerances& tol,
                 const Eigen::VectorXd* initial, const Eigen::VectorXd* initial_dual) {
  qp.validate();

  // A program with no objective at all is a pure feasibility problem: any
  // feasible point is optimal with zero multipliers. Solve a well-behaved
  // proximal stand-in and translate the answer back.
  if (qp.hessian().nonZeros() == 0 && qp.linear().isZero(0.0)) {
    if (std::getenv("BGMPC_QP_TRACE")) std::fprintf(stderr, "qp-feas special case n=%d\n", qp.num_vars());
    QuadraticProgram aux = qp;
    for (int i = 0; i < qp.num_vars(); ++i) {
      aux.add_quadratic(i, i, 0.5);
      if (initial) aux.add_linear(i, -(*initial)(i));
    }
    QpSolution sol = solve(aux, tol, initial, initial_dual);
    sol.objective = qp.constant();
    if (sol.status == QpStatus::optimal) {
      sol.dual.setZero();
      sol.dual_residual = 0.0;
    }
    return sol;
  }

  Stacked s = stack_problem(qp);
  const Stacked raw = s;  // unscaled copy for polish and final residuals
  const Scaling sc = ruiz_equilibrate(s);

  const double sigma = 1e-6;
  const double alpha = 1.6;
  const int check_every = 25;
  double rho0 = 0.1;
  auto build_rho = [&]() {
    Eigen::VectorXd rho(s.m);
    for (int r = 0; r < s.m; ++r) {
      const bool is_eq = s.l(r) == s.u(r);
      rho(r) = is_eq ? rho0 * 1e3 : rho0;
    }
    return rho;
  };
  Eigen::VectorXd rho = build_rho();

  KktSolver kkt;
  double sig = sigma;
  for (int attempt = 0; attempt < 4; ++attempt) {
    kkt.factorize(s, sig, rho);
    if (kkt.ok()) break;
    sig *= 100.0;
  }
  if (!kkt.ok()) throw std::runtime_error("KKT factorization failed");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(s.n);
  if (initial) {
    if (initial->size() != s.n) throw std::invalid_argument("initial point has wrong size");
    x = initial->cwiseQuotient(sc.d);
  }
  Eigen::VectorXd z = s.a * x;
  for (int r = 0; r < s.m; ++r) z(r) = clip(z(r), s.l(r), s.u(r));
  Eigen::VectorXd y = Eigen::VectorXd::Zero(s.m);
  if (initial_dual) {
    if (initial_dual->size() != s.m)
      throw std::invalid_argument("dual initial point has wrong size");
    y = sc.c * initial_dual->cwiseQuotient(sc.e);
  }

  QpSolution sol;

  // Fast path: an active-set solve seeded from the warm start (or from the
  // equality set alone) certifies most model-predictive resolves in a few
  // factorizations, skipping the splitting iterations entirely.
  {
    Eigen::VectorXd x0 = sc.d.cwiseProduct(x);
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(s.m);
    if (initial_dual) y0 = *initial_dual;
    PolishResult pre = attempt_polish(raw, x0, y0, tol.eps_abs, 25);
    if (pre.certified(tol.eps_abs)) {
      sol.status = QpStatus::optimal;
      sol.primal = pre.x;
      sol.dual = pre.y;
      sol.iterations = 0;
      sol.primal_residual = pre.rp;
      sol.dual_residual = pre.rd;
      sol.objective = qp.objective_value(pre.x);
      return sol;
    }
  }

  Eigen::VectorXd x_prev = x, y_prev = y;
  Residuals res;
  bool converged = false;
  int next_polish = 8 * check_every;
  double last_adapt_worst = kInf;
  int adapt_interval = 4 * check_every;
  int next_adapt = adapt_interval;

  int it = 0;
  for (; it < tol.max_iterations; ++it) {
    x_prev = x;
    y_prev = y;

    Eigen::VectorXd rhs(s.n + s.m);
    rhs.head(s.n) = sig * x - s.q;
    rhs.tail(s.m) = z - y.cwiseQuotient(rho);
    Eigen::VectorXd xv = kkt.solve(rhs);
    Eigen::VectorXd x_tilde = xv.head(s.n);
    Eigen::VectorXd nu = xv.tail(s.m);
    Eigen::VectorXd z_tilde = z + (nu - y).cwiseQuotient(rho);

    x = alpha * x_tilde + (1.0 - alpha) * x;
    Eigen::VectorXd z_mid = alpha * z_tilde + (1.0 - alpha) * z;
    Eigen::VectorXd z_new = z_mid + y.cwiseQuotient(rho);
    for (int r = 0; r < s.m; ++r) z_new(r) = clip(z_new(r), s.l(r), s.u(r));
    y = y + rho.cwiseProduct(z_mid - z_new);
    z = z_new;

    if ((it + 1) % check_every != 0) continue;

    res = compute_residuals(s, sc, x, z, y);
    if (std::getenv("BGMPC_QP_TRACE") && (it + 1) % 500 == 0)
      std::fprintf(stderr, "qp-trace it=%d rho0=%.2e rp_s=%.3e rd_s=%.3e rp=%.3e rd=%.3e\n",
                   it + 1, rho0, res.prim_scaled, res.dual_scaled, res.prim, res.dual);
    if (res.prim_scaled <= tol.eps_abs && res.dual_scaled <= tol.eps_abs) {
      converged = true;
      ++it;
      break;
    }

    // A certified polish from the current iterate ends the solve early and
    // cuts through the slow tail of nearly-degenerate programs.
    if (it + 1 >= next_polish) {
      next_polish *= 2;
      PolishResult pr = attempt_polish(raw, sc.d.cwiseProduct(x),
                                       sc.e.cwiseProduct(y) / sc.c, tol.eps_abs, 12);
      if (pr.certified(tol.eps_abs)) {
        sol.status = QpStatus::optimal;
        sol.primal = pr.x;
        sol.dual = pr.y;
        sol.iterations = it + 1;
        sol.primal_residual = pr.rp;
        sol.dual_residual = pr.rd;
        sol.objective = qp.objective_value(pr.x);
        return sol;
      }
    }

    // Primal infeasibility certificate from the dual update direction.
    {
      Eigen::VectorXd dy = (y - y_prev).cwiseProduct(sc.e) / sc.c;
      const double norm_dy = dy.lpNorm<Eigen::Infinity>();
      if (norm_dy > 1e-14) {
        Eigen::VectorXd v = dy / norm_dy;
        Eigen::VectorXd atv =
            (s.a.transpose() * v.cwiseQuotient(sc.e)).cwiseQuotient(sc.d);
        bool cert = atv.lpNorm<Eigen::Infinity>() <= tol.eps_infeas;
        double support = 0.0;
        for (int r = 0; r < s.m && cert; ++r) {
          const double vp = std::max(v(r), 0.0), vm = std::min(v(r), 0.0);
          const double ur = s.u(r) == kInf ? kInf : s.u(r) / sc.e(r);
          const double lr = s.l(r) == -kInf ? -kInf : s.l(r) / sc.e(r);
          if (vp > tol.eps_infeas && ur == kInf) cert = false;
          else if (vp > 0.0 && ur != kInf) support += ur * vp;
          if (vm < -tol.eps_infeas && lr == -kInf) cert = false;
          else if (vm < 0.0 && lr != -kInf) support += lr * vm;
        }
        if (cert && support <= -tol.eps_infeas) {
          sol.status = QpStatus::infeasible;
          int worst = 0;
          v.cwiseAbs().maxCoeff(&worst);
          sol.message = "primal infeasible; most violated: " + s.label(qp, worst);
          break;
        }
      }
    }

    // Dual infeasibility certificate from the primal update direction.
    {
      Eigen::VectorXd dx = (x - x_prev).cwiseProduct(sc.d);
      const double norm_dx = dx.lpNorm<Eigen::Infinity>();
      if (norm_dx > 1e-14) {
        Eigen::VectorXd w = dx / norm_dx;
        Eigen::VectorXd hw = (s.h * w.cwiseQuotient(sc.d)).cwiseQuotient(sc.d) / sc.c;
        Eigen::VectorXd aw = (s.a * w.cwiseQuotient(sc.d)).cwiseQuotient(sc.e);
        const double qw = (s.q.cwiseQuotient(sc.d) / sc.c).dot(w);
        bool cert = hw.lpNorm<Eigen::Infinity>() <= tol.eps_infeas && qw < -tol.eps_infeas;
        for (int r = 0; r < s.m && cert; ++r) {
          if (s.u(r) != kInf && aw(r) > tol.eps_infeas) cert = false;
          if (s.l(r) != -kInf && aw(r) < -tol.eps_infeas) cert = false;
        }
        if (cert) {
          sol.status = QpStatus::unbounded;
          sol.message = "dual infeasible (objective unbounded below)";
          break;
        }
      }
    }

    // Deterministic rho adaptation: follow the residual ratio, at most one
    // decade at a time, and kick the stepsize whenever progress stalls. The
    // interval backs off after every change so the iteration can settle.
    if (it + 1 >= next_adapt) {
      next_adapt = it + 1 + adapt_interval;
      Eigen::VectorXd ax = s.a * x;
      const double np = std::max({ax.lpNorm<Eigen::Infinity>(),
                                  z.size() > 0 ? z.lpNorm<Eigen::Infinity>() : 0.0, 1e-10});
      Eigen::VectorXd hx = s.h * x;
      Eigen::VectorXd aty = s.a.transpose() * y;
      const double nd = std::max({hx.lpNorm<Eigen::Infinity>(), aty.lpNorm<Eigen::Infinity>(),
                                  s.q.lpNorm<Eigen::Infinity>(), 1e-10});
      const double ratio =
          std::sqrt((res.prim_scaled / np) / std::max(res.dual_scaled / nd, 1e-16));
      const double worst = std::max(res.prim_scaled, res.dual_scaled);
      const bool stalled = worst > 0.8 * last_adapt_worst;
      last_adapt_worst = worst;
      double rho_new = rho0;
      if (ratio > 5.0 || ratio < 0.2) {
        rho_new = rho0 * clip(ratio, 0.1, 10.0);
      } else if (stalled) {
        // Ratio-balanced but barely moving: pull the stepsize back toward
        // the canonical value for a Ruiz-equilibrated problem.
        rho_new = std::sqrt(rho0 * 0.1);
      }
      rho_new = clip(rho_new, 1e-6, 1e6);
      if (rho_new != rho0) {
        rho0 = rho_new;
        rho = build_rho();
        kkt.factorize(s, sig, rho);
        if (!kkt.ok()) throw std::runtime_error("KKT refactorization failed");
        adapt_interval *= 2;
        next_adapt = it + 1 + adapt_interval;
      }
    }
  }

  if (sol.status == QpStatus::infeasible || sol.status == QpStatus::unbounded) {
    sol.iterations = it;
    sol.primal = sc.d.cwiseProduct(x);
    sol.dual = sc.e.cwiseProduct(y) / sc.c;
    sol.objective = qp.objective_value(sol.primal);
    return sol;
  }

  res = compute_residuals(s, sc, x, z, y);
  Eigen::VectorXd x_best = sc.d.cwiseProduct(x);
  Eigen::VectorXd y_best = sc.e.cwiseProduct(y) / sc.c;
  double best_rp = res.prim, best_rd = res.dual;

  PolishResult pr = attempt_polish(raw, x_best, y_best, tol.eps_abs, 12);
  if (pr.certified(tol.eps_abs)) {
    converged = true;
    x_best = pr.x;
    y_best = pr.y;
    best_rp = pr.rp;
    best_rd = pr.rd;
  } else if (pr.solved && pr.signs_ok &&
             std::max(pr.rp, pr.rd) < std::max(best_rp, best_rd)) {
    const double obj_admm = qp.objective_value(x_best);
    const double obj_pol = qp.objective_value(pr.x);
    if (obj_pol <= obj_admm + 1e-6 * (1.0 + std::abs(obj_admm))) {
      x_best = pr.x;
      y_best = pr.y;
      best_rp = pr.rp;
      best_rd = pr.rd;
    }
  }

  res.prim = best_rp;
  res.dual = best_rd;

  sol.status = converged ? QpStatus::optimal : QpStatus::iteration_limit;
  sol.primal = x_best;
  sol.dual = y_best;
  sol.iterations = it;
  sol.primal_residual = res.prim;
  sol.dual_residual = res.dual;
  sol.objective = qp.objective_value(x_best);
  return sol;
}

Eigen::VectorXd variable_slice(const QuadraticProgram& qp, const QpSolution& sol,
                               Quantity kind, std::optional<int> entity, int t_first,
                               int t_last) {
  struct Hit {
    int time;
    int idx;
    double value;
  };
  std::vector<Hit> hits;
  for (int i = 0; i < qp.num_vars(); ++i) {
    const auto& nm = qp.name(i);
    if (nm.kind != kind) continue;
    if (entity && nm.entity != *entity) continue;
    if (nm.time < t_first || nm.time > t_last) continue;
    hits.push_back({nm.time, i, sol.primal(i) * nm.unit_scale});
  }
  if (hits.empty())
    throw std::invalid_argument(std::string("variable_slice: no variables of kind ") +
                                to_string(kind) + " in requested range");
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return a.time != b.time ? a.time < b.time : a.idx < b.idx;
  });
  Eigen::VectorXd out(static_cast<Eigen::Index>(hits.size()));
  for (std::size_t i = 0; i < hits.size(); ++i) out(static_cast<Eigen::Index>(i)) = hits[i].value;
  return out;
}

}  // namespace bgmpc
