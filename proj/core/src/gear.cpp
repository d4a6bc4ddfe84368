#include "bgmpc/gear.hpp"

#include <Eigen/LU>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bgmpc {

namespace {

long long binom(int n, int k) {
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

GearScheme GearScheme::of_order(int s) {
  if (s < 1 || s > 6)
    throw std::invalid_argument("Gear order must be in 1..6, got " + std::to_string(s));

  // sum 1/i = hp/hq exactly.
  long long hq = 1;
  for (int i = 1; i <= s; ++i) hq = std::lcm(hq, static_cast<long long>(i));
  long long hp = 0;
  for (int i = 1; i <= s; ++i) hp += hq / i;

  GearScheme g;
  g.order = s;
  g.beta0 = static_cast<double>(hq) / static_cast<double>(hp);
  g.alphas.resize(static_cast<std::size_t>(s));
  for (int i = 1; i <= s; ++i) {
    // sum_{j=i..s} C(j,i)/j = sp/sq exactly.
    long long sq = 1;
    for (int j = i; j <= s; ++j) sq = std::lcm(sq, static_cast<long long>(j));
    long long sp = 0;
    for (int j = i; j <= s; ++j) sp += binom(j, i) * (sq / j);
    const double sign = (i % 2 == 1) ? 1.0 : -1.0;
    g.alphas[static_cast<std::size_t>(i - 1)] =
        sign * static_cast<double>(hq * sp) / static_cast<double>(hp * sq);
  }
  return g;
}

DiscreteGridModel::DiscreteGridModel(const GridDae& dae, double h_g, const GearScheme& scheme)
    : dae_(&dae), h_(h_g), scheme_(scheme) {
  if (h_g <= 0.0) throw std::invalid_argument("grid step h_g must be positive");
  pencil_ = dae.e() - (h_ * scheme_.beta0) * dae.a_linear();
  pencil_.makeCompressed();
  lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  lu_->analyzePattern(pencil_);
  lu_->factorize(pencil_);
  if (lu_->info() != Eigen::Success)
    throw std::runtime_error("grid pencil (E - h beta0 A) is singular at h_g = " +
                             std::to_string(h_g));
}

Eigen::VectorXd DiscreteGridModel::step(std::span<const Eigen::VectorXd> history,
                                        const Eigen::VectorXd& u_g,
                                        const Eigen::VectorXd& u_b_kw,
                                        const Eigen::VectorXd& w) const {
  const int s = scheme_.order;
  if (static_cast<int>(history.size()) < s)
    throw std::invalid_argument("grid step needs s history states");

  Eigen::VectorXd rhs =
      (h_ * scheme_.beta0) * (dae_->a_ub() * u_b_kw + dae_->b_ug() * u_g + dae_->b_wg() * w);
  for (int i = 1; i <= s; ++i)
    rhs += scheme_.alphas[static_cast<std::size_t>(i - 1)] *
           (dae_->e() * history[static_cast<std::size_t>(i - 1)]);
  return lu_->solve(rhs);
}

DiscreteBuildingModel::DiscreteBuildingModel(const BuildingCluster& cluster, double h_b,
                                             const GearScheme& scheme)
    : cluster_(&cluster), h_(h_b), scheme_(scheme) {
  if (h_b <= 0.0) throw std::invalid_argument("building step h_b must be positive");
  const int n_b = cluster.size();
  pencils_.reserve(static_cast<std::size_t>(n_b));
  abar_.reserve(static_cast<std::size_t>(n_b));
  for (int l = 0; l < n_b; ++l) {
    Eigen::Matrix2d p = Eigen::Matrix2d::Identity() - (h_ * scheme_.beta0) * cluster.block(l).a;
    if (p.determinant() == 0.0)
      throw std::runtime_error("building pencil singular for building " + std::to_string(l + 1));
    pencils_.push_back(p);
    abar_.push_back(p.inverse());
  }
}

Eigen::VectorXd DiscreteBuildingModel::step(std::span<const Eigen::VectorXd> history,
                                            const Eigen::VectorXd& u_kw,
                                            const Eigen::VectorXd& w) const {
  const int s = scheme_.order;
  const int n_b = cluster_->size();
  if (static_cast<int>(history.size()) < s)
    throw std::invalid_argument("building step needs s history states");
  if (u_kw.size() != n_b || w.size() != 3 * n_b)
    throw std::invalid_argument("building step: input dimension mismatch");

  Eigen::VectorXd x(2 * n_b);
  const double hb0 = h_ * scheme_.beta0;
  for (int l = 0; l < n_b; ++l) {
    const auto& blk = cluster_->block(l);
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    for (int i = 1; i <= s; ++i)
      acc += scheme_.alphas[static_cast<std::size_t>(i - 1)] *
             history[static_cast<std::size_t>(i - 1)].segment<2>(2 * l);
    acc += hb0 * (blk.b_u * (kKwToW * u_kw(l)) + blk.b_w * w.segment<3>(3 * l));
    x.segment<2>(2 * l) = abar_[static_cast<std::size_t>(l)] * acc;
  }
  return x;
}

}  // namespace bgmpc
