#include "bgmpc/building.hpp"

#include <stdexcept>

#include "bgmpc/rng.hpp"

namespace bgmpc {

BuildingStateSpace building_matrices(const BuildingParams& p) {
  if (!p.valid()) throw std::invalid_argument("building parameters must be positive");

  BuildingStateSpace ss;
  ss.a << -(1.0 / p.c_wall) * (1.0 / p.r1 + 1.0 / p.r2), 1.0 / (p.c_wall * p.r1),
      1.0 / (p.c_zone * p.r1), -(1.0 / p.c_zone) * (1.0 / p.r1 + 1.0 / p.r_win);
  // Cooling sign: electric power u >= 0 removes mu*u watts from the zone.
  ss.b_u << 0.0, -p.mu_hvac / p.c_zone;
  ss.b_w << 1.0 / (p.c_wall * p.r2), 1.0 / p.c_wall, 0.0,
      1.0 / (p.c_zone * p.r_win), 0.0, 1.0 / p.c_zone;
  return ss;
}

BuildingDisturbance read_disturbance_csv(const std::string& text) {
  auto cols = csv::read_columns(text, {"time_s", "T_amb_C", "Q_sol_W", "Q_int_W"});
  return BuildingDisturbance{StepSeries(cols[0], cols[1]), StepSeries(cols[0], cols[2]),
                             StepSeries(cols[0], cols[3])};
}

BuildingCluster::BuildingCluster(std::vector<BuildingParams> params)
    : params_(std::move(params)) {
  blocks_.reserve(params_.size());
  for (const auto& p : params_) blocks_.push_back(building_matrices(p));
}

Eigen::VectorXd BuildingCluster::derivative(const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& u_kw,
                                            const Eigen::VectorXd& w) const {
  const int n_b = size();
  if (x.size() != 2 * n_b || u_kw.size() != n_b || w.size() != 3 * n_b)
    throw std::invalid_argument("cluster derivative: dimension mismatch");

  Eigen::VectorXd dx(2 * n_b);
  for (int l = 0; l < n_b; ++l) {
    const auto& blk = blocks_[static_cast<std::size_t>(l)];
    dx.segment<2>(2 * l) = blk.a * x.segment<2>(2 * l) +
                           blk.b_u * (kKwToW * u_kw(l)) + blk.b_w * w.segment<3>(3 * l);
  }
  return dx;
}

Eigen::MatrixXd BuildingCluster::dense_a() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * size(), 2 * size());
  for (int l = 0; l < size(); ++l)
    a.block<2, 2>(2 * l, 2 * l) = blocks_[static_cast<std::size_t>(l)].a;
  return a;
}

Eigen::MatrixXd BuildingCluster::dense_b_u_kw() const {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2 * size(), size());
  for (int l = 0; l < size(); ++l)
    b.block<2, 1>(2 * l, l) = kKwToW * blocks_[static_cast<std::size_t>(l)].b_u;
  return b;
}

Eigen::MatrixXd BuildingCluster::dense_b_w() const {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2 * size(), 3 * size());
  for (int l = 0; l < size(); ++l)
    b.block<2, 3>(2 * l, 3 * l) = blocks_[static_cast<std::size_t>(l)].b_w;
  return b;
}

BuildingCluster sample_cluster(const BuildingParams& reference, int n_b, double spread,
                               std::uint64_t seed) {
  if (!reference.valid())
    throw std::invalid_argument("reference building parameters must be positive");
  if (spread < 0.0) throw std::invalid_argument("spread must be >= 0");

  Rng rng(seed);
  auto draw = [&](double mean) {
    if (spread == 0.0) return mean;
    // Resample anything below 1% of the reference value.
    for (;;) {
      const double v = rng.gaussian(mean, spread * mean);
      if (v >= 0.01 * mean) return v;
    }
  };

  std::vector<BuildingParams> params;
  params.reserve(static_cast<std::size_t>(n_b));
  for (int l = 0; l < n_b; ++l) {
    BuildingParams p;
    p.r1 = draw(reference.r1);
    p.r2 = draw(reference.r2);
    p.r_win = draw(reference.r_win);
    p.c_wall = draw(reference.c_wall);
    p.c_zone = draw(reference.c_zone);
    p.mu_hvac = draw(reference.mu_hvac);
    params.push_back(p);
  }
  return BuildingCluster(std::move(params));
}

}  // namespace bgmpc
