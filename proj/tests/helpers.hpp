#pragma once

#include <memory>
#include <random>

#include "fraclap/assembly.hpp"
#include "fraclap/mesh.hpp"

namespace testing_util {

inline std::shared_ptr<const fraclap::Mesh> interval(double a, double b, int n) {
  return std::make_shared<const fraclap::Mesh>(fraclap::build_interval_mesh(a, b, n));
}

inline std::shared_ptr<const fraclap::Mesh> rect(double lx, double ly, int nx, int ny) {
  return std::make_shared<const fraclap::Mesh>(fraclap::build_rect_mesh(lx, ly, nx, ny));
}

inline fraclap::EnergyForms forms(std::shared_ptr<const fraclap::Mesh> m, double s, double q, unsigned threads = 0) {
  fraclap::AssemblyOptions o;
  o.threads = threads;
  const int dim = m->dimension();
  return fraclap::build_energy_forms(std::move(m), fraclap::FractionalParams::make(s, q, dim), o);
}

inline fraclap::Vector random_vector(std::size_t n, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> nd(mean, sd);
  fraclap::Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = nd(rng);
  return v;
}

inline fraclap::Vector coordinate(const fraclap::Mesh& m, int axis) {
  fraclap::Vector v(static_cast<Eigen::Index>(m.num_nodes()));
  for (std::size_t i = 0; i < m.num_nodes(); ++i) v[static_cast<Eigen::Index>(i)] = axis == 0 ? m.node(i).x : m.node(i).y;
  return v;
}

}  // namespace testing_util
