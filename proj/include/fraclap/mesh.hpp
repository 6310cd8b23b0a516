#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "fraclap/error.hpp"

namespace fraclap {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Conforming simplicial mesh of a bounded domain: segments for n = 1,
/// triangles for n = 2. Immutable once built.
class Mesh {
public:
  Mesh(int dim, std::vector<Point> nodes, std::vector<int> connectivity)
      : dim_(dim), nodes_(std::move(nodes)), conn_(std::move(connectivity)) {
    detail::require(dim_ == 1 || dim_ == 2, "mesh dimension must be 1 or 2");
    const std::size_t nv = static_cast<std::size_t>(dim_ + 1);
    detail::require(!conn_.empty() && conn_.size() % nv == 0, "connectivity size is not a multiple of the element arity");
    std::vector<int> used(nodes_.size(), 0);
    for (int idx : conn_) {
      detail::require(idx >= 0 && static_cast<std::size_t>(idx) < nodes_.size(), "element references an invalid node index");
      used[static_cast<std::size_t>(idx)] = 1;
    }
    for (int u : used) detail::require(u != 0, "every node must belong to at least one element");

    elem_measure_.resize(num_elements());
    measure_ = 0.0;
    for (std::size_t e = 0; e < num_elements(); ++e) {
      const double m = compute_element_measure(e);
      if (!(m > 0.0)) {
        std::ostringstream os;
        os << "degenerate element " << e;
        throw ValidationError(os.str());
      }
      elem_measure_[e] = m;
      measure_ += m;
    }
  }

  int dimension() const { return dim_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_elements() const { return conn_.size() / static_cast<std::size_t>(dim_ + 1); }
  int nodes_per_element() const { return dim_ + 1; }

  const std::vector<Point>& nodes() const { return nodes_; }
  const Point& node(std::size_t i) const { return nodes_[i]; }

  std::span<const int> element(std::size_t e) const {
    const std::size_t nv = static_cast<std::size_t>(dim_ + 1);
    return {conn_.data() + e * nv, nv};
  }

  double element_measure(std::size_t e) const { return elem_measure_[e]; }
  double measure() const { return measure_; }

  /// Largest element diameter.
  double mesh_size() const {
    double h = 0.0;
    for (std::size_t e = 0; e < num_elements(); ++e) {
      auto el = element(e);
      for (std::size_t a = 0; a < el.size(); ++a)
        for (std::size_t b = a + 1; b < el.size(); ++b) {
          const Point& p = nodes_[el[a]];
          const Point& r = nodes_[el[b]];
          h = std::max(h, std::hypot(p.x - r.x, p.y - r.y));
        }
    }
    return h;
  }

private:
  friend Mesh scale_mesh(const Mesh&, double);

  double compute_element_measure(std::size_t e) const {
    auto el = element(e);
    if (dim_ == 1) return std::abs(nodes_[el[1]].x - nodes_[el[0]].x);
    const Point& a = nodes_[el[0]];
    const Point& b = nodes_[el[1]];
    const Point& c = nodes_[el[2]];
    return 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
  }

  int dim_;
  std::vector<Point> nodes_;
  std::vector<int> conn_;
  std::vector<double> elem_measure_;
  double measure_ = 0.0;
};

/// Uniform partition of (a,b) into num_elements segments.
inline Mesh build_interval_mesh(double a, double b, int num_elements) {
  detail::require(std::isfinite(a) && std::isfinite(b) && a < b, "interval mesh needs a < b");
  detail::require(num_elements >= 2, "interval mesh needs at least 2 elements");
  std::vector<Point> nodes(static_cast<std::size_t>(num_elements) + 1);
  const double h = (b - a) / num_elements;
  for (int i = 0; i <= num_elements; ++i) nodes[i].x = (i == num_elements) ? b : a + i * h;
  std::vector<int> conn;
  conn.reserve(2 * static_cast<std::size_t>(num_elements));
  for (int i = 0; i < num_elements; ++i) {
    conn.push_back(i);
    conn.push_back(i + 1);
  }
  return Mesh(1, std::move(nodes), std::move(conn));
}

/// (0,lx) x (0,ly) on an nx-by-ny grid, each cell split into two triangles
/// along its lower-left to upper-right diagonal.
inline Mesh build_rect_mesh(double lx, double ly, int nx, int ny) {
  detail::require(std::isfinite(lx) && std::isfinite(ly) && lx > 0.0 && ly > 0.0, "rectangle sides must be positive");
  detail::require(nx >= 1 && ny >= 1, "rectangle mesh needs at least one cell per direction");
  std::vector<Point> nodes;
  nodes.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      nodes.push_back({i == nx ? lx : lx * i / nx, j == ny ? ly : ly * j / ny});
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<int> conn;
  conn.reserve(6 * static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
      conn.insert(conn.end(), {v00, v10, v11});
      conn.insert(conn.end(), {v00, v11, v01});
    }
  return Mesh(2, std::move(nodes), std::move(conn));
}

/// The contracted domain eps * Omega: node coordinates multiplied by eps.
inline Mesh scale_mesh(const Mesh& m, double eps) {
  detail::require(std::isfinite(eps) && eps > 0.0, "contraction parameter must be positive");
  Mesh out = m;
  for (Point& p : out.nodes_) {
    p.x *= eps;
    p.y *= eps;
  }
  const double factor = std::pow(eps, m.dimension());
  for (double& em : out.elem_measure_) em *= factor;
  out.measure_ = m.measure() * factor;
  return out;
}

}  // namespace fraclap
