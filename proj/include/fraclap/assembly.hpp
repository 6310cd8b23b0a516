#pragma once

// Galerkin forms for continuous piecewise-linear functions:
//
//   a(u,v) = 1/2 * int_{Omega x Omega} (u(x)-u(y)) (v(x)-v(y)) / |x-y|^{n+2s} dx dy
//   m(u,v) = int_Omega u v dx
//
// K is assembled over element pairs. Disjoint pairs use a tensor product of
// the element rules. Pairs that touch (identical, common edge, common
// vertex) are mapped to the unit cube so that the singular directions factor
// out as powers of a radial variable, which are integrated in closed form.
// Every local block is a positively weighted sum of outer products d d^T, so
// K is symmetric positive semidefinite and K * 1 = 0 up to rounding.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "fraclap/error.hpp"
#include "fraclap/mesh.hpp"
#include "fraclap/parallel.hpp"
#include "fraclap/params.hpp"
#include "fraclap/quadrature.hpp"

namespace fraclap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr std::size_t kMaxNodes1D = 2049;  // 2048 elements
inline constexpr std::size_t kMaxNodes2D = 441;   // 20 x 20 cells

/// Below this magnitude |u|^{q-2} is evaluated at the clamp (only matters for q < 2).
inline constexpr double kWeightClamp = 1e-12;

struct AssemblyOptions {
  int gauss_order = 4;      ///< points per direction for element and far-pair rules
  int singular_levels = 2;  ///< composite pieces per direction in touching-pair rules
  unsigned threads = 0;     ///< 0 = hardware concurrency
};

/// Nodal coefficients of a P1 function on a mesh.
struct DiscreteFunction {
  std::shared_ptr<const Mesh> mesh;
  Vector coeffs;

  DiscreteFunction() = default;
  DiscreteFunction(std::shared_ptr<const Mesh> m, Vector c) : mesh(std::move(m)), coeffs(std::move(c)) {
    detail::require(mesh != nullptr, "discrete function needs a mesh");
    detail::require(static_cast<std::size_t>(coeffs.size()) == mesh->num_nodes(), "coefficient count must equal node count");
    detail::require(coeffs.allFinite(), "coefficients must be finite");
  }

  static DiscreteFunction constant(std::shared_ptr<const Mesh> m, double value) {
    const auto n = static_cast<Eigen::Index>(m->num_nodes());
    return DiscreteFunction(std::move(m), Vector::Constant(n, value));
  }
};

/// Per-element quadrature points, physical weights and basis values.
struct QuadTable {
  int points_per_element = 0;
  int nodes_per_element = 0;
  std::vector<Point> x;       // [elem * ppe + k]
  std::vector<double> w;      // physical weights
  std::vector<double> phi;    // [(elem * ppe + k) * npe + a]
  std::vector<int> conn;      // [elem * npe + a]

  std::size_t num_elements() const { return conn.size() / static_cast<std::size_t>(nodes_per_element); }
  std::size_t num_points() const { return w.size(); }

  /// Value of the P1 function `u` at every quadrature point.
  Vector evaluate(const Vector& u) const {
    Vector out(static_cast<Eigen::Index>(num_points()));
    const std::size_t ppe = points_per_element, npe = nodes_per_element;
    for (std::size_t e = 0; e < num_elements(); ++e)
      for (std::size_t k = 0; k < ppe; ++k) {
        const std::size_t p = e * ppe + k;
        double v = 0.0;
        for (std::size_t a = 0; a < npe; ++a) v += phi[p * npe + a] * u[conn[e * npe + a]];
        out[static_cast<Eigen::Index>(p)] = v;
      }
    return out;
  }
};

inline QuadTable build_quad_table(const Mesh& mesh, int gauss_order = 4) {
  QuadTable t;
  const int npe = mesh.nodes_per_element();
  t.nodes_per_element = npe;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e)
    for (int v : mesh.element(e)) t.conn.push_back(v);

  if (mesh.dimension() == 1) {
    const quad::Rule1D r = quad::gauss_legendre(gauss_order);
    t.points_per_element = static_cast<int>(r.size());
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      auto el = mesh.element(e);
      const double x0 = mesh.node(el[0]).x, x1 = mesh.node(el[1]).x;
      for (std::size_t k = 0; k < r.size(); ++k) {
        t.x.push_back({x0 + r.x[k] * (x1 - x0), 0.0});
        t.w.push_back(r.w[k] * mesh.element_measure(e));
        t.phi.push_back(1.0 - r.x[k]);
        t.phi.push_back(r.x[k]);
      }
    }
  } else {
    const quad::RuleTri r = quad::triangle_degree5();
    t.points_per_element = static_cast<int>(r.size());
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      auto el = mesh.element(e);
      const Point& a = mesh.node(el[0]);
      const Point& b = mesh.node(el[1]);
      const Point& c = mesh.node(el[2]);
      for (std::size_t k = 0; k < r.size(); ++k) {
        const double l1 = r.x[k][0], l2 = r.x[k][1], l0 = 1.0 - l1 - l2;
        t.x.push_back({l0 * a.x + l1 * b.x + l2 * c.x, l0 * a.y + l1 * b.y + l2 * c.y});
        t.w.push_back(2.0 * r.w[k] * mesh.element_measure(e));
        t.phi.insert(t.phi.end(), {l0, l1, l2});
      }
    }
  }
  return t;
}

namespace detail {

struct ElementGeom {
  int nv = 0;
  std::array<int, 3> node{};
  std::array<Point, 3> p{};
  std::array<std::array<double, 2>, 3> grad{};  // gradient of each local basis function
};

inline ElementGeom element_geom(const Mesh& mesh, std::size_t e) {
  ElementGeom g;
  auto el = mesh.element(e);
  g.nv = static_cast<int>(el.size());
  for (int a = 0; a < g.nv; ++a) {
    g.node[a] = el[a];
    g.p[a] = mesh.node(el[a]);
  }
  if (g.nv == 2) {
    const double h = g.p[1].x - g.p[0].x;
    g.grad[0] = {-1.0 / h, 0.0};
    g.grad[1] = {1.0 / h, 0.0};
  } else {
    const double x0 = g.p[0].x, y0 = g.p[0].y;
    const double x1 = g.p[1].x, y1 = g.p[1].y;
    const double x2 = g.p[2].x, y2 = g.p[2].y;
    const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    g.grad[0] = {(y1 - y2) / det, (x2 - x1) / det};
    g.grad[1] = {(y2 - y0) / det, (x0 - x2) / det};
    g.grad[2] = {(y0 - y1) / det, (x1 - x0) / det};
  }
  return g;
}

/// Local contribution of one element pair, over the union of their nodes.
struct PairBlock {
  int count = 0;
  std::array<int, 6> node{};
  std::array<double, 36> a{};  // row-major count x count, only the leading block is used

  double& at(int i, int j) { return a[static_cast<std::size_t>(i * 6 + j)]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i * 6 + j)]; }

  void add_outer(const std::array<double, 6>& d, double w) {
    for (int i = 0; i < count; ++i) {
      const double wi = w * d[i];
      for (int j = i; j < count; ++j) at(i, j) += wi * d[j];
    }
  }

  void symmetrize_from_upper() {
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < i; ++j) at(i, j) = at(j, i);
  }
};

/// Gradients of the pair's local basis functions, indexed by union position;
/// zero for nodes not on the element.
struct UnionGradients {
  std::array<std::array<double, 2>, 6> ge{};
  std::array<std::array<double, 2>, 6> gf{};
};

inline void build_union(const ElementGeom& e, const ElementGeom& f, PairBlock& blk, UnionGradients& ug,
                        std::array<int, 3>& pos_e, std::array<int, 3>& pos_f) {
  blk.count = 0;
  for (int a = 0; a < e.nv; ++a) {
    pos_e[a] = blk.count;
    blk.node[blk.count] = e.node[a];
    ug.ge[blk.count] = e.grad[a];
    ug.gf[blk.count] = {0.0, 0.0};
    ++blk.count;
  }
  for (int b = 0; b < f.nv; ++b) {
    int found = -1;
    for (int a = 0; a < e.nv; ++a)
      if (e.node[a] == f.node[b]) found = pos_e[a];
    if (found >= 0) {
      pos_f[b] = found;
      ug.gf[found] = f.grad[b];
    } else {
      pos_f[b] = blk.count;
      blk.node[blk.count] = f.node[b];
      ug.ge[blk.count] = {0.0, 0.0};
      ug.gf[blk.count] = f.grad[b];
      ++blk.count;
    }
  }
}

inline void validate_options(const AssemblyOptions& opts) {
  require(opts.gauss_order >= 1 && opts.gauss_order <= 16, "Gauss order must be in [1,16]");
  require(opts.singular_levels >= 1, "singular levels must be at least 1");
}

class GagliardoAssembler {
public:
  GagliardoAssembler(const Mesh& mesh, const FractionalParams& params, const AssemblyOptions& opts)
      : mesh_(mesh), s_(params.s), n_(mesh.dimension()), opts_(opts), table_(build_quad_table(mesh, opts.gauss_order)),
        sing_(quad::composite_gauss(opts.gauss_order, std::max(1, opts.singular_levels))) {
    geoms_.reserve(mesh.num_elements());
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) geoms_.push_back(element_geom(mesh, e));
    half_exp_ = -0.5 * (n_ + 2.0 * s_);
  }

  Matrix assemble() const {
    const std::size_t ne = mesh_.num_elements();
    const auto nn = static_cast<Eigen::Index>(mesh_.num_nodes());
    Matrix K = Matrix::Zero(nn, nn);
    const std::size_t chunk = 32;
    std::vector<std::vector<PairBlock>> rows(chunk);
    for (std::size_t start = 0; start < ne; start += chunk) {
      const std::size_t stop = std::min(ne, start + chunk);
      parallel_for(stop - start, opts_.threads, [&](std::size_t k) {
        const std::size_t e = start + k;
        auto& out = rows[k];
        out.clear();
        out.reserve(ne - e);
        for (std::size_t f = e; f < ne; ++f) out.push_back(pair_block(e, f));
      });
      // Fixed merge order: element e ascending, then partner f ascending.
      for (std::size_t k = 0; k < stop - start; ++k) {
        for (std::size_t idx = 0; idx < rows[k].size(); ++idx) {
          const PairBlock& b = rows[k][idx];
          const double factor = (idx == 0) ? 1.0 : 2.0;  // f == e first; other pairs count twice
          for (int i = 0; i < b.count; ++i)
            for (int j = 0; j < b.count; ++j) K(b.node[i], b.node[j]) += factor * b.at(i, j);
        }
      }
    }
    return K;
  }

  PairBlock pair_block(std::size_t e, std::size_t f) const {
    const ElementGeom& ge = geoms_[e];
    const ElementGeom& gf = geoms_[f];
    PairBlock blk;
    UnionGradients ug;
    std::array<int, 3> pos_e{}, pos_f{};
    build_union(ge, gf, blk, ug, pos_e, pos_f);
    const int shared = ge.nv + gf.nv - blk.count;
    if (e == f) {
      if (n_ == 1)
        identical_1d(ge, blk);
      else
        identical_2d(ge, blk);
    } else if (shared == 0) {
      disjoint(e, f, pos_e, pos_f, blk);
    } else if (n_ == 1) {
      adjacent_1d(ge, gf, ug, blk);
    } else if (shared == 2) {
      common_edge_2d(ge, gf, ug, blk);
    } else {
      common_vertex_2d(ge, gf, ug, blk);
    }
    blk.symmetrize_from_upper();
    return blk;
  }

private:
  double kernel(double dx, double dy) const { return std::pow(dx * dx + dy * dy, half_exp_); }

  // Tensor rule; block structure [A_ee, A_ef; A_fe, A_ff] with
  // A_ee = 1/2 sum_x rowsum(x) phi(x) phi(x)^T, A_ef = -1/2 Phi_x^T Kq Phi_y.
  void disjoint(std::size_t e, std::size_t f, const std::array<int, 3>& pos_e, const std::array<int, 3>& pos_f,
                PairBlock& blk) const {
    const int ppe = table_.points_per_element;
    const int npe = table_.nodes_per_element;
    std::array<double, 16 * 16> kq{};  // ppe <= 16 for supported orders
    std::vector<double> kq_dyn;
    double* Kq = kq.data();
    if (ppe > 16) {
      kq_dyn.assign(static_cast<std::size_t>(ppe * ppe), 0.0);
      Kq = kq_dyn.data();
    }
    const std::size_t be = e * ppe, bf = f * ppe;
    std::array<double, 64> rowsum{}, colsum{};
    for (int i = 0; i < ppe; ++i) {
      const Point& xi = table_.x[be + i];
      for (int j = 0; j < ppe; ++j) {
        const Point& yj = table_.x[bf + j];
        const double v = table_.w[be + i] * table_.w[bf + j] * kernel(xi.x - yj.x, xi.y - yj.y);
        Kq[i * ppe + j] = v;
        rowsum[i] += v;
        colsum[j] += v;
      }
    }
    for (int i = 0; i < ppe; ++i) {
      const double* ph = &table_.phi[(be + i) * npe];
      for (int a = 0; a < npe; ++a)
        for (int b = 0; b < npe; ++b) {
          const int ia = pos_e[a], ib = pos_e[b];
          if (ia <= ib) blk.at(ia, ib) += 0.5 * rowsum[i] * ph[a] * ph[b];
        }
    }
    for (int j = 0; j < ppe; ++j) {
      const double* ph = &table_.phi[(bf + j) * npe];
      for (int a = 0; a < npe; ++a)
        for (int b = 0; b < npe; ++b) {
          const int ia = pos_f[a], ib = pos_f[b];
          if (ia <= ib) blk.at(ia, ib) += 0.5 * colsum[j] * ph[a] * ph[b];
        }
    }
    for (int i = 0; i < ppe; ++i) {
      const double* pe = &table_.phi[(be + i) * npe];
      for (int j = 0; j < ppe; ++j) {
        const double* pf = &table_.phi[(bf + j) * npe];
        const double v = -0.5 * Kq[i * ppe + j];
        for (int a = 0; a < npe; ++a)
          for (int b = 0; b < npe; ++b) blk.at(pos_e[a], pos_f[b]) += v * pe[a] * pf[b];
      }
    }
  }

  // On a single segment u(x)-u(y) = u'(x-y), and
  // int_{T x T} |x-y|^{1-2s} = 2 h^{3-2s} / ((2-2s)(3-2s)).
  void identical_1d(const ElementGeom& g, PairBlock& blk) const {
    const double h = std::abs(g.p[1].x - g.p[0].x);
    const double integral = 2.0 * std::pow(h, 3.0 - 2.0 * s_) / ((2.0 - 2.0 * s_) * (3.0 - 2.0 * s_));
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) blk.at(a, b) = 0.5 * g.grad[a][0] * g.grad[b][0] * integral;
  }

  // Segments meeting at P: x = P + Dx*alpha, y = P + Dy*beta. Each triangle
  // of the (alpha,beta) square is collapsed onto its corner at the origin;
  // the integrand is rho^{2-2s} times a smooth function of the angle t.
  void adjacent_1d(const ElementGeom& ge, const ElementGeom& gf, const UnionGradients& ug, PairBlock& blk) const {
    int se = 0, sf = 0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        if (ge.node[a] == gf.node[b]) {
          se = a;
          sf = b;
        }
    const double P = ge.p[se].x;
    const double Dx = ge.p[1 - se].x - P;
    const double Dy = gf.p[1 - sf].x - P;
    const double jac = std::abs(Dx) * std::abs(Dy) / (3.0 - 2.0 * s_);
    std::array<double, 6> d{};
    for (std::size_t k = 0; k < sing_.size(); ++k) {
      const double t = sing_.x[k];
      for (int half = 0; half < 2; ++half) {
        const double alpha = half == 0 ? 1.0 : t;
        const double beta = half == 0 ? t : 1.0;
        const double X = Dx * alpha, Y = Dy * beta;
        for (int i = 0; i < blk.count; ++i) d[i] = ug.ge[i][0] * X - ug.gf[i][0] * Y;
        const double w = 0.5 * jac * sing_.w[k] * std::pow(std::abs(X - Y), -(1.0 + 2.0 * s_));
        blk.add_outer(d, w);
      }
    }
  }

  // Reference triangle {0 <= x2 <= x1 <= 1}, chi(x) = P0 + x1 (P1-P0) + x2 (P2-P1).
  struct RefMap {
    std::array<double, 2> c1{}, c2{};
    double absdet = 0.0;
    std::array<double, 2> apply(double a1, double a2) const {
      return {c1[0] * a1 + c2[0] * a2, c1[1] * a1 + c2[1] * a2};
    }
  };

  static RefMap ref_map(const Point& p0, const Point& p1, const Point& p2) {
    RefMap m;
    m.c1 = {p1.x - p0.x, p1.y - p0.y};
    m.c2 = {p2.x - p1.x, p2.y - p1.y};
    m.absdet = std::abs(m.c1[0] * m.c2[1] - m.c1[1] * m.c2[0]);
    return m;
  }

  // Identical triangles. After the six-way Duffy splitting the difference
  // x-y equals xi*eta1*eta2 times J*d(eta3), with d in {(eta3,1), (1,eta3),
  // (-eta3,1-eta3)} (the other three pieces are their negatives). The
  // integrand is homogeneous of degree -2s in that factor, leaving
  //   int xi^{3-2s} eta1^{2-2s} eta2^{1-2s} = 1/((4-2s)(3-2s)(2-2s)).
  void identical_2d(const ElementGeom& g, PairBlock& blk) const {
    const RefMap m = ref_map(g.p[0], g.p[1], g.p[2]);
    const double radial = 1.0 / ((4.0 - 2.0 * s_) * (3.0 - 2.0 * s_) * (2.0 - 2.0 * s_));
    const double scale = m.absdet * m.absdet * radial * 2.0;
    std::array<double, 6> d{};
    for (std::size_t k = 0; k < sing_.size(); ++k) {
      const double t = sing_.x[k];
      const std::array<std::array<double, 2>, 3> dirs{{{t, 1.0}, {1.0, t}, {-t, 1.0 - t}}};
      for (const auto& dir : dirs) {
        const auto z = m.apply(dir[0], dir[1]);
        for (int a = 0; a < 3; ++a) d[a] = g.grad[a][0] * z[0] + g.grad[a][1] * z[1];
        blk.add_outer(d, 0.5 * scale * sing_.w[k] * kernel(z[0], z[1]));
      }
    }
  }

  // Triangles sharing the edge P0-P1. Five Duffy pieces; in each the
  // triple (alpha1-beta1, alpha2, beta2) is proportional to xi*eta1, which
  // contributes int xi^{3-2s} eta1^{2-2s} = 1/((4-2s)(3-2s)).
  void common_edge_2d(const ElementGeom& ge, const ElementGeom& gf, const UnionGradients& ug, PairBlock& blk) const {
    std::array<int, 2> sh_e{}, sh_f{};
    int ns = 0, oe = -1, of = -1;
    for (int a = 0; a < 3; ++a) {
      bool found = false;
      for (int b = 0; b < 3; ++b)
        if (ge.node[a] == gf.node[b]) {
          sh_e[ns] = a;
          sh_f[ns] = b;
          ++ns;
          found = true;
        }
      if (!found) oe = a;
    }
    for (int b = 0; b < 3; ++b)
      if (gf.node[b] != ge.node[sh_e[0]] && gf.node[b] != ge.node[sh_e[1]]) of = b;
    const Point& P0 = ge.p[sh_e[0]];
    const Point& P1 = ge.p[sh_e[1]];
    const RefMap me = ref_map(P0, P1, ge.p[oe]);
    const RefMap mf = ref_map(P0, P1, gf.p[of]);
    const std::array<double, 2> E = me.c1;
    // Tangential derivative along the shared edge agrees on both sides.
    std::array<double, 6> tang{}, ne{}, nf{};
    for (int i = 0; i < blk.count; ++i) {
      const auto& gi = (ug.ge[i][0] != 0.0 || ug.ge[i][1] != 0.0) ? ug.ge[i] : ug.gf[i];
      tang[i] = gi[0] * E[0] + gi[1] * E[1];
      ne[i] = ug.ge[i][0] * me.c2[0] + ug.ge[i][1] * me.c2[1];
      nf[i] = ug.gf[i][0] * mf.c2[0] + ug.gf[i][1] * mf.c2[1];
    }
    const double radial = 1.0 / ((4.0 - 2.0 * s_) * (3.0 - 2.0 * s_));
    const double scale = me.absdet * mf.absdet * radial;
    std::array<double, 6> d{};
    auto eval = [&](double a1, double a2, double b1, double b2, double w) {
      const double da = a1 - b1;
      const double zx = E[0] * da + me.c2[0] * a2 - mf.c2[0] * b2;
      const double zy = E[1] * da + me.c2[1] * a2 - mf.c2[1] * b2;
      for (int i = 0; i < blk.count; ++i) d[i] = tang[i] * da + ne[i] * a2 - nf[i] * b2;
      blk.add_outer(d, 0.5 * scale * w * kernel(zx, zy));
    };
    for (std::size_t i2 = 0; i2 < sing_.size(); ++i2)
      for (std::size_t i3 = 0; i3 < sing_.size(); ++i3) {
        const double e2 = sing_.x[i2], e3 = sing_.x[i3];
        const double w = sing_.w[i2] * sing_.w[i3];
        eval(1.0, e3, 1.0 - e2, 1.0 - e2, w);
        eval(1.0, 1.0, 1.0 - e2 * e3, e2 * (1.0 - e3), w * e2);
        eval(1.0 - e2, 1.0 - e2, 1.0, e2 * e3, w * e2);
        eval(1.0 - e2 * e3, e2 * (1.0 - e3), 1.0, 1.0, w * e2);
        eval(1.0 - e2 * e3, 1.0 - e2 * e3, 1.0, e2, w * e2);
      }
  }

  // Triangles sharing one vertex P0; two Duffy pieces, homogeneous in xi only:
  // int xi^{3-2s} = 1/(4-2s).
  void common_vertex_2d(const ElementGeom& ge, const ElementGeom& gf, const UnionGradients& ug, PairBlock& blk) const {
    int ve = 0, vf = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (ge.node[a] == gf.node[b]) {
          ve = a;
          vf = b;
        }
    const RefMap me = ref_map(ge.p[ve], ge.p[(ve + 1) % 3], ge.p[(ve + 2) % 3]);
    const RefMap mf = ref_map(gf.p[vf], gf.p[(vf + 1) % 3], gf.p[(vf + 2) % 3]);
    std::array<double, 6> ge1{}, ge2{}, gf1{}, gf2{};
    for (int i = 0; i < blk.count; ++i) {
      ge1[i] = ug.ge[i][0] * me.c1[0] + ug.ge[i][1] * me.c1[1];
      ge2[i] = ug.ge[i][0] * me.c2[0] + ug.ge[i][1] * me.c2[1];
      gf1[i] = ug.gf[i][0] * mf.c1[0] + ug.gf[i][1] * mf.c1[1];
      gf2[i] = ug.gf[i][0] * mf.c2[0] + ug.gf[i][1] * mf.c2[1];
    }
    const double scale = me.absdet * mf.absdet / (4.0 - 2.0 * s_);
    std::array<double, 6> d{};
    auto eval = [&](double a1, double a2, double b1, double b2, double w) {
      const auto X = me.apply(a1, a2);
      const auto Y = mf.apply(b1, b2);
      for (int i = 0; i < blk.count; ++i) d[i] = ge1[i] * a1 + ge2[i] * a2 - gf1[i] * b1 - gf2[i] * b2;
      blk.add_outer(d, 0.5 * scale * w * kernel(X[0] - Y[0], X[1] - Y[1]));
    };
    for (std::size_t i1 = 0; i1 < sing_.size(); ++i1)
      for (std::size_t i2 = 0; i2 < sing_.size(); ++i2)
        for (std::size_t i3 = 0; i3 < sing_.size(); ++i3) {
          const double e1 = sing_.x[i1], e2 = sing_.x[i2], e3 = sing_.x[i3];
          const double w = sing_.w[i1] * sing_.w[i2] * sing_.w[i3] * e2;
          eval(1.0, e1, e2, e2 * e3, w);
          eval(e2, e2 * e1, 1.0, e3, w);
        }
  }

  const Mesh& mesh_;
  double s_;
  int n_;
  AssemblyOptions opts_;
  QuadTable table_;
  quad::Rule1D sing_;
  std::vector<ElementGeom> geoms_;
  double half_exp_ = 0.0;
};

inline void check_node_cap(const Mesh& mesh) {
  const std::size_t cap = mesh.dimension() == 1 ? kMaxNodes1D : kMaxNodes2D;
  if (mesh.num_nodes() > cap) {
    std::ostringstream os;
    os << "mesh has " << mesh.num_nodes() << " nodes; dense assembly supports at most " << cap;
    throw ValidationError(os.str());
  }
}

inline void require_finite(const Matrix& A, const char* what) {
  if (!A.allFinite()) throw NumericalError(std::string("non-finite entry in assembled ") + what);
}

}  // namespace detail

/// Matrix of the halved Gagliardo form: u^T K u = 1/2 [u]_{s;Omega}^2.
inline Matrix assemble_gagliardo(const Mesh& mesh, const FractionalParams& params, const AssemblyOptions& opts = {}) {
  detail::require(params.n == mesh.dimension(), "parameter dimension does not match the mesh");
  detail::check_node_cap(mesh);
  detail::validate_options(opts);
  Matrix K = detail::GagliardoAssembler(mesh, params, opts).assemble();
  detail::require_finite(K, "Gagliardo matrix");
  // Constants are in the kernel: make the row sums vanish exactly.
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < K.cols(); ++j)
      if (j != i) off += K(j, i);
    K(i, i) = -off;
  }
  return K;
}

/// Consistent P1 mass matrix (exact).
inline Matrix assemble_mass(const Mesh& mesh) {
  detail::check_node_cap(mesh);
  const auto nn = static_cast<Eigen::Index>(mesh.num_nodes());
  Matrix M = Matrix::Zero(nn, nn);
  const int npe = mesh.nodes_per_element();
  const double denom = mesh.dimension() == 1 ? 6.0 : 12.0;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    auto el = mesh.element(e);
    const double c = mesh.element_measure(e) / denom;
    for (int a = 0; a < npe; ++a)
      for (int b = 0; b < npe; ++b) M(el[a], el[b]) += (a == b ? 2.0 : 1.0) * c;
  }
  detail::require_finite(M, "mass matrix");
  return M;
}

// ---------------------------------------------------------------------------
// L^q functionals on the quadrature table.

/// int_Omega |u|^q dx.
inline double lq_power(const QuadTable& t, const Vector& u, double q) {
  const Vector uq = t.evaluate(u);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < uq.size(); ++p) acc += t.w[p] * std::pow(std::abs(uq[p]), q);
  return acc;
}

inline double lq_norm(const QuadTable& t, const Vector& u, double q) {
  detail::require(q >= 1.0, "L^q norm needs q >= 1");
  return std::pow(lq_power(t, u, q), 1.0 / q);
}

inline double lq_norm(const DiscreteFunction& u, double q) {
  detail::require(u.mesh != nullptr, "discrete function without mesh");
  return lq_norm(build_quad_table(*u.mesh), u.coeffs, q);
}

/// int |u + t d|^q - int |u|^q without cancellation when t d is small.
inline double lq_power_change(const QuadTable& t, const Vector& u, const Vector& d, double step, double q) {
  const Vector uq = t.evaluate(u);
  const Vector dq = t.evaluate(d);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < uq.size(); ++p) {
    const double a = uq[p], b = step * dq[p];
    double delta;
    if (a != 0.0 && std::abs(b) < 0.5 * std::abs(a))
      delta = std::pow(std::abs(a), q) * std::expm1(q * std::log1p(b / a));
    else
      delta = std::pow(std::abs(a + b), q) - std::pow(std::abs(a), q);
    acc += t.w[p] * delta;
  }
  return acc;
}

namespace detail {

/// |v|^{q-2}, with the clamp max(|v|, eta) applied for q < 2.
inline double lq_weight(double v, double q) {
  const double av = std::abs(v);
  if (q < 2.0) return std::pow(std::max(av, kWeightClamp), q - 2.0);
  return std::pow(av, q - 2.0);
}

}  // namespace detail

/// g_i = int |u|^{q-2} u phi_i dx (the derivative of (1/q) ||u||_q^q).
inline Vector lq_gradient(const QuadTable& t, const Vector& u, double q) {
  detail::require(q > 1.0, "L^q gradient needs q > 1");
  const Vector uq = t.evaluate(u);
  Vector g = Vector::Zero(u.size());
  const std::size_t ppe = t.points_per_element, npe = t.nodes_per_element;
  for (std::size_t e = 0; e < t.num_elements(); ++e)
    for (std::size_t k = 0; k < ppe; ++k) {
      const std::size_t p = e * ppe + k;
      const double v = uq[static_cast<Eigen::Index>(p)];
      const double f = t.w[p] * detail::lq_weight(v, q) * v;
      for (std::size_t a = 0; a < npe; ++a) g[t.conn[e * npe + a]] += f * t.phi[p * npe + a];
    }
  return g;
}

inline Vector lq_gradient(const DiscreteFunction& u, double q) {
  return lq_gradient(build_quad_table(*u.mesh), u.coeffs, q);
}

/// W_ij = int |u|^{q-2} phi_i phi_j dx, same rule and clamp as lq_gradient.
inline Matrix lq_weight_matrix(const QuadTable& t, const Vector& u, double q) {
  const Vector uq = t.evaluate(u);
  Matrix W = Matrix::Zero(u.size(), u.size());
  const std::size_t ppe = t.points_per_element, npe = t.nodes_per_element;
  for (std::size_t e = 0; e < t.num_elements(); ++e)
    for (std::size_t k = 0; k < ppe; ++k) {
      const std::size_t p = e * ppe + k;
      const double f = t.w[p] * detail::lq_weight(uq[static_cast<Eigen::Index>(p)], q);
      for (std::size_t a = 0; a < npe; ++a)
        for (std::size_t b = 0; b < npe; ++b)
          W(t.conn[e * npe + a], t.conn[e * npe + b]) += f * t.phi[p * npe + a] * t.phi[p * npe + b];
    }
  return W;
}

// ---------------------------------------------------------------------------

/// Assembled K and M for one mesh and parameter set, with the factorizations
/// and tables the solvers reuse. Immutable after construction.
struct EnergyForms {
  std::shared_ptr<const Mesh> mesh;
  FractionalParams params;
  AssemblyOptions options;
  Matrix K;
  Matrix M;
  Eigen::LLT<Matrix> M_chol;
  Vector mass_ones;  // int phi_i dx
  QuadTable table;

  std::size_t size() const { return mesh->num_nodes(); }

  /// K u evaluated as sum_j K_ij (u_j - u_i); exactly zero on constants.
  Vector apply_K(const Vector& u) const {
    const Eigen::Index n = K.rows();
    Vector out = Vector::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double uj = u[j];
      const double* col = K.col(j).data();
      for (Eigen::Index i = 0; i < n; ++i) out[i] += col[i] * (uj - u[i]);
    }
    return out;
  }

  /// u^T K u = 1/2 [u]^2.
  double seminorm_energy(const Vector& u) const { return u.dot(apply_K(u)); }

  /// ||v||_{M^{-1}} for a dual vector v.
  double dual_norm(const Vector& v) const { return std::sqrt(std::max(0.0, v.dot(M_chol.solve(v)))); }

  double lq_norm(const Vector& u) const { return fraclap::lq_norm(table, u, params.q); }
  double lq_norm(const Vector& u, double r) const { return fraclap::lq_norm(table, u, r); }
  Vector lq_gradient(const Vector& u) const { return fraclap::lq_gradient(table, u, params.q); }

  DiscreteFunction function(Vector coeffs) const { return DiscreteFunction(mesh, std::move(coeffs)); }
};

inline EnergyForms build_energy_forms(std::shared_ptr<const Mesh> mesh, const FractionalParams& params,
                                      const AssemblyOptions& opts = {}) {
  detail::require(mesh != nullptr, "energy forms need a mesh");
  EnergyForms f;
  f.mesh = mesh;
  f.params = params;
  f.options = opts;
  f.K = assemble_gagliardo(*mesh, params, opts);
  f.M = assemble_mass(*mesh);
  f.M_chol.compute(f.M);
  if (f.M_chol.info() != Eigen::Success) throw NumericalError("mass matrix is not positive definite");
  f.mass_ones = f.M * Vector::Ones(f.M.rows());
  f.table = build_quad_table(*mesh, opts.gauss_order);
  return f;
}

inline EnergyForms build_energy_forms(const Mesh& mesh, const FractionalParams& params, const AssemblyOptions& opts = {}) {
  return build_energy_forms(std::make_shared<const Mesh>(mesh), params, opts);
}

}  // namespace fraclap
