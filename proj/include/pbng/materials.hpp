#pragma once

#include "pbng/common.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>
#include <string_view>

namespace pbng {

enum class MaterialModel { Corotated, NeoHookean, StableNeoHookean, LinearElastic };

inline std::string_view to_string(MaterialModel m) {
  switch (m) {
    case MaterialModel::Corotated: return "corotated";
    case MaterialModel::NeoHookean: return "neohookean";
    case MaterialModel::StableNeoHookean: return "stable_neohookean";
    case MaterialModel::LinearElastic: return "linear";
  }
  return "?";
}

inline MaterialModel material_model_from_string(std::string_view s) {
  if (s == "corotated") return MaterialModel::Corotated;
  if (s == "neohookean") return MaterialModel::NeoHookean;
  if (s == "stable_neohookean") return MaterialModel::StableNeoHookean;
  if (s == "linear") return MaterialModel::LinearElastic;
  throw Error("unknown material model '" + std::string(s) + "'");
}

struct LameParameters {
  double mu;
  double lambda;
};

inline LameParameters lame_from_young_poisson(double young, double poisson) {
  if (!(young > 0.0)) throw Error("Young's modulus must be positive");
  if (poisson >= 0.5) throw Error("Poisson's ratio >= 0.5 is the incompressible limit");
  if (poisson < 0.0) throw Error("negative Poisson's ratio is not supported");
  return {young / (2.0 * (1.0 + poisson)), young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))};
}

/// Isotropic hyperelastic material. mu and lambda are always the Lame
/// parameters; model-specific internal constants are derived from them.
struct Material {
  MaterialModel model = MaterialModel::Corotated;
  double mu = 1.0;
  double lambda = 1.0;

  static Material from_young_poisson(MaterialModel model, double young, double poisson) {
    const auto lp = lame_from_young_poisson(young, poisson);
    return {model, lp.mu, lp.lambda};
  }

  /// Volume stiffness of the Neo-Hookean model, mu + lambda.
  double lambda_hat() const { return mu + lambda; }
};

template <int Dim>
Mat<Dim> cofactor(const Mat<Dim>& f) {
  Mat<Dim> c;
  if constexpr (Dim == 2) {
    c << f(1, 1), -f(1, 0), -f(0, 1), f(0, 0);
  } else {
    c.col(0) = f.col(1).cross(f.col(2));
    c.col(1) = f.col(2).cross(f.col(0));
    c.col(2) = f.col(0).cross(f.col(1));
  }
  return c;
}

/// Directional derivative of cofactor(F) along dF.
template <int Dim>
Mat<Dim> cofactor_derivative(const Mat<Dim>& f, const Mat<Dim>& df) {
  if constexpr (Dim == 2) {
    return cofactor<2>(df);
  } else {
    Mat<Dim> c;
    c.col(0) = df.col(1).cross(f.col(2)) + f.col(1).cross(df.col(2));
    c.col(1) = df.col(2).cross(f.col(0)) + f.col(2).cross(df.col(0));
    c.col(2) = df.col(0).cross(f.col(1)) + f.col(0).cross(df.col(1));
    return c;
  }
}

struct Invariants {
  double i0;
  double i1;
  double i2;
};

template <int Dim>
Invariants isotropic_invariants(const Mat<Dim>& f) {
  const Mat<Dim> c = f.transpose() * f;
  return {c.trace(), (c * c).trace(), f.determinant()};
}

/// Rotation-variant SVD F = U diag(sigma) V^T with det U = det V = +1; the
/// smallest singular value carries the sign of det F.
template <int Dim>
struct SignedSvd {
  Mat<Dim> u;
  Vec<Dim> sigma;
  Mat<Dim> v;
};

template <int Dim>
SignedSvd<Dim> signed_svd(const Mat<Dim>& f) {
  Eigen::JacobiSVD<Mat<Dim>> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SignedSvd<Dim> out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  if (out.u.determinant() < 0.0) {
    out.u.col(Dim - 1) *= -1.0;
    out.sigma(Dim - 1) *= -1.0;
  }
  if (out.v.determinant() < 0.0) {
    out.v.col(Dim - 1) *= -1.0;
    out.sigma(Dim - 1) *= -1.0;
  }
  return out;
}

/// Closest rotation to F in the Frobenius norm (rotation factor of the polar
/// decomposition, defined for singular and inverted F as well).
template <int Dim>
Mat<Dim> polar_rotation(const Mat<Dim>& f) {
  const auto s = signed_svd<Dim>(f);
  return s.u * s.v.transpose();
}

namespace detail {

struct StableNeoHookeanConstants {
  double mu;
  double lambda;
  double alpha;
};

// Internal parameters chosen so the Hessian at F=I equals that of linear
// elasticity with the given Lame parameters, and the rest state is stress free.
template <int Dim>
StableNeoHookeanConstants snh_constants(const Material& m) {
  constexpr double d = Dim;
  const double mu_s = m.mu * (d + 1.0) / d;
  const double lambda_s = m.lambda + m.mu - 2.0 * m.mu / (d * (d + 1.0));
  return {mu_s, lambda_s, 1.0 + mu_s * d / ((d + 1.0) * lambda_s)};
}

}  // namespace detail

template <int Dim>
double energy_density(const Material& m, const Mat<Dim>& f) {
  switch (m.model) {
    case MaterialModel::Corotated: {
      const double j = f.determinant();
      return m.mu * (f - polar_rotation<Dim>(f)).squaredNorm() + 0.5 * m.lambda * (j - 1.0) * (j - 1.0);
    }
    case MaterialModel::NeoHookean: {
      const double lh = m.lambda_hat();
      const double c = f.determinant() - 1.0 - m.mu / lh;
      return 0.5 * m.mu * f.squaredNorm() + 0.5 * lh * c * c;
    }
    case MaterialModel::StableNeoHookean: {
      const auto k = detail::snh_constants<Dim>(m);
      const double i0 = f.squaredNorm();
      const double c = f.determinant() - k.alpha;
      return 0.5 * k.mu * (i0 - Dim) + 0.5 * k.lambda * c * c - 0.5 * k.mu * std::log1p(i0);
    }
    case MaterialModel::LinearElastic: {
      const Mat<Dim> eps = 0.5 * (f + f.transpose()) - Mat<Dim>::Identity();
      const double tr = eps.trace();
      return m.mu * (eps * eps).trace() + 0.5 * m.lambda * tr * tr;
    }
  }
  return 0.0;
}

template <int Dim>
Mat<Dim> first_piola(const Material& m, const Mat<Dim>& f) {
  switch (m.model) {
    case MaterialModel::Corotated: {
      const double j = f.determinant();
      return 2.0 * m.mu * (f - polar_rotation<Dim>(f)) + m.lambda * (j - 1.0) * cofactor<Dim>(f);
    }
    case MaterialModel::NeoHookean: {
      const double lh = m.lambda_hat();
      return m.mu * f + lh * (f.determinant() - 1.0 - m.mu / lh) * cofactor<Dim>(f);
    }
    case MaterialModel::StableNeoHookean: {
      const auto k = detail::snh_constants<Dim>(m);
      const double i0 = f.squaredNorm();
      return k.mu * (1.0 - 1.0 / (1.0 + i0)) * f + k.lambda * (f.determinant() - k.alpha) * cofactor<Dim>(f);
    }
    case MaterialModel::LinearElastic: {
      const Mat<Dim> eps = 0.5 * (f + f.transpose()) - Mat<Dim>::Identity();
      return 2.0 * m.mu * eps + m.lambda * eps.trace() * Mat<Dim>::Identity();
    }
  }
  return Mat<Dim>::Zero();
}

namespace detail {

// dR[dF] from the signed SVD: Omega_ij = (M_ij - M_ji)/(s_i + s_j), M = U^T dF V.
template <int Dim>
Mat<Dim> rotation_derivative(const SignedSvd<Dim>& s, const Mat<Dim>& df) {
  const Mat<Dim> mm = s.u.transpose() * df * s.v;
  Mat<Dim> omega = Mat<Dim>::Zero();
  for (int i = 0; i < Dim; ++i)
    for (int j = i + 1; j < Dim; ++j) {
      const double denom = s.sigma(i) + s.sigma(j);
      const double w = std::abs(denom) > 1e-14 ? (mm(i, j) - mm(j, i)) / denom : 0.0;
      omega(i, j) = w;
      omega(j, i) = -w;
    }
  return s.u * omega * s.v.transpose();
}

template <int Dim>
Mat<Dim> piola_differential(const Material& m, const Mat<Dim>& f, const Mat<Dim>& df) {
  const Mat<Dim> cof = cofactor<Dim>(f);
  const double j = f.determinant();
  const double dj = (cof.array() * df.array()).sum();
  switch (m.model) {
    case MaterialModel::Corotated: {
      const auto s = signed_svd<Dim>(f);
      return 2.0 * m.mu * (df - rotation_derivative<Dim>(s, df)) + m.lambda * dj * cof +
             m.lambda * (j - 1.0) * cofactor_derivative<Dim>(f, df);
    }
    case MaterialModel::NeoHookean: {
      const double lh = m.lambda_hat();
      return m.mu * df + lh * dj * cof + lh * (j - 1.0 - m.mu / lh) * cofactor_derivative<Dim>(f, df);
    }
    case MaterialModel::StableNeoHookean: {
      const auto k = detail::snh_constants<Dim>(m);
      const double i0 = f.squaredNorm();
      const double di0 = 2.0 * (f.array() * df.array()).sum();
      const double q = 1.0 + i0;
      return k.mu * (1.0 - 1.0 / q) * df + k.mu * di0 / (q * q) * f + k.lambda * dj * cof +
             k.lambda * (j - k.alpha) * cofactor_derivative<Dim>(f, df);
    }
    case MaterialModel::LinearElastic:
      return m.mu * (df + df.transpose()) + m.lambda * df.trace() * Mat<Dim>::Identity();
  }
  return Mat<Dim>::Zero();
}

}  // namespace detail

/// Exact d2Psi/dF2 (indefinite in general). Used by oracles and diagnostics.
template <int Dim>
DensityHessian<Dim> true_hessian_density(const Material& m, const Mat<Dim>& f) {
  DensityHessian<Dim> h;
  for (int b = 0; b < Dim; ++b)
    for (int d = 0; d < Dim; ++d) {
      Mat<Dim> df = Mat<Dim>::Zero();
      df(b, d) = 1.0;
      h.col(flat_index<Dim>(b, d)) = flatten<Dim>(detail::piola_differential<Dim>(m, f, df));
    }
  return 0.5 * (h + h.transpose());
}

/// SPD surrogate 2mu*Id + lambda*vec(cof F)vec(cof F)^T. Needs no SVD and is
/// defined for singular and inverted F. The linear model returns its exact
/// (constant) Hessian.
template <int Dim>
DensityHessian<Dim> modified_hessian_density(const Material& m, const Mat<Dim>& f) {
  if (m.model == MaterialModel::LinearElastic) return true_hessian_density<Dim>(m, f);
  const auto c = flatten<Dim>(cofactor<Dim>(f));
  DensityHessian<Dim> h = m.lambda * c * c.transpose();
  h.diagonal().array() += 2.0 * m.mu;
  return h;
}

/// 2mu*P_sym + lambda*vec(I)vec(I)^T, the small-strain Hessian every model
/// must reproduce at F=I.
template <int Dim>
DensityHessian<Dim> linear_elasticity_hessian(double mu, double lambda) {
  DensityHessian<Dim> h = DensityHessian<Dim>::Zero();
  for (int a = 0; a < Dim; ++a)
    for (int g = 0; g < Dim; ++g) {
      h(flat_index<Dim>(a, g), flat_index<Dim>(a, g)) += mu;
      h(flat_index<Dim>(a, g), flat_index<Dim>(g, a)) += mu;
      if (a == g)
        for (int b = 0; b < Dim; ++b) h(flat_index<Dim>(a, a), flat_index<Dim>(b, b)) += lambda;
    }
  return h;
}

}  // namespace pbng
