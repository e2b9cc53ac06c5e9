#include <Eigen/QR>
#include <cmath>
#include <map>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

namespace {

void monomials_of_degree(std::size_t p, unsigned degree, std::size_t var, Monomial& cur,
                         std::vector<Monomial>& out) {
  if (var + 1 == p) {
    cur[var] = degree;
    out.push_back(cur);
    cur[var] = 0;
    return;
  }
  for (int e = static_cast<int>(degree); e >= 0; --e) {
    cur[var] = static_cast<unsigned>(e);
    monomials_of_degree(p, degree - static_cast<unsigned>(e), var + 1, cur, out);
  }
  cur[var] = 0;
}

double binomial(unsigned n, unsigned k) {
  double r = 1.0;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

std::vector<Monomial> polynomial_basis(std::size_t p, std::size_t degree) {
  if (p == 0) throw ConfigError("polynomial basis needs at least one input");
  std::vector<Monomial> basis;
  Monomial cur(p, 0);
  for (unsigned d = 0; d <= degree; ++d) monomials_of_degree(p, d, 0, cur, basis);
  return basis;
}

std::string describe_monomial(const Monomial& m) {
  std::ostringstream s;
  bool any = false;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j] == 0) continue;
    if (any) s << '*';
    s << 'x' << (j + 1);
    if (m[j] > 1) s << '^' << m[j];
    any = true;
  }
  if (!any) s << '1';
  return s.str();
}

PolySurrogate::PolySurrogate(std::size_t degree, std::vector<Bounds> scaling,
                             Eigen::MatrixXd weights)
    : degree_(degree),
      scaling_(std::move(scaling)),
      basis_(polynomial_basis(scaling_.size(), degree)),
      weights_(std::move(weights)) {
  if (static_cast<std::size_t>(weights_.rows()) != basis_.size()) {
    throw ConfigError("polynomial weights do not match the basis size");
  }
}

void PolySurrogate::scaled_powers(std::span<const double> x, std::vector<double>& pw) const {
  const std::size_t p = input_dim(), stride = degree_ + 1;
  pw.resize(p * stride);
  for (std::size_t j = 0; j < p; ++j) {
    const auto& b = scaling_[j];
    const double s = 2.0 * (x[j] - b.lo) / (b.hi - b.lo) - 1.0;
    double v = 1.0;
    for (std::size_t e = 0; e <= degree_; ++e) {
      pw[j * stride + e] = v;
      v *= s;
    }
  }
}

void PolySurrogate::predict_columns(std::span<const double> x, std::size_t first,
                                    std::span<double> out) const {
  if (x.size() != input_dim()) throw ConfigError("polynomial predict: wrong input dimension");
  thread_local std::vector<double> pw;
  scaled_powers(x, pw);
  const std::size_t stride = degree_ + 1;
  for (auto& o : out) o = 0.0;
  for (std::size_t t = 0; t < basis_.size(); ++t) {
    double m = 1.0;
    for (std::size_t j = 0; j < basis_[t].size(); ++j) m *= pw[j * stride + basis_[t][j]];
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] += weights_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(first + k)) * m;
    }
  }
}

void PolySurrogate::gradient_columns(std::span<const double> x, std::size_t first,
                                     std::size_t count, std::span<double> jac) const {
  if (x.size() != input_dim()) throw ConfigError("polynomial gradient: wrong input dimension");
  const std::size_t p = input_dim(), stride = degree_ + 1;
  thread_local std::vector<double> pw;
  scaled_powers(x, pw);
  for (auto& v : jac) v = 0.0;
  for (std::size_t t = 0; t < basis_.size(); ++t) {
    const auto& e = basis_[t];
    for (std::size_t j = 0; j < p; ++j) {
      if (e[j] == 0) continue;
      double dm = e[j] * pw[j * stride + e[j] - 1] * 2.0 / (scaling_[j].hi - scaling_[j].lo);
      for (std::size_t i = 0; i < p; ++i) {
        if (i != j) dm *= pw[i * stride + e[i]];
      }
      for (std::size_t k = 0; k < count; ++k) {
        jac[k * p + j] +=
            weights_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(first + k)) * dm;
      }
    }
  }
}

Eigen::VectorXd PolySurrogate::predict(std::span<const double> x) const {
  Eigen::VectorXd y(output_dim());
  predict_columns(x, 0, {y.data(), output_dim()});
  return y;
}

Eigen::MatrixXd PolySurrogate::gradient(std::span<const double> x) const {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor jac(output_dim(), input_dim());
  gradient_columns(x, 0, output_dim(), {jac.data(), static_cast<std::size_t>(jac.size())});
  return jac;
}

Eigen::MatrixXd PolySurrogate::unscaled_weights() const {
  // s_j = a_j x_j + c_j; expand each scaled monomial binomially.
  const std::size_t p = input_dim();
  std::vector<double> a(p), c(p);
  for (std::size_t j = 0; j < p; ++j) {
    a[j] = 2.0 / (scaling_[j].hi - scaling_[j].lo);
    c[j] = -2.0 * scaling_[j].lo / (scaling_[j].hi - scaling_[j].lo) - 1.0;
  }
  std::map<Monomial, std::size_t> index;
  for (std::size_t t = 0; t < basis_.size(); ++t) index.emplace(basis_[t], t);

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(weights_.rows(), weights_.cols());
  for (std::size_t t = 0; t < basis_.size(); ++t) {
    const auto& e = basis_[t];
    Monomial k(p, 0);
    // Enumerate all k <= e component-wise.
    while (true) {
      double coef = 1.0;
      for (std::size_t j = 0; j < p; ++j) {
        coef *= binomial(e[j], k[j]) * std::pow(a[j], k[j]) * std::pow(c[j], e[j] - k[j]);
      }
      const auto target = static_cast<Eigen::Index>(index.at(k));
      out.row(target) += coef * weights_.row(static_cast<Eigen::Index>(t));
      std::size_t j = 0;
      while (j < p && k[j] == e[j]) k[j++] = 0;
      if (j == p) break;
      ++k[j];
    }
  }
  return out;
}

PolySurrogate fit_poly(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
                       std::size_t degree) {
  const auto n = inputs.rows();
  const auto p = static_cast<std::size_t>(inputs.cols());
  if (outputs.rows() != n) throw ConfigError("fit_poly: inputs and outputs differ in row count");
  if (p == 0 || outputs.cols() == 0) throw ConfigError("fit_poly: empty inputs or outputs");

  std::vector<Bounds> scaling(p);
  for (std::size_t j = 0; j < p; ++j) {
    const double lo = inputs.col(static_cast<Eigen::Index>(j)).minCoeff();
    const double hi = inputs.col(static_cast<Eigen::Index>(j)).maxCoeff();
    // A constant column keeps a unit-width map; the rank check flags it.
    scaling[j] = hi > lo ? Bounds{lo, hi} : Bounds{lo - 1.0, lo + 1.0};
  }
  const auto basis = polynomial_basis(p, degree);
  const auto nb = static_cast<Eigen::Index>(basis.size());
  if (n < nb) {
    std::ostringstream msg;
    msg << "fit_poly: " << n << " samples cannot determine " << nb
        << " coefficients of a degree-" << degree << " basis";
    throw NumericalError(msg.str());
  }

  Eigen::MatrixXd design(n, nb);
  std::vector<double> row(p);
  {
    Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(nb, nb);
    PolySurrogate expander(degree, scaling, identity);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) row[j] = inputs(i, static_cast<Eigen::Index>(j));
      design.row(i) = expander.predict(row).transpose();
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < nb) {
    std::ostringstream msg;
    msg << "fit_poly: design is rank deficient (rank " << qr.rank() << " of " << nb
        << "); dependent basis terms:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < nb; ++k) {
      msg << ' ' << describe_monomial(basis[static_cast<std::size_t>(perm[k])]);
    }
    throw NumericalError(msg.str());
  }
  Eigen::MatrixXd weights = qr.solve(outputs);
  return PolySurrogate(degree, std::move(scaling), std::move(weights));
}

}  // namespace hbiuq
