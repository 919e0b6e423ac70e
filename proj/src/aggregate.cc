#include "faemb/aggregate.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace faemb {

WhiteningModel WhiteningModel::Fit(const Matrix& samples, int drop,
                                   double rel_eps, int keep) {
  const Eigen::Index dim = samples.rows();
  const Eigen::Index count = samples.cols();
  if (count < 2) {
    throw Error(ErrorKind::kInvalidArgument, "whitening needs at least 2 samples");
  }
  if (drop < 0 || drop >= dim) {
    throw Error(ErrorKind::kInvalidArgument,
                "drop must satisfy 0 <= drop < D (drop=" + std::to_string(drop) +
                    ", D=" + std::to_string(dim) + ")");
  }
  if (!samples.allFinite()) {
    throw Error(ErrorKind::kNumerical, "whitening samples contain non-finite values");
  }
  const Vector mean = samples.rowwise().mean();
  Matrix centered = samples.colwise() - mean;
  Matrix cov = Matrix::Zero(dim, dim);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(count - 1));
  centered.resize(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumerical, "covariance eigendecomposition failed");
  }
  // Ascending -> descending.
  const Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Matrix vectors = eig.eigenvectors().rowwise().reverse();
  const double floor = rel_eps * std::max(values[0], std::numeric_limits<double>::min());
  const int kept = keep < 0 ? static_cast<int>(dim) - drop : keep;
  return FromParts(mean, vectors, values, drop, kept, floor);
}

WhiteningModel WhiteningModel::FromParts(Vector mean, Matrix projection,
                                         Vector eigenvalues, int drop, int keep,
                                         double eps) {
  const Eigen::Index dim = mean.size();
  if (projection.rows() != dim || projection.cols() != dim || eigenvalues.size() != dim) {
    throw Error(ErrorKind::kDimensionMismatch, "whitening parts have inconsistent sizes");
  }
  if (drop < 0 || keep < 1 || drop + keep > dim) {
    throw Error(ErrorKind::kInvalidArgument,
                "whitening needs 0 <= drop and 1 <= keep with drop + keep <= D");
  }
  for (Eigen::Index i = 1; i < dim; ++i) {
    if (eigenvalues[i] > eigenvalues[i - 1]) {
      throw Error(ErrorKind::kInvalidArgument, "eigenvalues must be sorted descending");
    }
  }
  if (!(eps > 0)) throw Error(ErrorKind::kInvalidArgument, "eigenvalue floor must be > 0");
  WhiteningModel m;
  m.mean_ = std::move(mean);
  m.projection_ = std::move(projection);
  m.eigenvalues_ = std::move(eigenvalues);
  m.drop_ = drop;
  m.keep_ = keep;
  m.eps_ = eps;
  m.BuildScale();
  return m;
}

void WhiteningModel::BuildScale() {
  scale_.resize(keep_);
  for (int r = 0; r < keep_; ++r) {
    scale_[r] = 1.0 / std::sqrt(std::max(eigenvalues_[drop_ + r], eps_));
  }
}

Vector WhiteningModel::Apply(const Eigen::Ref<const Vector>& phi) const {
  if (phi.size() != input_dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "whitening input has length " + std::to_string(phi.size()) +
                    ", expected " + std::to_string(input_dim()));
  }
  const Vector centered = phi - mean_;
  Vector out = projection_.middleCols(drop_, keep_).transpose() * centered;
  return out.cwiseProduct(scale_);
}

Matrix WhiteningModel::ApplyBatch(const Matrix& phi) const {
  if (phi.rows() != input_dim()) {
    throw Error(ErrorKind::kDimensionMismatch, "whitening input has the wrong length");
  }
  const Matrix centered = phi.colwise() - mean_;
  Matrix out = projection_.middleCols(drop_, keep_).transpose() * centered;
  return scale_.asDiagonal() * out;
}

WhiteningModel FitWhitening(const Matrix& samples, int drop, double rel_eps) {
  return WhiteningModel::Fit(samples, drop, rel_eps);
}

Vector Whiten(const Eigen::Ref<const Vector>& phi, const WhiteningModel& model) {
  return model.Apply(phi);
}

// ---------------------------------------------------------------------------
// Democratic aggregation

namespace {

double ConditionResidual(const Matrix& gram, const Vector& w) {
  return ((w.array() * (gram * w).array()) - 1.0).abs().maxCoeff();
}

double Potential(const Matrix& gram, const Vector& w) {
  return 0.5 * w.dot(gram * w) - w.array().log().sum();
}

}  // namespace

DemocraticResult DemocraticWeights(const Matrix& phi_w, int max_iters, double tol) {
  const Eigen::Index m = phi_w.cols();
  if (m == 0) throw Error(ErrorKind::kInvalidArgument, "democratic weights need vectors");
  if (!phi_w.allFinite()) {
    throw Error(ErrorKind::kNumerical, "democratic weights: non-finite input vectors");
  }
  std::vector<Eigen::Index> used;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (phi_w.col(i).norm() >= 1e-10) used.push_back(i);
  }
  if (used.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "democratic weights: all vectors are zero, the condition cannot hold");
  }
  const auto k = static_cast<Eigen::Index>(used.size());
  Matrix sub(phi_w.rows(), k);
  for (Eigen::Index r = 0; r < k; ++r) sub.col(r) = phi_w.col(used[static_cast<std::size_t>(r)]);
  const Matrix gram = sub.transpose() * sub;
  const Matrix clamped = gram.cwiseMax(0.0);

  DemocraticResult result;
  Vector w = Vector::Ones(k);
  for (int it = 0; it < max_iters; ++it) {
    const Vector kw = clamped * w;
    w = (w.array() / kw.array()).sqrt();
    result.iterations = it + 1;
    if (((w.array() * (clamped * w).array()) - 1.0).abs().maxCoeff() <= 0.1 * tol) break;
  }
  double residual = ConditionResidual(gram, w);

  // Newton refinement on the exact (unclamped) condition.
  Vector best = w;
  double best_residual = residual;
  for (int it = 0; it < 50 && residual > 0.1 * tol; ++it) {
    const Vector grad = gram * w - w.cwiseInverse();
    Matrix hess = gram;
    hess.diagonal() += w.cwiseInverse().cwiseAbs2();
    const Vector step = -hess.llt().solve(grad);
    if (!step.allFinite()) break;
    const double slope = grad.dot(step);
    if (slope >= 0) break;
    const double f0 = Potential(gram, w);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Vector trial = w + t * step;
      if ((trial.array() <= 0).any()) continue;
      if (Potential(gram, trial) <= f0 + 1e-4 * t * slope) {
        w = trial;
        moved = true;
        break;
      }
    }
    ++result.iterations;
    if (!moved) break;
    residual = ConditionResidual(gram, w);
    if (residual < best_residual) {
      best_residual = residual;
      best = w;
    }
  }

  result.weights = Vector::Zero(m);
  for (Eigen::Index r = 0; r < k; ++r) result.weights[used[static_cast<std::size_t>(r)]] = best[r];
  result.residual = best_residual;
  result.converged = best_residual <= tol;
  return result;
}

Vector AggregateImage(const Matrix& phi_w, const Vector& weights) {
  if (weights.size() != phi_w.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "one weight per vector is required");
  }
  return phi_w * weights;
}

Vector PowerLaw(const Vector& v, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "power-law exponent must lie in [0, 1]");
  }
  if (alpha == 1.0) return v;
  return v.unaryExpr([alpha](double a) {
    return a > 0 ? std::pow(a, alpha) : (a < 0 ? -std::pow(-a, alpha) : 0.0);
  });
}

ImageSignature L2Normalize(const Vector& v, std::string image_id) {
  ImageSignature sig;
  sig.image_id = std::move(image_id);
  const double norm = v.norm();
  if (!(norm > 0) || !std::isfinite(norm)) {
    sig.values = Vector::Zero(v.size());
    sig.degenerate = true;
    return sig;
  }
  sig.values = v / norm;
  return sig;
}

RotationNormModel FitRotationNorm(const Matrix& signatures, int keep, double rel_eps) {
  if (keep < 1 || keep > signatures.rows()) {
    throw Error(ErrorKind::kInvalidArgument,
                "keep must satisfy 1 <= keep <= D' (keep=" + std::to_string(keep) +
                    ", D'=" + std::to_string(signatures.rows()) + ")");
  }
  return RotationNormModel{WhiteningModel::Fit(signatures, 0, rel_eps, keep)};
}

ImageSignature ApplyRotationNorm(const ImageSignature& psi,
                                 const RotationNormModel& model) {
  if (psi.degenerate) {
    return ImageSignature{psi.image_id, Vector::Zero(model.keep()), true};
  }
  return L2Normalize(model.rotation.Apply(psi.values), psi.image_id);
}

}  // namespace faemb
