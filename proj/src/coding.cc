#include "faemb/coding.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace faemb {

const char* VariantName(Variant v) {
  return v == Variant::kFaemb ? "faemb" : "ffaemb";
}

Variant ParseVariant(const std::string& name) {
  if (name == "faemb") return Variant::kFaemb;
  if (name == "ffaemb") return Variant::kFfaemb;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown variant '" + name + "' (expected faemb or ffaemb)");
}

CodingModel CodingModel::Create(Matrix anchors, double mu, Variant variant) {
  if (anchors.cols() < 2) {
    throw Error(ErrorKind::kInvalidArgument, "a coding model needs n >= 2 anchors");
  }
  if (anchors.rows() < 1) {
    throw Error(ErrorKind::kInvalidArgument, "anchor dimension must be >= 1");
  }
  if (!anchors.allFinite()) {
    throw Error(ErrorKind::kNumerical, "anchors contain non-finite values");
  }
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    throw Error(ErrorKind::kInvalidArgument, "mu must be finite and >= 0");
  }
  for (Eigen::Index i = 0; i < anchors.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < anchors.cols(); ++j) {
      if ((anchors.col(i) - anchors.col(j)).cwiseAbs().maxCoeff() <= 1e-12) {
        std::ostringstream msg;
        msg << "anchors " << i << " and " << j << " coincide";
        throw Error(ErrorKind::kInvalidArgument, msg.str());
      }
    }
  }
  CodingModel m;
  m.gram_ = anchors.transpose() * anchors;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m.gram_);
  m.gram_eigenvalues_ = eig.eigenvalues();
  m.gram_basis_ = eig.eigenvectors();
  m.anchors_basis_ = anchors * m.gram_basis_;
  m.basis_ones_ = m.gram_basis_.colwise().sum().transpose();
  m.anchors_ = std::move(anchors);
  m.mu_ = mu;
  m.variant_ = variant;
  return m;
}

void SolverParams::Validate() const {
  std::vector<std::string> problems;
  if (max_outer_iters < 0) problems.push_back("max_outer_iters must be >= 0");
  if (!(outer_tol > 0)) problems.push_back("outer_tol must be > 0");
  if (!(newton_tol > 0)) problems.push_back("newton_tol must be > 0");
  if (!(newton_step > 0 && newton_step <= 1)) {
    problems.push_back("newton_step must lie in (0, 1]");
  }
  if (newton_max_iters < 1) problems.push_back("newton_max_iters must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid solver parameters:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw Error(ErrorKind::kInvalidArgument, msg);
  }
}

// ---------------------------------------------------------------------------
// K-means

namespace {

Eigen::Index Nearest(const Matrix& centroids,
                     const Eigen::Ref<const Vector>& x, double* dist_sq) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.cols(); ++j) {
    const double dd = (centroids.col(j) - x).squaredNorm();
    if (dd < best_d) {
      best_d = dd;
      best = j;
    }
  }
  if (dist_sq) *dist_sq = best_d;
  return best;
}

}  // namespace

Matrix KMeansInit(const Matrix& points, int n, std::uint64_t seed,
                  int max_iters) {
  const Eigen::Index m = points.cols();
  if (n < 1 || m < n) {
    throw Error(ErrorKind::kInvalidArgument,
                "k-means needs at least n points (m=" + std::to_string(m) +
                    ", n=" + std::to_string(n) + ")");
  }
  std::mt19937_64 rng(seed);
  Matrix centroids(points.rows(), n);

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, m - 1);
  centroids.col(0) = points.col(first(rng));
  Vector d2(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    d2[i] = (points.col(i) - centroids.col(0)).squaredNorm();
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < n; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      const double target = unit(rng) * total;
      double acc = 0;
      pick = m - 1;
      for (Eigen::Index i = 0; i < m; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0 && pick > 0) --pick;
    } else {
      pick = first(rng);
    }
    centroids.col(c) = points.col(pick);
    for (Eigen::Index i = 0; i < m; ++i) {
      d2[i] = std::min(d2[i], (points.col(i) - centroids.col(c)).squaredNorm());
    }
  }

  // Lloyd iterations.
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(m), -1);
  Vector dist(m);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index a = Nearest(centroids, points.col(i), &dist[i]);
      if (a != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = a;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    Matrix sums = Matrix::Zero(points.rows(), n);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto a = assign[static_cast<std::size_t>(i)];
      sums.col(a) += points.col(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    for (int c = 0; c < n; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      centroids.col(c) = points.col(far);
      dist[far] = 0.0;
    }
  }
  return centroids;
}

// ---------------------------------------------------------------------------
// Coefficients

Coefficients FfaembGamma(const Eigen::Ref<const Vector>& x,
                         const CodingModel& model) {
  if (x.size() != model.dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor dimension does not match the anchors");
  }
  const double shift = model.mu() * L1DistCubed(x, model.anchors()).sum();
  const Vector& lam = model.gram_eigenvalues();
  const double lo = lam.minCoeff() + shift, hi = lam.maxCoeff() + shift;
  if (!(hi > 0 && lo / hi > 1e-13)) {
    throw Error(ErrorKind::kNumerical,
                "closed-form coefficient system is singular (C^T C is rank "
                "deficient); use mu > 0");
  }
  const Vector inv = (lam.array() + shift).inverse();
  const Vector& ones = model.basis_ones();
  const Vector proj = model.anchors_basis().transpose() * x;
  const double lambda =
      (ones.dot(inv.cwiseProduct(proj)) - 1.0) / ones.dot(inv.cwiseProduct(ones));
  Coefficients out;
  out.gamma = model.gram_basis() * inv.cwiseProduct(proj - lambda * ones);
  out.info.multiplier = lambda;
  return out;
}

namespace {

inline double Sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

struct KktStep {
  Vector delta;     // over the working set, same order as `idx`
  double multiplier = 0.0;
};

// Solves [H_FF + rho I, 1; 1^T, 0] [delta; w] = [-g_F; 0].
KktStep SolveKkt(const Matrix& gram, double ridge,
                 const std::vector<Eigen::Index>& idx, const Vector& grad_f) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Matrix kkt = Matrix::Zero(k + 1, k + 1);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) {
      kkt(r, c) = gram(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
    }
    kkt(r, r) += ridge;
    kkt(r, k) = 1.0;
    kkt(k, r) = 1.0;
  }
  Vector rhs(k + 1);
  rhs.head(k) = -grad_f;
  rhs[k] = 0.0;
  const Vector sol = kkt.partialPivLu().solve(rhs);
  KktStep step;
  step.delta = sol.head(k);
  step.multiplier = sol[k];
  return step;
}

}  // namespace

Coefficients FaembGamma(const Eigen::Ref<const Vector>& x,
                        const CodingModel& model, const SolverParams& params,
                        const Vector* warm_start) {
  if (x.size() != model.dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor dimension does not match the anchors");
  }
  const Eigen::Index n = model.num_anchors();
  const Matrix& gram = model.gram();
  const Vector ctx = model.anchors().transpose() * x;
  const Vector half_mu_a = 0.5 * model.mu() * L1DistCubed(x, model.anchors());
  const double ridge = 1e-12 * (1.0 + gram.trace() / static_cast<double>(n));
  const double release_tol = 1e-10 * (1.0 + gram.diagonal().maxCoeff() + half_mu_a.maxCoeff());

  Vector gamma;
  if (warm_start) {
    if (warm_start->size() != n || std::abs(warm_start->sum() - 1.0) > 1e-6) {
      throw Error(ErrorKind::kInvalidArgument, "warm start is not a feasible coefficient vector");
    }
    gamma = *warm_start;
  } else {
    gamma = Vector::Constant(n, 1.0 / static_cast<double>(n));
  }

  Coefficients out;
  SolveInfo& info = out.info;
  info.converged = false;

  std::vector<Eigen::Index> work;
  Vector signs(n);
  Vector smooth_grad(n);

  auto working_gradient = [&](const std::vector<Eigen::Index>& set) {
    Vector g(static_cast<Eigen::Index>(set.size()));
    for (std::size_t r = 0; r < set.size(); ++r) {
      const auto j = set[r];
      g[static_cast<Eigen::Index>(r)] = smooth_grad[j] + half_mu_a[j] * signs[j];
    }
    return g;
  };

  KktStep step;
  for (int iter = 0;; ++iter) {
    smooth_grad.noalias() = gram * gamma - ctx;
    work.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      signs[j] = Sign(gamma[j]);
      if (gamma[j] != 0.0) work.push_back(j);
    }
    Vector grad_w = working_gradient(work);
    step = SolveKkt(gram, ridge, work, grad_w);

    // Release the zero coefficient whose subgradient condition is violated
    // the most, provided the new Newton step actually moves it off zero.
    bool released = false;
    Eigen::Index candidate = -1;
    double worst = release_tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (gamma[j] != 0.0) continue;
      const double excess = std::abs(smooth_grad[j] + step.multiplier) - half_mu_a[j];
      if (excess > worst) {
        worst = excess;
        candidate = j;
      }
    }
    if (candidate >= 0) {
      const double s = smooth_grad[candidate] + step.multiplier > 0 ? -1.0 : 1.0;
      signs[candidate] = s;
      std::vector<Eigen::Index> trial = work;
      trial.push_back(candidate);
      const Vector grad_t = working_gradient(trial);
      KktStep trial_step = SolveKkt(gram, ridge, trial, grad_t);
      if (trial_step.delta[static_cast<Eigen::Index>(trial.size()) - 1] * s > 0) {
        work = std::move(trial);
        grad_w = grad_t;
        step = std::move(trial_step);
        released = true;
      } else {
        signs[candidate] = 0.0;
      }
    }

    const double dec_sq = std::max(0.0, -grad_w.dot(step.delta));
    info.decrement_sq = dec_sq;
    info.multiplier = step.multiplier;
    if (!std::isfinite(dec_sq) || !step.delta.allFinite()) {
      throw Error(ErrorKind::kNumerical, "Newton iteration produced non-finite values");
    }
    if (!released && dec_sq / 2.0 <= params.newton_tol) {
      info.converged = true;
      break;
    }
    if (iter >= params.newton_max_iters) break;

    double t = params.newton_step;
    Eigen::Index hit = -1;
    for (std::size_t r = 0; r < work.size(); ++r) {
      const auto j = work[r];
      const double dj = step.delta[static_cast<Eigen::Index>(r)];
      if (gamma[j] * dj < 0.0) {
        const double tj = -gamma[j] / dj;
        if (tj <= t) {
          t = tj;
          hit = j;
        }
      }
    }
    for (std::size_t r = 0; r < work.size(); ++r) {
      gamma[work[r]] += t * step.delta[static_cast<Eigen::Index>(r)];
    }
    if (hit >= 0) gamma[hit] = 0.0;
    info.iterations = iter + 1;
  }

  // Stationarity: free coordinates need g_j + w = 0; zero coordinates only
  // need |g_smooth_j + w| <= mu/2 a_j.
  double stat = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double base = smooth_grad[j] + info.multiplier;
    const double r = gamma[j] != 0.0
                         ? std::abs(base + half_mu_a[j] * Sign(gamma[j]))
                         : std::max(0.0, std::abs(base) - half_mu_a[j]);
    stat = std::max(stat, r);
  }
  info.stationarity = stat;
  out.gamma = std::move(gamma);
  return out;
}

Coefficients ComputeGamma(const Eigen::Ref<const Vector>& x,
                          const CodingModel& model, const SolverParams& params,
                          const Vector* warm_start) {
  if (model.variant() == Variant::kFfaemb) return FfaembGamma(x, model);
  return FaembGamma(x, model, params, warm_start);
}

Matrix ComputeGammas(const Matrix& points, const CodingModel& model,
                     const SolverParams& params, int threads,
                     const Matrix* warm_start, std::vector<SolveInfo>* infos) {
  if (points.rows() != model.dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor dimension does not match the anchors");
  }
  const Eigen::Index m = points.cols();
  Matrix gammas(model.num_anchors(), m);
  if (infos) infos->assign(static_cast<std::size_t>(m), SolveInfo{});
  ParallelFor(static_cast<std::size_t>(m), threads, [&](std::size_t b, std::size_t e) {
    Vector warm;
    for (std::size_t i = b; i < e; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const Vector* ws = nullptr;
      if (warm_start) {
        warm = warm_start->col(col);
        ws = &warm;
      }
      Coefficients c = ComputeGamma(points.col(col), model, params, ws);
      gammas.col(col) = c.gamma;
      if (infos) (*infos)[i] = c.info;
    }
  });
  return gammas;
}

// ---------------------------------------------------------------------------
// Objective and gradients

namespace {

// Penalty weights w_ij multiplying mu/2 ||x_i - v_j||_1^3.
Matrix PenaltyWeights(const Matrix& gammas, Variant variant) {
  if (variant == Variant::kFaemb) return gammas.cwiseAbs();
  const Eigen::RowVectorXd sq = gammas.colwise().squaredNorm();
  return sq.replicate(gammas.rows(), 1);
}

void CheckShapes(const Matrix& points, const Matrix& gammas,
                 const Matrix& anchors) {
  if (points.cols() != gammas.cols() || gammas.rows() != anchors.cols() ||
      points.rows() != anchors.rows()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "points, coefficients and anchors have inconsistent shapes");
  }
  if (points.cols() == 0) {
    throw Error(ErrorKind::kInvalidArgument, "objective needs at least one point");
  }
  for (Eigen::Index i = 0; i < gammas.cols(); ++i) {
    const double s = gammas.col(i).sum();
    if (!(std::abs(s - 1.0) <= 1e-6)) {
      std::ostringstream msg;
      msg << "coefficient column " << i << " sums to " << s << ", not 1";
      throw Error(ErrorKind::kInvalidArgument, msg.str());
    }
  }
}

}  // namespace

double SampleObjective(const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& gamma,
                       const CodingModel& model) {
  const Vector a = L1DistCubed(x, model.anchors());
  const double recon = 0.5 * (x - model.anchors() * gamma).squaredNorm();
  const double penalty = model.variant() == Variant::kFaemb
                             ? gamma.cwiseAbs().dot(a)
                             : gamma.squaredNorm() * a.sum();
  return recon + 0.5 * model.mu() * penalty;
}

Vector SampleObjectiveGradient(const Eigen::Ref<const Vector>& x,
                               const Eigen::Ref<const Vector>& gamma,
                               const CodingModel& model) {
  const Vector a = L1DistCubed(x, model.anchors());
  Vector g = model.gram() * gamma - model.anchors().transpose() * x;
  if (model.variant() == Variant::kFaemb) {
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      g[j] += 0.5 * model.mu() * Sign(gamma[j]) * a[j];
    }
  } else {
    g += model.mu() * a.sum() * gamma;
  }
  return g;
}

double ObjectiveWithAnchors(const Matrix& points, const Matrix& gammas,
                            const Matrix& anchors, const CodingModel& model) {
  CheckShapes(points, gammas, anchors);
  const Eigen::Index m = points.cols();
  const double recon = 0.5 * (points - anchors * gammas).squaredNorm();
  const Matrix w = PenaltyWeights(gammas, model.variant());
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    penalty += w.col(i).dot(L1DistCubed(points.col(i), anchors));
  }
  return (recon + 0.5 * model.mu() * penalty) / static_cast<double>(m);
}

double Objective(const Matrix& points, const Matrix& gammas,
                 const CodingModel& model) {
  return ObjectiveWithAnchors(points, gammas, model.anchors(), model);
}

Matrix ObjectiveGradientAnchors(const Matrix& points, const Matrix& gammas,
                                const Matrix& anchors, const CodingModel& model) {
  CheckShapes(points, gammas, anchors);
  const Eigen::Index m = points.cols();
  const Eigen::Index d = anchors.rows();
  Matrix grad = (anchors * gammas - points) * gammas.transpose();
  const Matrix w = PenaltyWeights(gammas, model.variant());
  const double coef = 0.5 * model.mu() * 3.0;
  for (Eigen::Index j = 0; j < anchors.cols(); ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (w(j, i) == 0.0) continue;
      double l1 = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) l1 += std::abs(anchors(k, j) - points(k, i));
      const double scale = coef * w(j, i) * l1 * l1;
      for (Eigen::Index k = 0; k < d; ++k) {
        grad(k, j) += scale * Sign(anchors(k, j) - points(k, i));
      }
    }
  }
  return grad / static_cast<double>(m);
}

Matrix UpdateAnchors(const Matrix& points, const Matrix& gammas,
                     const Matrix& anchors_init, const CodingModel& model,
                     const AnchorUpdateOptions& options) {
  CheckShapes(points, gammas, anchors_init);
  const Eigen::Index m = points.cols();
  const Eigen::Index d = anchors_init.rows();
  const Eigen::Index n = anchors_init.cols();
  const Eigen::Index nd = n * d;
  const double inv_m = 1.0 / static_cast<double>(m);
  const Matrix w = PenaltyWeights(gammas, model.variant());
  const Matrix outer = gammas * gammas.transpose() * inv_m;
  const double hess_coef = 0.5 * model.mu() * 6.0 * inv_m;

  Matrix anchors = anchors_init;
  double q = ObjectiveWithAnchors(points, gammas, anchors, model);
  for (int it = 0; it < options.max_iters; ++it) {
    const Matrix grad = ObjectiveGradientAnchors(points, gammas, anchors, model);
    if (!grad.allFinite()) {
      throw Error(ErrorKind::kNumerical, "anchor gradient is not finite");
    }
    Matrix hess = Matrix::Zero(nd, nd);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index l = 0; l < n; ++l) {
        hess.block(j * d, l * d, d, d).diagonal().array() += outer(j, l);
      }
    }
    if (model.mu() > 0) {
      Matrix signs(m, d);
      Vector weight(m);
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
          double l1 = 0.0;
          for (Eigen::Index k = 0; k < d; ++k) {
            const double diff = anchors(k, j) - points(k, i);
            signs(i, k) = Sign(diff);
            l1 += std::abs(diff);
          }
          weight[i] = w(j, i) * l1;
        }
        hess.block(j * d, j * d, d, d).noalias() +=
            hess_coef * (signs.transpose() * weight.asDiagonal() * signs);
      }
    }
    hess.diagonal().array() += 1e-12 * (1.0 + hess.trace() / static_cast<double>(nd));
    const Eigen::Map<const Vector> g(grad.data(), nd);
    const Vector step = -hess.ldlt().solve(g);
    const double slope = g.dot(step);
    if (!step.allFinite() || slope >= 0) break;
    if (-slope <= options.decrement_tol * (1.0 + q)) break;

    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      Matrix trial = anchors;
      Eigen::Map<Vector>(trial.data(), nd) += t * step;
      const double q_trial = ObjectiveWithAnchors(points, gammas, trial, model);
      if (q_trial <= q + 1e-4 * t * slope) {
        anchors = std::move(trial);
        q = q_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return anchors;
}

// ---------------------------------------------------------------------------
// Training

TrainingResult TrainCoding(const Matrix& points, const TrainingOptions& options) {
  options.solver.Validate();
  const Eigen::Index m = points.cols();
  if (options.num_anchors < 2 || m < options.num_anchors) {
    throw Error(ErrorKind::kInvalidArgument,
                "training needs m >= n >= 2 (m=" + std::to_string(m) +
                    ", n=" + std::to_string(options.num_anchors) + ")");
  }
  if (!points.allFinite()) {
    throw Error(ErrorKind::kNumerical, "training descriptors contain non-finite values");
  }

  TrainingResult result;
  result.model = CodingModel::Create(KMeansInit(points, options.num_anchors, options.seed),
                                     options.mu, options.variant);
  result.gammas = ComputeGammas(points, result.model, options.solver, options.threads);
  result.trace.push_back(Objective(points, result.gammas, result.model));

  for (int t = 1; t <= options.solver.max_outer_iters; ++t) {
    Matrix anchors = UpdateAnchors(points, result.gammas, result.model.anchors(), result.model);
    CodingModel next = CodingModel::Create(std::move(anchors), options.mu, options.variant);
    Matrix gammas = ComputeGammas(points, next, options.solver, options.threads,
                                  &result.gammas);
    result.model = std::move(next);
    result.gammas = std::move(gammas);
    result.trace.push_back(Objective(points, result.gammas, result.model));
    result.iterations = t;
    const double change = std::abs(result.trace[result.trace.size() - 1] -
                                   result.trace[result.trace.size() - 2]);
    if (change < options.solver.outer_tol) break;
  }
  return result;
}

}  // namespace faemb
