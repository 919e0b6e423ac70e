#include "faemb/pipeline.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <cmath>

namespace faemb {

const char* AggregationModeName(AggregationMode mode) {
  return mode == AggregationMode::kDemocratic ? "democratic" : "sum";
}

AggregationMode ParseAggregationMode(const std::string& name) {
  if (name == "democratic") return AggregationMode::kDemocratic;
  if (name == "sum") return AggregationMode::kSum;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown aggregation mode '" + name + "' (expected democratic|sum)");
}

namespace {

void EmbedRange(const Matrix& descriptors, const CodingModel& model,
                const PipelineOptions& options, std::size_t begin, std::size_t end,
                Matrix& out) {
  for (std::size_t i = begin; i < end; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Coefficients c = ComputeGamma(descriptors.col(col), model, options.solver);
    EmbedFaembInto(descriptors.col(col), c.gamma, model.anchors(), options.embedding,
                   out.col(col).data());
  }
}

}  // namespace

Matrix EmbedDescriptors(const Matrix& descriptors, const CodingModel& model,
                        const PipelineOptions& options) {
  if (descriptors.rows() != model.dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor dimension " + std::to_string(descriptors.rows()) +
                    " does not match the coding model (" + std::to_string(model.dim()) + ")");
  }
  Matrix out(EmbeddingLength(model.num_anchors(), model.dim(), options.embedding),
             descriptors.cols());
  ParallelFor(static_cast<std::size_t>(descriptors.cols()), options.threads,
              [&](std::size_t b, std::size_t e) { EmbedRange(descriptors, model, options, b, e, out); });
  return out;
}

Matrix SampleDescriptors(const std::vector<DescriptorSet>& sets, int max_samples,
                         std::uint64_t seed) {
  const Matrix all = StackDescriptors(sets);
  if (max_samples <= 0 || all.cols() <= max_samples) return all;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(all.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates, then restore ascending order for locality.
  for (int i = 0; i < max_samples; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), order.size() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[pick(rng)]);
  }
  order.resize(static_cast<std::size_t>(max_samples));
  std::sort(order.begin(), order.end());
  Matrix out(all.rows(), max_samples);
  for (int i = 0; i < max_samples; ++i) out.col(i) = all.col(order[static_cast<std::size_t>(i)]);
  return out;
}

WhiteningModel FitEmbeddingWhitening(const std::vector<DescriptorSet>& train,
                                     const CodingModel& model,
                                     const PipelineOptions& options, int drop,
                                     int max_samples, std::uint64_t seed, double rel_eps) {
  ValidateDescriptorSets(train, model.dim());
  const Matrix sample = SampleDescriptors(train, max_samples, seed);
  return WhiteningModel::Fit(EmbedDescriptors(sample, model, options), drop, rel_eps);
}

ImageSignature AggregateSet(const DescriptorSet& set, const CodingModel& model,
                            const WhiteningModel& whitening, const PipelineOptions& options) {
  if (set.size() == 0) {
    return ImageSignature{set.image_id, Vector::Zero(whitening.output_dim()), true};
  }
  PipelineOptions inner = options;
  inner.threads = 1;
  const Matrix phi_w = whitening.ApplyBatch(EmbedDescriptors(set.descriptors, model, inner));
  Vector weights = Vector::Ones(phi_w.cols());
  if (options.mode == AggregationMode::kDemocratic) {
    bool any = false;
    for (Eigen::Index i = 0; i < phi_w.cols() && !any; ++i) any = phi_w.col(i).norm() >= 1e-10;
    if (!any) return ImageSignature{set.image_id, Vector::Zero(phi_w.rows()), true};
    weights = DemocraticWeights(phi_w, options.democratic_iters, options.democratic_tol).weights;
  }
  return L2Normalize(PowerLaw(AggregateImage(phi_w, weights), options.alpha), set.image_id);
}

std::vector<ImageSignature> AggregateSets(const std::vector<DescriptorSet>& sets,
                                          const CodingModel& model,
                                          const WhiteningModel& whitening,
                                          const PipelineOptions& options) {
  ValidateDescriptorSets(sets, model.dim());
  std::vector<ImageSignature> out(sets.size());
  ParallelFor(sets.size(), options.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = AggregateSet(sets[i], model, whitening, options);
  });
  return out;
}

Matrix SignatureMatrix(const std::vector<ImageSignature>& sigs) {
  if (sigs.empty()) return Matrix();
  Matrix m(sigs.front().values.size(), static_cast<Eigen::Index>(sigs.size()));
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    if (sigs[i].values.size() != m.rows()) {
      throw Error(ErrorKind::kDimensionMismatch, "signatures differ in length");
    }
    m.col(static_cast<Eigen::Index>(i)) = sigs[i].values;
  }
  return m;
}

std::vector<ImageSignature> ApplyRotationNormAll(const std::vector<ImageSignature>& sigs,
                                                 const RotationNormModel& model) {
  std::vector<ImageSignature> out;
  out.reserve(sigs.size());
  for (const auto& s : sigs) out.push_back(ApplyRotationNorm(s, model));
  return out;
}

std::vector<BinaryCode> EncodeAll(const std::vector<ImageSignature>& sigs, const ItqModel& model) {
  std::vector<BinaryCode> out;
  out.reserve(sigs.size());
  for (const auto& s : sigs) out.push_back(EncodeItq(s.values, model, s.image_id));
  return out;
}

namespace {

BenchTiming TimeVariant(const Matrix& anchors, const Matrix& points, double mu,
                        Variant variant, const SolverParams& solver) {
  const CodingModel model = CodingModel::Create(anchors, mu, variant);
  const EmbeddingConfig cfg;
  Vector buffer(EmbeddingLength(model.num_anchors(), model.dim(), cfg));
  BenchTiming t;
  t.variant = variant;
  long long iters = 0;
  const auto start = std::chrono::steady_clock::now();
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const Coefficients c = ComputeGamma(points.col(i), model, solver);
    iters += c.info.iterations;
    EmbedFaembInto(points.col(i), c.gamma, model.anchors(), cfg, buffer.data());
    t.checksum += buffer[i % buffer.size()];
  }
  const auto stop = std::chrono::steady_clock::now();
  t.total_seconds = std::chrono::duration<double>(stop - start).count();
  t.per_descriptor_ms = 1e3 * t.total_seconds / static_cast<double>(points.cols());
  t.mean_newton_iters = static_cast<double>(iters) / static_cast<double>(points.cols());
  return t;
}

}  // namespace

BenchResult BenchEmbedding(int n, int dim, int count, double mu, const SolverParams& solver,
                           std::uint64_t seed) {
  if (n < 2 || dim < 1 || count < 1) {
    throw Error(ErrorKind::kInvalidArgument, "bench needs n >= 2, dim >= 1, count >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  auto draw = [&](int rows, int cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = gauss(rng);
    }
    return m;
  };
  const Matrix anchors = draw(dim, n);
  const Matrix points = draw(dim, count);
  BenchResult r;
  r.n = n;
  r.dim = dim;
  r.count = count;
  r.faemb = TimeVariant(anchors, points, mu, Variant::kFaemb, solver);
  r.ffaemb = TimeVariant(anchors, points, mu, Variant::kFfaemb, solver);
  return r;
}

}  // namespace faemb
