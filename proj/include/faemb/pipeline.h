#ifndef FAEMB_PIPELINE_H_
#define FAEMB_PIPELINE_H_

#include <cstdint>
#include <vector>

#include "faemb/aggregate.h"
#include "faemb/binary.h"
#include "faemb/coding.h"
#include "faemb/core.h"
#include "faemb/embed.h"

namespace faemb {

enum class AggregationMode { kDemocratic, kSum };

const char* AggregationModeName(AggregationMode mode);
AggregationMode ParseAggregationMode(const std::string& name);

// Everything between a descriptor set and its signature except the models.
struct PipelineOptions {
  SolverParams solver;
  EmbeddingConfig embedding;
  AggregationMode mode = AggregationMode::kDemocratic;
  double alpha = 0.5;
  int democratic_iters = 100;
  double democratic_tol = 1e-3;
  int threads = 1;
};

// d(d+1)/2: the number of leading whitened components discarded by default.
inline int DefaultDrop(Eigen::Index d) { return static_cast<int>(SymSize(d)); }

// Embedded vectors of every descriptor column (EmbeddingLength x count).
Matrix EmbedDescriptors(const Matrix& descriptors, const CodingModel& model,
                        const PipelineOptions& options);

// Fits whitening on the embeddings of at most `max_samples` descriptors
// drawn without replacement (seeded) from the training sets.
WhiteningModel FitEmbeddingWhitening(const std::vector<DescriptorSet>& train,
                                     const CodingModel& model,
                                     const PipelineOptions& options, int drop,
                                     int max_samples, std::uint64_t seed,
                                     double rel_eps = 1e-10);

// Embed, whiten, weight (democratic or sum), power-law, L2-normalize.
// An image with no descriptors yields a flagged zero signature.
ImageSignature AggregateSet(const DescriptorSet& set, const CodingModel& model,
                            const WhiteningModel& whitening,
                            const PipelineOptions& options);

// Parallel over images; output order follows input order.
std::vector<ImageSignature> AggregateSets(const std::vector<DescriptorSet>& sets,
                                          const CodingModel& model,
                                          const WhiteningModel& whitening,
                                          const PipelineOptions& options);

// Columns are signatures; degenerate ones included as zero columns.
Matrix SignatureMatrix(const std::vector<ImageSignature>& sigs);

std::vector<ImageSignature> ApplyRotationNormAll(const std::vector<ImageSignature>& sigs,
                                                 const RotationNormModel& model);

std::vector<BinaryCode> EncodeAll(const std::vector<ImageSignature>& sigs,
                                  const ItqModel& model);

// Up to max_samples descriptor columns pooled from the sets, sampled without
// replacement with the given seed (all of them when there are fewer).
Matrix SampleDescriptors(const std::vector<DescriptorSet>& sets, int max_samples,
                         std::uint64_t seed);

struct BenchTiming {
  Variant variant = Variant::kFfaemb;
  double total_seconds = 0.0;
  double per_descriptor_ms = 0.0;
  double mean_newton_iters = 0.0;  // 0 for the closed form
  double checksum = 0.0;           // one sampled embedding entry per descriptor
};

struct BenchResult {
  int n = 0;
  int dim = 0;
  int count = 0;
  BenchTiming faemb;
  BenchTiming ffaemb;
  double speedup() const { return faemb.per_descriptor_ms / ffaemb.per_descriptor_ms; }
};

// Times coefficient computation plus embedding, one descriptor at a time on
// one thread, for both coders on the same random anchors and descriptors.
BenchResult BenchEmbedding(int n, int dim, int count, double mu,
                           const SolverParams& solver, std::uint64_t seed);

}  // namespace faemb

#endif  // FAEMB_PIPELINE_H_
