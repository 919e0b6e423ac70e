#ifndef FAEMB_RETRIEVAL_H_
#define FAEMB_RETRIEVAL_H_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "faemb/aggregate.h"
#include "faemb/binary.h"
#include "faemb/core.h"

namespace faemb {

enum class IndexMode { kReal, kBinary };

// Exhaustive-search store of either real signatures or binary codes.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  static RetrievalIndex FromSignatures(const std::vector<ImageSignature>& sigs);
  static RetrievalIndex FromCodes(std::vector<BinaryCode> codes);

  IndexMode mode() const { return mode_; }
  std::size_t size() const { return ids_.size(); }
  // Signature length (real) or bit count (binary).
  Eigen::Index dimension() const { return dimension_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<BinaryCode>& codes() const { return codes_; }

  // Top-k by ascending Euclidean distance; ties keep insertion order.
  // k = 0 returns the full ranking.
  std::vector<RankedItem> Search(const Eigen::Ref<const Vector>& query,
                                 std::size_t k = 0) const;
  // Top-k by ascending Hamming distance.
  std::vector<RankedItem> Search(const BinaryCode& query, std::size_t k = 0) const;

 private:
  IndexMode mode_ = IndexMode::kReal;
  Eigen::Index dimension_ = 0;
  std::vector<std::string> ids_;
  Matrix vectors_;                 // real mode, one column per entry
  std::vector<BinaryCode> codes_;  // binary mode
};

struct GroundTruthEntry {
  std::set<std::string> relevant;
  std::set<std::string> junk;
};

// Per-query relevant and junk sets, kept in file order.
class GroundTruth {
 public:
  void Add(const std::string& query, GroundTruthEntry entry);
  bool Contains(const std::string& query) const { return entries_.count(query) > 0; }
  const GroundTruthEntry& At(const std::string& query) const;
  const std::vector<std::string>& queries() const { return order_; }

  // One line per query: `query_id | relevant: a,b | junk: c`.
  std::string Format() const;
  static GroundTruth Parse(const std::string& text);
  static GroundTruth Load(const std::string& path);
  void Save(const std::string& path) const;

 private:
  std::map<std::string, GroundTruthEntry> entries_;
  std::vector<std::string> order_;
};

struct ApResult {
  double ap = 0.0;
  bool no_relevant = false;  // AP defined as 0 and flagged
};

// Junk ids and the query id are removed from the ranking (positions close
// up), the query is removed from the relevant set, then
// AP = (1/|R|) sum over relevant hits at rank r of (hits in top r) / r.
ApResult AveragePrecision(const std::vector<std::string>& ranked,
                          const std::set<std::string>& relevant,
                          const std::set<std::string>& junk,
                          const std::string& query_id = {});

struct QueryReport {
  std::string query_id;
  double ap = 0.0;
  bool no_relevant = false;
};

struct MapReport {
  double map = 0.0;
  std::vector<QueryReport> queries;
};

// Queries must be in the ground truth; reports follow query order.
MapReport EvaluateMap(const std::vector<ImageSignature>& queries,
                      const RetrievalIndex& index, const GroundTruth& gt,
                      int threads = 1);
MapReport EvaluateMap(const std::vector<BinaryCode>& queries,
                      const RetrievalIndex& index, const GroundTruth& gt,
                      int threads = 1);

// Planted-cluster corpus. A shared vocabulary of modes generates one
// template descriptor pool per cluster; every image of a cluster is its
// template plus N(0, sigma^2) noise, and images of a cluster are mutually
// relevant. Learning images come from separate templates.
struct SynthParams {
  int clusters = 20;
  int per_cluster = 5;
  int descriptors_per_image = 200;
  int dim = 16;
  double sigma = 0.05;
  std::uint64_t seed = 1;
  int learning_images = 0;
  int vocabulary = 16;           // number of generating modes
  double template_spread = 0.3;  // template jitter around its mode, times 1/sqrt(d)
};

struct SynthCorpus {
  std::vector<DescriptorSet> database;
  std::vector<DescriptorSet> learning;
  GroundTruth ground_truth;
};

// Values are rounded to float32 so the corpus survives a descriptor-file
// round trip unchanged.
SynthCorpus SynthesizeCorpus(const SynthParams& params);

}  // namespace faemb

#endif  // FAEMB_RETRIEVAL_H_
