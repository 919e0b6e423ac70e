#include "faemb/retrieval.h"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "faemb/descriptor_io.h"

namespace faemb {

RetrievalIndex RetrievalIndex::FromSignatures(const std::vector<ImageSignature>& sigs) {
  RetrievalIndex index;
  index.mode_ = IndexMode::kReal;
  if (sigs.empty()) return index;
  index.dimension_ = sigs.front().values.size();
  index.vectors_.resize(index.dimension_, static_cast<Eigen::Index>(sigs.size()));
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    if (sigs[i].values.size() != index.dimension_) {
      throw Error(ErrorKind::kDimensionMismatch, "index signatures differ in length");
    }
    index.vectors_.col(static_cast<Eigen::Index>(i)) = sigs[i].values;
    index.ids_.push_back(sigs[i].image_id);
  }
  return index;
}

RetrievalIndex RetrievalIndex::FromCodes(std::vector<BinaryCode> codes) {
  RetrievalIndex index;
  index.mode_ = IndexMode::kBinary;
  if (codes.empty()) return index;
  index.dimension_ = codes.front().num_bits;
  for (const auto& c : codes) {
    if (c.num_bits != index.dimension_) {
      throw Error(ErrorKind::kDimensionMismatch, "index codes differ in length");
    }
    index.ids_.push_back(c.image_id);
  }
  index.codes_ = std::move(codes);
  return index;
}

namespace {

std::vector<RankedItem> TopK(std::vector<RankedItem> ranked, std::size_t k) {
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedItem& a, const RankedItem& b) { return a.distance < b.distance; });
  if (k > 0 && ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace

std::vector<RankedItem> RetrievalIndex::Search(const Eigen::Ref<const Vector>& query,
                                               std::size_t k) const {
  if (mode_ != IndexMode::kReal) {
    throw Error(ErrorKind::kInvalidArgument, "real-valued query against a binary index");
  }
  if (query.size() != dimension_ && !ids_.empty()) {
    throw Error(ErrorKind::kDimensionMismatch, "query length does not match the index");
  }
  std::vector<RankedItem> ranked;
  ranked.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const double dist = (vectors_.col(static_cast<Eigen::Index>(i)) - query).norm();
    ranked.push_back({ids_[i], dist, i});
  }
  return TopK(std::move(ranked), k);
}

std::vector<RankedItem> RetrievalIndex::Search(const BinaryCode& query, std::size_t k) const {
  if (mode_ != IndexMode::kBinary) {
    throw Error(ErrorKind::kInvalidArgument, "binary query against a real-valued index");
  }
  std::vector<RankedItem> ranked;
  ranked.reserve(ids_.size());
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    ranked.push_back({ids_[i], static_cast<double>(HammingDistance(query, codes_[i])), i});
  }
  return TopK(std::move(ranked), k);
}

// ---------------------------------------------------------------------------
// Ground truth

void GroundTruth::Add(const std::string& query, GroundTruthEntry entry) {
  for (const auto& id : entry.relevant) {
    if (entry.junk.count(id)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "ground truth for '" + query + "': '" + id + "' is both relevant and junk");
    }
  }
  if (entries_.count(query)) {
    throw Error(ErrorKind::kInvalidArgument, "duplicate ground truth entry for '" + query + "'");
  }
  order_.push_back(query);
  entries_[query] = std::move(entry);
}

const GroundTruthEntry& GroundTruth::At(const std::string& query) const {
  auto it = entries_.find(query);
  if (it == entries_.end()) {
    throw Error(ErrorKind::kInvalidArgument, "no ground truth entry for query '" + query + "'");
  }
  return it->second;
}

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::set<std::string> ParseIdList(const std::string& field, const std::string& label,
                                  int line_no) {
  const std::string f = Trim(field);
  if (f.rfind(label + ":", 0) != 0) {
    throw Error(ErrorKind::kFormat, "ground truth line " + std::to_string(line_no) +
                                        ": expected '" + label + ":'");
  }
  std::set<std::string> ids;
  std::stringstream ss(f.substr(label.size() + 1));
  std::string id;
  while (std::getline(ss, id, ',')) {
    id = Trim(id);
    if (!id.empty()) ids.insert(id);
  }
  return ids;
}

std::string JoinIds(const std::set<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ',';
    out += id;
  }
  return out;
}

}  // namespace

std::string GroundTruth::Format() const {
  std::ostringstream out;
  for (const auto& q : order_) {
    const auto& e = entries_.at(q);
    out << q << " | relevant: " << JoinIds(e.relevant) << " | junk: " << JoinIds(e.junk)
        << "\n";
  }
  return out.str();
}

GroundTruth GroundTruth::Parse(const std::string& text) {
  GroundTruth gt;
  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (Trim(line).empty() || Trim(line)[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '|')) fields.push_back(field);
    if (fields.size() != 3) {
      throw Error(ErrorKind::kFormat, "ground truth line " + std::to_string(line_no) +
                                          ": expected 3 '|'-separated fields");
    }
    const std::string query = Trim(fields[0]);
    if (query.empty()) {
      throw Error(ErrorKind::kFormat,
                  "ground truth line " + std::to_string(line_no) + ": empty query id");
    }
    gt.Add(query, {ParseIdList(fields[1], "relevant", line_no),
                   ParseIdList(fields[2], "junk", line_no)});
  }
  return gt;
}

GroundTruth GroundTruth::Load(const std::string& path) {
  return Parse(ReadFileBytes(path));
}

void GroundTruth::Save(const std::string& path) const {
  WriteFileBytes(path, Format());
}

// ---------------------------------------------------------------------------
// Evaluation

ApResult AveragePrecision(const std::vector<std::string>& ranked,
                          const std::set<std::string>& relevant,
                          const std::set<std::string>& junk,
                          const std::string& query_id) {
  std::size_t total = relevant.size();
  if (!query_id.empty() && relevant.count(query_id)) --total;
  ApResult result;
  if (total == 0) {
    result.no_relevant = true;
    return result;
  }
  std::size_t rank = 0;
  std::size_t hits = 0;
  double sum = 0.0;
  for (const auto& id : ranked) {
    if (junk.count(id) || (!query_id.empty() && id == query_id)) continue;
    ++rank;
    if (relevant.count(id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  result.ap = sum / static_cast<double>(total);
  return result;
}

namespace {

template <typename Query>
MapReport EvaluateQueries(const std::vector<Query>& queries, const RetrievalIndex& index,
                          const GroundTruth& gt, int threads) {
  for (const auto& q : queries) {
    if (!gt.Contains(q.image_id)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "query '" + q.image_id + "' has no ground truth entry");
    }
  }
  MapReport report;
  report.queries.resize(queries.size());
  ParallelFor(queries.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& q = queries[i];
      std::vector<RankedItem> ranked;
      if constexpr (std::is_same_v<Query, BinaryCode>) {
        ranked = index.Search(q);
      } else {
        ranked = index.Search(q.values);
      }
      std::vector<std::string> ids;
      ids.reserve(ranked.size());
      for (const auto& r : ranked) ids.push_back(r.image_id);
      const auto& entry = gt.At(q.image_id);
      const ApResult ap = AveragePrecision(ids, entry.relevant, entry.junk, q.image_id);
      report.queries[i] = {q.image_id, ap.ap, ap.no_relevant};
    }
  });
  double sum = 0.0;
  for (const auto& q : report.queries) sum += q.ap;
  report.map = queries.empty() ? 0.0 : sum / static_cast<double>(queries.size());
  return report;
}

}  // namespace

MapReport EvaluateMap(const std::vector<ImageSignature>& queries,
                      const RetrievalIndex& index, const GroundTruth& gt, int threads) {
  return EvaluateQueries(queries, index, gt, threads);
}

MapReport EvaluateMap(const std::vector<BinaryCode>& queries,
                      const RetrievalIndex& index, const GroundTruth& gt, int threads) {
  return EvaluateQueries(queries, index, gt, threads);
}

}  // namespace faemb
