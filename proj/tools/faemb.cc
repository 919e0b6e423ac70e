// Command-line front end for the FAemb / F-FAemb retrieval pipeline.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "faemb/aggregate.h"
#include "faemb/binary.h"
#include "faemb/coding.h"
#include "faemb/config.h"
#include "faemb/container.h"
#include "faemb/descriptor_io.h"
#include "faemb/pipeline.h"
#include "faemb/retrieval.h"

namespace {

using namespace faemb;

void Log(const std::string& msg) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  localtime_r(&t, &tm);
  std::cerr << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3)
            << std::setfill('0') << ms << std::setfill(' ') << " [faemb] " << msg << std::endl;
}

void ReportError(const std::string& kind, const std::string& message) {
  nlohmann::json line = {{"status", "error"}, {"kind", kind}, {"message", message}};
  std::cerr << line.dump() << std::endl;
}

std::string Require(const std::string& value, const std::string& what) {
  if (value.empty()) {
    throw Error(ErrorKind::kConfig, "missing " + what);
  }
  return value;
}

void EnsureParent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::string ModelPath(const PipelineConfig& cfg, const std::string& given,
                      const std::string& file) {
  return given.empty() ? (std::filesystem::path(cfg.paths.model_dir) / file).string() : given;
}

void SaveContainer(const Container& c, const std::string& path) {
  EnsureParent(path);
  c.Save(path);
  Log("wrote " + path);
}

// Options shared by all subcommands; flags mirror config keys.
struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::string n, mu, variant, alpha, drop, keep, bits, threads, seed;
};

PipelineConfig BuildConfig(const GlobalOptions& g) {
  PipelineConfig cfg;
  if (!g.config_path.empty()) {
    cfg = LoadConfig(g.config_path);
  }
  std::vector<std::string> errors;
  auto apply = [&](const std::string& key, const std::string& value) {
    try {
      cfg.Set(key, value);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  };
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      errors.push_back("--set expects section.key=value, got '" + s + "'");
      continue;
    }
    apply(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!g.n.empty()) apply("coding.n", g.n);
  if (!g.mu.empty()) apply("coding.mu", g.mu);
  if (!g.variant.empty()) apply("coding.variant", g.variant);
  if (!g.alpha.empty()) apply("aggregation.alpha", g.alpha);
  if (!g.drop.empty()) apply("whitening.drop", g.drop);
  if (!g.keep.empty()) apply("rn.keep", g.keep);
  if (!g.bits.empty()) apply("itq.bits", g.bits);
  if (!g.threads.empty()) apply("run.threads", g.threads);
  if (!g.seed.empty()) {
    for (const char* key : {"coding.seed", "whitening.seed", "itq.seed", "synth.seed"}) {
      apply(key, g.seed);
    }
  }
  for (const auto& v : cfg.Violations()) errors.push_back(v);
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "): ";
    for (std::size_t i = 0; i < errors.size(); ++i) msg += (i ? "; " : "") + errors[i];
    throw Error(ErrorKind::kConfig, msg);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Aggregation model: whitening plus the settings it was fitted with.

struct AggregationModel {
  WhiteningModel whitening;
  PipelineOptions options;
};

void StoreAggregation(Container& c, const AggregationModel& m) {
  StoreWhitening(c, m.whitening);
  c.PutString("aggregation.type", "aggregation_settings");
  c.PutString("aggregation.mode", AggregationModeName(m.options.mode));
  c.PutScalar("aggregation.alpha", m.options.alpha);
  c.PutScalar("aggregation.s1", m.options.embedding.s1);
  c.PutScalar("aggregation.s2", m.options.embedding.s2);
}

AggregationModel LoadAggregation(const Container& c, const PipelineConfig& cfg) {
  if (!c.Has("aggregation.type") || c.GetString("aggregation.type") != "aggregation_settings") {
    throw Error(ErrorKind::kFormat, "container holds no aggregation model");
  }
  AggregationModel m{LoadWhitening(c), cfg.pipeline_options()};
  m.options.mode = ParseAggregationMode(c.GetString("aggregation.mode"));
  m.options.alpha = c.GetScalar("aggregation.alpha");
  m.options.embedding = {c.GetScalar("aggregation.s1"), c.GetScalar("aggregation.s2")};
  return m;
}

CodingModel LoadCoding(const std::string& path, const PipelineConfig& cfg) {
  const CodingModel m = LoadCodingModel(Container::Load(path));
  if (m.num_anchors() != cfg.coding.n) {
    Log("note: coding model has n=" + std::to_string(m.num_anchors()) +
        " (config n=" + std::to_string(cfg.coding.n) + "); using the model");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Subcommands

void RunSynth(const PipelineConfig& cfg, const std::string& out_dir) {
  const SynthParams p = cfg.synth_params();
  Log("synthesizing " + std::to_string(p.clusters) + "x" + std::to_string(p.per_cluster) +
      " images, sigma=" + std::to_string(p.sigma));
  const SynthCorpus corpus = SynthesizeCorpus(p);
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  WriteDescriptorFile((dir / "database.faeb").string(), corpus.database);
  if (!corpus.learning.empty()) {
    WriteDescriptorFile((dir / "learning.faeb").string(), corpus.learning);
  }
  corpus.ground_truth.Save((dir / "ground_truth.txt").string());
  std::cout << "file\timages\n"
            << (dir / "database.faeb").string() << "\t" << corpus.database.size() << "\n";
  if (!corpus.learning.empty()) {
    std::cout << (dir / "learning.faeb").string() << "\t" << corpus.learning.size() << "\n";
  }
  std::cout << (dir / "ground_truth.txt").string() << "\t" << corpus.ground_truth.queries().size()
            << "\n";
}

void RunTrainCoding(const PipelineConfig& cfg, const std::string& train, const std::string& out) {
  const auto sets = ReadDescriptorFile(Require(train, "training descriptors (--train or paths.train)"));
  const Matrix points = SampleDescriptors(sets, cfg.coding.train_samples, cfg.coding.seed);
  TrainingOptions opt;
  opt.num_anchors = cfg.coding.n;
  opt.mu = cfg.coding.mu;
  opt.variant = cfg.coding_variant();
  opt.solver = cfg.solver();
  opt.seed = cfg.coding.seed;
  opt.threads = cfg.run.threads;
  Log("training " + std::string(VariantName(opt.variant)) + " coding, n=" +
      std::to_string(opt.num_anchors) + ", m=" + std::to_string(points.cols()));
  const TrainingResult result = TrainCoding(points, opt);
  std::cout << "iteration\tobjective\n";
  for (std::size_t t = 0; t < result.trace.size(); ++t) {
    std::cout << t << "\t" << std::setprecision(12) << result.trace[t] << "\n";
  }
  Container c;
  StoreCodingModel(c, result.model);
  SaveContainer(c, ModelPath(cfg, out, "coding.famb"));
}

void RunEmbed(const PipelineConfig& cfg, const std::string& coding, const std::string& in,
              const std::string& out) {
  const CodingModel model = LoadCoding(ModelPath(cfg, coding, "coding.famb"), cfg);
  const auto sets = ReadDescriptorFile(Require(in, "input descriptors (--in)"));
  ValidateDescriptorSets(sets, model.dim());
  const PipelineOptions opt = cfg.pipeline_options();
  std::vector<std::string> ids;
  Vector counts(static_cast<Eigen::Index>(sets.size()));
  const Matrix all = StackDescriptors(sets);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    ids.push_back(sets[i].image_id);
    counts[static_cast<Eigen::Index>(i)] = static_cast<double>(sets[i].size());
  }
  Log("embedding " + std::to_string(all.cols()) + " descriptors");
  const Matrix phi = EmbedDescriptors(all, model, opt);
  Container c;
  c.PutString("embedded.type", "embedded_descriptors");
  c.PutString("embedded.ids", PackStrings(ids));
  c.PutVector("embedded.counts", counts);
  c.PutMatrix("embedded.values", phi);
  SaveContainer(c, Require(out, "output path (--out)"));
  std::cout << "images\tdescriptors\tlength\n"
            << sets.size() << "\t" << phi.cols() << "\t" << phi.rows() << "\n";
}

void RunFitAgg(const PipelineConfig& cfg, const std::string& coding, const std::string& train,
               const std::string& out) {
  const CodingModel model = LoadCoding(ModelPath(cfg, coding, "coding.famb"), cfg);
  const auto sets = ReadDescriptorFile(Require(train, "training descriptors (--train or paths.train)"));
  AggregationModel agg;
  agg.options = cfg.pipeline_options();
  const int drop = cfg.whitening.drop < 0 ? DefaultDrop(model.dim()) : cfg.whitening.drop;
  Log("fitting whitening, drop=" + std::to_string(drop));
  agg.whitening = FitEmbeddingWhitening(sets, model, agg.options, drop, cfg.whitening.samples,
                                        cfg.whitening.seed, cfg.whitening.eps);
  Container c;
  StoreAggregation(c, agg);
  SaveContainer(c, ModelPath(cfg, out, "aggregation.famb"));
  std::cout << "input_dim\tdrop\toutput_dim\n"
            << agg.whitening.input_dim() << "\t" << drop << "\t" << agg.whitening.output_dim()
            << "\n";
}

void RunAggregate(const PipelineConfig& cfg, const std::string& coding, const std::string& agg_path,
                  const std::string& rn_path, const std::string& in, const std::string& out) {
  const CodingModel model = LoadCoding(ModelPath(cfg, coding, "coding.famb"), cfg);
  AggregationModel agg = LoadAggregation(Container::Load(ModelPath(cfg, agg_path, "aggregation.famb")), cfg);
  agg.options.threads = cfg.run.threads;
  const auto sets = ReadDescriptorFile(Require(in, "input descriptors (--in)"));
  Log("aggregating " + std::to_string(sets.size()) + " images");
  auto sigs = AggregateSets(sets, model, agg.whitening, agg.options);
  if (!rn_path.empty()) sigs = ApplyRotationNormAll(sigs, LoadRotationNorm(Container::Load(rn_path)));
  int degenerate = 0;
  for (const auto& s : sigs) degenerate += s.degenerate ? 1 : 0;
  Container c;
  StoreSignatures(c, sigs);
  SaveContainer(c, Require(out, "output path (--out)"));
  std::cout << "images\tlength\tdegenerate\n"
            << sigs.size() << "\t" << (sigs.empty() ? 0 : sigs.front().values.size()) << "\t"
            << degenerate << "\n";
}

void RunFitRn(const PipelineConfig& cfg, const std::string& sigs_path, const std::string& out) {
  if (cfg.rn.keep < 1) throw Error(ErrorKind::kConfig, "rn.keep (--keep) must be >= 1 for fit-rn");
  const auto sigs = LoadSignatures(Container::Load(Require(sigs_path, "signatures (--sigs)")));
  const RotationNormModel m = FitRotationNorm(SignatureMatrix(sigs), cfg.rn.keep, cfg.whitening.eps);
  Container c;
  StoreRotationNorm(c, m);
  SaveContainer(c, ModelPath(cfg, out, "rn.famb"));
  std::cout << "input_dim\tkeep\n" << m.rotation.input_dim() << "\t" << m.keep() << "\n";
}

void RunFitItq(const PipelineConfig& cfg, const std::string& sigs_path, const std::string& out) {
  const auto sigs = LoadSignatures(Container::Load(Require(sigs_path, "signatures (--sigs)")));
  Log("fitting ITQ, bits=" + std::to_string(cfg.itq.bits));
  const ItqFit fit = FitItq(SignatureMatrix(sigs), cfg.itq.bits, cfg.itq.iters, cfg.itq.seed);
  std::cout << "iteration\tquantization_error\n";
  for (std::size_t t = 0; t < fit.error_trace.size(); ++t) {
    std::cout << t + 1 << "\t" << std::setprecision(12) << fit.error_trace[t] << "\n";
  }
  Container c;
  StoreItq(c, fit.model);
  SaveContainer(c, ModelPath(cfg, out, "itq.famb"));
}

void RunEncode(const PipelineConfig& cfg, const std::string& itq_path, const std::string& sigs_path,
               const std::string& out) {
  const ItqModel itq = LoadItq(Container::Load(ModelPath(cfg, itq_path, "itq.famb")));
  const auto sigs = LoadSignatures(Container::Load(Require(sigs_path, "signatures (--sigs)")));
  const auto codes = EncodeAll(sigs, itq);
  Container c;
  StoreCodes(c, codes);
  SaveContainer(c, Require(out, "output path (--out)"));
  std::cout << "codes\tbits\n" << codes.size() << "\t" << itq.bits() << "\n";
}

RetrievalIndex IndexFromContainer(const Container& c) {
  if (c.Has("signatures.type")) return RetrievalIndex::FromSignatures(LoadSignatures(c));
  if (c.Has("codes.type")) return RetrievalIndex::FromCodes(LoadCodes(c));
  throw Error(ErrorKind::kFormat, "container holds neither signatures nor codes");
}

void RunIndex(const std::string& in, const std::string& out) {
  const RetrievalIndex index = IndexFromContainer(Container::Load(Require(in, "input (--in)")));
  Container c;
  StoreIndex(c, index);
  SaveContainer(c, Require(out, "output path (--out)"));
  std::cout << "entries\tmode\tdimension\n"
            << index.size() << "\t" << (index.mode() == IndexMode::kReal ? "real" : "binary")
            << "\t" << index.dimension() << "\n";
}

void RunSearch(const std::string& index_path, const std::string& queries_path, std::size_t k) {
  const RetrievalIndex index = LoadIndex(Container::Load(Require(index_path, "index (--index)")));
  const Container q = Container::Load(Require(queries_path, "queries (--queries)"));
  std::cout << "query\trank\timage\tdistance\n";
  auto print = [](const std::string& id, const std::vector<RankedItem>& ranked) {
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      std::cout << id << "\t" << r + 1 << "\t" << ranked[r].image_id << "\t"
                << std::setprecision(10) << ranked[r].distance << "\n";
    }
  };
  if (index.mode() == IndexMode::kReal) {
    for (const auto& s : LoadSignatures(q)) print(s.image_id, index.Search(s.values, k));
  } else {
    for (const auto& c : LoadCodes(q)) print(c.image_id, index.Search(c, k));
  }
}

void RunEval(const PipelineConfig& cfg, const std::string& index_path,
             const std::string& queries_path, const std::string& gt_path) {
  const GroundTruth gt = GroundTruth::Load(Require(gt_path, "ground truth (--gt or paths.ground_truth)"));
  const RetrievalIndex index = LoadIndex(Container::Load(Require(index_path, "index (--index)")));
  const Container q = Container::Load(Require(queries_path, "queries (--queries)"));
  const MapReport report = index.mode() == IndexMode::kReal
                               ? EvaluateMap(LoadSignatures(q), index, gt, cfg.run.threads)
                               : EvaluateMap(LoadCodes(q), index, gt, cfg.run.threads);
  std::cout << "query\tap\tflag\n";
  int flagged = 0;
  for (const auto& r : report.queries) {
    std::cout << r.query_id << "\t" << std::fixed << std::setprecision(6) << r.ap << "\t"
              << (r.no_relevant ? "no_relevant" : "-") << "\n";
    flagged += r.no_relevant ? 1 : 0;
  }
  std::cout << "mAP\t" << std::fixed << std::setprecision(6) << report.map << "\t"
            << report.queries.size() << " queries\n";
  if (flagged > 0) Log("warning: " + std::to_string(flagged) + " queries have no relevant images");
}

void RunBench(const PipelineConfig& cfg, int dim, int count) {
  Log("bench n=" + std::to_string(cfg.coding.n) + " d=" + std::to_string(dim) +
      " descriptors=" + std::to_string(count));
  const BenchResult r = BenchEmbedding(cfg.coding.n, dim, count, cfg.coding.mu, cfg.solver(),
                                       cfg.coding.seed);
  std::cout << "variant\tper_descriptor_ms\ttotal_s\tmean_newton_iters\n" << std::fixed;
  for (const BenchTiming* t : {&r.faemb, &r.ffaemb}) {
    std::cout << VariantName(t->variant) << "\t" << std::setprecision(5) << t->per_descriptor_ms
              << "\t" << std::setprecision(3) << t->total_seconds << "\t" << std::setprecision(1)
              << t->mean_newton_iters << "\n";
  }
  std::cout << "ratio\t" << std::setprecision(2) << r.speedup() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FAemb / F-FAemb local-descriptor embedding and retrieval"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Configuration file (key = value with [sections])");
  app.add_option("--set", g.sets, "Override a config key: section.key=value (repeatable)");
  app.add_option("--n", g.n, "Number of anchor points (coding.n)");
  app.add_option("--mu", g.mu, "Regularizer (coding.mu)");
  app.add_option("--variant", g.variant, "Coder: faemb|ffaemb (coding.variant)");
  app.add_option("--alpha", g.alpha, "Power-law exponent (aggregation.alpha)");
  app.add_option("--drop", g.drop, "Leading whitened components to drop (whitening.drop)");
  app.add_option("--keep", g.keep, "Rotation-normalization length (rn.keep)");
  app.add_option("--bits", g.bits, "ITQ code length (itq.bits)");
  app.add_option("--threads", g.threads, "Worker threads (run.threads)");
  app.add_option("--seed", g.seed, "Seed for every randomized stage");

  std::string out, in, train, coding, agg, rn, itq, sigs, index, queries, gt;
  std::size_t k = 10;
  int bench_dim = 45, bench_count = 100000;
  bool dump_defaults = false;

  auto* synth = app.add_subcommand("synth", "Generate a planted-cluster corpus");
  synth->add_option("--out-dir", out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train-coding", "Learn anchor points and save the coding model");
  train_cmd->add_option("--train", train, "Training descriptor file (default paths.train)");
  train_cmd->add_option("--out", out, "Output model (default <model_dir>/coding.famb)");

  auto* embed = app.add_subcommand("embed", "Embed every descriptor of a descriptor file");
  embed->add_option("--coding", coding, "Coding model (default <model_dir>/coding.famb)");
  embed->add_option("--in", in, "Descriptor file")->required();
  embed->add_option("--out", out, "Output container")->required();

  auto* fit_agg = app.add_subcommand("fit-agg", "Fit embedding whitening for aggregation");
  fit_agg->add_option("--coding", coding, "Coding model (default <model_dir>/coding.famb)");
  fit_agg->add_option("--train", train, "Training descriptor file (default paths.train)");
  fit_agg->add_option("--out", out, "Output model (default <model_dir>/aggregation.famb)");

  auto* aggregate = app.add_subcommand("aggregate", "Compute image signatures");
  aggregate->add_option("--coding", coding, "Coding model (default <model_dir>/coding.famb)");
  aggregate->add_option("--agg", agg, "Aggregation model (default <model_dir>/aggregation.famb)");
  aggregate->add_option("--rn", rn, "Optional rotation-normalization model to apply");
  aggregate->add_option("--in", in, "Descriptor file (default paths.corpus)");
  aggregate->add_option("--out", out, "Output signatures")->required();

  auto* fit_rn = app.add_subcommand("fit-rn", "Fit rotation normalization on signatures");
  fit_rn->add_option("--sigs", sigs, "Training signatures")->required();
  fit_rn->add_option("--out", out, "Output model (default <model_dir>/rn.famb)");

  auto* fit_itq = app.add_subcommand("fit-itq", "Fit ITQ on signatures");
  fit_itq->add_option("--sigs", sigs, "Training signatures")->required();
  fit_itq->add_option("--out", out, "Output model (default <model_dir>/itq.famb)");

  auto* encode = app.add_subcommand("encode", "Binarize signatures with an ITQ model");
  encode->add_option("--itq", itq, "ITQ model (default <model_dir>/itq.famb)");
  encode->add_option("--sigs", sigs, "Signatures")->required();
  encode->add_option("--out", out, "Output codes")->required();

  auto* index_cmd = app.add_subcommand("index", "Build a search index from signatures or codes");
  index_cmd->add_option("--in", in, "Signatures or codes container")->required();
  index_cmd->add_option("--out", out, "Output index")->required();

  auto* search = app.add_subcommand("search", "Rank the index for each query");
  search->add_option("--index", index, "Index container")->required();
  search->add_option("--queries", queries, "Query signatures or codes")->required();
  search->add_option("--k", k, "Results per query (0 = all)");

  auto* eval = app.add_subcommand("eval", "Mean average precision against ground truth");
  eval->add_option("--index", index, "Index container")->required();
  eval->add_option("--queries", queries, "Query signatures or codes")->required();
  eval->add_option("--gt", gt, "Ground truth file (default paths.ground_truth)");

  auto* bench = app.add_subcommand("bench", "Per-descriptor embedding time, FAemb vs F-FAemb");
  bench->add_option("--dim", bench_dim, "Descriptor dimension");
  bench->add_option("--count", bench_count, "Number of random descriptors");

  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");
  config_cmd->add_flag("--dump-defaults", dump_defaults, "Print the built-in defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    ReportError("usage", e.what());
    return 2;
  }

  try {
    if (config_cmd->parsed() && dump_defaults) {
      std::cout << PipelineConfig().Dump();
      return 0;
    }
    const PipelineConfig cfg = BuildConfig(g);
    if (config_cmd->parsed()) {
      std::cout << cfg.Dump();
    } else if (synth->parsed()) {
      RunSynth(cfg, out);
    } else if (train_cmd->parsed()) {
      RunTrainCoding(cfg, train.empty() ? cfg.paths.train : train, out);
    } else if (embed->parsed()) {
      RunEmbed(cfg, coding, in, out);
    } else if (fit_agg->parsed()) {
      RunFitAgg(cfg, coding, train.empty() ? cfg.paths.train : train, out);
    } else if (aggregate->parsed()) {
      RunAggregate(cfg, coding, agg, rn, in.empty() ? cfg.paths.corpus : in, out);
    } else if (fit_rn->parsed()) {
      RunFitRn(cfg, sigs, out);
    } else if (fit_itq->parsed()) {
      RunFitItq(cfg, sigs, out);
    } else if (encode->parsed()) {
      RunEncode(cfg, itq, sigs, out);
    } else if (index_cmd->parsed()) {
      RunIndex(in, out);
    } else if (search->parsed()) {
      RunSearch(index, queries, k);
    } else if (eval->parsed()) {
      RunEval(cfg, index, queries, gt.empty() ? cfg.paths.ground_truth : gt);
    } else if (bench->parsed()) {
      RunBench(cfg, bench_dim, bench_count);
    }
  } catch (const Error& e) {
    ReportError(ErrorKindName(e.kind()), e.what());
    return e.kind() == ErrorKind::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    ReportError("internal", e.what());
    return 1;
  }
  return 0;
}
