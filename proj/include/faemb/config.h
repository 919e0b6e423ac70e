#ifndef FAEMB_CONFIG_H_
#define FAEMB_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "faemb/pipeline.h"
#include "faemb/retrieval.h"

namespace faemb {

// Settings for every CLI stage. Text form is flat `key = value` lines under
// `[section]` headers; `#` starts a comment.
struct PipelineConfig {
  struct Paths {
    std::string train;         // learning descriptors
    std::string corpus;        // database descriptors
    std::string ground_truth;
    std::string model_dir = "models";
  } paths;
  struct Coding {
    int n = 8;
    double mu = 1e-2;
    std::string variant = "ffaemb";
    int max_outer_iters = 20;
    double outer_tol = 1e-6;
    double newton_tol = 1e-6;
    double newton_step = 0.1;
    int newton_max_iters = 500;
    int train_samples = 5000;
    std::uint64_t seed = 0;
  } coding;
  struct Embedding {
    double s1 = 0.0;
    double s2 = 0.0;
  } embedding;
  struct Whitening {
    int drop = -1;  // -1: d(d+1)/2
    double eps = 1e-10;
    int samples = 20000;
    std::uint64_t seed = 0;
  } whitening;
  struct Aggregation {
    std::string mode = "democratic";
    double alpha = 0.5;
    int democratic_iters = 100;
    double democratic_tol = 1e-3;
  } aggregation;
  struct Rn {
    int keep = 0;  // 0: rotation normalization off
  } rn;
  struct Itq {
    int bits = 256;
    int iters = 50;
    std::uint64_t seed = 0;
  } itq;
  struct Run {
    int threads = 1;
  } run;
  struct Synth {
    int clusters = 20;
    int per_cluster = 5;
    int descriptors = 200;
    int dim = 16;
    double sigma = 0.05;
    int learning_images = 320;
    int vocabulary = 16;
    double spread = 0.3;
    std::uint64_t seed = 1;
  } synth;

  // Sets `section.key` from text. Throws kConfig for unknown keys or
  // unparsable values.
  void Set(const std::string& qualified_key, const std::string& value);

  // Every range violation at once, empty when valid.
  std::vector<std::string> Violations() const;
  // Throws kConfig listing all violations.
  void Validate() const;

  std::string Dump() const;

  SolverParams solver() const;
  PipelineOptions pipeline_options() const;
  SynthParams synth_params() const;
  Variant coding_variant() const { return ParseVariant(coding.variant); }
};

// Parses config text over the defaults. Collects every unknown key,
// malformed line and bad value, then every range violation, and throws one
// kConfig error listing them all.
PipelineConfig ParseConfig(const std::string& text);
PipelineConfig LoadConfig(const std::string& path);

// Names of all keys in `section.key` form, in dump order.
std::vector<std::string> ConfigKeys();

}  // namespace faemb

#endif  // FAEMB_CONFIG_H_
