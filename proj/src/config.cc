#include "faemb/config.h"

#include <charconv>
#include <sstream>
#include <variant>

#include "faemb/descriptor_io.h"

namespace faemb {

namespace {

using FieldRef = std::variant<int*, double*, std::uint64_t*, std::string*>;

struct Field {
  const char* section;
  const char* key;
  FieldRef ref;
};

std::vector<Field> Fields(PipelineConfig& c) {
  return {
      {"paths", "train", &c.paths.train},
      {"paths", "corpus", &c.paths.corpus},
      {"paths", "ground_truth", &c.paths.ground_truth},
      {"paths", "model_dir", &c.paths.model_dir},
      {"coding", "n", &c.coding.n},
      {"coding", "mu", &c.coding.mu},
      {"coding", "variant", &c.coding.variant},
      {"coding", "max_outer_iters", &c.coding.max_outer_iters},
      {"coding", "outer_tol", &c.coding.outer_tol},
      {"coding", "newton_tol", &c.coding.newton_tol},
      {"coding", "newton_step", &c.coding.newton_step},
      {"coding", "newton_max_iters", &c.coding.newton_max_iters},
      {"coding", "train_samples", &c.coding.train_samples},
      {"coding", "seed", &c.coding.seed},
      {"embedding", "s1", &c.embedding.s1},
      {"embedding", "s2", &c.embedding.s2},
      {"whitening", "drop", &c.whitening.drop},
      {"whitening", "eps", &c.whitening.eps},
      {"whitening", "samples", &c.whitening.samples},
      {"whitening", "seed", &c.whitening.seed},
      {"aggregation", "mode", &c.aggregation.mode},
      {"aggregation", "alpha", &c.aggregation.alpha},
      {"aggregation", "democratic_iters", &c.aggregation.democratic_iters},
      {"aggregation", "democratic_tol", &c.aggregation.democratic_tol},
      {"rn", "keep", &c.rn.keep},
      {"itq", "bits", &c.itq.bits},
      {"itq", "iters", &c.itq.iters},
      {"itq", "seed", &c.itq.seed},
      {"run", "threads", &c.run.threads},
      {"synth", "clusters", &c.synth.clusters},
      {"synth", "per_cluster", &c.synth.per_cluster},
      {"synth", "descriptors", &c.synth.descriptors},
      {"synth", "dim", &c.synth.dim},
      {"synth", "sigma", &c.synth.sigma},
      {"synth", "learning_images", &c.synth.learning_images},
      {"synth", "vocabulary", &c.synth.vocabulary},
      {"synth", "spread", &c.synth.spread},
      {"synth", "seed", &c.synth.seed},
  };
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
bool ParseNumber(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

// Returns an error message, empty on success.
std::string Assign(const Field& f, const std::string& value) {
  const std::string name = std::string(f.section) + "." + f.key;
  return std::visit(
      [&](auto* target) -> std::string {
        using T = std::remove_pointer_t<decltype(target)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *target = value;
          return {};
        } else {
          T parsed{};
          if (!ParseNumber(value, parsed)) {
            return name + ": cannot parse '" + value + "' as " +
                   (std::is_same_v<T, double> ? "a number" : "an integer");
          }
          *target = parsed;
          return {};
        }
      },
      f.ref);
}

std::string Format(const FieldRef& ref) {
  return std::visit(
      [](auto* target) -> std::string {
        using T = std::remove_pointer_t<decltype(target)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *target;
        } else if constexpr (std::is_same_v<T, double>) {
          // Shortest text that parses back to the same double.
          char buf[32];
          const auto res = std::to_chars(buf, buf + sizeof buf, *target);
          return std::string(buf, res.ptr);
        } else {
          return std::to_string(*target);
        }
      },
      ref);
}

std::string Join(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                    (errors.size() == 1 ? "" : "s") + "): ";
  for (std::size_t i = 0; i < errors.size(); ++i) msg += (i ? "; " : "") + errors[i];
  return msg;
}

}  // namespace

void PipelineConfig::Set(const std::string& qualified_key, const std::string& value) {
  for (const auto& f : Fields(*this)) {
    if (qualified_key == std::string(f.section) + "." + f.key) {
      const std::string err = Assign(f, Trim(value));
      if (!err.empty()) throw Error(ErrorKind::kConfig, err);
      return;
    }
  }
  throw Error(ErrorKind::kConfig, "unknown key '" + qualified_key + "'");
}

std::vector<std::string> PipelineConfig::Violations() const {
  std::vector<std::string> v;
  auto need = [&v](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  need(coding.n >= 2, "coding.n must be >= 2");
  need(coding.mu >= 0, "coding.mu must be >= 0");
  need(coding.variant == "faemb" || coding.variant == "ffaemb",
       "coding.variant must be faemb or ffaemb");
  need(coding.max_outer_iters >= 0, "coding.max_outer_iters must be >= 0");
  need(coding.outer_tol > 0, "coding.outer_tol must be > 0");
  need(coding.newton_tol > 0, "coding.newton_tol must be > 0");
  need(coding.newton_step > 0 && coding.newton_step <= 1, "coding.newton_step must lie in (0, 1]");
  need(coding.newton_max_iters >= 1, "coding.newton_max_iters must be >= 1");
  need(coding.train_samples >= 1, "coding.train_samples must be >= 1");
  need(embedding.s1 >= 0, "embedding.s1 must be >= 0");
  need(embedding.s2 >= 0, "embedding.s2 must be >= 0");
  need(whitening.drop >= -1, "whitening.drop must be >= 0 (or -1 for d(d+1)/2)");
  need(whitening.eps > 0, "whitening.eps must be > 0");
  need(whitening.samples >= 2, "whitening.samples must be >= 2");
  need(aggregation.mode == "democratic" || aggregation.mode == "sum",
       "aggregation.mode must be democratic or sum");
  need(aggregation.alpha >= 0 && aggregation.alpha <= 1, "aggregation.alpha must lie in [0, 1]");
  need(aggregation.democratic_iters >= 1, "aggregation.democratic_iters must be >= 1");
  need(aggregation.democratic_tol > 0, "aggregation.democratic_tol must be > 0");
  need(rn.keep >= 0, "rn.keep must be >= 0");
  need(itq.bits >= 1, "itq.bits must be >= 1");
  need(itq.iters >= 0, "itq.iters must be >= 0");
  need(run.threads >= 1, "run.threads must be >= 1");
  need(synth.clusters >= 1, "synth.clusters must be >= 1");
  need(synth.per_cluster >= 1, "synth.per_cluster must be >= 1");
  need(synth.descriptors >= 1, "synth.descriptors must be >= 1");
  need(synth.dim >= 1, "synth.dim must be >= 1");
  need(synth.sigma >= 0, "synth.sigma must be >= 0");
  need(synth.learning_images >= 0, "synth.learning_images must be >= 0");
  need(synth.vocabulary >= 1, "synth.vocabulary must be >= 1");
  need(synth.spread >= 0, "synth.spread must be >= 0");
  return v;
}

void PipelineConfig::Validate() const {
  const auto v = Violations();
  if (!v.empty()) throw Error(ErrorKind::kConfig, Join(v));
}

std::string PipelineConfig::Dump() const {
  PipelineConfig copy = *this;
  std::ostringstream out;
  std::string section;
  for (const auto& f : Fields(copy)) {
    if (section != f.section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << Format(f.ref) << "\n";
  }
  return out.str();
}

SolverParams PipelineConfig::solver() const {
  SolverParams p;
  p.max_outer_iters = coding.max_outer_iters;
  p.outer_tol = coding.outer_tol;
  p.newton_tol = coding.newton_tol;
  p.newton_step = coding.newton_step;
  p.newton_max_iters = coding.newton_max_iters;
  return p;
}

PipelineOptions PipelineConfig::pipeline_options() const {
  PipelineOptions o;
  o.solver = solver();
  o.embedding = {embedding.s1, embedding.s2};
  o.mode = ParseAggregationMode(aggregation.mode);
  o.alpha = aggregation.alpha;
  o.democratic_iters = aggregation.democratic_iters;
  o.democratic_tol = aggregation.democratic_tol;
  o.threads = run.threads;
  return o;
}

SynthParams PipelineConfig::synth_params() const {
  SynthParams p;
  p.clusters = synth.clusters;
  p.per_cluster = synth.per_cluster;
  p.descriptors_per_image = synth.descriptors;
  p.dim = synth.dim;
  p.sigma = synth.sigma;
  p.seed = synth.seed;
  p.learning_images = synth.learning_images;
  p.vocabulary = synth.vocabulary;
  p.template_spread = synth.spread;
  return p;
}

PipelineConfig ParseConfig(const std::string& text) {
  PipelineConfig config;
  std::vector<std::string> errors;
  const auto fields = Fields(config);
  std::istringstream lines(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + "malformed section header '" + line + "'");
        continue;
      }
      section = Trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields) known = known || section == f.section;
      if (!known) errors.push_back(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    const Field* match = nullptr;
    for (const auto& f : fields) {
      if (section == f.section && key == f.key) match = &f;
    }
    if (match == nullptr) {
      errors.push_back(where + "unknown key '" + (section.empty() ? key : section + "." + key) + "'");
      continue;
    }
    const std::string err = Assign(*match, value);
    if (!err.empty()) errors.push_back(where + err);
  }
  for (const auto& v : config.Violations()) errors.push_back(v);
  if (!errors.empty()) throw Error(ErrorKind::kConfig, Join(errors));
  return config;
}

PipelineConfig LoadConfig(const std::string& path) {
  return ParseConfig(ReadFileBytes(path));
}

std::vector<std::string> ConfigKeys() {
  PipelineConfig c;
  std::vector<std::string> keys;
  for (const auto& f : Fields(c)) keys.push_back(std::string(f.section) + "." + f.key);
  return keys;
}

}  // namespace faemb
