#include <cmath>
#include <cstdio>
#include <random>

#include "faemb/retrieval.h"

namespace faemb {

namespace {

std::string ImageId(const char* fmt, int a, int b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

std::string LearningId(int l) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "l%05d", l);
  return buf;
}

class Generator {
 public:
  Generator(const SynthParams& p) : p_(p), rng_(p.seed) {
    const double mode_scale = 1.0 / std::sqrt(static_cast<double>(p.dim));
    modes_ = Draw(p.dim, p.vocabulary, mode_scale);
  }

  Matrix Template() {
    const double jitter = p_.template_spread / std::sqrt(static_cast<double>(p_.dim));
    std::uniform_int_distribution<int> pick(0, p_.vocabulary - 1);
    Matrix t = Draw(p_.dim, p_.descriptors_per_image, jitter);
    for (Eigen::Index c = 0; c < t.cols(); ++c) t.col(c) += modes_.col(pick(rng_));
    return t;
  }

  DescriptorSet Image(const Matrix& tmpl, std::string id) {
    DescriptorSet set{std::move(id), tmpl};
    if (p_.sigma > 0) set.descriptors += Draw(p_.dim, tmpl.cols(), p_.sigma);
    set.descriptors = set.descriptors.cast<float>().cast<double>();
    return set;
  }

 private:
  Matrix Draw(Eigen::Index rows, Eigen::Index cols, double scale) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * gauss(rng_);
    }
    return m;
  }

  const SynthParams& p_;
  std::mt19937_64 rng_;
  Matrix modes_;
};

}  // namespace

SynthCorpus SynthesizeCorpus(const SynthParams& p) {
  if (p.clusters < 1 || p.per_cluster < 1 || p.descriptors_per_image < 1 || p.dim < 1 ||
      p.vocabulary < 1 || p.learning_images < 0 || !(p.sigma >= 0) ||
      !(p.template_spread >= 0)) {
    throw Error(ErrorKind::kInvalidArgument, "synthetic corpus parameters must be positive");
  }
  Generator gen(p);
  SynthCorpus corpus;
  for (int c = 0; c < p.clusters; ++c) {
    const Matrix tmpl = gen.Template();
    GroundTruthEntry entry;
    for (int i = 0; i < p.per_cluster; ++i) {
      corpus.database.push_back(gen.Image(tmpl, ImageId("c%03d_i%02d", c, i)));
      entry.relevant.insert(corpus.database.back().image_id);
    }
    for (int i = 0; i < p.per_cluster; ++i) {
      corpus.ground_truth.Add(ImageId("c%03d_i%02d", c, i), entry);
    }
  }
  for (int l = 0; l < p.learning_images; ++l) {
    corpus.learning.push_back(gen.Image(gen.Template(), LearningId(l)));
  }
  return corpus;
}

}  // namespace faemb
