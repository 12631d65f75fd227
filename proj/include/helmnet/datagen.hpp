#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "helmnet/multigrid.hpp"

namespace helmnet::data {

inline constexpr double kTrainingGamma0 = 0.05;
inline constexpr double kSlownessMin = 0.25;
inline constexpr double kSlownessMax = 1.0;

/// 8-bit or 16-bit binary PGM (P5); values returned as read.
RealGrid<double> read_pgm(const std::string& path);
void write_pgm(const std::string& path, const RealGrid<double>& img);  // clamps to [0, 255]

/// Raw little-endian float64 grid with a `<stem>.hdr` sidecar ("nx N", "ny M").
RealGrid<double> read_f64(const std::string& path);
void write_f64(const std::string& path, const RealGrid<double>& grid);

/// Corner-aligned bilinear interpolation onto ny x nx nodes.
RealGrid<double> resize_bilinear(const RealGrid<double>& img, Index ny, Index nx);

/// Separable Gaussian with radius ceil(3 sigma) and edge replication.
RealGrid<double> gaussian_smooth(const RealGrid<double>& img, double sigma);

/// Affine map onto [0.25, 1]; a constant input maps to 0.25 everywhere.
RealGrid<double> normalize_slowness(const RealGrid<double>& img);

/// Smoothing width at a given external size: 1 cell at 128, proportional.
inline double default_sigma(Index target_n) { return double(target_n) / 128.0; }

struct CorpusOptions {
  double gamma0 = kTrainingGamma0;
  double sigma = -1.0;  // < 0: default_sigma(target_n)
  Index abl_width = -1;
};

/// Resize to target_n + 1 nodes, smooth, normalize, attach ABL and frequency.
SlownessModel<double> prepare_model(const RealGrid<double>& img, Index target_n,
                                    const CorpusOptions& opt = {});

/// All *.pgm and *.f64 files in `dir` (sorted by name), prepared as above.
std::vector<SlownessModel<double>> load_slowness_corpus(const std::string& dir, Index target_n,
                                                        const CorpusOptions& opt = {});

/// Same model with the ABL rebuilt for a different interior attenuation.
SlownessModel<double> with_gamma0(const SlownessModel<double>& m, double gamma0, Index abl_width = -1);

struct SamplePair {
  ComplexField<double> residual;
  ComplexField<double> error;
  Index model_id = 0;
  int smoothing_iters = 0;
};

/// x ~ CN(0, 1) per node, b = A x, k ~ U{k_min..k_max} FGMRES(V-cycle)
/// iterations from zero give x~, e = x - x~, r = A e.
SamplePair generate_sample(const SlownessModel<double>& model, const GridHierarchy<double>& hier,
                           std::mt19937_64& rng, int k_min = 2, int k_max = 20);

/// splitmix64 finalizer, used to derive independent per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter);

/// Lazily generated sample pairs, round-robin over the models. Sample i is a
/// pure function of (seed, i).
class Dataset {
 public:
  Dataset(std::vector<SlownessModel<double>> models, Index samples_per_epoch, std::uint64_t seed,
          int k_min = 2, int k_max = 20);

  Index size() const { return samples_per_epoch_; }
  Index num_models() const { return Index(models_.size()); }
  std::uint64_t seed() const { return seed_; }
  int k_min() const { return k_min_; }
  int k_max() const { return k_max_; }
  const SlownessModel<double>& model(Index i) const { return models_[std::size_t(i)]; }
  const GridHierarchy<double>& hierarchy(Index i) const { return *hier_[std::size_t(i)]; }

  /// Sample with global counter i (epochs may use i beyond size()).
  SamplePair sample(Index i) const;
  /// Sample with counter i drawn on a chosen model.
  SamplePair sample(Index i, Index model) const;
  std::vector<SamplePair> materialize() const;

  /// Text manifest with everything needed to regenerate the samples.
  void write_manifest(const std::string& path, const std::vector<std::string>& model_names) const;

 private:
  std::vector<SlownessModel<double>> models_;
  std::vector<std::shared_ptr<const GridHierarchy<double>>> hier_;
  Index samples_per_epoch_;
  std::uint64_t seed_;
  int k_min_, k_max_;
};

inline Dataset build_dataset(std::vector<SlownessModel<double>> corpus, Index samples_per_epoch,
                             std::uint64_t seed) {
  return Dataset(std::move(corpus), samples_per_epoch, seed);
}

/// Synthetic media: smoothed random blobs (training-like) and a layered
/// medium with dipping, curved interfaces and a fault (out of distribution).
RealGrid<double> random_blobs(Index n, std::mt19937_64& rng);
RealGrid<double> layered_medium(Index n, std::uint64_t seed);

/// Writes `count` blob images (n x n, 8-bit PGM) named blob_XXXX.pgm.
std::vector<std::string> write_synthetic_corpus(const std::string& dir, Index count, Index n,
                                                std::uint64_t seed);

}  // namespace helmnet::data
