#include "helmnet/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "helmnet/learned_solver.hpp"

namespace helmnet::data {

namespace fs = std::filesystem;

namespace {

// Next whitespace-separated PGM header token, skipping comments.
std::string pgm_token(std::istream& in, const std::string& path) {
  std::string tok;
  while (in) {
    int c = in.get();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      if (!tok.empty()) return tok;
    } else if (c != EOF) {
      tok.push_back(char(c));
    }
  }
  if (tok.empty()) throw IngestionError("read_pgm: truncated header in " + path);
  return tok;
}

Index parse_positive(const std::string& s, const std::string& path) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v <= 0) throw std::invalid_argument(s);
    return Index(v);
  } catch (const std::exception&) {
    throw IngestionError("malformed header value '" + s + "' in " + path);
  }
}

std::string sidecar(const std::string& path) { return fs::path(path).replace_extension(".hdr").string(); }

}  // namespace

RealGrid<double> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("read_pgm: cannot open " + path);
  if (pgm_token(in, path) != "P5") throw IngestionError("read_pgm: " + path + " is not a binary PGM (P5)");
  const Index w = parse_positive(pgm_token(in, path), path);
  const Index h = parse_positive(pgm_token(in, path), path);
  const Index maxval = parse_positive(pgm_token(in, path), path);
  if (maxval > 65535) throw IngestionError("read_pgm: bad maxval in " + path);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(std::size_t(w * h * bytes));
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!in) throw IngestionError("read_pgm: truncated pixel data in " + path);
  RealGrid<double> img(h, w);
  for (Index i = 0; i < w * h; ++i) {
    img.data()[i] = bytes == 1 ? double(buf[std::size_t(i)])
                               : double((buf[std::size_t(2 * i)] << 8) | buf[std::size_t(2 * i + 1)]);
  }
  return img;
}

void write_pgm(const std::string& path, const RealGrid<double>& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("write_pgm: cannot open " + path);
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(std::round(img.data()[i]), 0.0, 255.0);
    out.put(char(static_cast<unsigned char>(v)));
  }
  if (!out) throw IngestionError("write_pgm: write failed for " + path);
}

RealGrid<double> read_f64(const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  const std::string hdr = sidecar(path);
  std::ifstream hs(hdr);
  if (!hs) throw IngestionError("read_f64: missing header " + hdr);
  Index nx = -1, ny = -1;
  std::string key, value;
  while (hs >> key >> value) {
    if (key == "nx") nx = parse_positive(value, hdr);
    else if (key == "ny") ny = parse_positive(value, hdr);
    else if (key == "dtype" && value != "float64") throw IngestionError("read_f64: unsupported dtype in " + hdr);
  }
  if (nx < 0 || ny < 0) throw IngestionError("read_f64: header " + hdr + " lacks nx/ny");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("read_f64: cannot open " + path);
  RealGrid<double> g(ny, nx);
  in.read(reinterpret_cast<char*>(g.data()), std::streamsize(g.size() * 8));
  if (!in) throw IngestionError("read_f64: truncated data in " + path);
  if (!g.allFinite()) throw IngestionError("read_f64: non-finite values in " + path);
  return g;
}

void write_f64(const std::string& path, const RealGrid<double>& grid) {
  {
    std::ofstream hs(sidecar(path), std::ios::trunc);
    hs << "nx " << grid.cols() << "\nny " << grid.rows() << "\ndtype float64\n";
    if (!hs) throw IngestionError("write_f64: cannot write " + sidecar(path));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(grid.data()), std::streamsize(grid.size() * 8));
  if (!out) throw IngestionError("write_f64: cannot write " + path);
}

RealGrid<double> resize_bilinear(const RealGrid<double>& img, Index ny, Index nx) {
  if (img.size() == 0 || ny < 1 || nx < 1) throw DimensionError("resize_bilinear: empty grid");
  auto coord = [](Index i, Index n_out, Index n_in) {
    return n_out > 1 ? double(i) * double(n_in - 1) / double(n_out - 1) : 0.0;
  };
  RealGrid<double> out(ny, nx);
  for (Index y = 0; y < ny; ++y) {
    const double sy = coord(y, ny, img.rows());
    const Index y0 = std::min<Index>(Index(sy), img.rows() - 1);
    const Index y1 = std::min<Index>(y0 + 1, img.rows() - 1);
    const double ty = sy - double(y0);
    for (Index x = 0; x < nx; ++x) {
      const double sx = coord(x, nx, img.cols());
      const Index x0 = std::min<Index>(Index(sx), img.cols() - 1);
      const Index x1 = std::min<Index>(x0 + 1, img.cols() - 1);
      const double tx = sx - double(x0);
      out(y, x) = (1 - ty) * ((1 - tx) * img(y0, x0) + tx * img(y0, x1)) +
                  ty * ((1 - tx) * img(y1, x0) + tx * img(y1, x1));
    }
  }
  return out;
}

RealGrid<double> gaussian_smooth(const RealGrid<double>& img, double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_smooth: sigma must be non-negative");
  if (sigma == 0.0) return img;
  const Index r = Index(std::ceil(3.0 * sigma));
  std::vector<double> k(std::size_t(2 * r + 1));
  double sum = 0;
  for (Index i = -r; i <= r; ++i) sum += k[std::size_t(i + r)] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
  for (double& v : k) v /= sum;
  const Index ny = img.rows(), nx = img.cols();
  RealGrid<double> tmp(ny, nx), out(ny, nx);
  for (Index y = 0; y < ny; ++y)
    for (Index x = 0; x < nx; ++x) {
      double acc = 0;
      for (Index i = -r; i <= r; ++i) acc += k[std::size_t(i + r)] * img(y, std::clamp<Index>(x + i, 0, nx - 1));
      tmp(y, x) = acc;
    }
  for (Index y = 0; y < ny; ++y)
    for (Index x = 0; x < nx; ++x) {
      double acc = 0;
      for (Index i = -r; i <= r; ++i) acc += k[std::size_t(i + r)] * tmp(std::clamp<Index>(y + i, 0, ny - 1), x);
      out(y, x) = acc;
    }
  return out;
}

RealGrid<double> normalize_slowness(const RealGrid<double>& img) {
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  if (!(hi > lo)) return RealGrid<double>::Constant(img.rows(), img.cols(), kSlownessMin);
  RealGrid<double> out = kSlownessMin + (img - lo) * ((kSlownessMax - kSlownessMin) / (hi - lo));
  // Pin the extremes so the range is exact despite rounding.
  for (Index i = 0; i < out.size(); ++i) {
    if (img.data()[i] == lo) out.data()[i] = kSlownessMin;
    if (img.data()[i] == hi) out.data()[i] = kSlownessMax;
  }
  return out;
}

SlownessModel<double> prepare_model(const RealGrid<double>& img, Index target_n, const CorpusOptions& opt) {
  if (target_n < 8) throw DimensionError("prepare_model: target size too small");
  const double sigma = opt.sigma < 0 ? default_sigma(target_n) : opt.sigma;
  RealGrid<double> k2 = normalize_slowness(gaussian_smooth(resize_bilinear(img, target_n + 1, target_n + 1), sigma));
  return make_model<double>(std::move(k2), opt.gamma0, opt.abl_width);
}

std::vector<SlownessModel<double>> load_slowness_corpus(const std::string& dir, Index target_n,
                                                        const CorpusOptions& opt) {
  if (!fs::is_directory(dir)) throw ConfigError("load_slowness_corpus: " + dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".f64")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("load_slowness_corpus: no .pgm or .f64 files in " + dir);
  std::vector<SlownessModel<double>> out;
  for (const auto& f : files) {
    const RealGrid<double> img = f.extension() == ".pgm" ? read_pgm(f.string()) : read_f64(f.string());
    out.push_back(prepare_model(img, target_n, opt));
  }
  return out;
}

SlownessModel<double> with_gamma0(const SlownessModel<double>& m, double gamma0, Index abl_width) {
  return make_model<double>(m.kappa_sq, gamma0, abl_width);
}

SamplePair generate_sample(const SlownessModel<double>& model, const GridHierarchy<double>& hier,
                           std::mt19937_64& rng, int k_min, int k_max) {
  if (k_min < 0 || k_max < k_min) throw ConfigError("generate_sample: invalid iteration range");
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  ComplexField<double> x(model.ny(), model.nx(), model.h);
  for (Index i = 0; i < x.size(); ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    x.values()[i] = {re, im};
  }
  std::uniform_int_distribution<int> kdist(k_min, k_max);
  const int k = kdist(rng);
  const HelmholtzOperator<double> A(model, HelmholtzShift<double>::Original());
  const ComplexField<double> b = A(x);
  FgmresOptions opt;
  opt.tol = 0.0;
  opt.max_iter = k;
  auto [xt, rep] = solve_vcycle(model, hier, b, ComplexField<double>::ZeroLike(b), opt);
  SamplePair p;
  p.error = x;
  p.error.values() -= xt.values();
  p.residual = A(p.error);
  p.smoothing_iters = k;
  return p;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Dataset::Dataset(std::vector<SlownessModel<double>> models, Index samples_per_epoch, std::uint64_t seed,
                 int k_min, int k_max)
    : models_(std::move(models)), samples_per_epoch_(samples_per_epoch), seed_(seed), k_min_(k_min), k_max_(k_max) {
  if (models_.empty()) throw ConfigError("build_dataset: empty corpus");
  if (samples_per_epoch <= 0) throw ConfigError("build_dataset: samples_per_epoch must be positive");
  for (const auto& m : models_)
    hier_.push_back(std::make_shared<const GridHierarchy<double>>(GridHierarchy<double>::ShiftedLaplacian(m)));
}

SamplePair Dataset::sample(Index i) const { return sample(i, i % Index(models_.size())); }

SamplePair Dataset::sample(Index i, Index m) const {
  if (m < 0 || m >= Index(models_.size())) throw ConfigError("dataset: model index out of range");
  std::mt19937_64 rng(mix_seed(seed_, std::uint64_t(i)));
  SamplePair p = generate_sample(models_[std::size_t(m)], *hier_[std::size_t(m)], rng, k_min_, k_max_);
  p.model_id = m;
  return p;
}

std::vector<SamplePair> Dataset::materialize() const {
  std::vector<SamplePair> out;
  out.reserve(std::size_t(samples_per_epoch_));
  for (Index i = 0; i < samples_per_epoch_; ++i) out.push_back(sample(i));
  return out;
}

void Dataset::write_manifest(const std::string& path, const std::vector<std::string>& model_names) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("dataset: cannot write manifest " + path);
  const auto& m0 = models_.front();
  out << std::setprecision(17);
  out << "seed " << seed_ << "\n";
  out << "samples_per_epoch " << samples_per_epoch_ << "\n";
  out << "k_min " << k_min_ << "\nk_max " << k_max_ << "\n";
  out << "gamma0 " << m0.gamma.minCoeff() << "\n";
  out << "nodes " << m0.nx() << "\n";
  for (std::size_t i = 0; i < models_.size(); ++i) {
    out << "model " << i << " " << (i < model_names.size() ? model_names[i] : std::string("-")) << "\n";
  }
}

RealGrid<double> random_blobs(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RealGrid<double> img = RealGrid<double>::Constant(n, n, u(rng));
  const int blobs = 4 + int(u(rng) * 8);
  for (int b = 0; b < blobs; ++b) {
    const double cy = u(rng) * double(n), cx = u(rng) * double(n);
    const double sy = (0.04 + 0.2 * u(rng)) * double(n), sx = (0.04 + 0.2 * u(rng)) * double(n);
    const double amp = 2.0 * u(rng) - 1.0;
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) {
        const double dy = (double(y) - cy) / sy, dx = (double(x) - cx) / sx;
        img(y, x) += amp * std::exp(-0.5 * (dy * dy + dx * dx));
      }
  }
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  return hi > lo ? RealGrid<double>((img - lo) * (255.0 / (hi - lo))) : RealGrid<double>(img * 0.0);
}

RealGrid<double> layered_medium(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int layers = 9;
  std::vector<double> depth(layers), dip(layers), amp(layers), phase(layers), value(layers + 1);
  for (int l = 0; l < layers; ++l) {
    depth[std::size_t(l)] = (double(l) + 0.5 + 0.4 * (u(rng) - 0.5)) / double(layers);
    dip[std::size_t(l)] = 0.15 * (u(rng) - 0.5);
    amp[std::size_t(l)] = 0.03 * u(rng);
    phase[std::size_t(l)] = 6.283 * u(rng);
  }
  // Velocity grows with depth with some inversions; slowness is its inverse.
  for (int l = 0; l <= layers; ++l) value[std::size_t(l)] = 1.0 + 0.35 * double(l) + 0.5 * (u(rng) - 0.5);
  const double fault_x = 0.55, fault_throw = 0.06;
  RealGrid<double> img(n, n);
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n; ++x) {
      const double px = double(x) / double(n - 1);
      double py = double(y) / double(n - 1);
      if (px > fault_x + 0.3 * (py - 0.5)) py -= fault_throw;
      int l = 0;
      while (l < layers) {
        const double iface = depth[std::size_t(l)] + dip[std::size_t(l)] * (px - 0.5) +
                             amp[std::size_t(l)] * std::sin(4.0 * px * 3.14159 + phase[std::size_t(l)]);
        if (py < iface) break;
        ++l;
      }
      img(y, x) = 1.0 / value[std::size_t(l)];
    }
  return img;
}

std::vector<std::string> write_synthetic_corpus(const std::string& dir, Index count, Index n, std::uint64_t seed) {
  if (count <= 0) throw ConfigError("write_synthetic_corpus: count must be positive");
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (Index i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, std::uint64_t(i)));
    std::ostringstream name;
    name << "blob_" << std::setw(4) << std::setfill('0') << i << ".pgm";
    write_pgm((fs::path(dir) / name.str()).string(), random_blobs(n, rng));
    names.push_back(name.str());
  }
  return names;
}

}  // namespace helmnet::data
