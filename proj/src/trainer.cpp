#include "helmnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <random>
#include <map>
#include <sstream>

#include "helmnet/neural/checkpoint.hpp"

namespace helmnet::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("train config: bad value '" + v + "' for " + key);
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_value<T>(key, trim(item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

// Stacks (1, C, H, W) tensors into one (N, C, H, W) tensor.
nn::Tensor<float> stack(const std::vector<const nn::Tensor<float>*>& items) {
  const nn::Shape s = items.front()->shape();
  nn::Tensor<float> out(nn::Shape{Index(items.size()), s.c, s.h, s.w});
  const Index per = s.c * s.h * s.w;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!(items[i]->shape() == s)) throw DimensionError("stack: inconsistent sample shapes");
    std::copy_n(items[i]->data(), per, out.data() + Index(i) * per);
  }
  return out;
}

// One optimization step on G models with R samples each. Returns the loss.
double train_step(nn::HelmNet<float>& net, nn::Adam<float>& adam, const nn::Tensor<float>& models,
                  const nn::Tensor<float>& inputs, const nn::Tensor<float>& targets) {
  nn::Tape<float> tape;
  const Index repeat = inputs.shape().n / models.shape().n;
  auto enc = net.encode(tape, tape.constant(models), true);
  for (auto& e : enc) e = nn::repeat_batch(e, repeat);
  const auto out = net.solve(tape, tape.constant(inputs), enc, true);
  const auto loss = nn::mse_loss(out, tape.constant(targets));
  const double value = double(loss.value().data()[0]);
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  adam.step(net.parameters());
  net.zero_grad();
  return value;
}

void split_models(const std::vector<SlownessModel<double>>& all, double fraction,
                  std::vector<SlownessModel<double>>& train, std::vector<SlownessModel<double>>& val) {
  const Index m = Index(all.size());
  Index n_val = 0;
  if (m >= 2 && fraction > 0) n_val = std::clamp<Index>(Index(std::lround(fraction * double(m))), 1, m - 1);
  train.assign(all.begin(), all.end() - n_val);
  if (n_val > 0) {
    val.assign(all.end() - n_val, all.end());
  } else {
    val = train;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (sizes.empty()) throw ConfigError("train config: no sizes");
  if (samples_per_epoch.size() != sizes.size()) {
    throw ConfigError("train config: samples_per_epoch needs one entry per size");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (samples_per_epoch[i] <= 0) throw ConfigError("train config: samples_per_epoch must be positive");
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw ConfigError("train config: sizes must be strictly ascending");
    if (i > 0 && samples_per_epoch[i] > samples_per_epoch[i - 1]) {
      throw ConfigError("train config: samples_per_epoch must not increase with size");
    }
  }
  if (epochs_per_size_block < 1 || max_epochs < 0 || lr_decay_epochs < 1) {
    throw ConfigError("train config: epoch counts must be positive");
  }
  if (!(lr >= 0.0)) throw ConfigError("train config: lr must be non-negative");
  if (batch_size < 1 || models_per_batch < 1) throw ConfigError("train config: batch sizes must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train config: val_fraction outside [0, 1)");
  if (val_samples < 0 || patience < 0) throw ConfigError("train config: negative count");
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("train config: expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key == "sizes") cfg.sizes = parse_list<Index>(key, v);
    else if (key == "samples_per_epoch") cfg.samples_per_epoch = parse_list<Index>(key, v);
    else if (key == "epochs_per_size_block") cfg.epochs_per_size_block = parse_value<Index>(key, v);
    else if (key == "max_epochs") cfg.max_epochs = parse_value<Index>(key, v);
    else if (key == "lr") cfg.lr = parse_value<double>(key, v);
    else if (key == "lr_decay_epochs") cfg.lr_decay_epochs = parse_value<Index>(key, v);
    else if (key == "batch_size") cfg.batch_size = parse_value<Index>(key, v);
    else if (key == "models_per_batch") cfg.models_per_batch = parse_value<Index>(key, v);
    else if (key == "val_fraction") cfg.val_fraction = parse_value<double>(key, v);
    else if (key == "val_samples") cfg.val_samples = parse_value<Index>(key, v);
    else if (key == "patience") cfg.patience = parse_value<Index>(key, v);
    else if (key == "seed") cfg.seed = parse_value<std::uint64_t>(key, v);
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = v;
    else throw ConfigError("train config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("train config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "sizes = " << join(cfg.sizes) << "\n";
  out << "samples_per_epoch = " << join(cfg.samples_per_epoch) << "\n";
  out << "epochs_per_size_block = " << cfg.epochs_per_size_block << "\n";
  out << "max_epochs = " << cfg.max_epochs << "\n";
  out << "lr = " << cfg.lr << "\n";
  out << "lr_decay_epochs = " << cfg.lr_decay_epochs << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "models_per_batch = " << cfg.models_per_batch << "\n";
  out << "val_fraction = " << cfg.val_fraction << "\n";
  out << "val_samples = " << cfg.val_samples << "\n";
  out << "patience = " << cfg.patience << "\n";
  out << "seed = " << cfg.seed << "\n";
  if (!cfg.checkpoint_dir.empty()) out << "checkpoint_dir = " << cfg.checkpoint_dir << "\n";
  return out.str();
}

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << "epoch,size,train_mse,val_mse,lr\n" << std::setprecision(9);
  for (const auto& r : history) {
    out << r.epoch << "," << r.size << "," << r.train_mse << "," << r.val_mse << "," << r.lr << "\n";
  }
}

double scheduled_lr(const TrainConfig& cfg, Index epoch) {
  return cfg.lr * std::pow(0.1, double(epoch / cfg.lr_decay_epochs));
}

nn::Tensor<float> model_planes(const SlownessModel<double>& m) {
  nn::Tensor<float> t(nn::Shape{1, 2, m.ny(), m.nx()});
  for (Index y = 0; y < m.ny(); ++y)
    for (Index x = 0; x < m.nx(); ++x) {
      t(0, 0, y, x) = float(m.kappa_sq(y, x));
      t(0, 1, y, x) = float(m.gamma(y, x));
    }
  return t;
}

SampleBatchSet to_network_space(const nn::HelmNet<float>& net, const std::vector<data::SamplePair>& pairs) {
  SampleBatchSet s;
  for (const auto& p : pairs) {
    s.model_of.push_back(p.model_id);
    s.inputs.push_back(net.residual_input(p.residual));
    s.targets.push_back(net.error_target(p.residual, p.error));
  }
  return s;
}

double evaluate_mse(const nn::HelmNet<float>& net, const std::vector<SlownessModel<double>>& models,
                    const SampleBatchSet& set, Index batch_size) {
  if (set.inputs.empty()) return 0.0;
  std::map<Index, nn::Encodings<float>> enc;
  double total = 0.0;
  std::size_t i = 0;
  while (i < set.inputs.size()) {
    // Consecutive samples of the same model share one batched forward pass.
    const Index m = set.model_of[i];
    std::size_t j = i;
    std::vector<const nn::Tensor<float>*> batch;
    while (j < set.inputs.size() && set.model_of[j] == m && Index(batch.size()) < batch_size) {
      batch.push_back(&set.inputs[j]);
      ++j;
    }
    auto it = enc.find(m);
    if (it == enc.end()) it = enc.emplace(m, net.encode(models[std::size_t(m)])).first;
    const nn::Tensor<float> out = net.solve(stack(batch), it->second);
    const Index per = out.shape().c * out.shape().plane();
    for (std::size_t k = i; k < j; ++k) {
      const Eigen::Map<const Eigen::ArrayXf> a(out.data() + Index(k - i) * per, per);
      total += double((a - set.targets[k].array()).square().sum());
    }
    i = j;
  }
  return total / double(set.inputs.size());
}

TrainResult train(nn::HelmNet<float>& net, const TrainConfig& cfg,
                  const std::vector<std::vector<SlownessModel<double>>>& corpora, const EpochCallback& on_epoch) {
  cfg.validate();
  if (corpora.size() != cfg.sizes.size()) throw ConfigError("train: need one corpus per configured size");
  const std::size_t ns = cfg.sizes.size();

  struct SizeData {
    std::vector<SlownessModel<double>> train_models, val_models;
    std::unique_ptr<data::Dataset> train_set;
    std::vector<nn::Tensor<float>> planes;
    SampleBatchSet val;
    Index counter = 0;
  };
  std::vector<SizeData> sd(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    if (corpora[i].empty()) throw ConfigError("train: empty corpus for size " + std::to_string(cfg.sizes[i]));
    for (const auto& m : corpora[i]) {
      if (m.nx() != cfg.sizes[i] + 1 || m.ny() != cfg.sizes[i] + 1) {
        throw DimensionError("train: corpus model is not " + std::to_string(cfg.sizes[i] + 1) + " nodes wide");
      }
    }
    split_models(corpora[i], cfg.val_fraction, sd[i].train_models, sd[i].val_models);
    sd[i].train_set = std::make_unique<data::Dataset>(sd[i].train_models, cfg.samples_per_epoch[i],
                                                      data::mix_seed(cfg.seed, 1000 + i));
    for (const auto& m : sd[i].train_models) sd[i].planes.push_back(model_planes(m));
    const Index nv = cfg.val_samples > 0
                         ? cfg.val_samples
                         : std::max<Index>(cfg.batch_size, Index(std::ceil(0.1 * double(cfg.samples_per_epoch[i]))));
    const data::Dataset val_set(sd[i].val_models, nv, data::mix_seed(cfg.seed, 2000 + i));
    sd[i].val = to_network_space(net, val_set.materialize());
  }

  nn::Adam<float> adam(nn::AdamOptions{cfg.lr});
  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  Index since_best = 0;
  net.zero_grad();

  for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const std::size_t si = std::size_t((epoch / cfg.epochs_per_size_block) % Index(ns));
    SizeData& d = sd[si];
    const double lr = scheduled_lr(cfg, epoch);
    adam.options().lr = lr;

    const Index n_models = Index(d.train_models.size());
    const Index groups = std::min({cfg.models_per_batch, cfg.batch_size, n_models});
    const Index repeat = std::max<Index>(1, cfg.batch_size / groups);
    const Index n_batches = (cfg.samples_per_epoch[si] + groups * repeat - 1) / (groups * repeat);
    std::vector<Index> order(static_cast<std::size_t>(n_models));
    for (Index i = 0; i < n_models; ++i) order[std::size_t(i)] = i;
    std::mt19937_64 shuffle_rng(data::mix_seed(cfg.seed, 3000 + std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    Index cursor = 0;
    for (Index b = 0; b < n_batches; ++b) {
      std::vector<const nn::Tensor<float>*> planes;
      std::vector<nn::Tensor<float>> inputs, targets;
      for (Index g = 0; g < groups; ++g) {
        const Index m = order[std::size_t(cursor++ % n_models)];
        planes.push_back(&d.planes[std::size_t(m)]);
        for (Index r = 0; r < repeat; ++r) {
          const data::SamplePair p = d.train_set->sample(d.counter++, m);
          inputs.push_back(net.residual_input(p.residual));
          targets.push_back(net.error_target(p.residual, p.error));
        }
      }
      std::vector<const nn::Tensor<float>*> in_ptr, tg_ptr;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        in_ptr.push_back(&inputs[k]);
        tg_ptr.push_back(&targets[k]);
      }
      const double loss = train_step(net, adam, stack(planes), stack(in_ptr), stack(tg_ptr));
      if (!std::isfinite(loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      }
      loss_sum += loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.size = cfg.sizes[si];
    rec.train_mse = loss_sum / double(n_batches);
    rec.val_mse = evaluate_mse(net, d.val_models, d.val, cfg.batch_size);
    rec.lr = lr;
    if (!std::isfinite(rec.val_mse)) {
      throw NumericalError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    result.final_lr = lr;
    result.epochs_run = epoch + 1;

    const bool block_end = (epoch + 1) % cfg.epochs_per_size_block == 0 || epoch + 1 == cfg.max_epochs;
    if (block_end && !cfg.checkpoint_dir.empty()) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << epoch + 1 << ".ckpt";
      nn::save_checkpoint(net, (std::filesystem::path(cfg.checkpoint_dir) / name.str()).string(),
                          {{"epoch", std::to_string(epoch + 1)}, {"size", std::to_string(rec.size)}});
    }
    bool keep_going = !on_epoch || on_epoch(rec);
    if (cfg.patience > 0) {
      if (rec.val_mse < best_val) {
        best_val = rec.val_mse;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        keep_going = false;
      }
    }
    if (!keep_going) break;
  }
  return result;
}

nn::HelmNet<float> retrain_ood(const nn::HelmNet<float>& net, const SlownessModel<double>& model,
                               const RetrainOptions& opt, std::vector<EpochRecord>* history) {
  if (opt.pairs <= 0 || opt.epochs < 0 || opt.batch_size < 1) throw ConfigError("retrain: invalid options");
  if (!(opt.lr >= 0.0)) throw ConfigError("retrain: lr must be non-negative");
  nn::HelmNet<float> out = net;
  const data::Dataset ds({model}, opt.pairs, data::mix_seed(opt.seed, 4000));
  const SampleBatchSet set = to_network_space(out, ds.materialize());
  const nn::Tensor<float> planes = model_planes(model);
  nn::Adam<float> adam(nn::AdamOptions{opt.lr});
  out.zero_grad();
  std::vector<Index> order(static_cast<std::size_t>(opt.pairs));
  for (Index i = 0; i < opt.pairs; ++i) order[std::size_t(i)] = i;
  for (Index epoch = 0; epoch < opt.epochs; ++epoch) {
    std::mt19937_64 rng(data::mix_seed(opt.seed, 5000 + std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Index n_batches = 0;
    for (Index start = 0; start < opt.pairs; start += opt.batch_size) {
      std::vector<const nn::Tensor<float>*> in, tg;
      for (Index k = start; k < std::min(opt.pairs, start + opt.batch_size); ++k) {
        in.push_back(&set.inputs[std::size_t(order[std::size_t(k)])]);
        tg.push_back(&set.targets[std::size_t(order[std::size_t(k)])]);
      }
      const double loss = train_step(out, adam, planes, stack(in), stack(tg));
      if (!std::isfinite(loss)) {
        throw NumericalError("retrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(n_batches));
      }
      loss_sum += loss;
      ++n_batches;
    }
    if (history) {
      history->push_back(EpochRecord{epoch, model.nx() - 1, loss_sum / double(n_batches), 0.0, opt.lr});
    }
  }
  return out;
}

}  // namespace helmnet::train
