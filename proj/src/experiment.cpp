#include "ocvit/experiment.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "ocvit/checkpoint.hpp"
#include "ocvit/errors.hpp"
#include "ocvit/heads.hpp"

namespace ocvit {

namespace {

// ---- flat key=value parsing -------------------------------------------------

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class KvReader {
 public:
  explicit KvReader(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
      ++line_no;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected key=value, got '" + line + "'");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": empty key");
      }
      if (kv_.count(key)) {
        throw ConfigError("config: duplicate key '" + key + "'");
      }
      kv_[key] = value;
    }
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }

  std::optional<std::string> get_optional(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    consumed_.insert(key);
    return it->second;
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) {
    auto v = get_optional(key);
    return v ? parse_unsigned(key, *v) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto v = get_optional(key);
    return v ? parse_unsigned(key, *v) : fallback;
  }

  int get_int(const std::string& key, int fallback) {
    auto v = get_optional(key);
    if (!v) return fallback;
    int out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
      throw ConfigError("config: key '" + key + "' has non-integer value '" +
                        *v + "'");
    }
    return out;
  }

  double get_double(const std::string& key, double fallback) {
    auto v = get_optional(key);
    if (!v) return fallback;
    return parse_double(key, *v);
  }

  void finish() const {
    for (const auto& [key, value] : kv_) {
      if (!consumed_.count(key)) {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
  }

  std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw ConfigError("config: key '" + key +
                        "' has non-negative-integer value '" + v + "'");
    }
    return out;
  }

  double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw ConfigError("config: key '" + key + "' has non-numeric value '" +
                        v + "'");
    }
    return out;
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

std::filesystem::path resolve(const std::filesystem::path& base_dir,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

void require_file(const std::filesystem::path& p, const std::string& key) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError("config: key '" + key + "' references missing file '" +
                      p.string() + "'");
  }
}

// ---- shared run helpers -----------------------------------------------------

std::vector<Tensor> gather(const std::vector<Tensor>& pool,
                           std::span<const std::size_t> indices) {
  std::vector<Tensor> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(pool[i]);
  return out;
}

std::unique_ptr<LatentScorer> make_scorer(const ExperimentConfig& cfg,
                                          const ParamStore& store,
                                          const EncoderConfig& enc,
                                          const VitParams& params,
                                          std::span<const Tensor> train_images,
                                          Rng svm_rng) {
  if (cfg.head_kind == "mlp") {
    return std::make_unique<FcScorer>(
        collect_fc_head(store, enc.latent_dim, cfg.head_depth));
  }
  NoGradGuard no_grad;
  LatentBatch latent = extract_latent(train_images, enc, params);
  if (cfg.head_kind == "kde") {
    return std::make_unique<KdeScorer>(
        kde_fit(latent.features, cfg.kde_bandwidth));
  }
  if (cfg.head_kind == "svm") {
    NoiseConfig noise = cfg.train.noise;
    noise.dim = enc.latent_dim;
    Tensor pseudo =
        sample_pseudo_negatives(svm_rng, latent.features.rows(), noise);
    SvmFitOptions opts;
    opts.C = cfg.svm_c;
    return std::make_unique<SvmScorer>(
        svm_fit(latent.features, pseudo, opts));
  }
  throw ConfigError("unknown head kind '" + cfg.head_kind +
                    "' (expected mlp, svm, or kde)");
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

int classify_error(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  return 1;
}

}  // namespace

// ---- config -----------------------------------------------------------------

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::filesystem::path& base_dir) {
  KvReader kv(text);
  ExperimentConfig cfg;

  cfg.encoder.image_size = kv.get_size("encoder.image_size", 32);
  cfg.encoder.channels = kv.get_size("encoder.channels", 1);
  cfg.encoder.patch_size = kv.get_size("encoder.patch_size", 8);
  cfg.encoder.embed_dim = kv.get_size("encoder.embed_dim", 64);
  cfg.encoder.depth = kv.get_size("encoder.depth", 2);
  cfg.encoder.heads = kv.get_size("encoder.heads", 4);
  cfg.encoder.mlp_ratio = kv.get_size("encoder.mlp_ratio", 4);
  cfg.encoder.latent_dim = kv.get_size("encoder.latent_dim", 64);
  cfg.encoder.ln_eps = kv.get_double("encoder.ln_eps", 1e-5);
  cfg.encoder.in_eps = kv.get_double("encoder.in_eps", 1e-5);
  cfg.encoder.validate();

  cfg.train.batch_size = kv.get_size("train.batch_size", 64);
  cfg.train.epochs = kv.get_size("train.epochs", 10);
  cfg.train.lr = kv.get_double("train.lr", 1e-3);
  cfg.train.weight_decay = kv.get_double("train.weight_decay", 1e-4);
  cfg.train.seed = kv.get_u64("train.seed", 1);
  cfg.train.noise.mu = kv.get_double("train.noise_mu", 0.0);
  cfg.train.noise.sigma2 = kv.get_double("train.noise_sigma2", 0.01);
  cfg.train.noise.dim = cfg.encoder.latent_dim;
  cfg.train.validate();

  cfg.head_kind = kv.get_string("head.kind", "mlp");
  if (cfg.head_kind != "mlp" && cfg.head_kind != "svm" &&
      cfg.head_kind != "kde") {
    throw ConfigError("config: head.kind '" + cfg.head_kind +
                      "' not in {mlp, svm, kde}");
  }
  cfg.head_depth = kv.get_size("head.depth", 1);
  if (cfg.head_depth < 1) throw ConfigError("config: head.depth must be >= 1");
  cfg.svm_c = kv.get_double("head.svm_c", 1.0);
  if (auto bw = kv.get_optional("head.kde_bandwidth")) {
    cfg.kde_bandwidth = kv.parse_double("head.kde_bandwidth", *bw);
  }

  cfg.protocol = parse_protocol(kv.get_string("protocol", "normal-vs-rest"));

  std::string kind = kv.get_string("dataset.kind", "synthetic");
  if (kind == "synthetic") {
    cfg.kind = DatasetKind::kSynthetic;
  } else if (kind == "idx") {
    cfg.kind = DatasetKind::kIdx;
  } else if (kind == "cifar-bin") {
    cfg.kind = DatasetKind::kCifarBin;
  } else {
    throw ConfigError("config: dataset.kind '" + kind +
                      "' not in {synthetic, idx, cifar-bin}");
  }

  cfg.synthetic.image_size = kv.get_size("synthetic.image_size", 32);
  cfg.synthetic.square_size = kv.get_size("synthetic.square_size", 10);
  cfg.synthetic.inlier_x = kv.get_size("synthetic.inlier_x", 4);
  cfg.synthetic.inlier_y = kv.get_size("synthetic.inlier_y", 4);
  cfg.synthetic.outlier_x = kv.get_size("synthetic.outlier_x", 18);
  cfg.synthetic.outlier_y = kv.get_size("synthetic.outlier_y", 18);
  cfg.synthetic.foreground = kv.get_double("synthetic.foreground", 0.9);
  cfg.synthetic.background = kv.get_double("synthetic.background", 0.2);
  cfg.synthetic.pixel_noise = kv.get_double("synthetic.pixel_noise", 0.05);
  cfg.synthetic.train_count = kv.get_size("synthetic.train_count", 500);
  cfg.synthetic.test_inliers = kv.get_size("synthetic.test_inliers", 200);
  cfg.synthetic.test_outliers = kv.get_size("synthetic.test_outliers", 200);
  cfg.synthetic.seed = kv.get_u64("synthetic.seed", 1);
  if (cfg.kind == DatasetKind::kSynthetic) cfg.synthetic.validate();

  if (auto v = kv.get_optional("idx.train_images")) {
    cfg.train_images = resolve(base_dir, *v);
  }
  if (auto v = kv.get_optional("idx.train_labels")) {
    cfg.train_labels = resolve(base_dir, *v);
  }
  if (auto v = kv.get_optional("idx.test_images")) {
    cfg.test_images = resolve(base_dir, *v);
  }
  if (auto v = kv.get_optional("idx.test_labels")) {
    cfg.test_labels = resolve(base_dir, *v);
  }
  if (cfg.kind == DatasetKind::kIdx) {
    for (auto [p, key] :
         {std::pair{&cfg.train_images, "idx.train_images"},
          std::pair{&cfg.train_labels, "idx.train_labels"},
          std::pair{&cfg.test_images, "idx.test_images"},
          std::pair{&cfg.test_labels, "idx.test_labels"}}) {
      if (p->empty()) {
        throw ConfigError("config: dataset.kind=idx requires key '" +
                          std::string(key) + "'");
      }
      require_file(*p, key);
    }
  }

  if (auto v = kv.get_optional("cifar.train_bins")) {
    for (const std::string& item : split_list(*v)) {
      cfg.train_bins.push_back(resolve(base_dir, item));
    }
  }
  if (auto v = kv.get_optional("cifar.test_bins")) {
    for (const std::string& item : split_list(*v)) {
      cfg.test_bins.push_back(resolve(base_dir, item));
    }
  }
  cfg.cifar_label_bytes = kv.get_size("cifar.label_bytes", 1);
  if (cfg.kind == DatasetKind::kCifarBin) {
    if (cfg.train_bins.empty() || cfg.test_bins.empty()) {
      throw ConfigError(
          "config: dataset.kind=cifar-bin requires cifar.train_bins and "
          "cifar.test_bins");
    }
    for (const auto& p : cfg.train_bins) require_file(p, "cifar.train_bins");
    for (const auto& p : cfg.test_bins) require_file(p, "cifar.test_bins");
  }

  bool explicit_seeds = kv.has("eval.seeds");
  bool seed_count_key = kv.has("eval.seed_count");
  if (explicit_seeds && seed_count_key) {
    throw ConfigError("config: eval.seeds and eval.seed_count are exclusive");
  }
  if (explicit_seeds) {
    for (const std::string& item :
         split_list(kv.get_string("eval.seeds", ""))) {
      cfg.seeds.push_back(kv.parse_unsigned("eval.seeds", item));
    }
    if (cfg.seeds.empty()) throw ConfigError("config: eval.seeds is empty");
  } else {
    std::size_t count = kv.get_size("eval.seed_count", 5);
    if (count < 1) throw ConfigError("config: eval.seed_count must be >= 1");
    for (std::size_t i = 0; i < count; ++i) {
      cfg.seeds.push_back(cfg.train.seed + i);
    }
  }

  if (auto v = kv.get_optional("eval.classes")) {
    std::vector<int> classes;
    for (const std::string& item : split_list(*v)) {
      classes.push_back(
          static_cast<int>(kv.parse_unsigned("eval.classes", item)));
    }
    if (classes.empty()) throw ConfigError("config: eval.classes is empty");
    cfg.class_filter = std::move(classes);
  }

  cfg.score_class = kv.get_int("score.class", 0);
  cfg.out_dir = resolve(base_dir, kv.get_string("out", "runs/out"));

  if (auto v = kv.get_optional("ablate.batch_sizes")) {
    for (const std::string& item : split_list(*v)) {
      cfg.ablate.batch_sizes.push_back(
          kv.parse_unsigned("ablate.batch_sizes", item));
    }
  }
  if (auto v = kv.get_optional("ablate.latent_dims")) {
    for (const std::string& item : split_list(*v)) {
      cfg.ablate.latent_dims.push_back(
          kv.parse_unsigned("ablate.latent_dims", item));
    }
  }
  if (auto v = kv.get_optional("ablate.depths")) {
    for (const std::string& item : split_list(*v)) {
      cfg.ablate.depths.push_back(kv.parse_unsigned("ablate.depths", item));
    }
  }
  if (auto v = kv.get_optional("ablate.heads")) {
    for (const std::string& item : split_list(*v)) {
      if (item != "mlp" && item != "svm" && item != "kde") {
        throw ConfigError("config: ablate.heads entry '" + item +
                          "' not in {mlp, svm, kde}");
      }
      cfg.ablate.heads.push_back(item);
    }
  }

  kv.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text, path.parent_path());
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "encoder.image_size=" << encoder.image_size << "\n";
  os << "encoder.channels=" << encoder.channels << "\n";
  os << "encoder.patch_size=" << encoder.patch_size << "\n";
  os << "encoder.embed_dim=" << encoder.embed_dim << "\n";
  os << "encoder.depth=" << encoder.depth << "\n";
  os << "encoder.heads=" << encoder.heads << "\n";
  os << "encoder.mlp_ratio=" << encoder.mlp_ratio << "\n";
  os << "encoder.latent_dim=" << encoder.latent_dim << "\n";
  os << "encoder.ln_eps=" << format_double(encoder.ln_eps) << "\n";
  os << "encoder.in_eps=" << format_double(encoder.in_eps) << "\n";
  os << "train.batch_size=" << train.batch_size << "\n";
  os << "train.epochs=" << train.epochs << "\n";
  os << "train.lr=" << format_double(train.lr) << "\n";
  os << "train.weight_decay=" << format_double(train.weight_decay) << "\n";
  os << "train.seed=" << train.seed << "\n";
  os << "train.noise_mu=" << format_double(train.noise.mu) << "\n";
  os << "train.noise_sigma2=" << format_double(train.noise.sigma2) << "\n";
  os << "head.kind=" << head_kind << "\n";
  os << "head.depth=" << head_depth << "\n";
  os << "head.svm_c=" << format_double(svm_c) << "\n";
  if (kde_bandwidth) {
    os << "head.kde_bandwidth=" << format_double(*kde_bandwidth) << "\n";
  }
  os << "protocol=" << protocol_name(protocol) << "\n";
  switch (kind) {
    case DatasetKind::kSynthetic:
      os << "dataset.kind=synthetic\n";
      os << "synthetic.image_size=" << synthetic.image_size << "\n";
      os << "synthetic.square_size=" << synthetic.square_size << "\n";
      os << "synthetic.inlier_x=" << synthetic.inlier_x << "\n";
      os << "synthetic.inlier_y=" << synthetic.inlier_y << "\n";
      os << "synthetic.outlier_x=" << synthetic.outlier_x << "\n";
      os << "synthetic.outlier_y=" << synthetic.outlier_y << "\n";
      os << "synthetic.foreground=" << format_double(synthetic.foreground)
         << "\n";
      os << "synthetic.background=" << format_double(synthetic.background)
         << "\n";
      os << "synthetic.pixel_noise=" << format_double(synthetic.pixel_noise)
         << "\n";
      os << "synthetic.train_count=" << synthetic.train_count << "\n";
      os << "synthetic.test_inliers=" << synthetic.test_inliers << "\n";
      os << "synthetic.test_outliers=" << synthetic.test_outliers << "\n";
      os << "synthetic.seed=" << synthetic.seed << "\n";
      break;
    case DatasetKind::kIdx:
      os << "dataset.kind=idx\n";
      os << "idx.train_images=" << train_images.string() << "\n";
      os << "idx.train_labels=" << train_labels.string() << "\n";
      os << "idx.test_images=" << test_images.string() << "\n";
      os << "idx.test_labels=" << test_labels.string() << "\n";
      break;
    case DatasetKind::kCifarBin: {
      os << "dataset.kind=cifar-bin\n";
      auto join = [](const std::vector<std::filesystem::path>& ps) {
        std::string s;
        for (std::size_t i = 0; i < ps.size(); ++i) {
          if (i) s += ",";
          s += ps[i].string();
        }
        return s;
      };
      os << "cifar.train_bins=" << join(train_bins) << "\n";
      os << "cifar.test_bins=" << join(test_bins) << "\n";
      os << "cifar.label_bytes=" << cifar_label_bytes << "\n";
      break;
    }
  }
  os << "eval.seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) os << ",";
    os << seeds[i];
  }
  os << "\n";
  if (class_filter) {
    os << "eval.classes=";
    for (std::size_t i = 0; i < class_filter->size(); ++i) {
      if (i) os << ",";
      os << (*class_filter)[i];
    }
    os << "\n";
  }
  os << "score.class=" << score_class << "\n";
  os << "out=" << out_dir.string() << "\n";
  auto emit_axis = [&os](const char* key, const auto& values) {
    if (values.empty()) return;
    os << key << "=";
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) os << ",";
      os << values[i];
    }
    os << "\n";
  };
  emit_axis("ablate.batch_sizes", ablate.batch_sizes);
  emit_axis("ablate.latent_dims", ablate.latent_dims);
  emit_axis("ablate.depths", ablate.depths);
  emit_axis("ablate.heads", ablate.heads);
  return os.str();
}

// ---- dataset / splits -------------------------------------------------------

Dataset load_dataset(const ExperimentConfig& cfg) {
  Dataset data;
  switch (cfg.kind) {
    case DatasetKind::kSynthetic:
      data = gen_synthetic(cfg.synthetic);
      break;
    case DatasetKind::kIdx: {
      LabeledImages train = read_idx(cfg.train_images, cfg.train_labels);
      LabeledImages test = read_idx(cfg.test_images, cfg.test_labels);
      data.train_images = std::move(train.images);
      data.train_labels = std::move(train.labels);
      data.test_images = std::move(test.images);
      data.test_labels = std::move(test.labels);
      break;
    }
    case DatasetKind::kCifarBin: {
      for (const auto& p : cfg.train_bins) {
        LabeledImages part = read_cifar_bin(p, cfg.cifar_label_bytes);
        std::move(part.images.begin(), part.images.end(),
                  std::back_inserter(data.train_images));
        data.train_labels.insert(data.train_labels.end(), part.labels.begin(),
                                 part.labels.end());
      }
      for (const auto& p : cfg.test_bins) {
        LabeledImages part = read_cifar_bin(p, cfg.cifar_label_bytes);
        std::move(part.images.begin(), part.images.end(),
                  std::back_inserter(data.test_images));
        data.test_labels.insert(data.test_labels.end(), part.labels.begin(),
                                part.labels.end());
      }
      break;
    }
  }
  auto adapt = [&cfg](Tensor& img) {
    img = adapt_channels(resize_nearest(img, cfg.encoder.image_size),
                         cfg.encoder.channels);
  };
  for (Tensor& img : data.train_images) adapt(img);
  for (Tensor& img : data.test_images) adapt(img);
  return data;
}

std::vector<SplitSpec> make_splits(const ExperimentConfig& cfg,
                                   const Dataset& data) {
  std::vector<SplitSpec> splits;
  if (cfg.kind == DatasetKind::kSynthetic) {
    SplitSpec split;
    split.normal_class = 0;
    split.train_indices = iota_indices(data.train_images.size());
    split.test_indices = iota_indices(data.test_images.size());
    for (std::size_t i : split.test_indices) {
      int label = data.test_labels[i];
      if (label != 0 && label != 1) {
        throw EvalError("synthetic test label " + std::to_string(label) +
                        " not in {0, 1}");
      }
      split.test_anomaly.push_back(label);
    }
    splits.push_back(std::move(split));
  } else {
    splits = build_splits(data, cfg.protocol, cfg.train.seed);
  }
  if (cfg.class_filter) {
    std::vector<SplitSpec> kept;
    for (SplitSpec& s : splits) {
      if (std::find(cfg.class_filter->begin(), cfg.class_filter->end(),
                    s.normal_class) != cfg.class_filter->end()) {
        kept.push_back(std::move(s));
      }
    }
    if (kept.empty()) {
      throw ConfigError("eval.classes matches no class in the dataset");
    }
    splits = std::move(kept);
  }
  return splits;
}

// ---- run --------------------------------------------------------------------

SplitRunResult run_split(const ExperimentConfig& cfg, const Dataset& data,
                         const SplitSpec& split, std::uint64_t seed) {
  Rng root(seed);
  Rng init_rng = root.split(0);
  std::uint64_t train_seed = root.split(1).seed();
  Rng svm_rng = root.split(2);

  SplitRunResult result;
  init_encoder_params(cfg.encoder, result.store, init_rng);
  init_fc_head(cfg.encoder.latent_dim, cfg.head_depth, result.store, init_rng);
  freeze_backbone(result.store);

  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = train_seed;
  train_cfg.noise.dim = cfg.encoder.latent_dim;

  std::vector<Tensor> train_images = gather(data.train_images,
                                            split.train_indices);
  result.history = train(result.store, cfg.encoder, cfg.head_depth,
                         train_images, train_cfg);

  VitParams params = collect_encoder(result.store, cfg.encoder);
  std::unique_ptr<LatentScorer> scorer = make_scorer(
      cfg, result.store, cfg.encoder, params, train_images, svm_rng);

  std::vector<Tensor> test_images = gather(data.test_images,
                                           split.test_indices);
  {
    NoGradGuard no_grad;
    LatentBatch latent = extract_latent(test_images, cfg.encoder, params);
    result.test_scores = scorer->score_batch(latent.features);
  }
  result.auc = auc_roc(result.test_scores, split.test_anomaly);
  return result;
}

// ---- output files -----------------------------------------------------------

namespace {

std::string run_stem(int cls, std::uint64_t seed) {
  return "class" + std::to_string(cls) + "_seed" + std::to_string(seed);
}

}  // namespace

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, int cls,
                                      std::uint64_t seed) {
  return cfg.out_dir / "checkpoints" / (run_stem(cls, seed) + ".ckpt");
}

std::filesystem::path history_path(const ExperimentConfig& cfg, int cls,
                                   std::uint64_t seed) {
  return cfg.out_dir / "history" / (run_stem(cls, seed) + ".csv");
}

std::filesystem::path eval_csv_path(const ExperimentConfig& cfg) {
  return cfg.out_dir / "reports" / "eval.csv";
}

std::filesystem::path ablation_csv_path(const ExperimentConfig& cfg) {
  return cfg.out_dir / "reports" / "ablation.csv";
}

std::string format_double(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buf.data(), ptr);
}

void write_history_csv(const std::filesystem::path& path,
                       const TrainHistory& history) {
  std::string text = "step,epoch,loss\n";
  for (std::size_t i = 0; i < history.step_loss.size(); ++i) {
    text += std::to_string(i + 1);
    text += ",";
    text += std::to_string(history.step_epoch[i]);
    text += ",";
    text += format_double(history.step_loss[i]);
    text += "\n";
  }
  write_text_file(path, text);
}

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<EvalRow>& rows, double mean,
                    double stddev) {
  std::string text = "class,seed,auc\n";
  for (const EvalRow& row : rows) {
    text += std::to_string(row.cls);
    text += ",";
    text += std::to_string(row.seed);
    text += ",";
    text += format_double(row.auc);
    text += "\n";
  }
  text += "mean,," + format_double(mean) + "\n";
  text += "std,," + format_double(stddev) + "\n";
  write_text_file(path, text);
}

// ---- gradient suite ---------------------------------------------------------

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     double sigma = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_gaussian(t.data(), 0.0, sigma);
  return t;
}

GradCheckReport worst_of(const DifferentiableOp& op,
                         const std::function<std::vector<Tensor>(Rng&)>& point,
                         Rng& rng, std::size_t n_points, double tol) {
  GradCheckReport worst;
  worst.rel_tol = tol;
  for (std::size_t i = 0; i < n_points; ++i) {
    std::vector<Tensor> p = point(rng);
    GradCheckReport r = grad_check(op, p, tol);
    if (r.max_rel_err > worst.max_rel_err) {
      worst.max_rel_err = r.max_rel_err;
      worst.worst_input = r.worst_input;
      worst.worst_element = r.worst_element;
    }
  }
  worst.pass = worst.max_rel_err <= tol;
  return worst;
}

}  // namespace

namespace {
constexpr std::size_t kSuitePoints = 50;
constexpr double kSuiteTol = 1e-4;
}  // namespace

std::vector<GradSuiteCase> run_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradSuiteCase> cases;

  auto add_case = [&](const std::string& name, const DifferentiableOp& op,
                      const std::function<std::vector<Tensor>(Rng&)>& point,
                      std::size_t n_points = kSuitePoints,
                      double tol = kSuiteTol) {
    GradSuiteCase c;
    c.name = name;
    c.tolerance = tol;
    c.report = worst_of(op, point, rng, n_points, tol);
    cases.push_back(std::move(c));
  };

  add_case(
      "linear",
      [](std::span<const Tensor> in) { return linear(in[0], in[1], in[2]); },
      [](Rng& r) {
        return std::vector<Tensor>{random_tensor({3, 4}, r),
                                   random_tensor({4, 3}, r),
                                   random_tensor({3}, r)};
      });
  add_case(
      "gelu", [](std::span<const Tensor> in) { return gelu(in[0]); },
      [](Rng& r) {
        return std::vector<Tensor>{random_tensor({4, 5}, r, 1.5)};
      });
  add_case(
      "layer_norm",
      [](std::span<const Tensor> in) {
        return layer_norm(in[0], in[1], in[2], 1e-5);
      },
      [](Rng& r) {
        return std::vector<Tensor>{random_tensor({3, 6}, r),
                                   random_tensor({6}, r),
                                   random_tensor({6}, r)};
      });
  add_case(
      "instance_norm",
      [](std::span<const Tensor> in) { return instance_norm(in[0], 1e-5); },
      [](Rng& r) {
        return std::vector<Tensor>{random_tensor({3, 6}, r)};
      });
  add_case(
      "softmax", [](std::span<const Tensor> in) { return softmax(in[0]); },
      [](Rng& r) {
        return std::vector<Tensor>{random_tensor({3, 5}, r)};
      });
  add_case(
      "msa",
      [](std::span<const Tensor> in) {
        MsaParams p{in[1], in[2], in[3], in[4],
                    in[5], in[6], in[7], in[8]};
        return msa(in[0], p, 2);
      },
      [](Rng& r) {
        std::vector<Tensor> p;
        p.push_back(random_tensor({4, 6}, r, 0.5));
        for (int i = 0; i < 4; ++i) {
          p.push_back(random_tensor({6, 6}, r, 0.5));
          p.push_back(random_tensor({6}, r, 0.5));
        }
        return p;
      });
  add_case(
      "encoder_block",
      [](std::span<const Tensor> in) {
        BlockParams b;
        b.ln1_gamma = in[1];
        b.ln1_beta = in[2];
        b.attn = MsaParams{in[3], in[4], in[5], in[6],
                           in[7], in[8], in[9], in[10]};
        b.ln2_gamma = in[11];
        b.ln2_beta = in[12];
        b.fc1_w = in[13];
        b.fc1_b = in[14];
        b.fc2_w = in[15];
        b.fc2_b = in[16];
        return encoder_block(in[0], b, 2, 1e-5);
      },
      [](Rng& r) {
        std::vector<Tensor> p;
        p.push_back(random_tensor({4, 6}, r, 0.5));
        p.push_back(random_tensor({6}, r, 0.5));  // ln1 gamma
        p.push_back(random_tensor({6}, r, 0.5));  // ln1 beta
        for (int i = 0; i < 4; ++i) {
          p.push_back(random_tensor({6, 6}, r, 0.5));
          p.push_back(random_tensor({6}, r, 0.5));
        }
        p.push_back(random_tensor({6}, r, 0.5));  // ln2 gamma
        p.push_back(random_tensor({6}, r, 0.5));  // ln2 beta
        p.push_back(random_tensor({6, 12}, r, 0.5));
        p.push_back(random_tensor({12}, r, 0.5));
        p.push_back(random_tensor({12, 6}, r, 0.5));
        p.push_back(random_tensor({6}, r, 0.5));
        return p;
      });
  add_case(
      "fc_head",
      [](std::span<const Tensor> in) {
        FcHead head;
        head.weights = {in[1], in[3], in[5]};
        head.biases = {in[2], in[4], in[6]};
        return fc_forward(in[0], head);
      },
      [](Rng& r) {
        return std::vector<Tensor>{
            random_tensor({4, 5}, r),      random_tensor({5, 5}, r, 0.5),
            random_tensor({5}, r, 0.5),    random_tensor({5, 5}, r, 0.5),
            random_tensor({5}, r, 0.5),    random_tensor({5, 2}, r, 0.5),
            random_tensor({2}, r, 0.5)};
      });
  {
    static const std::vector<int> kLabels = {0, 1, 0, 1, 0, 1};
    add_case(
        "bce_softmax",
        [](std::span<const Tensor> in) {
          return bce_softmax_loss(in[0], kLabels);
        },
        [](Rng& r) {
          return std::vector<Tensor>{random_tensor({6, 2}, r, 1.5)};
        });
  }
  {
    EncoderConfig tiny;
    tiny.image_size = 4;
    tiny.channels = 1;
    tiny.patch_size = 2;
    tiny.embed_dim = 8;
    tiny.depth = 2;
    tiny.heads = 2;
    tiny.mlp_ratio = 2;
    tiny.latent_dim = 4;
    Rng fixed(seed ^ 0xABCDEF);
    std::vector<Tensor> images = {random_tensor({1, 4, 4}, fixed),
                                  random_tensor({1, 4, 4}, fixed)};
    Tensor noise = random_tensor({2, 4}, fixed, 0.1);
    std::vector<int> labels = {0, 0, 1, 1};
    auto op = [tiny, images, noise, labels](std::span<const Tensor> in) {
      VitParams vp;
      std::size_t k = 0;
      vp.patch_w = in[k++];
      vp.patch_b = in[k++];
      vp.cls = in[k++];
      vp.pos = in[k++];
      for (std::size_t bi = 0; bi < tiny.depth; ++bi) {
        BlockParams b;
        b.ln1_gamma = in[k++];
        b.ln1_beta = in[k++];
        b.attn = MsaParams{in[k], in[k + 1], in[k + 2], in[k + 3],
                           in[k + 4], in[k + 5], in[k + 6], in[k + 7]};
        k += 8;
        b.ln2_gamma = in[k++];
        b.ln2_beta = in[k++];
        b.fc1_w = in[k++];
        b.fc1_b = in[k++];
        b.fc2_w = in[k++];
        b.fc2_b = in[k++];
        vp.blocks.push_back(std::move(b));
      }
      vp.lnf_gamma = in[k++];
      vp.lnf_beta = in[k++];
      vp.latent_w = in[k++];
      vp.latent_b = in[k++];
      FcHead head;
      head.weights = {in[k++]};
      head.biases = {in[k++]};
      LatentBatch latent = extract_latent(images, tiny, vp);
      auto [features, batch_labels] = assemble_batch(latent, noise);
      (void)batch_labels;
      return bce_softmax_loss(fc_forward(features, head), labels);
    };
    auto point = [tiny](Rng& r) {
      std::size_t e = tiny.embed_dim, hidden = tiny.mlp_ratio * e;
      std::vector<Tensor> p;
      p.push_back(random_tensor({tiny.patch_dim(), e}, r, 0.3));
      p.push_back(random_tensor({e}, r, 0.3));
      p.push_back(random_tensor({1, e}, r, 0.3));
      p.push_back(random_tensor({tiny.num_tokens(), e}, r, 0.3));
      for (std::size_t bi = 0; bi < tiny.depth; ++bi) {
        p.push_back(random_tensor({e}, r, 0.3));  // ln1 gamma
        p.push_back(random_tensor({e}, r, 0.3));  // ln1 beta
        for (int i = 0; i < 4; ++i) {
          p.push_back(random_tensor({e, e}, r, 0.3));
          p.push_back(random_tensor({e}, r, 0.3));
        }
        p.push_back(random_tensor({e}, r, 0.3));  // ln2 gamma
        p.push_back(random_tensor({e}, r, 0.3));  // ln2 beta
        p.push_back(random_tensor({e, hidden}, r, 0.3));
        p.push_back(random_tensor({hidden}, r, 0.3));
        p.push_back(random_tensor({hidden, e}, r, 0.3));
        p.push_back(random_tensor({e}, r, 0.3));
      }
      p.push_back(random_tensor({e}, r, 0.3));  // lnf gamma
      p.push_back(random_tensor({e}, r, 0.3));  // lnf beta
      p.push_back(random_tensor({e, tiny.latent_dim}, r, 0.3));
      p.push_back(random_tensor({tiny.latent_dim}, r, 0.3));
      p.push_back(random_tensor({tiny.latent_dim, 2}, r, 0.3));
      p.push_back(random_tensor({2}, r, 0.3));
      return p;
    };
    add_case("pipeline_tiny", op, point, 1, 1e-3);
  }
  return cases;
}

// ---- commands ---------------------------------------------------------------

namespace {

struct RunAllOutput {
  std::vector<EvalRow> rows;
  std::map<int, std::vector<double>> per_class;
};

RunAllOutput run_all_splits(const ExperimentConfig& cfg, bool persist) {
  Dataset data = load_dataset(cfg);
  std::vector<SplitSpec> splits = make_splits(cfg, data);
  RunAllOutput out;
  for (const SplitSpec& split : splits) {
    for (std::uint64_t seed : cfg.seeds) {
      SplitRunResult result = run_split(cfg, data, split, seed);
      if (persist) {
        save_checkpoint(result.store,
                        checkpoint_path(cfg, split.normal_class, seed));
        write_history_csv(history_path(cfg, split.normal_class, seed),
                          result.history);
      }
      out.rows.push_back({split.normal_class, seed, result.auc});
      out.per_class[split.normal_class].push_back(result.auc);
      std::cout << "class " << split.normal_class << " seed " << seed
                << " auc " << format_double(result.auc) << " final_loss "
                << format_double(result.history.epoch_loss.back())
                << " train_acc "
                << format_double(result.history.epoch_accuracy.back())
                << "\n";
    }
  }
  return out;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
  try {
    run_all_splits(cfg, true);
    std::cout << "checkpoints written to "
              << (cfg.out_dir / "checkpoints").string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return classify_error(e);
  }
}

int cmd_eval(const ExperimentConfig& cfg) {
  try {
    RunAllOutput out = run_all_splits(cfg, true);
    EvalReport report = aggregate(out.per_class);
    report.config_snapshot = cfg.to_text();
    write_eval_csv(eval_csv_path(cfg), out.rows, report.mean, report.stddev);
    std::cout << "mean " << format_double(report.mean) << " std "
              << format_double(report.stddev) << "\n";
    std::cout << "report written to " << eval_csv_path(cfg).string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << "\n";
    return classify_error(e);
  }
}

int cmd_ablate(const ExperimentConfig& cfg) {
  try {
    Dataset data = load_dataset(cfg);
    std::vector<SplitSpec> splits = make_splits(cfg, data);

    AblationGrid grid = cfg.ablate;
    if (grid.batch_sizes.empty()) {
      grid.batch_sizes = AblationGrid::default_batch_sizes();
    }
    if (grid.latent_dims.empty()) {
      grid.latent_dims = {cfg.encoder.latent_dim};
    }
    if (grid.depths.empty()) grid.depths = {cfg.head_depth};
    if (grid.heads.empty()) grid.heads = {cfg.head_kind};

    PointRunner runner = [&](const AblationPoint& point,
                             std::uint64_t seed) {
      ExperimentConfig point_cfg = cfg;
      point_cfg.train.batch_size = point.batch_size;
      point_cfg.encoder.latent_dim = point.latent_dim;
      point_cfg.train.noise.dim = point.latent_dim;
      point_cfg.head_depth = point.depth;
      point_cfg.head_kind = point.head;
      std::map<int, double> class_auc;
      for (const SplitSpec& split : splits) {
        class_auc[split.normal_class] =
            run_split(point_cfg, data, split, seed).auc;
      }
      return class_auc;
    };

    std::filesystem::path csv = ablation_csv_path(cfg);
    if (csv.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(csv.parent_path(), ec);
    }
    std::ofstream out(csv, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + csv.string() + "' for writing");
    out << "batch_size,latent_dim,depth,head,seed,class,auc\n";

    std::size_t failed = 0;
    std::string first_error;
    auto on_result = [&](const AblationOutcome& o) {
      if (o.failed) {
        ++failed;
        if (first_error.empty()) first_error = o.error;
        std::cerr << "ablate: point (batch_size=" << o.point.batch_size
                  << ", latent_dim=" << o.point.latent_dim
                  << ", depth=" << o.point.depth << ", head=" << o.point.head
                  << ", seed=" << o.seed << ") failed: " << o.error << "\n";
        return;
      }
      for (const auto& [cls, auc] : o.class_auc) {
        out << o.point.batch_size << "," << o.point.latent_dim << ","
            << o.point.depth << "," << o.point.head << "," << o.seed << ","
            << cls << "," << format_double(auc) << "\n";
      }
      std::cout << "ablate: batch_size=" << o.point.batch_size
                << " latent_dim=" << o.point.latent_dim
                << " depth=" << o.point.depth << " head=" << o.point.head
                << " seed=" << o.seed << " done\n";
    };
    run_ablation(grid, cfg.seeds, runner, on_result);
    out.flush();
    if (!out) throw IoError("write failed for '" + csv.string() + "'");
    std::cout << "ablation written to " << csv.string() << "\n";
    if (failed > 0) {
      std::cerr << "ablate: " << failed
                << " point(s) failed, first error: " << first_error << "\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "ablate: " << e.what() << "\n";
    return classify_error(e);
  }
}

int cmd_score(const ExperimentConfig& cfg,
              const std::vector<std::filesystem::path>& inputs) {
  try {
    if (inputs.empty()) {
      std::cerr << "score: no input files\n";
      return 2;
    }
    for (const auto& p : inputs) {
      if (!std::filesystem::exists(p)) {
        std::cerr << "score: input '" << p.string() << "' does not exist\n";
        return 2;
      }
    }
    std::filesystem::path ckpt =
        checkpoint_path(cfg, cfg.score_class, cfg.seeds.front());
    ParamStore store = load_checkpoint(ckpt);
    validate_params(store,
                    expected_param_shapes(cfg.encoder, cfg.head_depth));
    VitParams params = collect_encoder(store, cfg.encoder);
    FcHead head = collect_fc_head(store, cfg.encoder.latent_dim,
                                  cfg.head_depth);
    for (const auto& p : inputs) {
      std::vector<Tensor> images = read_idx_images(p);
      if (images.size() != 1) {
        throw ConfigError("'" + p.string() + "' holds " +
                          std::to_string(images.size()) +
                          " images; expected exactly 1");
      }
      Tensor img = adapt_channels(
          resize_nearest(images[0], cfg.encoder.image_size),
          cfg.encoder.channels);
      double score = anomaly_score(img, cfg.encoder, params, head);
      std::cout << p.string() << "," << format_double(score) << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "score: " << e.what() << "\n";
    return classify_error(e);
  }
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
  try {
    std::vector<GradSuiteCase> cases = run_gradient_suite(cfg.train.seed);
    bool all_pass = true;
    for (const GradSuiteCase& c : cases) {
      std::cout << c.name << " max_rel_err " << format_double(c.report.max_rel_err)
                << " tol " << format_double(c.tolerance) << " "
                << (c.report.pass ? "pass" : "FAIL") << "\n";
      all_pass = all_pass && c.report.pass;
    }
    return all_pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "gradcheck: " << e.what() << "\n";
    return classify_error(e);
  }
}

}  // namespace ocvit
