#include "misconv/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "misconv/dataset.hpp"
#include "misconv/error.hpp"
#include "misconv/metrics.hpp"
#include "misconv/mfa_io.hpp"
#include "misconv/parallel.hpp"

namespace misconv {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used == v.size() && v.front() != '-') return out;
  } catch (const std::exception&) {
  }
  throw InvalidArgument("setting '" + key + "' expects a nonnegative integer, got '" + v + "'");
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long out = std::stol(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw InvalidArgument("setting '" + key + "' expects an integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw InvalidArgument("setting '" + key + "' expects a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("setting '" + key + "' expects true/false, got '" + v + "'");
}

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  std::filesystem::path p(v);
  return p.is_relative() && !base.empty() ? base / p : p;
}

std::vector<FeatureArm> parse_arms(const std::string& v) {
  std::vector<FeatureArm> arms;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) arms.push_back(parse_feature_arm(item));
  }
  if (arms.empty()) throw InvalidArgument("arms must name at least one feature arm");
  return arms;
}

std::string join_arms(const std::vector<FeatureArm>& arms) {
  std::string out;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    if (i > 0) out += ',';
    out += to_string(arms[i]);
  }
  return out;
}

bool needs_model(const ExperimentConfig& cfg) {
  if (cfg.evaluate_imputation) return true;
  return std::any_of(cfg.arms.begin(), cfg.arms.end(), [](FeatureArm a) {
    return a == FeatureArm::kMisconv || a == FeatureArm::kMfaMean;
  });
}

std::string hex(const unsigned char* data, unsigned int len) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(data[i]);
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  for (const auto* p : {&train_images, &train_labels, &test_images, &test_labels}) {
    if (p->empty()) throw InvalidArgument("dataset paths must be set (train_images, train_labels, test_images, test_labels)");
    if (!std::filesystem::exists(*p)) throw InvalidArgument("file not found: " + p->string());
  }
  if (model_file && !std::filesystem::exists(*model_file)) {
    throw InvalidArgument("model file not found: " + model_file->string());
  }
  if (kernels.file && !std::filesystem::exists(*kernels.file)) {
    throw InvalidArgument("kernel file not found: " + kernels.file->string());
  }
  if (train_count < 1 || test_count < 1) throw InvalidArgument("train_count and test_count must be >= 1");
  if (arms.empty()) throw InvalidArgument("at least one arm is required");
  if (kernels.filters < 1 || kernels.size < 1 || kernels.stride < 1 || kernels.padding < 0) {
    throw InvalidArgument("invalid kernel geometry");
  }
  em.validate();
}

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(number) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw InvalidArgument("config line " + std::to_string(number) + ": repeated key '" + key + "'");
    }
  }
  return out;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir) {
  const std::string& v = value;
  if (key == "train_images") cfg.train_images = resolve(v, base_dir);
  else if (key == "train_labels") cfg.train_labels = resolve(v, base_dir);
  else if (key == "test_images") cfg.test_images = resolve(v, base_dir);
  else if (key == "test_labels") cfg.test_labels = resolve(v, base_dir);
  else if (key == "train_count") cfg.train_count = to_u64(key, v);
  else if (key == "test_count") cfg.test_count = to_u64(key, v);
  else if (key == "mask.pattern") cfg.mask.pattern = parse_mask_pattern(v);
  else if (key == "mask.area_fraction") cfg.mask.area_fraction = to_double(key, v);
  else if (key == "mask.missing_fraction") cfg.mask.missing_fraction = to_double(key, v);
  else if (key == "mask.seed") cfg.mask.seed = to_u64(key, v);
  else if (key == "arms") cfg.arms = parse_arms(v);
  else if (key == "kernels.file") cfg.kernels.file = v.empty() ? std::nullopt : std::optional(resolve(v, base_dir));
  else if (key == "kernels.seed") cfg.kernels.seed = to_u64(key, v);
  else if (key == "kernels.filters") cfg.kernels.filters = to_long(key, v);
  else if (key == "kernels.size") cfg.kernels.size = to_long(key, v);
  else if (key == "kernels.stride") cfg.kernels.stride = to_long(key, v);
  else if (key == "kernels.padding") cfg.kernels.padding = to_long(key, v);
  else if (key == "mfa.model") cfg.model_file = v.empty() ? std::nullopt : std::optional(resolve(v, base_dir));
  else if (key == "mfa.k") cfg.em.k = static_cast<int>(to_long(key, v));
  else if (key == "mfa.l") cfg.em.l = static_cast<int>(to_long(key, v));
  else if (key == "mfa.max_iters") cfg.em.max_iters = static_cast<int>(to_long(key, v));
  else if (key == "mfa.ll_tol") cfg.em.ll_tol = to_double(key, v);
  else if (key == "mfa.d_floor") cfg.em.d_floor = to_double(key, v);
  else if (key == "mfa.seed") cfg.em.seed = to_u64(key, v);
  else if (key == "mfa.init") cfg.em.init = parse_em_init(v);
  else if (key == "mfa.train_count") cfg.em_train_count = to_u64(key, v);
  else if (key == "classifier.learning_rate") cfg.classifier.learning_rate = to_double(key, v);
  else if (key == "classifier.epochs") cfg.classifier.epochs = static_cast<int>(to_long(key, v));
  else if (key == "classifier.batch_size") cfg.classifier.batch_size = static_cast<int>(to_long(key, v));
  else if (key == "classifier.l2") cfg.classifier.l2 = to_double(key, v);
  else if (key == "classifier.seed") cfg.classifier.seed = to_u64(key, v);
  else if (key == "imputation_mode") cfg.imputation_mode = parse_imputation_mode(v);
  else if (key == "evaluate_imputation") cfg.evaluate_imputation = to_bool(key, v);
  else if (key == "output_dir") cfg.output_dir = resolve(v, base_dir);
  else throw InvalidArgument("unknown setting '" + key + "'");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  ExperimentConfig cfg;
  const auto base = path.parent_path();
  for (const auto& [key, value] : parse_key_values(in)) apply_setting(cfg, key, value, base);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "train_images = " << cfg.train_images.string() << '\n'
     << "train_labels = " << cfg.train_labels.string() << '\n'
     << "test_images = " << cfg.test_images.string() << '\n'
     << "test_labels = " << cfg.test_labels.string() << '\n'
     << "train_count = " << cfg.train_count << '\n'
     << "test_count = " << cfg.test_count << '\n'
     << "mask.pattern = " << to_string(cfg.mask.pattern) << '\n'
     << "mask.area_fraction = " << cfg.mask.area_fraction << '\n'
     << "mask.missing_fraction = " << cfg.mask.missing_fraction << '\n'
     << "mask.seed = " << cfg.mask.seed << '\n'
     << "arms = " << join_arms(cfg.arms) << '\n'
     << "kernels.file = " << (cfg.kernels.file ? cfg.kernels.file->string() : "") << '\n'
     << "kernels.seed = " << cfg.kernels.seed << '\n'
     << "kernels.filters = " << cfg.kernels.filters << '\n'
     << "kernels.size = " << cfg.kernels.size << '\n'
     << "kernels.stride = " << cfg.kernels.stride << '\n'
     << "kernels.padding = " << cfg.kernels.padding << '\n'
     << "mfa.model = " << (cfg.model_file ? cfg.model_file->string() : "") << '\n'
     << "mfa.k = " << cfg.em.k << '\n'
     << "mfa.l = " << cfg.em.l << '\n'
     << "mfa.max_iters = " << cfg.em.max_iters << '\n'
     << "mfa.ll_tol = " << cfg.em.ll_tol << '\n'
     << "mfa.d_floor = " << cfg.em.d_floor << '\n'
     << "mfa.seed = " << cfg.em.seed << '\n'
     << "mfa.init = " << to_string(cfg.em.init) << '\n'
     << "mfa.train_count = " << cfg.em_train_count << '\n'
     << "classifier.learning_rate = " << cfg.classifier.learning_rate << '\n'
     << "classifier.epochs = " << cfg.classifier.epochs << '\n'
     << "classifier.batch_size = " << cfg.classifier.batch_size << '\n'
     << "classifier.l2 = " << cfg.classifier.l2 << '\n'
     << "classifier.seed = " << cfg.classifier.seed << '\n'
     << "imputation_mode = " << to_string(cfg.imputation_mode) << '\n'
     << "evaluate_imputation = " << (cfg.evaluate_imputation ? "true" : "false") << '\n'
     << "output_dir = " << cfg.output_dir.string() << '\n';
  return os.str();
}

KernelStack make_kernels(const KernelSource& source, Index channels) {
  if (source.file) {
    KernelStack k = load_kernels(*source.file);
    if (k.channels() != channels) {
      throw DimensionError("kernel file expects " + std::to_string(k.channels()) +
                           " channels, data has " + std::to_string(channels));
    }
    return k;
  }
  return KernelStack::random(source.filters, channels, source.size, source.size,
                             {source.stride, source.stride}, {source.padding, source.padding},
                             source.seed);
}

KernelStack make_mask_kernels(const KernelStack& base, const KernelSource& source) {
  return with_mask_channels(base, derive_seed(source.seed, 0x6d61736b));
}

std::vector<MaskedImage> mask_all(const std::vector<MaskedImage>& images, const ImageShape& shape,
                                  const MaskSpec& spec, std::uint64_t split) {
  std::vector<MaskedImage> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(apply_mask(images[i], shape, spec, derive_seed(split, i)));
  }
  return out;
}

std::string git_blob_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(content.size()) + '\0';

  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-1 computation failed");
  }
  return hex(digest, len);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "arm,metric,value\n" << std::setprecision(17);
  for (const MetricRow& r : rows) out << r.arm << ',' << r.metric << ',' << r.value << '\n';
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  std::ostream& say = log != nullptr ? *log : std::clog;
  std::filesystem::create_directories(cfg.output_dir);

  const Dataset train = load_idx(cfg.train_images, cfg.train_labels, cfg.train_count);
  const Dataset test = load_idx(cfg.test_images, cfg.test_labels, cfg.test_count);
  if (train.shape != test.shape) throw DimensionError("train and test images differ in geometry");
  const ImageShape shape = train.shape;
  cfg.mask.validate(shape);
  say << "loaded " << train.size() << " train / " << test.size() << " test images of "
      << shape.height << 'x' << shape.width << '\n';

  const std::vector<MaskedImage> train_masked = mask_all(train.images, shape, cfg.mask, 0);
  const std::vector<MaskedImage> test_masked = mask_all(test.images, shape, cfg.mask, 1);

  ExperimentResult result;
  std::shared_ptr<const MFAModel> model;
  if (needs_model(cfg)) {
    if (cfg.model_file) {
      model = std::make_shared<const MFAModel>(load_model(*cfg.model_file));
      if (model->dim() != shape.size()) throw DimensionError("model dimension does not match images");
    } else {
      const std::size_t count = cfg.em_train_count == 0 ? train.size()
                                                        : std::min(cfg.em_train_count, train.size());
      const std::vector<MaskedImage> subset(train.images.begin(),
                                            train.images.begin() + static_cast<std::ptrdiff_t>(count));
      say << "fitting MFA (k=" << cfg.em.k << ", l=" << cfg.em.l << ") on " << count << " images\n";
      EMResult fitted = fit(pixel_matrix(subset), cfg.em);
      say << "EM: " << fitted.report.iterations_run << " iterations, converged="
          << (fitted.report.converged ? "yes" : "no") << ", mean loglik "
          << fitted.report.mean_loglik.back() << '\n';
      std::ofstream em_csv(cfg.output_dir / "em_report.csv");
      write_em_report_csv(em_csv, fitted.report);
      result.em_report = fitted.report;
      model = std::make_shared<const MFAModel>(std::move(fitted.model));
    }
    save_model(cfg.output_dir / "model.mfa", *model);
  }

  FeatureSetup setup{shape, make_kernels(cfg.kernels, shape.channels), std::nullopt, model,
                     cfg.imputation_mode, Activation::kRelu};
  save_kernels(cfg.output_dir / "kernels.krn", setup.kernels);
  if (std::find(cfg.arms.begin(), cfg.arms.end(), FeatureArm::kMaskChannel) != cfg.arms.end()) {
    setup.mask_kernels = make_mask_kernels(setup.kernels, cfg.kernels);
  }

  int classes = 0;
  for (const int y : train.labels) classes = std::max(classes, y + 1);
  for (const int y : test.labels) classes = std::max(classes, y + 1);

  for (const FeatureArm arm : cfg.arms) {
    say << "arm " << to_string(arm) << ": extracting features\n";
    Matrix train_x = extract_features(setup, arm, train_masked);
    Matrix test_x = extract_features(setup, arm, test_masked);
    const TrainingResult trained = train_linear_classifier(std::move(train_x), train.labels,
                                                           std::move(test_x), test.labels, cfg.classifier);
    const ClassificationMetrics cm = classification_metrics(trained.test_predictions, test.labels, classes);
    say << "arm " << to_string(arm) << ": test accuracy " << cm.accuracy << '\n';
    result.metrics.push_back({to_string(arm), "accuracy", cm.accuracy});
    for (int c = 0; c < classes; ++c) {
      result.metrics.push_back({to_string(arm), "accuracy_class_" + std::to_string(c),
                                cm.per_class_accuracy[static_cast<std::size_t>(c)]});
    }
  }

  if (cfg.evaluate_imputation) {
    std::vector<Vector> truth;
    truth.reserve(test.size());
    for (const MaskedImage& img : test.images) truth.push_back(img.pixels());
    const ImputationMetrics mfa = evaluate_imputation(*model, test_masked, truth, cfg.imputation_mode);
    const ImputationMetrics zero = evaluate_zero_imputation(test_masked, truth);
    result.metrics.push_back({"mfa_mean", "mse", mfa.mse});
    result.metrics.push_back({"mfa_mean", "psnr", mfa.psnr});
    result.metrics.push_back({"mfa_mean", "nll", mfa.nll});
    result.metrics.push_back({"zero", "mse", zero.mse});
    result.metrics.push_back({"zero", "psnr", zero.psnr});
    say << "imputation PSNR: mfa_mean " << mfa.psnr << " dB, zero " << zero.psnr << " dB\n";
  }

  {
    std::ofstream csv(cfg.output_dir / "metrics.csv");
    write_metrics_csv(csv, result.metrics);
  }
  {
    std::ofstream manifest(cfg.output_dir / "manifest.txt");
    manifest << "# misconv run manifest\n" << render_config(cfg);
    manifest << "\n# seeds\nmask.seed = " << cfg.mask.seed << "\nkernels.seed = " << cfg.kernels.seed
             << "\nmfa.seed = " << cfg.em.seed << "\nclassifier.seed = " << cfg.classifier.seed << '\n';
    manifest << "\n# input content hashes (git blob sha1)\n";
    std::vector<std::filesystem::path> inputs{cfg.train_images, cfg.train_labels, cfg.test_images,
                                              cfg.test_labels};
    if (cfg.model_file) inputs.push_back(*cfg.model_file);
    if (cfg.kernels.file) inputs.push_back(*cfg.kernels.file);
    for (const auto& p : inputs) manifest << git_blob_hash(p) << "  " << p.string() << '\n';
    manifest << "\n# environment\nworkers = " << worker_count() << '\n';
  }
  return result;
}

}  // namespace misconv
