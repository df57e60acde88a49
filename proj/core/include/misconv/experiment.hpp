#pragma once

// End-to-end desk-scale experiment: masks, MFA estimation, feature
// extraction for every arm, linear classification and imputation metrics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "misconv/classifier.hpp"
#include "misconv/em.hpp"
#include "misconv/features.hpp"
#include "misconv/mask.hpp"

namespace misconv {

struct KernelSource {
  std::optional<std::filesystem::path> file;  ///< KRN1 file; overrides the random geometry below
  std::uint64_t seed = 0;
  Index filters = 32;
  Index size = 5;
  Index stride = 2;
  Index padding = 2;
};

struct ExperimentConfig {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t train_count = 10000;
  std::size_t test_count = 2000;
  MaskSpec mask;
  std::vector<FeatureArm> arms{FeatureArm::kMisconv, FeatureArm::kZero, FeatureArm::kMaskChannel,
                               FeatureArm::kMfaMean};
  KernelSource kernels;
  std::optional<std::filesystem::path> model_file;  ///< skip EM and load this MFA1 model
  EMConfig em;
  std::size_t em_train_count = 0;  ///< 0 = every training image
  ClassifierConfig classifier;
  ImputationMode imputation_mode = ImputationMode::kMixtureMean;
  bool evaluate_imputation = true;
  std::filesystem::path output_dir = "misconv_out";

  /// Throws InvalidArgument for missing files or out-of-range values.
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment; blank lines ignored.
/// Throws InvalidArgument on a malformed line or a repeated key.
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Sets one configuration key (e.g. "mask.pattern", "classifier.epochs").
/// Relative paths are resolved against `base_dir`.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});

/// Reads a config file; relative paths inside it resolve against its directory.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical `key = value` rendering of every setting.
std::string render_config(const ExperimentConfig& cfg);

struct MetricRow {
  std::string arm;
  std::string metric;
  double value = 0.0;
};

struct ExperimentResult {
  std::vector<MetricRow> metrics;
  std::optional<EMReport> em_report;
};

/// Runs the experiment and writes metrics.csv, manifest.txt, kernels.krn,
/// model.mfa (and em_report.csv when EM ran) into cfg.output_dir.
/// Every random choice derives from the seeds in `cfg`; metrics are
/// bitwise identical across runs and worker counts.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// CSV with header `arm,metric,value`, values at full precision.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

/// Builds the kernel stack described by `source` for `channels` input channels.
KernelStack make_kernels(const KernelSource& source, Index channels);

/// Indicator-channel extension of `base` for the mask_channel arm, seeded from `source`.
KernelStack make_mask_kernels(const KernelStack& base, const KernelSource& source);

/// Masks every image, example i seeded by (spec.seed, derive_seed(split, i)).
std::vector<MaskedImage> mask_all(const std::vector<MaskedImage>& images, const ImageShape& shape,
                                  const MaskSpec& spec, std::uint64_t split);

/// git blob hash (SHA-1 of "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::filesystem::path& path);

}  // namespace misconv
