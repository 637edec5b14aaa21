#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mrcgat {

enum class Relation : std::size_t { kRF = 0, kCOG = 1, kMRI = 2 };
inline constexpr std::size_t kRelationCount = 3;
inline constexpr std::array<const char*, kRelationCount> kRelationNames = {"RF", "COG", "MRI"};
inline constexpr std::array<const char*, kRelationCount> kRelationPrefixes = {"rf_", "cog_", "mri_"};

// Canonical diagnosis classes; index order is the class index.
inline constexpr std::array<const char*, 3> kDiagnosisNames = {"CN", "MCI", "AD"};

struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const ColumnRange&, const ColumnRange&) = default;
};

// Column ranges of each relation inside a subject's feature vector.
struct ModalityPartition {
  std::array<ColumnRange, kRelationCount> ranges{};

  static ModalityPartition from_dims(std::size_t d_rf, std::size_t d_cog, std::size_t d_mri);

  const ColumnRange& range(std::size_t relation) const { return ranges[relation]; }
  std::size_t dim(std::size_t relation) const { return ranges[relation].size(); }
  std::size_t feature_count() const;
  // Throws SchemaError unless the ranges are nonempty and tile [0, F).
  void validate() const;

  friend bool operator==(const ModalityPartition&, const ModalityPartition&) = default;
};

struct SubjectRecord {
  std::string subject_id;
  std::optional<std::size_t> label;
  std::vector<double> features;

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

struct Dataset {
  std::vector<SubjectRecord> records;
  ModalityPartition partition;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;

  std::size_t class_count() const noexcept { return class_names.size(); }
  std::size_t feature_count() const noexcept { return feature_names.size(); }

  // Record indices of labeled subjects, grouped by class.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
  // Keeps only subjects labeled with one of `names` (in that order) and
  // re-indexes labels accordingly. Unlabeled subjects are kept.
  Dataset filter_classes(const std::vector<std::string>& names) const;
  // Copy restricted to the given record indices, preserving their order.
  Dataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset read_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& data, std::ostream& out);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct SynthOptions {
  std::uint64_t seed = 7;
  std::size_t n_per_class = 50;
  std::array<std::size_t, kRelationCount> dims = {5, 8, 20};
  double separation = 3.0;
  // Standard deviation of the latent within-class noise.
  double noise = 1.0;
  // Multiplies `separation` per relation; zero removes class signal from that relation.
  std::array<double, kRelationCount> relation_signal = {1.0, 1.0, 1.0};
};

// Three-class synthetic cohort. Per relation the class means sit `separation`
// apart along a random unit direction of a latent Gaussian space; observed
// marginals are log-normal (RF), Student-t with 5 dof (COG) and skewed
// Beta(2, 5) noise (MRI). Records are ordered with labels cycling CN, MCI, AD.
Dataset synth_generate(const SynthOptions& options);

}  // namespace mrcgat
