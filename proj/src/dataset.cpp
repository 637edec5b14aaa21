#include "mrcgat/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "mrcgat/errors.hpp"
#include "mrcgat/rng.hpp"

namespace mrcgat {

ModalityPartition ModalityPartition::from_dims(std::size_t d_rf, std::size_t d_cog, std::size_t d_mri) {
  ModalityPartition p;
  p.ranges[0] = {0, d_rf};
  p.ranges[1] = {d_rf, d_rf + d_cog};
  p.ranges[2] = {d_rf + d_cog, d_rf + d_cog + d_mri};
  return p;
}

std::size_t ModalityPartition::feature_count() const {
  std::size_t total = 0;
  for (const auto& r : ranges) total += r.size();
  return total;
}

void ModalityPartition::validate() const {
  std::vector<ColumnRange> sorted(ranges.begin(), ranges.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
  std::size_t cursor = 0;
  for (const auto& r : sorted) {
    if (r.end <= r.begin) throw SchemaError("modality partition has an empty relation");
    if (r.begin != cursor) throw SchemaError("modality partition ranges do not tile the feature columns");
    cursor = r.end;
  }
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> out(class_count());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].label) out[*records[i].label].push_back(i);
  return out;
}

Dataset Dataset::filter_classes(const std::vector<std::string>& names) const {
  std::vector<std::optional<std::size_t>> remap(class_count());
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto it = std::find(class_names.begin(), class_names.end(), names[k]);
    if (it == class_names.end()) throw ConfigError("unknown class '" + names[k] + "'");
    remap[static_cast<std::size_t>(it - class_names.begin())] = k;
  }
  Dataset out;
  out.partition = partition;
  out.class_names = names;
  out.feature_names = feature_names;
  for (const auto& r : records) {
    if (r.label && !remap[*r.label]) continue;
    SubjectRecord copy = r;
    if (copy.label) copy.label = remap[*copy.label];
    out.records.push_back(std::move(copy));
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.partition = partition;
  out.class_names = class_names;
  out.feature_names = feature_names;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(records.at(i));
  return out;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

std::optional<double> parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty CSV input");
  std::vector<std::string> header = split_commas(line);
  for (auto& h : header) h = trim(h);
  if (!header.empty() && starts_with(header[0], "\xEF\xBB\xBF")) header[0] = header[0].substr(3);
  if (header.size() < 2 || header[0] != "subject_id" || header[1] != "label")
    throw SchemaError("CSV header must start with 'subject_id,label'");

  Dataset data;
  data.class_names.assign(kDiagnosisNames.begin(), kDiagnosisNames.end());
  const std::size_t feature_count = header.size() - 2;
  data.feature_names.assign(header.begin() + 2, header.end());

  std::array<bool, kRelationCount> seen{};
  std::array<bool, kRelationCount> closed{};
  std::optional<std::size_t> current;
  for (std::size_t c = 0; c < feature_count; ++c) {
    const std::string& name = data.feature_names[c];
    std::optional<std::size_t> rel;
    for (std::size_t g = 0; g < kRelationCount; ++g)
      if (starts_with(name, kRelationPrefixes[g])) rel = g;
    if (!rel) throw SchemaError("column '" + name + "' has no rf_/cog_/mri_ prefix");
    if (current != rel) {
      if (current) closed[*current] = true;
      if (closed[*rel]) throw SchemaError(std::string("columns with prefix '") + kRelationPrefixes[*rel] +
                                          "' are not contiguous");
      data.partition.ranges[*rel].begin = c;
      current = rel;
    }
    seen[*rel] = true;
    data.partition.ranges[*rel].end = c + 1;
  }
  for (std::size_t g = 0; g < kRelationCount; ++g)
    if (!seen[g]) throw SchemaError(std::string("missing feature columns with prefix '") + kRelationPrefixes[g] + "'");
  data.partition.validate();

  std::set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_commas(line);
    if (cells.size() != header.size())
      throw RowError(line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()));
    SubjectRecord rec;
    rec.subject_id = trim(cells[0]);
    if (rec.subject_id.empty()) throw RowError(line_no, "empty subject_id");
    if (!ids.insert(rec.subject_id).second) throw SchemaError("duplicate subject_id '" + rec.subject_id + "'");
    const std::string label = trim(cells[1]);
    if (!label.empty()) {
      auto it = std::find(data.class_names.begin(), data.class_names.end(), label);
      if (it == data.class_names.end()) throw RowError(line_no, "unknown label '" + label + "'");
      rec.label = static_cast<std::size_t>(it - data.class_names.begin());
    }
    rec.features.resize(feature_count);
    for (std::size_t c = 0; c < feature_count; ++c) {
      const std::string cell = trim(cells[c + 2]);
      auto v = parse_double(cell);
      if (!v || !std::isfinite(*v))
        throw RowError(line_no, "non-numeric value '" + cell + "' in column '" + data.feature_names[c] + "'");
      rec.features[c] = *v;
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  return read_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "subject_id,label";
  for (const auto& name : data.feature_names) out << ',' << name;
  out << '\n';
  for (const auto& r : data.records) {
    out << r.subject_id << ',';
    if (r.label) out << data.class_names.at(*r.label);
    for (double v : r.features) out << ',' << format_double(v);
    out << '\n';
  }
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  write_csv(data, out);
}

namespace {

// Beta(2, 5) via the gamma-ratio construction with integer shapes.
double beta_2_5(RngStream& rng) {
  double g2 = 0.0;
  for (int i = 0; i < 2; ++i) g2 -= std::log(rng.uniform_open());
  double g5 = 0.0;
  for (int i = 0; i < 5; ++i) g5 -= std::log(rng.uniform_open());
  return g2 / (g2 + g5);
}

double student_t5(RngStream& rng) {
  const double z = rng.normal();
  double chi2 = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double n = rng.normal();
    chi2 += n * n;
  }
  return z / std::sqrt(chi2 / 5.0);
}

}  // namespace

Dataset synth_generate(const SynthOptions& options) {
  if (options.n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  for (std::size_t d : options.dims)
    if (d < 1) throw ConfigError("every relation needs at least one feature");
  if (!(options.separation >= 0.0)) throw ConfigError("separation must be >= 0");
  if (!(options.noise > 0.0)) throw ConfigError("noise must be > 0");
  Dataset data;
  data.class_names.assign(kDiagnosisNames.begin(), kDiagnosisNames.end());
  data.partition = ModalityPartition::from_dims(options.dims[0], options.dims[1], options.dims[2]);
  for (std::size_t g = 0; g < kRelationCount; ++g)
    for (std::size_t c = 0; c < options.dims[g]; ++c)
      data.feature_names.push_back(kRelationPrefixes[g] + std::to_string(c + 1));

  std::array<std::vector<double>, kRelationCount> direction;
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    RngStream rng(options.seed, stream_id(StreamPurpose::kSynth, 0, g));
    double norm = 0.0;
    direction[g].resize(options.dims[g]);
    for (double& v : direction[g]) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : direction[g]) v /= norm;
  }

  // Standardization constants for the noise distributions.
  const double t5_scale = std::sqrt(3.0 / 5.0);
  const double beta_mean = 2.0 / 7.0;
  const double beta_sd = std::sqrt(2.0 * 5.0 / (49.0 * 8.0));

  const std::size_t classes = data.class_names.size();
  const std::size_t total = options.n_per_class * classes;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i % classes;
    const double shift = (static_cast<double>(label) - 1.0) * options.separation;
    RngStream rng(options.seed, stream_id(StreamPurpose::kSynth, 1, i));
    SubjectRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "S%05zu", i + 1);
    rec.subject_id = id;
    rec.label = label;
    for (std::size_t g = 0; g < kRelationCount; ++g) {
      for (std::size_t c = 0; c < options.dims[g]; ++c) {
        const double mean = shift * options.relation_signal[g] * direction[g][c];
        double x = 0.0;
        switch (g) {
          case 0:
            x = std::exp(0.3 * (mean + options.noise * rng.normal()));
            break;
          case 1:
            x = 20.0 + 2.0 * (mean + options.noise * t5_scale * student_t5(rng));
            break;
          default:
            x = 1.0 + 0.5 * (mean + options.noise * (beta_2_5(rng) - beta_mean) / beta_sd);
            break;
        }
        rec.features.push_back(x);
      }
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

}  // namespace mrcgat
