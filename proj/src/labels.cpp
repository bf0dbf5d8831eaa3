#include "dsaqc/labels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "dsaqc/csv.hpp"
#include "dsaqc/errors.hpp"

namespace dsaqc {

std::optional<int> LabelDefinition::index_of(std::string_view class_name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == class_name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string LabelDefinition::slug() const {
  std::string out;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

const Taxonomy& builtin_taxonomy() {
  static const Taxonomy taxonomy = {
      {std::string(label::kNeuroImaging), {"Not Neuro", "Neuro"}},
      {std::string(label::kSkullVisibility), {"Neck", "Full", "Partial"}},
      {std::string(label::kProjection), {"AP view", "Oblique", "Left Lat.", "Right Lat."}},
      {std::string(label::kContrastFluid), {"Absent", "Present"}},
      {std::string(label::kDsa), {"Not DSA", "DSA"}},
      {std::string(label::kMotionArtefact), {"None", "Mild", "Severe"}},
      {std::string(label::kHemisphere), {"Indeterm.", "Left Hemi", "Right Hemi"}},
      {std::string(label::kIcaTopVisible), {"Not visible", "Visible"}},
      {std::string(label::kMcaVisible), {"Not visible", "Visible"}},
  };
  return taxonomy;
}

const LabelDefinition& find_label(const Taxonomy& taxonomy, std::string_view name) {
  for (const auto& def : taxonomy) {
    if (def.name == name) return def;
  }
  throw SchemaError("unknown label '" + std::string(name) + "'");
}

std::uint64_t taxonomy_hash(const Taxonomy& taxonomy) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= 0xFF;
    h *= 1099511628211ull;
  };
  for (const auto& def : taxonomy) {
    mix(def.name);
    for (const auto& c : def.classes) mix(c);
  }
  return h;
}

namespace {

constexpr int kFixedColumns = 3;

int parse_class(const LabelDefinition& def, const std::string& cell, std::size_t row, const std::string& origin) {
  if (auto idx = def.index_of(cell)) return *idx;
  int value = 0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec == std::errc() && ptr == end && value >= 0 && value < def.class_count()) return value;
  throw ValidationError(origin + ": row " + std::to_string(row) + ", column '" + def.name +
                        "': invalid class '" + cell + "' (expected 0.." +
                        std::to_string(def.class_count() - 1) + " or a class name)");
}

std::vector<AnnotationRecord> from_table(const csv::Table& t, const Taxonomy& taxonomy, const std::string& origin) {
  const std::array<std::string, kFixedColumns> fixed = {"image_id", "patient_id", "rater_id"};
  for (int i = 0; i < kFixedColumns; ++i) {
    if (static_cast<int>(t.header.size()) <= i || t.header[i] != fixed[i]) {
      throw SchemaError(origin + ": header must start with image_id,patient_id,rater_id");
    }
  }
  std::vector<const LabelDefinition*> columns;
  std::set<std::string> seen;
  for (std::size_t c = kFixedColumns; c < t.header.size(); ++c) {
    const auto it = std::find_if(taxonomy.begin(), taxonomy.end(),
                                 [&](const LabelDefinition& d) { return d.name == t.header[c]; });
    if (it == taxonomy.end()) throw SchemaError(origin + ": unknown label column '" + t.header[c] + "'");
    if (!seen.insert(it->name).second) throw SchemaError(origin + ": duplicate label column '" + it->name + "'");
    columns.push_back(&*it);
  }
  std::vector<AnnotationRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    AnnotationRecord rec{row[0], row[1], row[2], {}};
    if (rec.image_id.empty()) throw ValidationError(origin + ": row " + std::to_string(r + 1) + " has an empty image_id");
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& cell = row[c + kFixedColumns];
      if (cell.empty()) continue;
      rec.values[columns[c]->name] = parse_class(*columns[c], cell, r + 1, origin);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<AnnotationRecord> parse_annotations(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  return from_table(csv::read(path), taxonomy, path.string());
}

std::vector<AnnotationRecord> parse_annotations_text(std::string_view text, const Taxonomy& taxonomy,
                                                     const std::string& origin) {
  return from_table(csv::parse(text, origin), taxonomy, origin);
}

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records,
                       const Taxonomy& taxonomy) {
  csv::Table t;
  t.header = {"image_id", "patient_id", "rater_id"};
  for (const auto& def : taxonomy) t.header.push_back(def.name);
  for (const auto& rec : records) {
    csv::Row row = {rec.image_id, rec.patient_id, rec.rater_id};
    for (const auto& def : taxonomy) {
      auto it = rec.values.find(def.name);
      row.push_back(it == rec.values.end() ? std::string() : def.classes.at(it->second));
    }
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

std::vector<std::string> SplitAssignment::images_in(Split s) const {
  std::vector<std::string> out;
  for (const auto& [id, split] : by_image) {
    if (split == s) out.push_back(id);
  }
  return out;
}

namespace {

// One record per image; the first occurrence wins.
std::vector<const AnnotationRecord*> unique_images(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, const AnnotationRecord*> first;
  std::vector<const AnnotationRecord*> out;
  for (const auto& r : records) {
    auto [it, inserted] = first.emplace(r.image_id, &r);
    if (inserted) {
      out.push_back(&r);
    } else if (it->second->patient_id != r.patient_id) {
      throw ValidationError("image '" + r.image_id + "' is attributed to patients '" + it->second->patient_id +
                            "' and '" + r.patient_id + "'");
    }
  }
  return out;
}

double imbalance_of(const std::vector<const AnnotationRecord*>& images, const Taxonomy& taxonomy,
                    const std::vector<int>& split_of_image) {
  double total = 0.0;
  for (const auto& def : taxonomy) {
    const int k = def.class_count();
    std::vector<double> global(k, 0.0);
    std::array<std::vector<double>, 3> per_split;
    for (auto& v : per_split) v.assign(k, 0.0);
    for (std::size_t i = 0; i < images.size(); ++i) {
      auto it = images[i]->values.find(def.name);
      if (it == images[i]->values.end()) continue;
      global[it->second] += 1;
      per_split[split_of_image[i]][it->second] += 1;
    }
    double n_global = 0;
    for (double v : global) n_global += v;
    if (n_global == 0) continue;
    for (const auto& counts : per_split) {
      double n = 0;
      for (double v : counts) n += v;
      if (n == 0) continue;
      double tv = 0;
      for (int c = 0; c < k; ++c) tv += std::abs(counts[c] / n - global[c] / n_global);
      total += 0.5 * tv;
    }
  }
  return total;
}

}  // namespace

double split_imbalance(const std::vector<AnnotationRecord>& records, const Taxonomy& taxonomy,
                       const std::map<std::string, Split>& assignment) {
  const auto images = unique_images(records);
  std::vector<int> split_of(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto it = assignment.find(images[i]->image_id);
    if (it == assignment.end()) throw ValidationError("image '" + images[i]->image_id + "' has no split");
    split_of[i] = static_cast<int>(it->second);
  }
  return imbalance_of(images, taxonomy, split_of);
}

SplitAssignment stratified_patient_split(const std::vector<AnnotationRecord>& records, const Taxonomy& taxonomy,
                                         const SplitOptions& options) {
  const std::array<double, 3> frac = {options.fractions.train, options.fractions.validation,
                                      options.fractions.test};
  for (double f : frac) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("split fractions must lie in [0,1]");
  }
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  if (options.candidates < 1) throw ValidationError("split candidate count must be positive");

  const auto images = unique_images(records);
  std::vector<std::string> patients;
  std::map<std::string, int> patient_index;
  std::vector<int> patient_of(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto [it, inserted] = patient_index.emplace(images[i]->patient_id, 0);
    if (inserted) patients.push_back(images[i]->patient_id);
  }
  std::sort(patients.begin(), patients.end());
  for (std::size_t p = 0; p < patients.size(); ++p) patient_index[patients[p]] = static_cast<int>(p);
  std::vector<int> patient_size(patients.size(), 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    patient_of[i] = patient_index[images[i]->patient_id];
    patient_size[patient_of[i]]++;
  }
  const int active_splits = static_cast<int>(std::count_if(frac.begin(), frac.end(), [](double f) { return f > 0; }));
  if (static_cast<int>(patients.size()) < active_splits) {
    throw InfeasibleError("patient-level split needs at least " + std::to_string(active_splits) +
                          " patients, got " + std::to_string(patients.size()));
  }

  const double n_images = static_cast<double>(images.size());
  std::mt19937_64 rng(options.seed);
  std::vector<int> order(patients.size());
  std::vector<int> best_patient_split;
  double best_score = std::numeric_limits<double>::infinity();
  int accepted = 0;
  const int max_attempts = options.candidates * 50;
  for (int attempt = 0; attempt < max_attempts && accepted < options.candidates; ++attempt) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);
    std::array<double, 3> filled = {0, 0, 0};
    std::array<int, 3> members = {0, 0, 0};
    std::vector<int> patient_split(patients.size(), 0);
    for (int p : order) {
      int pick = -1;
      double best_deficit = -std::numeric_limits<double>::infinity();
      for (int s = 0; s < 3; ++s) {
        if (frac[s] <= 0) continue;
        // Empty splits are served first so every active split gets a patient.
        const double deficit = (members[s] == 0 ? n_images : 0.0) + frac[s] * n_images - filled[s];
        if (deficit > best_deficit) {
          best_deficit = deficit;
          pick = s;
        }
      }
      patient_split[p] = pick;
      filled[pick] += patient_size[p];
      members[pick]++;
    }
    bool ok = true;
    for (int s = 0; s < 3; ++s) {
      if (frac[s] > 0 && members[s] == 0) ok = false;
      if (std::abs(filled[s] / n_images - frac[s]) > options.fraction_tolerance + 1e-12) ok = false;
    }
    if (!ok) continue;
    ++accepted;
    std::vector<int> split_of(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) split_of[i] = patient_split[patient_of[i]];
    const double score = imbalance_of(images, taxonomy, split_of);
    if (score < best_score) {
      best_score = score;
      best_patient_split = patient_split;
    }
  }
  if (accepted == 0) {
    throw InfeasibleError("no patient partition meets the split fractions within " +
                          std::to_string(options.fraction_tolerance));
  }
  SplitAssignment out;
  out.seed = options.seed;
  out.imbalance = best_score;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.by_image[images[i]->image_id] = static_cast<Split>(best_patient_split[patient_of[i]]);
  }
  return out;
}

void write_split(const std::filesystem::path& path, const SplitAssignment& split) {
  csv::Table t;
  t.header = {"image_id", "split"};
  for (const auto& [id, s] : split.by_image) t.rows.push_back({id, std::string(to_string(s))});
  csv::write(path, t);
}

SplitAssignment read_split(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const int ci = t.column("image_id"), cs = t.column("split");
  if (ci < 0 || cs < 0) throw SchemaError(path.string() + ": header must be image_id,split");
  SplitAssignment out;
  for (const auto& row : t.rows) {
    if (!out.by_image.emplace(row[ci], split_from_string(row[cs])).second) {
      throw ValidationError(path.string() + ": image '" + row[ci] + "' listed twice");
    }
  }
  return out;
}

}  // namespace dsaqc
