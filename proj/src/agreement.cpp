#include "dsaqc/agreement.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "dsaqc/errors.hpp"
#include "json.hpp"

namespace dsaqc::agreement {

namespace {

Kappa finish(double observed, double expected) {
  Kappa k;
  k.observed = observed;
  k.expected = expected;
  if (expected >= 1.0) {
    k.degenerate = true;
    k.value = observed >= 1.0 ? 1.0 : 0.0;
  } else {
    k.value = (observed - expected) / (1.0 - expected);
  }
  return k;
}

}  // namespace

Kappa cohen_kappa(std::span<const int> a, std::span<const int> b, int class_count) {
  if (a.size() != b.size()) throw ValidationError("cohen_kappa: rating vectors differ in length");
  if (a.empty()) throw ValidationError("cohen_kappa: no ratings");
  if (class_count < 1) throw ValidationError("cohen_kappa: class count must be positive");
  std::vector<double> pa(class_count, 0.0), pb(class_count, 0.0);
  long agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= class_count || b[i] < 0 || b[i] >= class_count) {
      throw ValidationError("cohen_kappa: class index out of range at item " + std::to_string(i));
    }
    pa[a[i]] += 1;
    pb[b[i]] += 1;
    agree += a[i] == b[i];
  }
  const double n = static_cast<double>(a.size());
  double expected = 0.0;
  for (int k = 0; k < class_count; ++k) expected += (pa[k] / n) * (pb[k] / n);
  return finish(agree / n, expected);
}

Kappa fleiss_kappa(const std::vector<std::vector<int>>& counts, int n_raters) {
  if (n_raters < 2) throw ValidationError("fleiss_kappa: needs at least two raters");
  if (counts.empty()) throw ValidationError("fleiss_kappa: no items");
  const std::size_t K = counts.front().size();
  std::vector<double> category(K, 0.0);
  double p_bar = 0.0;
  const double n = n_raters;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != K) throw ValidationError("fleiss_kappa: row " + std::to_string(i) + " has wrong width");
    long sum = 0, sq = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[i][k] < 0) throw ValidationError("fleiss_kappa: negative count in row " + std::to_string(i));
      sum += counts[i][k];
      sq += static_cast<long>(counts[i][k]) * counts[i][k];
      category[k] += counts[i][k];
    }
    if (sum != n_raters) {
      throw ValidationError("fleiss_kappa: row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                            ", expected " + std::to_string(n_raters));
    }
    p_bar += (static_cast<double>(sq) - n) / (n * (n - 1));
  }
  const double N = static_cast<double>(counts.size());
  p_bar /= N;
  double p_e = 0.0;
  for (double c : category) {
    const double p = c / (N * n);
    p_e += p * p;
  }
  return finish(p_bar, p_e);
}

std::vector<std::vector<int>> RatingTable::category_counts() const {
  std::vector<std::vector<int>> out(items.size(), std::vector<int>(class_count, 0));
  for (const auto& rater : ratings) {
    for (std::size_t i = 0; i < items.size(); ++i) out[i][rater[i]]++;
  }
  return out;
}

std::vector<RatingTable> build_rating_tables(const std::vector<AnnotationRecord>& records, const Taxonomy& taxonomy) {
  std::set<std::string> rater_set;
  std::set<std::string> item_set;
  std::map<std::pair<std::string, std::string>, const AnnotationRecord*> by_key;
  for (const auto& r : records) {
    rater_set.insert(r.rater_id);
    item_set.insert(r.image_id);
    if (!by_key.emplace(std::make_pair(r.image_id, r.rater_id), &r).second) {
      throw ValidationError("rater '" + r.rater_id + "' rated image '" + r.image_id + "' more than once");
    }
  }
  const std::vector<std::string> raters(rater_set.begin(), rater_set.end());
  std::vector<RatingTable> out;
  for (const auto& def : taxonomy) {
    RatingTable t;
    t.label_name = def.name;
    t.class_count = def.class_count();
    t.raters = raters;
    t.ratings.assign(raters.size(), {});
    for (const auto& item : item_set) {
      std::vector<int> row;
      for (const auto& rater : raters) {
        auto it = by_key.find({item, rater});
        if (it == by_key.end()) break;
        auto v = it->second->values.find(def.name);
        if (v == it->second->values.end()) break;
        row.push_back(v->second);
      }
      if (row.size() != raters.size()) continue;
      t.items.push_back(item);
      for (std::size_t r = 0; r < raters.size(); ++r) t.ratings[r].push_back(row[r]);
    }
    out.push_back(std::move(t));
  }
  return out;
}

AgreementReport agreement_report(std::span<const RatingTable> tables, const std::string& reference_rater,
                                 double threshold) {
  AgreementReport report;
  report.reference_rater = reference_rater;
  report.threshold = threshold;
  for (const auto& t : tables) {
    const auto ref = std::find(t.raters.begin(), t.raters.end(), reference_rater);
    if (ref == t.raters.end()) throw ValidationError("unknown reference rater '" + reference_rater + "'");
    if (t.items.empty()) continue;
    const auto ref_index = static_cast<std::size_t>(ref - t.raters.begin());
    LabelAgreement la;
    la.label_name = t.label_name;
    la.items = t.items.size();
    for (std::size_t r = 0; r < t.raters.size(); ++r) {
      if (r == ref_index) continue;
      RaterAgreement ra;
      ra.rater_id = t.raters[r];
      ra.kappa = cohen_kappa(t.ratings[r], t.ratings[ref_index], t.class_count);
      ra.reliable = ra.kappa.value >= threshold;
      la.versus_reference.push_back(ra);
    }
    if (t.raters.size() >= 2) {
      la.fleiss = fleiss_kappa(t.category_counts(), static_cast<int>(t.raters.size()));
      la.fleiss_reliable = la.fleiss.value >= threshold;
    }
    report.labels.push_back(std::move(la));
  }
  return report;
}

std::string to_json(const AgreementReport& report) {
  nlohmann::ordered_json j;
  j["reference_rater"] = report.reference_rater;
  j["threshold"] = report.threshold;
  auto& labels = j["labels"] = nlohmann::ordered_json::array();
  for (const auto& la : report.labels) {
    nlohmann::ordered_json l;
    l["label"] = la.label_name;
    l["items"] = la.items;
    auto& raters = l["cohen_vs_reference"] = nlohmann::ordered_json::array();
    for (const auto& ra : la.versus_reference) {
      raters.push_back({{"rater", ra.rater_id},
                        {"kappa", ra.kappa.value},
                        {"reliable", ra.reliable},
                        {"degenerate", ra.kappa.degenerate}});
    }
    l["fleiss_kappa"] = la.fleiss.value;
    l["fleiss_reliable"] = la.fleiss_reliable;
    l["fleiss_degenerate"] = la.fleiss.degenerate;
    labels.push_back(std::move(l));
  }
  return j.dump(2) + "\n";
}

std::string render_text(const AgreementReport& report) {
  std::string out = "reference rater: " + report.reference_rater + "\n";
  char line[200];
  std::snprintf(line, sizeof line, "%-18s %6s %8s  %s\n", "Label", "Items", "Fleiss", "Cohen vs reference");
  out += line;
  for (const auto& la : report.labels) {
    std::string cohen;
    for (const auto& ra : la.versus_reference) {
      char cell[64];
      std::snprintf(cell, sizeof cell, "%s=%.3f%s ", ra.rater_id.c_str(), ra.kappa.value, ra.reliable ? "" : "*");
      cohen += cell;
    }
    std::snprintf(line, sizeof line, "%-18s %6zu %7.3f%s  %s\n", la.label_name.c_str(), la.items, la.fleiss.value,
                  la.fleiss_reliable ? " " : "*", cohen.c_str());
    out += line;
  }
  char foot[80];
  std::snprintf(foot, sizeof foot, "* below reliability threshold %.2f\n", report.threshold);
  return out + foot;
}

}  // namespace dsaqc::agreement
