#include "dsaqc/suitability.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "dsaqc/csv.hpp"
#include "dsaqc/errors.hpp"
#include "json.hpp"

namespace dsaqc {

namespace {

struct Rule {
  const char* name;
  std::string_view label;
  std::vector<std::string_view> classes;
  bool RuleSet::*enabled;
};

const std::vector<Rule>& rules_table() {
  static const std::vector<Rule> table = {
      {"neuro_imaging", label::kNeuroImaging, {"Not Neuro"}, &RuleSet::neuro_imaging},
      {"skull_visibility", label::kSkullVisibility, {"Neck"}, &RuleSet::skull_visibility},
      {"contrast_fluid", label::kContrastFluid, {"Absent"}, &RuleSet::contrast_fluid},
      {"dsa", label::kDsa, {"Not DSA"}, &RuleSet::dsa},
      {"motion_artefact", label::kMotionArtefact, {"Mild", "Severe"}, &RuleSet::motion_artefact},
  };
  return table;
}

bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "1" || s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "0" || s == "false" || s == "False" || s == "FALSE") return false;
  throw MalformedInputError(where + ": expected a boolean, got '" + s + "'");
}

}  // namespace

SuitabilityDecision assess_classes(const std::string& image_id, const std::map<std::string, int>& classes,
                                   const RuleSet& rules) {
  const Taxonomy& tax = builtin_taxonomy();
  SuitabilityDecision d;
  d.image_id = image_id;
  for (const auto& rule : rules_table()) {
    if (!(rules.*rule.enabled)) continue;
    const auto it = classes.find(std::string(rule.label));
    if (it == classes.end()) {
      throw ValidationError("image '" + image_id + "' lacks a prediction for '" + std::string(rule.label) + "'");
    }
    const LabelDefinition& def = find_label(tax, rule.label);
    for (auto cls : rule.classes) {
      if (def.index_of(cls) == it->second) {
        d.triggered_rules.emplace_back(rule.name);
        break;
      }
    }
  }
  d.suitable = d.triggered_rules.empty();
  return d;
}

SuitabilityDecision assess(const PredictionRecord& record, const RuleSet& rules) {
  std::map<std::string, int> classes;
  for (const auto& [name, pred] : record.labels) classes[name] = pred.predicted;
  return assess_classes(record.image_id, classes, rules);
}

ZTest two_proportion_z_test(long k1, long n1, long k2, long n2) {
  if (n1 < 1 || n2 < 1 || k1 < 0 || k2 < 0 || k1 > n1 || k2 > n2) {
    throw ValidationError("z-test counts must satisfy 0 <= k <= n and n >= 1");
  }
  ZTest t;
  t.pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  if (t.pooled <= 0.0 || t.pooled >= 1.0) {
    throw DegenerateDataError("pooled proportion is " + std::to_string(t.pooled) + "; z is undefined");
  }
  const double p1 = static_cast<double>(k1) / n1, p2 = static_cast<double>(k2) / n2;
  const double se = std::sqrt(t.pooled * (1.0 - t.pooled) * (1.0 / n1 + 1.0 / n2));
  t.z = (p2 - p1) / se;
  t.p_two_sided = std::erfc(std::fabs(t.z) / std::sqrt(2.0));
  return t;
}

DownstreamReport downstream_from_counts(const metrics::BinaryConfusion& counts) {
  DownstreamReport r;
  r.confusion = counts;
  const long n = counts.total();
  if (n < 1) throw DegenerateDataError("no images to evaluate");
  r.sensitivity = counts.sensitivity();
  r.specificity = counts.specificity();
  if (!r.sensitivity) r.warnings.push_back("sensitivity undefined: no successful segmentations");
  if (!r.specificity) r.warnings.push_back("specificity undefined: no failed segmentations");
  r.unfiltered_rate = static_cast<double>(counts.tp + counts.fn) / n;
  const long included = counts.tp + counts.fp;
  if (included > 0) {
    r.filtered_rate = static_cast<double>(counts.tp) / included;
    try {
      r.z_test = two_proportion_z_test(counts.tp + counts.fn, n, counts.tp, included);
    } catch (const DegenerateDataError& e) {
      r.warnings.push_back(std::string("z-test undefined: ") + e.what());
    }
  } else {
    r.warnings.push_back("filtered rate undefined: every image was excluded");
  }
  return r;
}

DownstreamReport evaluate_filter(const std::vector<SuitabilityDecision>& decisions,
                                 const std::vector<DownstreamOutcome>& outcomes) {
  std::map<std::string, bool> success;
  for (const auto& o : outcomes) {
    if (!success.emplace(o.image_id, o.success).second) {
      throw ValidationError("duplicate outcome for image '" + o.image_id + "'");
    }
  }
  std::set<std::string> seen;
  std::vector<std::string> missing_outcome;
  metrics::BinaryConfusion c;
  for (const auto& d : decisions) {
    if (!seen.insert(d.image_id).second) throw ValidationError("duplicate decision for image '" + d.image_id + "'");
    const auto it = success.find(d.image_id);
    if (it == success.end()) {
      missing_outcome.push_back(d.image_id);
      continue;
    }
    if (d.suitable) {
      (it->second ? c.tp : c.fp)++;
    } else {
      (it->second ? c.fn : c.tn)++;
    }
  }
  std::vector<std::string> missing_decision;
  for (const auto& [id, _] : success) {
    if (!seen.count(id)) missing_decision.push_back(id);
  }
  if (!missing_outcome.empty() || !missing_decision.empty()) {
    std::string msg = "decisions and outcomes cover different images;";
    auto list = [&msg](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
    };
    list("no outcome for", missing_outcome);
    list("no decision for", missing_decision);
    throw ValidationError(msg);
  }
  return downstream_from_counts(c);
}

std::vector<DownstreamOutcome> read_outcomes(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t id = t.require("image_id", path.string()), ok = t.require("success", path.string());
  std::vector<DownstreamOutcome> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out.push_back({t.rows[i][id], parse_bool(t.rows[i][ok], path.string() + ":" + std::to_string(i + 2))});
  }
  return out;
}

void write_outcomes(const std::filesystem::path& path, const std::vector<DownstreamOutcome>& outcomes) {
  csv::Table t;
  t.header = {"image_id", "success"};
  for (const auto& o : outcomes) t.rows.push_back({o.image_id, o.success ? "1" : "0"});
  csv::write(path, t);
}

std::vector<SuitabilityDecision> read_decisions(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t id = t.require("image_id", path.string()), ok = t.require("suitable", path.string()),
                    rules = t.require("triggered_rules", path.string());
  std::vector<SuitabilityDecision> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    SuitabilityDecision d;
    d.image_id = t.rows[i][id];
    d.suitable = parse_bool(t.rows[i][ok], path.string() + ":" + std::to_string(i + 2));
    const std::string& r = t.rows[i][rules];
    std::size_t start = 0;
    while (start < r.size()) {
      const std::size_t end = r.find(';', start);
      const std::string part = r.substr(start, end == std::string::npos ? std::string::npos : end - start);
      if (!part.empty()) d.triggered_rules.push_back(part);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (d.suitable != d.triggered_rules.empty()) {
      throw MalformedInputError(path.string() + ":" + std::to_string(i + 2) +
                                ": suitable must be 1 exactly when no rule is listed");
    }
    out.push_back(std::move(d));
  }
  return out;
}

void write_decisions(const std::filesystem::path& path, const std::vector<SuitabilityDecision>& decisions) {
  csv::Table t;
  t.header = {"image_id", "suitable", "triggered_rules"};
  for (const auto& d : decisions) {
    std::string rules;
    for (std::size_t i = 0; i < d.triggered_rules.size(); ++i) rules += (i ? ";" : "") + d.triggered_rules[i];
    t.rows.push_back({d.image_id, d.suitable ? "1" : "0", rules});
  }
  csv::write(path, t);
}

std::string to_json(const DownstreamReport& r) {
  nlohmann::ordered_json j;
  j["tp"] = r.confusion.tp;
  j["fp"] = r.confusion.fp;
  j["fn"] = r.confusion.fn;
  j["tn"] = r.confusion.tn;
  j["n"] = r.confusion.total();
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["sensitivity"] = opt(r.sensitivity);
  j["specificity"] = opt(r.specificity);
  j["unfiltered_success_rate"] = r.unfiltered_rate;
  j["filtered_success_rate"] = opt(r.filtered_rate);
  if (r.z_test) {
    j["z_test"] = {{"z", r.z_test->z},
                   {"p_two_sided", r.z_test->p_two_sided},
                   {"pooled_proportion", r.z_test->pooled},
                   {"samples", "overlapping: filtered set is a subset of the full set"}};
  } else {
    j["z_test"] = nullptr;
  }
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string render_confusion_table(const DownstreamReport& r) {
  const auto& c = r.confusion;
  auto fmt = [](const std::optional<double>& v) {
    char b[32];
    if (!v) return std::string("undefined");
    std::snprintf(b, sizeof b, "%.2f", *v);
    return std::string(b);
  };
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "%-10s %10s %10s %8s\n"
                "%-10s %10ld %10ld %8ld\n"
                "%-10s %10ld %10ld %8ld\n"
                "%-10s %10ld %10ld %8ld\n",
                "", "Success", "Failure", "Total", "Included", c.tp, c.fp, c.tp + c.fp, "Excluded", c.fn, c.tn,
                c.fn + c.tn, "Total", c.tp + c.fn, c.fp + c.tn, c.total());
  std::string out = buf;
  out += "Sensitivity = " + fmt(r.sensitivity) + " & Specificity = " + fmt(r.specificity) + "\n";
  std::snprintf(buf, sizeof buf, "Success rate: unfiltered %.1f%%", 100.0 * r.unfiltered_rate);
  out += buf;
  if (r.filtered_rate) {
    std::snprintf(buf, sizeof buf, ", filtered %.1f%%", 100.0 * *r.filtered_rate);
    out += buf;
  }
  out += "\n";
  if (r.z_test) {
    std::snprintf(buf, sizeof buf, "Two-proportion z-test (overlapping samples): z = %.3f, p = %.3g%s\n", r.z_test->z,
                  r.z_test->p_two_sided, r.z_test->p_two_sided < 0.001 ? " (p < 0.001)" : "");
    out += buf;
  }
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace dsaqc
