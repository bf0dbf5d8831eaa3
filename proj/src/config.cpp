#include "dsaqc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dsaqc/errors.hpp"
#include "json.hpp"

namespace dsaqc {

using Json = nlohmann::ordered_json;

namespace {

using Handler = std::function<void(const Json&)>;

/// Raised by leaf setters; dispatch adds the key path.
struct TypeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void dispatch(const Json& obj, const std::string& where, const std::map<std::string, Handler>& handlers) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw SchemaError(where + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const Json::exception& e) {
      throw SchemaError(where + "." + key + ": " + e.what());
    } catch (const TypeMismatch& e) {
      throw SchemaError(where + "." + key + ": " + e.what());
    }
  }
}

template <typename T>
Handler set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

Handler set_u64(std::uint64_t& field) {
  return [&field](const Json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw TypeMismatch("expected a non-negative integer");
    }
    field = v.get<std::uint64_t>();
  };
}

Handler set_int(int& field) {
  return [&field](const Json& v) {
    if (!v.is_number_integer()) throw TypeMismatch("expected an integer, got " + v.dump());
    field = v.get<int>();
  };
}

Handler set_bool(bool& field) {
  return [&field](const Json& v) {
    if (!v.is_boolean()) throw TypeMismatch("expected a boolean, got " + v.dump());
    field = v.get<bool>();
  };
}

Handler set_real(double& field) {
  return [&field](const Json& v) {
    if (!v.is_number()) throw TypeMismatch("expected a number, got " + v.dump());
    field = v.get<double>();
  };
}

}  // namespace

void PipelineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  phantom.seed = s;
  split.seed = s;
  train.seed = s;
}

void PipelineConfig::validate() const {
  phantom.validate();
  train.validate();
  const auto& f = split.fractions;
  if (f.train <= 0 || f.validation <= 0 || f.test <= 0 || std::abs(f.train + f.validation + f.test - 1.0) > 1e-6) {
    throw ValidationError("split fractions must be positive and sum to 1");
  }
  if (split.candidates < 1) throw ValidationError("split.candidates must be >= 1");
  if (backbones.empty()) throw ValidationError("train.backbones must not be empty");
  for (int d : backbones) nn::depth_from_int(d);
  for (const auto& l : labels) find_label(builtin_taxonomy(), l);
  if (!(agreement_threshold >= -1.0 && agreement_threshold <= 1.0)) {
    throw ValidationError("agreement.threshold must lie in [-1, 1]");
  }
  if (!(overlay_alpha >= 0.0 && overlay_alpha <= 1.0)) throw ValidationError("explain.alpha must lie in [0, 1]");
  if (explain_max_images < 0) throw ValidationError("explain.max_images must be >= 0");
}

PipelineConfig parse_config(const std::string& json_text, const std::string& origin) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw MalformedInputError(origin + ": " + e.what());
  }
  PipelineConfig cfg;
  bool seed_given = false;
  std::uint64_t seed = 0;
  auto& ph = cfg.phantom;
  auto& tr = cfg.train;
  dispatch(root, origin,
           {{"seed",
             [&](const Json& v) {
               set_u64(seed)(v);
               seed_given = true;
             }},
            {"phantom",
             [&](const Json& v) {
               dispatch(v, origin + ".phantom",
                        {{"n_patients", set_int(ph.n_patients)},
                         {"images_per_patient_min", set_int(ph.images_per_patient_min)},
                         {"images_per_patient_max", set_int(ph.images_per_patient_max)},
                         {"image_side", set_int(ph.image_side)},
                         {"frames", set_int(ph.frames)},
                         {"noise_level", set_real(ph.noise_level)},
                         {"rating_subset", set_int(ph.rating_subset)},
                         {"flip_if_success", set_real(ph.segmentability.flip_if_success)},
                         {"flip_if_failure", set_real(ph.segmentability.flip_if_failure)},
                         {"priors",
                          [&](const Json& p) {
                            if (!p.is_object()) throw TypeMismatch("expected an object");
                            for (const auto& [label, probs] : p.items()) {
                              find_label(builtin_taxonomy(), label);
                              ph.priors[label] = probs.get<std::vector<double>>();
                            }
                          }},
                         {"rater_error", [&](const Json& p) {
                            ph.rater_error = p.get<std::map<std::string, double>>();
                          }}});
             }},
            {"split",
             [&](const Json& v) {
               dispatch(v, origin + ".split",
                        {{"train", set_real(cfg.split.fractions.train)},
                         {"validation", set_real(cfg.split.fractions.validation)},
                         {"test", set_real(cfg.split.fractions.test)},
                         {"candidates", set_int(cfg.split.candidates)},
                         {"fraction_tolerance", set_real(cfg.split.fraction_tolerance)}});
             }},
            {"train",
             [&](const Json& v) {
               dispatch(v, origin + ".train",
                        {{"epochs", set_int(tr.epochs)},
                         {"weight_decay", set_real(tr.weight_decay)},
                         {"dropout", set_real(tr.dropout)},
                         {"learning_rate", set_real(tr.learning_rate)},
                         {"batch_size", set_int(tr.batch_size)},
                         {"input_side", set_int(tr.input_side)},
                         {"pretrained", set_bool(tr.pretrained)},
                         {"checkpoint_dir",
                          [&](const Json& p) { tr.checkpoint_dir = p.get<std::string>(); }},
                         {"calibration_images", set_int(tr.calibration_images)},
                         {"weighted_validation_loss", set_bool(tr.weighted_validation_loss)},
                         {"backbones", set(cfg.backbones)},
                         {"labels", set(cfg.labels)}});
             }},
            {"filter",
             [&](const Json& v) {
               dispatch(v, origin + ".filter",
                        {{"neuro_imaging", set_bool(cfg.filter.neuro_imaging)},
                         {"skull_visibility", set_bool(cfg.filter.skull_visibility)},
                         {"contrast_fluid", set_bool(cfg.filter.contrast_fluid)},
                         {"dsa", set_bool(cfg.filter.dsa)},
                         {"motion_artefact", set_bool(cfg.filter.motion_artefact)}});
             }},
            {"agreement",
             [&](const Json& v) {
               dispatch(v, origin + ".agreement",
                        {{"reference_rater", set(cfg.reference_rater)},
                         {"threshold", set_real(cfg.agreement_threshold)}});
             }},
            {"explain", [&](const Json& v) {
               dispatch(v, origin + ".explain",
                        {{"alpha", set_real(cfg.overlay_alpha)}, {"max_images", set_int(cfg.explain_max_images)}});
             }}});
  if (seed_given) cfg.apply_seed(seed);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw NotFoundError("config not found", path.string());
    throw IoError("cannot read config", path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_json(const PipelineConfig& c) {
  Json j;
  j["seed"] = c.seed;
  const auto& ph = c.phantom;
  Json priors;
  for (const auto& def : builtin_taxonomy()) priors[def.name] = ph.priors.at(def.name);
  j["phantom"] = {{"n_patients", ph.n_patients},
                  {"images_per_patient_min", ph.images_per_patient_min},
                  {"images_per_patient_max", ph.images_per_patient_max},
                  {"image_side", ph.image_side},
                  {"frames", ph.frames},
                  {"noise_level", ph.noise_level},
                  {"rating_subset", ph.rating_subset},
                  {"flip_if_success", ph.segmentability.flip_if_success},
                  {"flip_if_failure", ph.segmentability.flip_if_failure},
                  {"priors", priors},
                  {"rater_error", ph.rater_error}};
  j["split"] = {{"train", c.split.fractions.train},
                {"validation", c.split.fractions.validation},
                {"test", c.split.fractions.test},
                {"candidates", c.split.candidates},
                {"fraction_tolerance", c.split.fraction_tolerance}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"weight_decay", t.weight_decay},
                {"dropout", t.dropout},
                {"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"input_side", t.input_side},
                {"pretrained", t.pretrained},
                {"checkpoint_dir", t.checkpoint_dir.string()},
                {"calibration_images", t.calibration_images},
                {"weighted_validation_loss", t.weighted_validation_loss},
                {"backbones", c.backbones},
                {"labels", c.labels}};
  j["filter"] = {{"neuro_imaging", c.filter.neuro_imaging},
                 {"skull_visibility", c.filter.skull_visibility},
                 {"contrast_fluid", c.filter.contrast_fluid},
                 {"dsa", c.filter.dsa},
                 {"motion_artefact", c.filter.motion_artefact}};
  j["agreement"] = {{"reference_rater", c.reference_rater}, {"threshold", c.agreement_threshold}};
  j["explain"] = {{"alpha", c.overlay_alpha}, {"max_images", c.explain_max_images}};
  return j.dump(2) + "\n";
}

void echo_config(const PipelineConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = dir / "config.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config", path.string());
  out << to_json(config);
}

}  // namespace dsaqc
