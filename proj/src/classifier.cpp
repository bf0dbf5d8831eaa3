#include "dsaqc/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "dsaqc/checkpoint.hpp"
#include "dsaqc/csv.hpp"
#include "dsaqc/errors.hpp"
#include "dsaqc/nn/optim.hpp"

namespace dsaqc {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0,1)");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
  if (batch_size < 2) throw ValidationError("batch size must be at least 2");
  if (input_side < 32) throw ValidationError("input side must be at least 32 pixels");
  if (calibration_images < 2) throw ValidationError("calibration needs at least 2 images");
}

std::vector<double> class_weights(std::span<const int> class_counts) {
  if (class_counts.empty()) throw ValidationError("class_weights: no classes");
  double total = 0.0;
  for (std::size_t k = 0; k < class_counts.size(); ++k) {
    if (class_counts[k] < 1) {
      throw DegenerateDataError("class " + std::to_string(k) +
                                " has no examples; drop the class or merge records before weighting");
    }
    total += class_counts[k];
  }
  const double K = static_cast<double>(class_counts.size());
  std::vector<double> w(class_counts.size());
  for (std::size_t k = 0; k < class_counts.size(); ++k) w[k] = total / (K * class_counts[k]);
  return w;
}

LabelModel build_model(BackboneDepth variant, int class_count, double dropout, bool pretrained, std::uint64_t seed,
                       const std::filesystem::path& checkpoint_dir) {
  if (class_count < 2) throw ValidationError("class_count must be at least 2");
  LabelModel m;
  m.variant = variant;
  m.network = std::make_unique<nn::ResNet>(variant, class_count, static_cast<float>(dropout), seed);
  if (pretrained) {
    const auto path = checkpoint::registry_path(checkpoint_dir, variant);
    if (checkpoint_dir.empty() || !std::filesystem::exists(path)) {
      throw NotFoundError("pretrained " + nn::depth_name(variant) + " weights unavailable", path.string());
    }
    checkpoint::load_backbone_weights(path, *m.network);
  }
  return m;
}

void require_normalized(const MinIPImage& image) {
  for (double v : image.image.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("image '" + image.image_id + "' is not normalized to [0,1]");
    }
  }
}

nn::Tensor to_network_input(std::span<const Image2D* const> images, int side) {
  static constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
  static constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};
  nn::Tensor t(static_cast<int>(images.size()), side, side, 3);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image2D resized = resize_bilinear(*images[n], side, side);
    float* out = t.ptr() + n * static_cast<std::size_t>(side) * side * 3;
    for (std::size_t i = 0; i < resized.pixels.size(); ++i) {
      const auto v = static_cast<float>(resized.pixels[i]);
      for (int c = 0; c < 3; ++c) out[3 * i + c] = (v - kMean[c]) / kStd[c];
    }
  }
  return t;
}

namespace {

nn::Tensor prefix_features(const nn::ResNet& net, std::span<const LabeledImage> set, int side, int chunk) {
  std::vector<nn::Tensor> parts;
  for (std::size_t first = 0; first < set.size(); first += chunk) {
    const std::size_t last = std::min(set.size(), first + chunk);
    std::vector<const Image2D*> imgs;
    for (std::size_t i = first; i < last; ++i) imgs.push_back(&set[i].image->image);
    parts.push_back(net.infer_prefix(to_network_input(imgs, side)));
  }
  std::vector<const nn::Tensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return nn::concat_batch(ptrs);
}

nn::Tensor gather(const nn::Tensor& all, std::span<const int> rows) {
  nn::Tensor out(static_cast<int>(rows.size()), all.h, all.w, all.c);
  const std::size_t per = static_cast<std::size_t>(all.h) * all.w * all.c;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(all.data.begin() + per * rows[i], per, out.data.begin() + per * i);
  }
  return out;
}

double evaluate_loss(const nn::ResNet& net, const nn::Tensor& features, const std::vector<int>& targets,
                     const std::vector<double>& weights, int chunk) {
  // Weighted mean over chunks has to be recombined by total weight.
  double weighted_sum = 0.0, weight_total = 0.0;
  for (int first = 0; first < features.n; first += chunk) {
    const int count = std::min(chunk, features.n - first);
    const nn::Tensor logits = net.infer_head(net.infer_tail(features.slice(first, count)));
    std::vector<int> t(targets.begin() + first, targets.begin() + first + count);
    double wsum = 0.0;
    for (int y : t) wsum += weights.empty() ? 1.0 : weights[y];
    weighted_sum += nn::softmax_cross_entropy(logits, t, weights).loss * wsum;
    weight_total += wsum;
  }
  return weighted_sum / weight_total;
}

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<std::vector<float>> buffers;
};

Snapshot take_snapshot(nn::ResNet& net) {
  Snapshot s;
  for (nn::Parameter* p : net.trainable_parameters()) s.params.push_back(p->value);
  for (const nn::Buffer& b : net.buffers()) s.buffers.push_back(*b.values);
  return s;
}

void restore(nn::ResNet& net, const Snapshot& s) {
  auto params = net.trainable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  auto buffers = net.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].values = s.buffers[i];
}

}  // namespace

TrainedLabelModel train_label_model(std::span<const LabeledImage> train_set, std::span<const LabeledImage> val_set,
                                    const LabelDefinition& label, BackboneDepth variant, const TrainConfig& config) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw DegenerateDataError("label '" + label.name + "': training and validation sets must be non-empty");
  }
  const int K = label.class_count();
  std::vector<int> counts(K, 0);
  for (const auto& ex : train_set) {
    if (ex.target < 0 || ex.target >= K) throw ValidationError("label '" + label.name + "': target out of range");
    require_normalized(*ex.image);
    counts[ex.target]++;
  }
  for (const auto& ex : val_set) {
    if (ex.target < 0 || ex.target >= K) throw ValidationError("label '" + label.name + "': target out of range");
    require_normalized(*ex.image);
  }
  const int present = static_cast<int>(std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
  if (present < 2) {
    throw DegenerateDataError("label '" + label.name + "': training set contains a single class");
  }
  // Classes missing from the training set never occur as targets; weight the rest.
  std::vector<int> present_counts;
  for (int c : counts) {
    if (c > 0) present_counts.push_back(c);
  }
  const std::vector<double> present_w = class_weights(present_counts);
  std::vector<double> weights(K, 0.0);
  for (int k = 0, j = 0; k < K; ++k) {
    if (counts[k] > 0) weights[k] = present_w[j++];
  }

  LabelModel built = build_model(variant, K, config.dropout, config.pretrained, config.seed, config.checkpoint_dir);
  nn::ResNet& net = *built.network;
  const int chunk = std::max(config.batch_size, 16);
  if (!config.pretrained) {
    const std::size_t n_cal = std::min<std::size_t>(train_set.size(), config.calibration_images);
    std::vector<const Image2D*> cal;
    for (std::size_t i = 0; i < n_cal; ++i) cal.push_back(&train_set[i].image->image);
    net.calibrate_statistics(to_network_input(cal, config.input_side));
  }

  const nn::Tensor train_features = prefix_features(net, train_set, config.input_side, chunk);
  const nn::Tensor val_features = prefix_features(net, val_set, config.input_side, chunk);
  std::vector<int> train_targets, val_targets;
  for (const auto& ex : train_set) train_targets.push_back(ex.target);
  for (const auto& ex : val_set) val_targets.push_back(ex.target);
  const std::vector<double> val_weights = config.weighted_validation_loss ? weights : std::vector<double>{};

  nn::AdamWOptions opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  nn::AdamW optimizer(net.trainable_parameters(), opt);
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);

  TrainedLabelModel out;
  out.label_name = label.name;
  out.variant = variant;
  out.class_count = K;
  out.input_side = config.input_side;
  out.taxonomy_hash = taxonomy_hash(builtin_taxonomy());
  out.best_validation_loss = std::numeric_limits<double>::infinity();
  Snapshot best;

  const int n = static_cast<int>(train_set.size());
  std::vector<int> order(n);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int first = 0;
    while (first < n) {
      int count = std::min(config.batch_size, n - first);
      // A trailing single example would leave batch statistics undefined.
      if (n - first - count == 1) ++count;
      std::span<const int> rows(order.data() + first, count);
      std::vector<int> targets;
      for (int r : rows) targets.push_back(train_targets[r]);
      optimizer.zero_grad();
      const nn::Tensor logits = net.forward_tail(gather(train_features, rows), rng);
      const nn::LossResult loss = nn::softmax_cross_entropy(logits, targets, weights);
      net.backward_tail(loss.grad);
      optimizer.step();
      loss_sum += loss.loss * count;
      first += count;
    }
    EpochLoss e;
    e.epoch = epoch;
    e.train_loss = loss_sum / n;
    e.validation_loss = evaluate_loss(net, val_features, val_targets, val_weights, chunk);
    out.history.push_back(e);
    if (e.validation_loss < out.best_validation_loss) {
      out.best_validation_loss = e.validation_loss;
      out.best_epoch = epoch;
      best = take_snapshot(net);
    }
  }
  restore(net, best);
  out.network = std::shared_ptr<nn::ResNet>(std::move(built.network));
  return out;
}

TrainedLabelModel select_best(std::span<const TrainedLabelModel> candidates) {
  if (candidates.empty()) throw ValidationError("select_best: no candidates");
  const TrainedLabelModel* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.label_name != best->label_name) {
      throw ValidationError("select_best: candidates for different labels ('" + c.label_name + "', '" +
                            best->label_name + "')");
    }
    const bool lower = c.best_validation_loss < best->best_validation_loss;
    const bool tie_shallower = c.best_validation_loss == best->best_validation_loss &&
                               static_cast<int>(c.variant) < static_cast<int>(best->variant);
    if (lower || tie_shallower) best = &c;
  }
  return *best;
}

std::vector<PredictionRecord> predict_batch(const Ensemble& ensemble, std::span<const MinIPImage> images,
                                            int batch_size) {
  if (ensemble.empty()) throw ValidationError("predict: empty ensemble");
  for (const auto& img : images) require_normalized(img);
  std::vector<PredictionRecord> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) out[i].image_id = images[i].image_id;
  for (const auto& [name, model] : ensemble) {
    if (!model.network) throw ValidationError("predict: label '" + name + "' has no network");
    for (std::size_t first = 0; first < images.size(); first += batch_size) {
      const std::size_t last = std::min(images.size(), first + batch_size);
      std::vector<const Image2D*> batch;
      for (std::size_t i = first; i < last; ++i) batch.push_back(&images[i].image);
      const auto probs = nn::softmax_rows(model.network->infer(to_network_input(batch, model.input_side)));
      for (std::size_t i = first; i < last; ++i) {
        LabelPrediction p;
        p.probabilities = probs[i - first];
        p.predicted = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                                       p.probabilities.begin());
        out[i].labels[name] = std::move(p);
      }
    }
  }
  return out;
}

PredictionRecord predict(const Ensemble& ensemble, const MinIPImage& image) {
  return predict_batch(ensemble, std::span<const MinIPImage>(&image, 1)).front();
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
  csv::Table t;
  t.header = {"image_id", "label", "predicted", "probabilities"};
  for (const auto& r : records) {
    for (const auto& [label, p] : r.labels) {
      std::ostringstream ss;
      ss.precision(17);
      for (std::size_t k = 0; k < p.probabilities.size(); ++k) {
        if (k) ss << ';';
        ss << p.probabilities[k];
      }
      t.rows.push_back({r.image_id, label, std::to_string(p.predicted), ss.str()});
    }
  }
  csv::write(path, t);
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const int ci = t.column("image_id"), cl = t.column("label"), cp = t.column("predicted"),
            cq = t.column("probabilities");
  if (ci < 0 || cl < 0 || cp < 0 || cq < 0) {
    throw SchemaError(path.string() + ": header must be image_id,label,predicted,probabilities");
  }
  std::vector<PredictionRecord> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    auto [it, inserted] = index.emplace(row[ci], out.size());
    if (inserted) out.push_back({row[ci], {}});
    LabelPrediction p;
    try {
      p.predicted = std::stoi(row[cp]);
      std::stringstream ss(row[cq]);
      std::string item;
      while (std::getline(ss, item, ';')) p.probabilities.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw MalformedInputError(path.string() + ": unreadable prediction for image '" + row[ci] + "'");
    }
    out[it->second].labels[row[cl]] = std::move(p);
  }
  return out;
}

}  // namespace dsaqc
