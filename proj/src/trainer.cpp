#include "backdrop/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "backdrop/log.hpp"
#include "backdrop/ops.hpp"
#include "backdrop/rng.hpp"

namespace backdrop {

namespace {

void require_path(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError(key + " is required for this data source");
}

// rank loss score: logit of class 1 minus logit of class 0
Tensor rank_scores(const Tensor& logits) {
  if (logits.dim(1) != 2) {
    throw ConfigError("rank loss needs a two-class head, model has " + std::to_string(logits.dim(1)) + " classes");
  }
  return reshape(slice(logits, 1, 1, 2) - slice(logits, 1, 0, 1), Shape{logits.dim(0)});
}

bool has_batchnorm(const ArchSpec& spec) {
  return std::any_of(spec.layers.begin(), spec.layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::batchnorm; });
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out.empty() ? "(none)" : out;
}

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

Datasets load_datasets(const TrainConfig& cfg) {
  Datasets d;
  if (cfg.data_source == "gptx") {
    require_path(cfg.train_path, "data.train");
    require_path(cfg.test_path, "data.test");
    d.train = load_gptx(cfg.train_path);
    d.test = load_gptx(cfg.test_path);
  } else if (cfg.data_source == "cifar10") {
    require_path(cfg.train_path, "data.train");
    d.train = load_cifar10(cfg.train_path, "train");
    d.test = load_cifar10(cfg.test_path.empty() ? cfg.train_path : cfg.test_path, "test");
  } else if (cfg.data_source == "pgm") {
    require_path(cfg.train_path, "data.train");
    require_path(cfg.test_path, "data.test");
    d.train = load_pgm_folder(cfg.train_path);
    d.test = load_pgm_folder(cfg.test_path);
  } else {
    d.train = make_gaussian_clouds(cfg.clouds_train, cfg.clouds_separation, derive_seed({cfg.seed_data, 0}));
    d.test = make_gaussian_clouds(cfg.clouds_test, cfg.clouds_separation, derive_seed({cfg.seed_data, 1}));
  }

  if (cfg.imbalance == "binary") {
    d.train = truncate_binary_imbalance(d.train, cfg.class_a, cfg.class_b, cfg.ratio, derive_seed({cfg.seed_data, 2}));
    d.test = truncate_binary_imbalance(d.test, cfg.class_a, cfg.class_b, cfg.ratio, derive_seed({cfg.seed_data, 3}));
  } else if (cfg.imbalance == "linear") {
    d.train = truncate_linear_imbalance(d.train, cfg.unit, derive_seed({cfg.seed_data, 2}));
  }
  if (cfg.crop > 1) {
    d.train = crop_tiles(d.train, cfg.crop);
    d.test = crop_tiles(d.test, cfg.crop);
  }
  if (d.train.image_shape != d.test.image_shape) {
    throw std::invalid_argument("train images " + shape_str(d.train.image_shape) + " and test images " +
                                shape_str(d.test.image_shape) + " differ in shape");
  }
  return d;
}

std::vector<std::string> loss_mask_tags(const std::string& loss) {
  if (loss == "rank") return {"p"};
  if (loss == "composite") return {"p_D", "p_X"};
  return {};
}

std::unique_ptr<Model> build_model_from_config(const TrainConfig& cfg, const Shape& input_shape,
                                               std::size_t classes) {
  ArchSpec spec;
  if (!cfg.layers.empty()) {
    spec = parse_arch(cfg.layers, "inline");
    const std::size_t head = spec.layers.empty() ? 0 : spec.layers.back().classes;
    if (cfg.classes != 0 && head != cfg.classes) {
      throw ConfigError("model.classes = " + std::to_string(cfg.classes) + " but the inline head has " +
                        std::to_string(head) + " classes");
    }
  } else {
    spec = preset_arch(cfg.arch, cfg.classes != 0 ? cfg.classes : classes);
  }
  BuildOptions options{cfg.seed_init, cfg.seed_mask, cfg.convention, cfg.short_circuit};
  auto model = build_model(spec, input_shape, options);
  if (model->num_classes() < classes) {
    throw ConfigError("data has " + std::to_string(classes) + " classes but the model head has " +
                      std::to_string(model->num_classes()));
  }

  const auto model_tags = model->mask_tags();
  const auto loss_tags = loss_mask_tags(cfg.loss);
  for (const auto& [tag, p] : cfg.mask_p) {
    if (model->has_mask(tag)) {
      model->mask(tag).set_p(p);
    } else if (std::find(loss_tags.begin(), loss_tags.end(), tag) == loss_tags.end()) {
      throw ConfigError("mask." + tag + " matches no mask; network tags: " + join(model_tags) +
                        "; loss tags: " + join(loss_tags));
    }
  }
  return model;
}

EvalOptions EvalOptions::from(const TrainConfig& cfg) {
  return {cfg.loss, cfg.tau, cfg.d, cfg.scales, cfg.batch_size, cfg.eval_batch, cfg.seed_data};
}

std::map<std::string, std::string> EvalOptions::to_meta() const {
  return {{"loss", loss},
          {"tau", format_metric_value(tau)},
          {"d", format_metric_value(d)},
          {"scales", format_scales(scales)},
          {"batch_size", std::to_string(batch_size)},
          {"eval_batch", std::to_string(eval_batch)},
          {"seed_data", std::to_string(seed_data)}};
}

EvalOptions EvalOptions::from_meta(const std::map<std::string, std::string>& meta) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + k + "'");
    return it->second;
  };
  EvalOptions o;
  try {
    o.loss = get("loss");
    o.tau = std::stod(get("tau"));
    o.d = std::stod(get("d"));
    o.scales = parse_scales(get("scales"));
    o.batch_size = std::stoul(get("batch_size"));
    o.eval_batch = std::stoul(get("eval_batch"));
    o.seed_data = std::stoull(get("seed_data"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  return o;
}

std::vector<std::pair<std::string, double>> evaluate(Model& model, const Dataset& data, const EvalOptions& o) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (data.image_shape != model.input_shape()) {
    throw std::invalid_argument("evaluate: images " + shape_str(data.image_shape) + " do not match model input " +
                                shape_str(model.input_shape()));
  }
  const NormMode saved = model.mode();
  model.set_mode(NormMode::eval);
  NoGradGuard no_grad;

  const std::size_t n = data.size(), classes = model.num_classes();
  std::vector<double> logits, features;
  std::size_t feature_dim = 0;
  for (std::size_t start = 0; start < n; start += o.eval_batch) {
    std::vector<std::size_t> idx(std::min(o.eval_batch, n - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    auto out = model.forward(data.batch_images(idx));
    logits.insert(logits.end(), out.logits.data().begin(), out.logits.data().end());
    feature_dim = out.features.dim(1);
    features.insert(features.end(), out.features.data().begin(), out.features.data().end());
  }
  model.set_mode(saved);

  const Tensor all_logits({n, classes}, logits);
  const Tensor all_features({n, feature_dim}, features);
  std::vector<std::pair<std::string, double>> m;

  const double xe = softmax_cross_entropy(all_logits, data.labels).item();
  double dist_dataset = 0;
  if (o.loss == "composite") dist_dataset = latent_distance_loss(all_features, data.labels, o.d).item();
  if (o.loss == "rank") {
    m.emplace_back("loss", rank_statistic_loss(rank_scores(all_logits), data.labels, o.tau).item());
  } else if (o.loss == "composite") {
    m.emplace_back("loss", xe + dist_dataset);
  } else {
    m.emplace_back("loss", xe);
  }
  m.emplace_back("xe", xe);

  std::size_t correct = 0, small_ok = 0, large_ok = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pred = argmax_row(all_logits.data().subspan(i * classes, classes));
    correct += pred == data.labels[i];
    if (!o.scales.empty()) {
      const auto truth = scale_labels(static_cast<std::uint16_t>(data.labels[i]), o.scales);
      const auto guess = scale_labels(static_cast<std::uint16_t>(pred), o.scales);
      small_ok += truth.first == guess.first;
      large_ok += truth.second == guess.second;
    }
  }
  m.emplace_back("accuracy", static_cast<double>(correct) / static_cast<double>(n));
  if (!o.scales.empty()) {
    m.emplace_back("accuracy_small", static_cast<double>(small_ok) / static_cast<double>(n));
    m.emplace_back("accuracy_large", static_cast<double>(large_ok) / static_cast<double>(n));
  }
  if (classes == 2) {
    const Tensor s = rank_scores(all_logits);
    m.emplace_back("auc", roc_auc_exact(std::vector<double>(s.data().begin(), s.data().end()), data.labels));
  }
  if (o.loss == "composite") {
    m.emplace_back("dist_dataset", dist_dataset);
    // Same minibatch statistic the training loss sees, averaged over one shuffled pass.
    BatchIterator it(data, o.batch_size, derive_seed({o.seed_data, 4}));
    double total = 0;
    const auto batches = it.next_epoch();
    for (const auto& b : batches) {
      total += latent_distance_loss(index_select(all_features, b), data.batch_labels(b), o.d).item();
    }
    m.emplace_back("dist_batch", total / static_cast<double>(batches.size()));
  }
  return m;
}

std::vector<std::pair<std::string, double>> evaluate(const Checkpoint& ckpt, const Dataset& data) {
  if (data.image_shape != ckpt.input_shape) {
    throw std::invalid_argument("checkpoint expects images " + shape_str(ckpt.input_shape) + ", data has " +
                                shape_str(data.image_shape));
  }
  auto model = model_from_checkpoint(ckpt);
  return evaluate(*model, data, EvalOptions::from_meta(ckpt.meta));
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& test_set) {
  const auto t0 = std::chrono::steady_clock::now();
  train_set.validate();
  test_set.validate();
  if (train_set.size() == 0) throw std::invalid_argument("training set is empty");
  const std::size_t classes = std::max(train_set.num_classes(), test_set.num_classes());
  auto model = build_model_from_config(cfg, train_set.image_shape, classes);
  const bool bn = has_batchnorm(model->spec());

  std::map<std::string, std::unique_ptr<MaskingLayer>> loss_masks;
  for (const auto& tag : loss_mask_tags(cfg.loss)) {
    const auto it = cfg.mask_p.find(tag);
    MaskOptions mo{it == cfg.mask_p.end() ? 0.0 : it->second, MaskMode::batch, cfg.convention, false};
    loss_masks[tag] = std::make_unique<MaskingLayer>(mo, mask_stream_seed(cfg.seed_mask, tag));
  }

  TrainResult result;
  for (const auto& tag : model->mask_tags())
    result.metrics.add(0, "train", "ebs." + tag, effective_batch_size(cfg.batch_size, model->mask(tag).p()));
  for (const auto& [tag, mask] : loss_masks)
    result.metrics.add(0, "train", "ebs." + tag, effective_batch_size(cfg.batch_size, mask->p()));

  const EvalOptions eval_options = EvalOptions::from(cfg);
  Sgd sgd({cfg.lr, cfg.momentum, cfg.weight_decay});
  BatchIterator batches(train_set, cfg.batch_size, cfg.seed_data, cfg.use_stratified());
  bool warned_single = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0;
    std::map<std::string, double> parts;
    std::size_t seen = 0;
    for (const auto& batch : batches.next_epoch()) {
      if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) break;
      if (bn && batch.size() < 2) {
        if (!warned_single) log_warning("skipping a batch of one sample: batchnorm needs two");
        warned_single = true;
        continue;
      }
      TapeScope scope;
      model->zero_grad();
      const auto labels = train_set.batch_labels(batch);
      auto out = model->forward(train_set.batch_images(batch));
      LossValue loss;
      if (cfg.loss == "rank") {
        loss = rank_statistic_loss(loss_masks.at("p")->forward(rank_scores(out.logits)), labels, cfg.tau);
      } else if (cfg.loss == "composite") {
        loss = composite_backdrop_loss(out.logits, out.features, labels, cfg.d, *loss_masks.at("p_X"),
                                       *loss_masks.at("p_D"));
      } else {
        loss = softmax_cross_entropy(out.logits, labels);
      }
      backward(loss.value);
      sgd.step(model->parameters());
      ++result.steps;

      const double w = static_cast<double>(batch.size());
      loss_sum += w * loss.item();
      if (loss.breakdown.size() > 1)
        for (const auto& [name, v] : loss.breakdown) parts[name] += w * v;
      seen += batch.size();
    }
    const bool last = epoch == cfg.epochs || (cfg.max_steps != 0 && result.steps >= cfg.max_steps);
    if (epoch % cfg.eval_every == 0 || last) {
      if (seen > 0) {
        result.metrics.add(epoch, "train", "loss", loss_sum / static_cast<double>(seen));
        for (const auto& [name, v] : parts) result.metrics.add(epoch, "train", "loss." + name, v / static_cast<double>(seen));
      }
      for (const auto& [name, v] : evaluate(*model, test_set, eval_options)) result.metrics.add(epoch, "test", name, v);
    }
    if (last) break;
  }

  result.checkpoint = capture_checkpoint(*model, &sgd, eval_options.to_meta());
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

namespace {

void write_curves(const std::string& path, const MetricsLog& log) {
  std::map<std::string, PlotSeries> series;
  for (const auto& r : log.rows()) {
    if (r.epoch == 0 || r.metric.rfind("ebs.", 0) == 0) continue;
    const bool wanted = r.metric == "loss" || r.metric == "accuracy" || r.metric == "auc" ||
                        r.metric.rfind("accuracy_", 0) == 0 || r.metric.rfind("dist_", 0) == 0;
    if (!wanted) continue;
    auto& s = series[r.split + " " + r.metric];
    s.name = r.split + " " + r.metric;
    s.x.push_back(static_cast<double>(r.epoch));
    s.y.push_back(r.value);
  }
  std::vector<PlotSeries> list;
  for (auto& [name, s] : series) list.push_back(std::move(s));
  write_svg_line_plot(path, "training curves", "epoch", "value", list);
}

}  // namespace

TrainResult run_experiment(const ConfigMap& user) {
  const ConfigMap resolved = resolve_config_map(user);
  const TrainConfig cfg = parse_train_config(resolved);
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  {
    std::ofstream os(out / "config.resolved", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (out / "config.resolved").string());
    os << resolved.dump();
  }
  const Datasets data = load_datasets(cfg);
  TrainResult result = train(cfg, data.train, data.test);
  result.metrics.write_csv((out / "metrics.csv").string());
  save_checkpoint((out / "checkpoint.bkdp").string(), result.checkpoint);
  write_curves((out / "curves.svg").string(), result.metrics);
  log_info(fmt::format("trained {} steps in {:.2f} s; outputs in {}", result.steps, result.wall_seconds, out.string()));
  return result;
}

}  // namespace backdrop
