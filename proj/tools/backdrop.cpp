// Command-line front end: gen-data, train, eval, gradcheck, export-pgm, plot.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include <fmt/format.h>

#include "backdrop/checkpoint.hpp"
#include "backdrop/gp_texture.hpp"
#include "backdrop/gradcheck.hpp"
#include "backdrop/log.hpp"
#include "backdrop/metrics.hpp"
#include "backdrop/trainer.hpp"

namespace fs = std::filesystem;
using namespace backdrop;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct GenDataArgs {
  std::string classes = "desk";
  std::size_t size = 128;
  std::string mode = "multiply";
  std::size_t n_train = 1, n_test = 25;
  std::uint64_t seed = 0;
  std::string out = "data/gp";
};

int gen_data(const GenDataArgs& a) {
  const auto specs = a.classes == "desk" ? desk_scale_classes() : parse_scales(a.classes);
  if (specs.empty()) throw ConfigError("--classes: no classes given");
  const auto files = make_gp_dataset(specs, a.size, a.size, a.n_train, a.n_test, parse_compose_mode(a.mode), a.seed, a.out);
  fmt::print("wrote {} ({} records) and {} ({} records)\n", files.train_path, files.train.size(), files.test_path,
             files.test.size());
  return 0;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

int train_cmd(const TrainArgs& a) {
  ConfigMap user = a.config.empty() ? ConfigMap{} : ConfigMap::parse_file(a.config);
  for (const auto& s : a.sets) user.apply_override(s);
  if (!a.out.empty()) user.set("run.out_dir", a.out);
  const auto result = run_experiment(user);
  for (const auto& r : result.metrics.rows()) {
    if (r.split == "test" && r.epoch == result.metrics.rows().back().epoch)
      fmt::print("{:<16} {}\n", r.metric, format_metric_value(r.value));
  }
  return 0;
}

std::string infer_source(const std::string& path) {
  const fs::path p(path);
  if (fs::is_regular_file(p)) return "gptx";
  if (fs::exists(p / "test_batch.bin") || fs::exists(p / "data_batch_1.bin")) return "cifar10";
  return "pgm";
}

struct EvalArgs {
  std::string checkpoint, data, source, split = "test", out;
};

int eval_cmd(const EvalArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const std::string source = a.source.empty() ? infer_source(a.data) : a.source;
  Dataset ds;
  if (source == "gptx") {
    ds = load_gptx(a.data);
  } else if (source == "cifar10") {
    ds = load_cifar10(a.data, a.split);
  } else if (source == "pgm") {
    ds = load_pgm_folder(a.data);
  } else {
    throw ConfigError("--source must be gptx, cifar10 or pgm");
  }
  const auto metrics = evaluate(ckpt, ds);
  MetricsLog log;
  for (const auto& [name, v] : metrics) {
    fmt::print("{:<16} {}\n", name, format_metric_value(v));
    log.add(0, "test", name, v);
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    log.write_csv((fs::path(a.out) / "metrics.csv").string());
  }
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 7;
  int instances = 5;
  double tolerance = 1e-4;
};

int gradcheck_cmd(const GradcheckArgs& a) {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(a.seed, a.instances, a.tolerance)) {
    fmt::print("{:<22} {:>3} instances  max rel error {:.3e}  {}\n", r.name, r.instances, r.max_error,
               r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? 0 : kRuntimeError;
}

struct ExportArgs {
  std::string data, out;
  std::size_t limit = 0;
};

int export_pgm(const ExportArgs& a) {
  const auto g = read_gptx(a.data);
  const std::size_t n = a.limit == 0 ? g.size() : std::min(a.limit, g.size());
  const std::size_t px = std::size_t{g.H} * g.W;
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path dir = fs::path(a.out) / fmt::format("class_{}", g.labels[i]);
    fs::create_directories(dir);
    write_pgm_preview((dir / fmt::format("{:05}.pgm", i)).string(), g.pixels.data() + i * px, g.H, g.W);
  }
  fmt::print("wrote {} images under {}\n", n, a.out);
  return 0;
}

struct PlotArgs {
  std::vector<std::string> metrics_files;
  std::vector<std::string> metrics{"loss", "accuracy"};
  std::string split = "test";
  std::string out = "curves.svg";
};

int plot_cmd(const PlotArgs& a) {
  std::vector<PlotSeries> series;
  for (const auto& file : a.metrics_files) {
    const auto log = MetricsLog::read_csv(file);
    for (const auto& m : a.metrics) {
      PlotSeries s{a.metrics_files.size() > 1 ? file + " " + m : m, {}, {}};
      for (const auto& r : log.rows()) {
        if (r.split == a.split && r.metric == m) {
          s.x.push_back(static_cast<double>(r.epoch));
          s.y.push_back(r.value);
        }
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
  }
  if (series.empty()) throw ConfigError("no rows match the requested split and metrics");
  write_svg_line_plot(a.out, a.split + " metrics", "epoch", "value", series);
  fmt::print("wrote {}\n", a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backdrop: gradient-masking experiments on small convolutional networks"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only print warnings and errors");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write two-scale texture train/test sets in GPTX format");
  gen_cmd->add_option("--classes", gen.classes, "'desk' or a list ell_small:ell_large,...")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "image side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--mode", gen.mode, "field composition")->capture_default_str()->check(
      CLI::IsMember({"convolve", "multiply"}));
  gen_cmd->add_option("--n-train", gen.n_train, "training images per class")->capture_default_str();
  gen_cmd->add_option("--n-test", gen.n_test, "test images per class")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "train a model from a config file");
  train_sub->add_option("--config", tr.config, "config file")->check(CLI::ExistingFile);
  train_sub->add_option("--set", tr.sets, "override, section.key=value (repeatable)");
  train_sub->add_option("--out", tr.out, "output directory (run.out_dir)");

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_sub->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval_sub->add_option("--data", ev.data, "GPTX file, CIFAR-10 directory or PGM class folder")->required()->check(
      CLI::ExistingPath);
  eval_sub->add_option("--source", ev.source, "gptx | cifar10 | pgm (inferred when omitted)");
  eval_sub->add_option("--split", ev.split, "CIFAR-10 split")->capture_default_str()->check(
      CLI::IsMember({"train", "test"}));
  eval_sub->add_option("--out", ev.out, "directory for metrics.csv");

  GradcheckArgs gc;
  auto* gc_sub = app.add_subcommand("gradcheck", "finite-difference check of every layer and loss");
  gc_sub->add_option("--seed", gc.seed)->capture_default_str();
  gc_sub->add_option("--instances", gc.instances)->capture_default_str()->check(CLI::PositiveNumber);
  gc_sub->add_option("--tolerance", gc.tolerance)->capture_default_str()->check(CLI::PositiveNumber);

  ExportArgs ex;
  auto* ex_sub = app.add_subcommand("export-pgm", "write GPTX images as 8-bit PGM files, one folder per class");
  ex_sub->add_option("--data", ex.data, "GPTX file")->required()->check(CLI::ExistingFile);
  ex_sub->add_option("--out", ex.out, "output directory")->required();
  ex_sub->add_option("--limit", ex.limit, "at most this many images (0: all)")->capture_default_str();

  PlotArgs pl;
  auto* plot_sub = app.add_subcommand("plot", "SVG line plot of metrics.csv files");
  plot_sub->add_option("--metrics", pl.metrics_files, "metrics.csv (repeatable)")->required()->check(
      CLI::ExistingFile);
  plot_sub->add_option("--metric", pl.metrics, "metric names")->capture_default_str();
  plot_sub->add_option("--split", pl.split)->capture_default_str()->check(CLI::IsMember({"train", "test"}));
  plot_sub->add_option("--out", pl.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  if (quiet) set_log_level(LogLevel::warning);

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_sub) return train_cmd(tr);
    if (*eval_sub) return eval_cmd(ev);
    if (*gc_sub) return gradcheck_cmd(gc);
    if (*ex_sub) return export_pgm(ex);
    if (*plot_sub) return plot_cmd(pl);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const ArchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kUsageError;
}
