#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "benchmark.hpp"
#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"
#include "fmtk/common/rng.hpp"
#include "fmtk/data/image_ops.hpp"
#include "fmtk/data/manifest.hpp"
#include "fmtk/data/png_io.hpp"
#include "fmtk/eval/compare.hpp"
#include "fmtk/eval/embeddings.hpp"
#include "fmtk/eval/metrics.hpp"
#include "fmtk/explain/gradcam.hpp"
#include "fmtk/phantom/phantom.hpp"
#include "fmtk/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace fmtk;

namespace {

constexpr const char* kVersion = "0.1.0";

// flags > config file > defaults
template <class T>
T resolve(const CLI::Option* opt, const T& flag_value, const json& cfg, const char* key, const T& fallback) {
  if (opt != nullptr && opt->count() > 0) return flag_value;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("config '{}': {}", path, e.what()));
  }
}

struct ManifestWriter {
  std::string command;
  std::vector<std::string> argv;
  std::string out_dir;
  uint64_t seed = 0;
  ordered_json config;
  ordered_json inputs;
  ordered_json outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void write() const {
    ordered_json m;
    m["command"] = command;
    m["argv"] = argv;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_file_atomic((fs::path(out_dir) / "run_manifest.json").string(), m.dump(2) + "\n");
  }
};

BackboneConfig arch_from(const json& cfg, int image_size, int num_classes) {
  BackboneConfig arch;
  if (cfg.contains("backbone")) arch = BackboneConfig::from_json(cfg.at("backbone"));
  arch.input_size = image_size;
  arch.num_classes = num_classes;
  arch.validate();
  return arch;
}

ordered_json metrics_json(const MetricsReport& r, const ConfusionMatrix& cm) {
  ordered_json j;
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  j["sample_count"] = r.sample_count;
  for (const auto& c : r.per_class) {
    j["per_class"].push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  if (r.per_class.size() == 2) j["binary_f1_bad_positive"] = r.binary_f1;
  const auto norm = cm.row_normalized();
  for (int t = 0; t < cm.num_classes; ++t) {
    ordered_json row;
    for (int p = 0; p < cm.num_classes; ++p) row.push_back(norm[static_cast<std::size_t>(t * cm.num_classes + p)]);
    j["confusion_row_normalized"].push_back(row);
  }
  j["conventions"] = "0/0 precision, recall and F1 are defined as 0";
  return j;
}

std::string metrics_text(const std::string& title, const MetricsReport& r) {
  std::string out = fmt::format("{}\n  macro F1 {:.4f}  accuracy {:.4f}  n {}\n", title, r.macro_f1, r.accuracy, r.sample_count);
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    out += fmt::format("  class {}: F1 {:.4f}  Pr {:.4f}  Re {:.4f}  support {}\n", c,
                       r.per_class[c].f1, r.per_class[c].precision, r.per_class[c].recall, r.per_class[c].support);
  }
  out += "  note: 0/0 precision/recall/F1 defined as 0\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fmtk: semi-supervised multi-task fundus image quality toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> argv_vec(argv, argv + argc);
  const std::string self_exe = fs::exists("/proc/self/exe") ? fs::read_symlink("/proc/self/exe").string() : argv_vec[0];

  // shared option storage; each subcommand registers the flags it uses
  std::string config_path, out_dir, manifest_path, model_path, model_b_path;
  std::string style_str = "3class", split_str = "test", target = "pred", image_path, grid_str = "0.25,0.5,1,2";
  uint64_t seed = 0;
  int count = 100, image_size = 32, epochs = 115, batch = 32, b_resamples = 1000, probes = 32;
  int seeds = 5, teacher_epochs = 14, noise_epochs = 12, workers = 0;
  int train_count = 600, val_count = 60, test_count = 200, teacher_count = 300;
  double lambda_a = 1.0, lambda_b = 1.0, threshold = 0.5, alpha_blend = 0.45, ci_alpha = 0.05;
  bool hard_pseudo = false, no_augment = false;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  std::string tail_str = "two";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--out", out_dir, "output directory")->required();
  };

  int exit_code = 0;
  std::function<void()> action;

  // gen-data
  {
    CLI::App* cmd = app.add_subcommand("gen-data", "generate a synthetic phantom dataset");
    add_common(cmd);
    auto* o_count = cmd->add_option("--count", count, "number of samples (>= 10)");
    auto* o_style = cmd->add_option("--style", style_str, "2class | 3class");
    auto* o_size = cmd->add_option("--image-size", image_size, "square image size");
    auto* o_frac = cmd->add_option("--fractions", fractions, "train,val,test fractions")->expected(3);
    cmd->callback([&, o_count, o_style, o_size, o_frac]() {
      action = [&, o_count, o_style, o_size, o_frac]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"gen-data", argv_vec, out_dir, seed};
        DatasetGenConfig gc;
        gc.count = resolve(o_count, count, cfg, "count", 100);
        gc.style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        gc.size = resolve(o_size, image_size, cfg, "image_size", 32);
        const auto fr = resolve(o_frac, fractions, cfg, "fractions", std::vector<double>{0.8, 0.1, 0.1});
        if (fr.size() != 3) throw UsageError("--fractions needs three values");
        gc.fractions = {fr[0], fr[1], fr[2]};
        gc.seed = seed;
        gc.out_dir = out_dir;
        generate_dataset(gc);
        mw.config = {{"count", gc.count}, {"style", style_name(gc.style)}, {"image_size", gc.size},
                     {"fractions", fr}, {"seed", seed}};
        mw.outputs = {{"manifest", "manifest.csv"}, {"oracle", "oracle.csv"}, {"images", "images/"}, {"masks", "masks/"}};
        mw.write();
        std::puts((fs::path(out_dir) / "manifest.csv").string().c_str());
      };
    });
  }

  auto add_train_common = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    return std::tuple{cmd->add_option("--style", style_str, "2class | 3class"),
                      cmd->add_option("--image-size", image_size, "training resolution"),
                      cmd->add_option("--epochs", epochs, "schedule length (halvings rescale)"),
                      cmd->add_option("--batch", batch, "batch size")};
  };
  auto train_config_from = [&](const json& cfg, CLI::Option* o_epochs, CLI::Option* o_batch) {
    TrainConfig tc;
    const int n_epochs = resolve(o_epochs, epochs, cfg, "epochs", 115);
    tc.schedule = n_epochs == 115 ? Schedule{} : Schedule::shortened(n_epochs);
    tc.batch_size = resolve(o_batch, batch, cfg, "batch_size", 32);
    tc.seed = seed;
    if (cfg.contains("aug_bounds")) tc.aug_bounds = AugmentBounds::from_json(cfg.at("aug_bounds"));
    return tc;
  };

  // train-teacher
  {
    CLI::App* cmd = app.add_subcommand("train-teacher", "train the multilabel detail Teacher on S");
    add_common(cmd);
    auto [o_style, o_size, o_epochs, o_batch] = add_train_common(cmd);
    cmd->callback([&, o_style, o_size, o_epochs, o_batch]() {
      action = [&, o_style, o_size, o_epochs, o_batch]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"train-teacher", argv_vec, out_dir, seed};
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const int size = resolve(o_size, image_size, cfg, "image_size", 32);
        const Dataset s = load_manifest(manifest_path, style, size);
        TrainConfig tc = train_config_from(cfg, o_epochs, o_batch);
        tc.augment = false;
        const BackboneConfig arch = arch_from(cfg, size, num_classes(style));
        TrainedModel teacher = train_teacher(s, arch, tc);
        teacher.model.save((fs::path(out_dir) / "teacher").string());
        teacher.record.checkpoint = "teacher";
        teacher.record.save((fs::path(out_dir) / "teacher_record.json").string());
        mw.config = tc.to_json();
        mw.config["style"] = style_name(style);
        mw.config["image_size"] = size;
        mw.config["backbone"] = arch.to_json();
        mw.inputs = {{"manifest", manifest_path}};
        mw.outputs = {{"model", "teacher"}, {"record", "teacher_record.json"}};
        mw.write();
        std::printf("best val detail F1 %.4f at epoch %d\n", teacher.record.best_val_metric, teacher.record.best_epoch);
      };
    });
  }

  // pseudo-label
  {
    CLI::App* cmd = app.add_subcommand("pseudo-label", "write Teacher pseudo-labels into a new manifest");
    add_common(cmd);
    cmd->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    cmd->add_option("--model", model_path, "teacher checkpoint prefix")->required();
    auto* o_style = cmd->add_option("--style", style_str, "2class | 3class");
    cmd->callback([&, o_style]() {
      action = [&, o_style]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"pseudo-label", argv_vec, out_dir, seed};
        Model teacher = Model::load(model_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Dataset q = load_manifest(manifest_path, style, teacher.config().input_size);
        const std::string out_manifest = (fs::path(out_dir) / "pseudo_manifest.csv").string();
        pseudo_label(teacher, q, out_manifest);
        mw.config = {{"style", style_name(style)}};
        mw.inputs = {{"manifest", manifest_path}, {"model", model_path}};
        mw.outputs = {{"manifest", "pseudo_manifest.csv"}};
        mw.write();
        std::puts(out_manifest.c_str());
      };
    });
  }

  // pretrain
  {
    CLI::App* cmd = app.add_subcommand("pretrain", "single-task pre-training for overall quality");
    add_common(cmd);
    auto [o_style, o_size, o_epochs, o_batch] = add_train_common(cmd);
    cmd->callback([&, o_style, o_size, o_epochs, o_batch]() {
      action = [&, o_style, o_size, o_epochs, o_batch]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"pretrain", argv_vec, out_dir, seed};
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const int size = resolve(o_size, image_size, cfg, "image_size", 32);
        const Dataset q = load_manifest(manifest_path, style, size);
        const TrainConfig tc = train_config_from(cfg, o_epochs, o_batch);
        const BackboneConfig arch = arch_from(cfg, size, num_classes(style));
        TrainedModel st = pretrain_student(q, arch, tc);
        st.model.save((fs::path(out_dir) / "st").string());
        st.record.checkpoint = "st";
        st.record.save((fs::path(out_dir) / "st_record.json").string());
        mw.config = tc.to_json();
        mw.config["style"] = style_name(style);
        mw.config["image_size"] = size;
        mw.config["backbone"] = arch.to_json();
        mw.inputs = {{"manifest", manifest_path}};
        mw.outputs = {{"model", "st"}, {"record", "st_record.json"}};
        mw.write();
        std::printf("best val macro F1 %.4f at epoch %d\n", st.record.best_val_metric, st.record.best_epoch);
      };
    });
  }

  // finetune
  {
    CLI::App* cmd = app.add_subcommand("finetune", "multi-task fine-tuning from a single-task checkpoint");
    add_common(cmd);
    auto [o_style, o_size, o_epochs, o_batch] = add_train_common(cmd);
    (void)o_size;
    cmd->add_option("--model", model_path, "single-task checkpoint prefix")->required();
    auto* o_la = cmd->add_option("--lambda-a", lambda_a, "detail-task weight");
    auto* o_lb = cmd->add_option("--lambda-b", lambda_b, "overall-task weight");
    auto* o_hard = cmd->add_flag("--hard-pseudo", hard_pseudo, "threshold pseudo-labels at 0.5");
    cmd->callback([&, o_style, o_epochs, o_batch, o_la, o_lb, o_hard]() {
      action = [&, o_style, o_epochs, o_batch, o_la, o_lb, o_hard]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"finetune", argv_vec, out_dir, seed};
        Model st = Model::load(model_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Dataset qp = load_manifest(manifest_path, style, st.config().input_size);
        TrainConfig tc = train_config_from(cfg, o_epochs, o_batch);
        tc.weights.lambda_a = resolve(o_la, lambda_a, cfg, "lambda_a", 1.0);
        tc.weights.lambda_b = resolve(o_lb, lambda_b, cfg, "lambda_b", 1.0);
        tc.hard_pseudo = resolve(o_hard, hard_pseudo, cfg, "hard_pseudo", false);
        TrainedModel mt = finetune_multitask(st, qp, tc);
        mt.model.save((fs::path(out_dir) / "mt").string());
        mt.record.checkpoint = "mt";
        mt.record.save((fs::path(out_dir) / "mt_record.json").string());
        mw.config = tc.to_json();
        mw.config["style"] = style_name(style);
        mw.inputs = {{"manifest", manifest_path}, {"model", model_path}};
        mw.outputs = {{"model", "mt"}, {"record", "mt_record.json"}};
        mw.write();
        std::printf("best val macro F1 %.4f at epoch %d\n", mt.record.best_val_metric, mt.record.best_epoch);
      };
    });
  }

  // extend-st (schedule-extension fairness control)
  {
    CLI::App* cmd = app.add_subcommand("extend-st", "extend single-task training as a duration control");
    add_common(cmd);
    auto [o_style, o_size, o_epochs, o_batch] = add_train_common(cmd);
    (void)o_size;
    cmd->add_option("--model", model_path, "single-task checkpoint prefix")->required();
    double phase1_best = 0.0;
    auto* o_p1 = cmd->add_option("--phase1-best", phase1_best, "phase-one best validation macro F1");
    cmd->callback([&, o_style, o_epochs, o_batch, o_p1, &phase1_best]() {
      action = [&, o_style, o_epochs, o_batch, o_p1, &phase1_best]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"extend-st", argv_vec, out_dir, seed};
        Model st = Model::load(model_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Dataset q = load_manifest(manifest_path, style, st.config().input_size);
        const TrainConfig tc = train_config_from(cfg, o_epochs, o_batch);
        const double p1 = resolve(o_p1, phase1_best, cfg, "phase1_best", 0.0);
        ExtendResult res = extend_st_baseline(st, p1, q, tc);
        res.model.save((fs::path(out_dir) / "st_ext").string());
        res.record.checkpoint = "st_ext";
        res.record.save((fs::path(out_dir) / "st_ext_record.json").string());
        mw.config = tc.to_json();
        mw.config["phase1_best"] = p1;
        mw.inputs = {{"manifest", manifest_path}, {"model", model_path}};
        mw.outputs = {{"model", "st_ext"}, {"record", "st_ext_record.json"}};
        mw.write();
        std::printf("extension %s; combined best val F1 %.4f\n", res.extension_won ? "won" : "did not beat phase one",
                    res.combined_best_val_metric);
      };
    });
  }

  // tune-lambdas
  {
    CLI::App* cmd = app.add_subcommand("tune-lambdas", "grid-search lambda_A by validation macro F1");
    add_common(cmd);
    auto [o_style, o_size, o_epochs, o_batch] = add_train_common(cmd);
    (void)o_size;
    cmd->add_option("--model", model_path, "single-task checkpoint prefix")->required();
    auto* o_grid = cmd->add_option("--grid", grid_str, "comma-separated lambda_A grid");
    cmd->callback([&, o_style, o_epochs, o_batch, o_grid]() {
      action = [&, o_style, o_epochs, o_batch, o_grid]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"tune-lambdas", argv_vec, out_dir, seed};
        Model st = Model::load(model_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Dataset qp = load_manifest(manifest_path, style, st.config().input_size);
        const TrainConfig tc = train_config_from(cfg, o_epochs, o_batch);
        const std::string grid_spec = resolve(o_grid, grid_str, cfg, "grid", std::string("0.25,0.5,1,2"));
        std::vector<double> grid;
        std::stringstream ss(grid_spec);
        for (std::string part; std::getline(ss, part, ',');) {
          try {
            grid.push_back(std::stod(part));
          } catch (const std::exception&) {
            throw UsageError(fmt::format("bad grid value '{}'", part));
          }
        }
        const LambdaSweepResult res = tune_lambdas(grid, st, qp, tc);
        ordered_json j;
        j["lambda_a"] = res.lambda_a;
        j["lambda_b"] = res.lambda_b;
        for (const auto& [la, f1] : res.scores) j["scores"].push_back({{"lambda_a", la}, {"val_macro_f1", f1}});
        write_file_atomic((fs::path(out_dir) / "lambda_sweep.json").string(), j.dump(2) + "\n");
        mw.config = tc.to_json();
        mw.config["grid"] = grid;
        mw.inputs = {{"manifest", manifest_path}, {"model", model_path}};
        mw.outputs = {{"sweep", "lambda_sweep.json"}};
        mw.write();
        std::printf("selected lambda_a %.3g (lambda_b %.3g)\n", res.lambda_a, res.lambda_b);
      };
    });
  }

  // evaluate
  {
    CLI::App* cmd = app.add_subcommand("evaluate", "metrics report for a checkpoint on one split");
    add_common(cmd);
    cmd->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    cmd->add_option("--model", model_path, "checkpoint prefix")->required();
    auto* o_style = cmd->add_option("--style", style_str, "2class | 3class");
    auto* o_split = cmd->add_option("--split", split_str, "train | val | test");
    auto* o_thresh = cmd->add_option("--threshold", threshold, "detail decision threshold");
    cmd->callback([&, o_style, o_split, o_thresh]() {
      action = [&, o_style, o_split, o_thresh]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"evaluate", argv_vec, out_dir, seed};
        Model model = Model::load(model_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Split split = parse_split(resolve(o_split, split_str, cfg, "split", std::string("test")));
        const double thresh = resolve(o_thresh, threshold, cfg, "threshold", 0.5);
        const Dataset ds = load_manifest(manifest_path, style, model.config().input_size);
        const SplitData data = load_split(ds, split);
        if (data.size() == 0) throw DataError(fmt::format("no rows in split '{}'", split_name(split)));

        ordered_json report;
        std::string text;
        if (model.has_head_b()) {
          if (!data.has_overall) throw DataError("evaluate: split lacks overall labels");
          const auto pred = predict_overall(model, data);
          const auto cm = confusion_matrix(data.overall, pred, num_classes(style));
          const auto metrics = classification_metrics(cm);
          report["overall"] = metrics_json(metrics, cm);
          text += metrics_text("overall quality", metrics);
          write_file_atomic((fs::path(out_dir) / "confusion.csv").string(), cm.to_csv());
        }
        if (model.has_head_a() && data.has_details) {
          Tensor truth({static_cast<int>(data.size()), 3});
          for (std::size_t i = 0; i < data.size(); ++i) {
            for (int j = 0; j < 3; ++j) truth.at({static_cast<int>(i), j}) = data.details[i][static_cast<std::size_t>(j)];
          }
          const auto dm = detail_metrics(truth, predict_details(model, data), thresh);
          static constexpr const char* names[3] = {"illumination", "clarity", "contrast"};
          for (int j = 0; j < 3; ++j) {
            const auto& d = dm.per_detail[static_cast<std::size_t>(j)];
            report["details"][names[j]] = {{"f1", d.f1}, {"precision", d.precision}, {"recall", d.recall}, {"support", d.support}};
            text += fmt::format("detail {}: F1 {:.4f}  Pr {:.4f}  Re {:.4f}\n", names[j], d.f1, d.precision, d.recall);
          }
          report["details"]["threshold"] = thresh;
          report["details"]["positive_class"] = "good";
        }
        write_file_atomic((fs::path(out_dir) / "metrics.json").string(), report.dump(2) + "\n");
        write_file_atomic((fs::path(out_dir) / "metrics.txt").string(), text);
        mw.config = {{"style", style_name(style)}, {"split", split_name(split)}, {"threshold", thresh}};
        mw.inputs = {{"manifest", manifest_path}, {"model", model_path}};
        mw.outputs = {{"metrics", "metrics.json"}};
        mw.write();
        std::fputs(text.c_str(), stdout);
      };
    });
  }

  // compare
  {
    CLI::App* cmd = app.add_subcommand("compare", "side-by-side comparison of two checkpoints");
    add_common(cmd);
    cmd->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    cmd->add_option("--model-a", model_path, "checkpoint prefix A")->required();
    cmd->add_option("--model-b", model_b_path, "checkpoint prefix B")->required();
    auto* o_style = cmd->add_option("--style", style_str, "2class | 3class");
    auto* o_split = cmd->add_option("--split", split_str, "train | val | test");
    auto* o_tail = cmd->add_option("--tail", tail_str, "one | two");
    auto* o_b = cmd->add_option("--b-resamples", b_resamples, "bootstrap replicates");
    auto* o_alpha = cmd->add_option("--alpha", ci_alpha, "CI significance level");
    cmd->callback([&, o_style, o_split, o_tail, o_b, o_alpha]() {
      action = [&, o_style, o_split, o_tail, o_b, o_alpha]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"compare", argv_vec, out_dir, seed};
        Model a = Model::load(model_path);
        Model b = Model::load(model_b_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Split split = parse_split(resolve(o_split, split_str, cfg, "split", std::string("test")));
        const Dataset ds = load_manifest(manifest_path, style, a.config().input_size);
        const SplitData data = load_split(ds, split);
        if (!data.has_overall) throw DataError("compare: split lacks overall labels");
        CompareOptions copts;
        copts.b_resamples = resolve(o_b, b_resamples, cfg, "b_resamples", 1000);
        copts.alpha = resolve(o_alpha, ci_alpha, cfg, "alpha", 0.05);
        const std::string tail = resolve(o_tail, tail_str, cfg, "tail", std::string("two"));
        if (tail != "one" && tail != "two") throw UsageError("--tail must be one or two");
        copts.tail = tail == "one" ? Tail::One : Tail::Two;
        copts.seed = seed;
        const auto cmpdoc = compare_models(model_path, predict_overall(a, data), model_b_path,
                                           predict_overall(b, data), data.overall, num_classes(style), copts);
        write_file_atomic((fs::path(out_dir) / "comparison.json").string(), cmpdoc.to_json().dump(2) + "\n");
        write_file_atomic((fs::path(out_dir) / "comparison.txt").string(), cmpdoc.to_text());
        mw.config = {{"style", style_name(style)}, {"split", split_name(split)}, {"tail", tail},
                     {"b_resamples", copts.b_resamples}, {"alpha", copts.alpha}};
        mw.inputs = {{"manifest", manifest_path}, {"model_a", model_path}, {"model_b", model_b_path}};
        mw.outputs = {{"comparison", "comparison.json"}};
        mw.write();
        std::fputs(cmpdoc.to_text().c_str(), stdout);
      };
    });
  }

  // gradcam
  {
    CLI::App* cmd = app.add_subcommand("gradcam", "heatmap for one image");
    add_common(cmd);
    cmd->add_option("--model", model_path, "checkpoint prefix")->required();
    cmd->add_option("--image", image_path, "input image (PNG)")->required();
    auto* o_target = cmd->add_option("--target", target, "pred | overall:<c> | detail:<j>");
    auto* o_alpha = cmd->add_option("--alpha", alpha_blend, "overlay opacity");
    cmd->callback([&, o_target, o_alpha]() {
      action = [&, o_target, o_alpha]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"gradcam", argv_vec, out_dir, seed};
        Model model = Model::load(model_path);
        const Tensor raw = read_png_rgb8(image_path);
        const Tensor input = preprocess(raw, model.config().input_size);
        const std::string tgt = resolve(o_target, target, cfg, "target", std::string("pred"));
        GradCamTask task = GradCamTask::OverallClass;
        int index = 0;
        if (tgt == "pred") {
          if (!model.has_head_b()) throw DataError("gradcam: 'pred' target needs the overall head");
          Tensor batch({1, input.dim(0), input.dim(1), 3}, input.values());
          const auto out = model.forward(batch);
          for (int c = 1; c < model.config().num_classes; ++c) {
            if (out.probs_b.at({0, c}) > out.probs_b.at({0, index})) index = c;
          }
        } else if (tgt.rfind("overall:", 0) == 0) {
          index = std::stoi(tgt.substr(8));
        } else if (tgt.rfind("detail:", 0) == 0) {
          task = GradCamTask::Detail;
          index = std::stoi(tgt.substr(7));
        } else {
          throw UsageError(fmt::format("bad --target '{}'", tgt));
        }
        const Heatmap map = gradcam(model, input, task, index);
        const double alpha = resolve(o_alpha, alpha_blend, cfg, "alpha", 0.45);
        write_png_rgb8((fs::path(out_dir) / "overlay.png").string(), overlay(input, map, alpha));
        write_file_atomic((fs::path(out_dir) / "heatmap.csv").string(), map.to_csv());
        mw.config = {{"target", map.target}, {"alpha", alpha}};
        mw.inputs = {{"model", model_path}, {"image", image_path}};
        mw.outputs = {{"overlay", "overlay.png"}, {"heatmap", "heatmap.csv"}};
        mw.write();
        std::printf("target %s, argmax cell (%d,%d)\n", map.target.c_str(), map.argmax().first, map.argmax().second);
      };
    });
  }

  // export-embeddings
  {
    CLI::App* cmd = app.add_subcommand("export-embeddings", "dump shared embeddings with labels");
    add_common(cmd);
    cmd->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    cmd->add_option("--model", model_path, "checkpoint prefix")->required();
    auto* o_style = cmd->add_option("--style", style_str, "2class | 3class");
    cmd->callback([&, o_style]() {
      action = [&, o_style]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"export-embeddings", argv_vec, out_dir, seed};
        Model model = Model::load(model_path);
        const LabelStyle style = parse_style(resolve(o_style, style_str, cfg, "style", std::string("3class")));
        const Dataset ds = load_manifest(manifest_path, style, model.config().input_size);
        export_embeddings(model, ds, (fs::path(out_dir) / "embeddings.csv").string());
        mw.config = {{"style", style_name(style)}};
        mw.inputs = {{"manifest", manifest_path}, {"model", model_path}};
        mw.outputs = {{"embeddings", "embeddings.csv"}};
        mw.write();
        std::puts((fs::path(out_dir) / "embeddings.csv").string().c_str());
      };
    });
  }

  // benchmark
  {
    CLI::App* cmd = app.add_subcommand("benchmark", "full synthetic MT-vs-ST study across seeds");
    add_common(cmd);
    auto* o_seeds = cmd->add_option("--seeds", seeds, "number of seeds");
    auto* o_size = cmd->add_option("--image-size", image_size, "phantom size");
    auto* o_epochs = cmd->add_option("--epochs", epochs, "student schedule length");
    auto* o_tepochs = cmd->add_option("--teacher-epochs", teacher_epochs, "teacher schedule length");
    auto* o_nepochs = cmd->add_option("--noise-epochs", noise_epochs, "hard-pseudo pair schedule length");
    auto* o_batch = cmd->add_option("--batch", batch, "batch size");
    auto* o_la = cmd->add_option("--lambda-a", lambda_a, "detail-task weight");
    auto* o_lb = cmd->add_option("--lambda-b", lambda_b, "overall-task weight");
    auto* o_probes = cmd->add_option("--gradcam-probes", probes, "localization probes per seed");
    auto* o_b = cmd->add_option("--b-resamples", b_resamples, "bootstrap replicates");
    auto* o_workers = cmd->add_option("--workers", workers, "worker processes (0 = auto, capped by FMTK_THREADS)");
    auto* o_tc = cmd->add_option("--teacher-count", teacher_count, "Teacher set size");
    auto* o_tr = cmd->add_option("--train-count", train_count, "Q train rows");
    auto* o_va = cmd->add_option("--val-count", val_count, "Q val rows");
    auto* o_te = cmd->add_option("--test-count", test_count, "Q test rows");
    cmd->callback([&]() {
      action = [&, o_seeds, o_size, o_epochs, o_tepochs, o_nepochs, o_batch, o_la, o_lb, o_probes, o_b, o_workers,
                o_tc, o_tr, o_va, o_te]() {
        const json cfg = load_config(config_path);
        ManifestWriter mw{"benchmark", argv_vec, out_dir, seed};
        BenchmarkOptions opts;
        opts.seeds = resolve(o_seeds, seeds, cfg, "seeds", 5);
        opts.base_seed = seed;
        opts.out_dir = out_dir;
        opts.image_size = resolve(o_size, image_size, cfg, "image_size", 32);
        opts.student_epochs = resolve(o_epochs, epochs, cfg, "epochs", 18);
        opts.teacher_epochs = resolve(o_tepochs, teacher_epochs, cfg, "teacher_epochs", 14);
        opts.noise_epochs = resolve(o_nepochs, noise_epochs, cfg, "noise_epochs", 12);
        opts.batch_size = resolve(o_batch, batch, cfg, "batch_size", 32);
        opts.lambda_a = resolve(o_la, lambda_a, cfg, "lambda_a", 1.0);
        opts.lambda_b = resolve(o_lb, lambda_b, cfg, "lambda_b", 1.0);
        opts.gradcam_probes = resolve(o_probes, probes, cfg, "gradcam_probes", 32);
        opts.b_resamples = resolve(o_b, b_resamples, cfg, "b_resamples", 400);
        opts.workers = resolve(o_workers, workers, cfg, "workers", 0);
        opts.teacher_count = resolve(o_tc, teacher_count, cfg, "teacher_count", 300);
        opts.train_count = resolve(o_tr, train_count, cfg, "train_count", 600);
        opts.val_count = resolve(o_va, val_count, cfg, "val_count", 60);
        opts.test_count = resolve(o_te, test_count, cfg, "test_count", 200);
        run_benchmark(opts, self_exe);
        mw.config = opts.to_json();
        mw.outputs = {{"report", "benchmark_report.json"}, {"text", "benchmark_report.txt"}};
        mw.write();
        std::fputs(read_file((fs::path(out_dir) / "benchmark_report.txt").string()).c_str(), stdout);
      };
    });
  }

  // hidden worker entry for benchmark fan-out
  {
    CLI::App* cmd = app.add_subcommand("benchmark-worker");
    cmd->group("");  // hidden
    std::string opts_path;
    int index = 0;
    cmd->add_option("--options", opts_path)->required();
    cmd->add_option("--index", index)->required();
    cmd->callback([&, &opts_path, &index]() {
      action = [&, &opts_path, &index]() {
        const BenchmarkOptions opts = BenchmarkOptions::from_json(json::parse(read_file(opts_path)));
        run_benchmark_seed(opts, index);
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fflush(stdout);
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  try {
    action();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    exit_code = 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    exit_code = 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    exit_code = 3;
  }
  return exit_code;
}
