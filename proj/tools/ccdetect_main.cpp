// ccdetect: synthesize corpora, train the detector, evaluate, and render
// Eigen-CAM heatmaps, from one subcommand-style binary.

#include <CLI11.hpp>

#include "ccyd/dataset.hpp"
#include "ccyd/eigencam.hpp"
#include "ccyd/evalmetrics.hpp"
#include "ccyd/image_io.hpp"
#include "ccyd/plots.hpp"
#include "ccyd/postprocess.hpp"
#include "ccyd/runconfig.hpp"
#include "ccyd/train.hpp"
#include "ccyd/weightfile.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ccyd;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string timestamp_name() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "run-%Y%m%d-%H%M%S", &tm);
  return buf;
}

void check_model_matches(const DetectorWeights& w, const DetectorConfig& cfg) {
  for (const auto& spec : layer_specs(cfg)) {
    auto check = [&w, &spec](const std::string& name, const std::vector<int>& shape) {
      auto it = w.find(name);
      if (it == w.end())
        throw std::invalid_argument("model file is missing layer " + name +
                                    " required by the configured architecture");
      if (it->second.shape() != shape)
        throw std::invalid_argument("model layer " + name + " has shape " +
                                    shape_str(it->second.shape()) + ", config expects " +
                                    shape_str(shape));
    };
    check(spec.name + ".weight", {spec.out_ch, spec.in_ch, spec.k, spec.k});
    check(spec.name + ".bias", {spec.out_ch});
  }
}

std::vector<const AnnotatedImage*> filter_subjects(const std::vector<AnnotatedImage>& corpus,
                                                   const std::set<std::string>& subjects) {
  std::vector<const AnnotatedImage*> out;
  for (const auto& img : corpus)
    if (subjects.empty() || subjects.count(img.subject_id)) out.push_back(&img);
  return out;
}

void emit_report(const EvalReport& r, const fs::path& dir, const std::string& prefix) {
  {
    std::ofstream f(dir / (prefix + "report.json"));
    f << r.to_json() << "\n";
  }
  if (r.roc_defined) {
    write_curve_csv((dir / (prefix + "roc.csv")).string(), r.roc, "fpr", "tpr");
    write_curve_csv((dir / (prefix + "pr.csv")).string(), r.pr, "recall", "precision");
    write_curve_svg((dir / (prefix + "roc.svg")).string(), r.roc, "false positive rate",
                    "true positive rate", "ROC (AUC " + std::to_string(r.auc).substr(0, 5) + ")");
    write_curve_svg((dir / (prefix + "pr.svg")).string(), r.pr, "recall", "precision",
                    "Precision-Recall");
  }
}

int cmd_synth(const std::string& out, int subjects, int slices, int size, std::uint64_t seed) {
  if (subjects < 2 || subjects % 2 != 0)
    throw std::invalid_argument("--subjects must be an even count >= 2 (split across HC/APD)");
  auto corpus = generate_synthetic(subjects / 2, slices, size, seed);
  fs::create_directories(out);
  save_corpus(corpus, out);
  std::cout << "wrote " << corpus.size() << " images (" << subjects << " subjects x " << slices
            << " slices, size " << size << ") to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& config_path, int rounds,
              const std::string& out, std::string run_name, double fraction,
              std::optional<int> epochs, std::optional<int> batch_size,
              std::optional<double> lr, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  if (epochs) cfg.train.epochs = *epochs;
  if (batch_size) cfg.train.batch_size = *batch_size;
  if (lr) cfg.train.lr = static_cast<float>(*lr);
  if (seed) cfg.train.seed = *seed;
  cfg.validate();
  if (rounds < 1) throw std::invalid_argument("--rounds must be >= 1");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("--fraction must be in (0,1)");

  auto corpus = load_corpus(data);
  if (run_name.empty()) run_name = timestamp_name();
  const fs::path run_dir = fs::path(out) / run_name;
  fs::create_directories(run_dir);
  cfg.save((run_dir / "resolved_config.json").string());

  auto results = holdout(corpus, rounds, fraction, cfg.detector, cfg.train);

  double acc_sum = 0, auc_sum = 0, iou_sum = 0;
  int auc_n = 0;
  json rounds_json = json::array();
  for (const auto& rr : results) {
    const std::string p = "round" + std::to_string(rr.split.round_id) + "_";
    save_weights((run_dir / (p + "weights.ccyd")).string(), rr.weights);
    write_train_log_csv((run_dir / (p + "trainlog.csv")).string(), rr.log);
    emit_report(rr.report, run_dir, p);
    {
      std::ofstream f(run_dir / (p + "split.json"));
      f << json{{"round", rr.split.round_id},
                {"fraction", rr.split.fraction},
                {"train_subjects", rr.split.train_subjects},
                {"test_subjects", rr.split.test_subjects}}
               .dump(2)
        << "\n";
    }
    acc_sum += rr.report.accuracy;
    iou_sum += rr.report.detection_iou.mean;
    if (rr.report.roc_defined) {
      auc_sum += rr.report.auc;
      ++auc_n;
    }
    rounds_json.push_back({{"round", rr.split.round_id},
                           {"accuracy", rr.report.accuracy},
                           {"auc", rr.report.roc_defined ? json(rr.report.auc) : json(nullptr)},
                           {"mean_iou", rr.report.detection_iou.mean}});
    for (const auto& wmsg : rr.log.warnings) std::cerr << "warning: " << wmsg << "\n";
  }
  const double mean_acc = acc_sum / results.size();
  json summary{{"rounds", rounds_json},
               {"mean_accuracy", mean_acc},
               {"mean_auc", auc_n ? json(auc_sum / auc_n) : json(nullptr)},
               {"mean_detection_iou", iou_sum / results.size()}};
  {
    std::ofstream f(run_dir / "summary.json");
    f << summary.dump(2) << "\n";
  }
  std::cout << "run dir: " << run_dir.string() << "\n";
  std::cout << "mean accuracy over " << results.size() << " round(s): " << mean_acc << "\n";
  if (auc_n) std::cout << "mean AUC: " << auc_sum / auc_n << "\n";
  return 0;
}

int cmd_eval(const std::string& model, const std::string& data, const std::string& split_file,
             const std::string& config_path, const std::string& out, float conf, float iou_thr) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  auto weights = load_weights(model);
  check_model_matches(weights, cfg.detector);
  auto corpus = load_corpus(data);
  std::set<std::string> subjects;
  if (!split_file.empty()) {
    std::ifstream f(split_file);
    if (!f) throw std::invalid_argument("cannot read split file " + split_file);
    json j = json::parse(f);
    for (const auto& s : j.at("test_subjects")) subjects.insert(s.get<std::string>());
  }
  auto subset = filter_subjects(corpus, subjects);
  if (subset.empty()) throw std::invalid_argument("no images selected for evaluation");
  EvalReport r = evaluate(subset, weights, cfg.detector, conf, iou_thr);
  fs::create_directories(out);
  emit_report(r, out, "");
  if (!r.roc_defined)
    std::cerr << "ROC/PR refused: evaluation subset contains a single class; "
                 "other metrics were still emitted\n";
  std::cout << "accuracy " << r.accuracy;
  if (r.roc_defined) std::cout << ", AUC " << r.auc;
  std::cout << ", mean IoU " << r.detection_iou.mean << "\n";
  std::cout << "report: " << (fs::path(out) / "report.json").string() << "\n";
  return 0;
}

int cmd_cam(const std::string& model, const std::string& image_path, const std::string& data,
            const std::string& layers_arg, const std::string& config_path, const std::string& out,
            float conf, float iou_thr) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  auto weights = load_weights(model);
  check_model_matches(weights, cfg.detector);
  CamRunConfig cam;
  cam.conf_threshold = conf;
  cam.iou_threshold = iou_thr;
  if (!layers_arg.empty()) {
    std::stringstream ss(layers_arg);
    std::string item;
    while (std::getline(ss, item, ',')) cam.layers.push_back(item);
  } else {
    auto defaults = default_cam_layers();
    cam.layers.assign(defaults.begin(), defaults.end());
  }
  fs::create_directories(out);

  if (!image_path.empty()) {
    int w = 0, h = 0;
    auto pixels = read_gray_png(image_path, w, h);
    if (w != cfg.detector.input_size || h != cfg.detector.input_size)
      throw std::invalid_argument("image must be " + std::to_string(cfg.detector.input_size) +
                                  "x" + std::to_string(cfg.detector.input_size) + ", got " +
                                  std::to_string(w) + "x" + std::to_string(h));
    Tensor t = Tensor::from_data({1, 1, h, w}, pixels);
    NoGradGuard ng;
    Heatmap hm = multilayer_cam(weights, cfg.detector, t, cam.layers);
    write_heatmap_png((fs::path(out) / "heatmap.png").string(), hm.values, hm.width, hm.height);
    write_overlay_png((fs::path(out) / "overlay.png").string(), pixels, hm.values, w, h);
    ImageVerdict v = classify_image(
        nms(decode(forward(weights, cfg.detector, t), cfg.detector, conf), iou_thr));
    json stats{{"layers", cam.layers}, {"abstained", v.abstained()}};
    if (!v.abstained()) {
      stats["predicted_class"] = v.predicted_class == kClassAPD ? "APD" : "HC";
      stats["confidence"] = v.confidence;
      stats["box"] = {v.winner->box.x1, v.winner->box.y1, v.winner->box.x2, v.winner->box.y2};
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < hm.values.size(); ++i)
      if (hm.values[i] > hm.values[best]) best = i;
    stats["argmax"] = {static_cast<int>(best % static_cast<std::size_t>(hm.width)),
                       static_cast<int>(best / static_cast<std::size_t>(hm.width))};
    std::ofstream f(fs::path(out) / "stats.json");
    f << stats.dump(2) << "\n";
    std::cout << "wrote heatmap.png, overlay.png, stats.json to " << out << "\n";
    if (v.abstained()) std::cerr << "note: no detection survived; overlay covers the full image\n";
    return 0;
  }

  // batch mode over a corpus directory
  auto corpus = load_corpus(data);
  std::vector<const AnnotatedImage*> subset;
  for (const auto& img : corpus) subset.push_back(&img);
  CorpusCamStats stats = average_cam(subset, weights, cfg.detector, cam);
  write_heatmap_png((fs::path(out) / "average_cam.png").string(), stats.average.values,
                    stats.average.width, stats.average.height);
  json j{{"layers", cam.layers},
         {"n_images", stats.n_images},
         {"n_abstained", stats.n_abstained},
         {"brightest_in_midbody_rate", stats.brightest_in_region_rate},
         {"mean_top5_mass_in_midbody", stats.mean_top5_mass_in_region}};
  std::ofstream f(fs::path(out) / "cam_stats.json");
  f << j.dump(2) << "\n";
  std::cout << "brightest-in-midbody rate: " << stats.brightest_in_region_rate << " over "
            << stats.n_images - stats.n_abstained << " detected images (" << stats.n_abstained
            << " abstained)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corpus-callosum-style detector: synthetic data, training, evaluation, Eigen-CAM"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string s_out;
  int s_subjects = 40, s_slices = 8, s_size = 128;
  std::uint64_t s_seed = 0;
  synth->add_option("--out", s_out, "output corpus directory")->required();
  synth->add_option("--subjects", s_subjects, "total subjects (even, half per class)");
  synth->add_option("--slices", s_slices, "slices per subject");
  synth->add_option("--size", s_size, "image size (multiple of 32)");
  synth->add_option("--seed", s_seed, "generator seed");

  auto* train = app.add_subcommand("train", "hold-out training and evaluation");
  std::string t_data, t_config, t_out = "runs", t_run_name;
  int t_rounds = 3;
  double t_fraction = 0.8;
  std::optional<int> t_epochs, t_batch;
  std::optional<double> t_lr;
  std::optional<std::uint64_t> t_seed;
  train->add_option("--data", t_data, "corpus directory")->required();
  train->add_option("--config", t_config, "JSON run config");
  train->add_option("--rounds", t_rounds, "hold-out rounds");
  train->add_option("--out", t_out, "output root (a run directory is created inside)");
  train->add_option("--run-name", t_run_name, "run directory name (default: timestamped)");
  train->add_option("--fraction", t_fraction, "train fraction");
  train->add_option("--epochs", t_epochs, "override epochs");
  train->add_option("--batch-size", t_batch, "override batch size");
  train->add_option("--lr", t_lr, "override learning rate");
  train->add_option("--seed", t_seed, "override master seed");

  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  std::string e_model, e_data, e_split, e_config, e_out = "eval_out";
  float e_conf = 0.25f, e_iou = 0.45f;
  eval->add_option("--model", e_model, "CCYD weight file")->required();
  eval->add_option("--data", e_data, "corpus directory")->required();
  eval->add_option("--split", e_split, "JSON split file with test_subjects");
  eval->add_option("--config", e_config, "JSON run config");
  eval->add_option("--out", e_out, "output directory");
  eval->add_option("--conf", e_conf, "confidence threshold");
  eval->add_option("--iou", e_iou, "NMS IoU threshold");

  auto* cam = app.add_subcommand("cam", "Eigen-CAM heatmaps");
  std::string c_model, c_image, c_data, c_layers, c_config, c_out = "cam_out";
  float c_conf = 0.25f, c_iou = 0.45f;
  cam->add_option("--model", c_model, "CCYD weight file")->required();
  cam->add_option("--image", c_image, "single PNG image");
  cam->add_option("--data", c_data, "corpus directory (batch mode, average CAM)");
  cam->add_option("--layers", c_layers, "comma-separated capture layers");
  cam->add_option("--config", c_config, "JSON run config");
  cam->add_option("--out", c_out, "output directory");
  cam->add_option("--conf", c_conf, "confidence threshold");
  cam->add_option("--iou", c_iou, "NMS IoU threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(s_out, s_subjects, s_slices, s_size, s_seed);
    if (train->parsed())
      return cmd_train(t_data, t_config, t_rounds, t_out, t_run_name, t_fraction, t_epochs,
                       t_batch, t_lr, t_seed);
    if (eval->parsed()) return cmd_eval(e_model, e_data, e_split, e_config, e_out, e_conf, e_iou);
    if (cam->parsed()) {
      if (c_image.empty() == c_data.empty())
        throw std::invalid_argument("cam: give exactly one of --image or --data");
      return cmd_cam(c_model, c_image, c_data, c_layers, c_config, c_out, c_conf, c_iou);
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
