#include "cli.hpp"

#include "kpdet/detector.hpp"
#include "kpdet/error.hpp"
#include "kpdet/evaluation.hpp"
#include "kpdet/features.hpp"
#include "kpdet/mesh.hpp"
#include "kpdet/model.hpp"
#include "kpdet/neighborhoods.hpp"
#include "kpdet/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace kpdet::cli {

namespace {

namespace fs = std::filesystem;

struct RunConfig {
  std::vector<std::string> inputs;
  std::string model_path;
  std::string truth_path;
  std::string split_path;
  std::string detections_dir;
  fs::path out_dir = ".";

  int omega = 6;
  int gamma = 9;
  int rings = 5;
  int select_rings = 5;
  double threshold = kDefaultThreshold;
  bool export_saliency = false;

  std::string n_range;
  std::string sigma_range = "0.01:0.1:0.01";
  std::string r_grid = "0:0.1:0.005";

  std::uint64_t seed = 1;
  std::string hidden = "800,200,50";
  std::string rho = "0.15,0.15,0.1";
  std::string beta = "4,4,4";
  double step_size = 0.01;
  double momentum = 0.9;
  double decay = 0.5;
  int batch_size = 256;
  int pretrain_epochs = 100;
  int head_epochs = 200;
  int finetune_epochs = 100;
  std::optional<double> positive_weight;
  std::string first_decoder = "linear";
};

// ---- argument helpers -------------------------------------------------------

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw config_error("bad number '" + text + "' in " + what);
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, sep);) parts.push_back(part);
  return parts;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  for (const auto& p : split(text, ',')) values.push_back(parse_double(p, what));
  if (values.empty()) throw config_error(what + " is empty");
  return values;
}

/// "lo:hi:step" (inclusive) or a comma list.
std::vector<double> parse_real_range(const std::string& text, const std::string& what) {
  if (text.find(':') == std::string::npos) return parse_list(text, what);
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw config_error(what + " must be lo:hi:step or a comma list");
  return make_grid(parse_double(parts[0], what), parse_double(parts[1], what), parse_double(parts[2], what));
}

/// "lo:hi" (inclusive) or a comma list.
std::vector<int> parse_int_range(const std::string& text, const std::string& what) {
  std::vector<int> values;
  auto to_int = [&](const std::string& s) {
    const double d = parse_double(s, what);
    if (d != static_cast<int>(d)) throw config_error(what + " needs integers, got '" + s + "'");
    return static_cast<int>(d);
  };
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 2) throw config_error(what + " must be lo:hi or a comma list");
    const int lo = to_int(parts[0]), hi = to_int(parts[1]);
    if (hi < lo) throw config_error(what + " is empty");
    for (int v = lo; v <= hi; ++v) values.push_back(v);
  } else {
    for (const auto& p : split(text, ',')) values.push_back(to_int(p));
  }
  if (values.empty()) throw config_error(what + " is empty");
  for (int v : values) {
    if (v < 1) throw config_error(what + " values must be >= 1");
  }
  return values;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw config_error(what + " path is required");
  if (!fs::is_regular_file(path)) throw input_error(what + " not found: " + path);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write " + path.string());
  return out;
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw input_error("cannot create output directory " + dir.string());
}

std::string mesh_id(const std::string& path) { return fs::path(path).stem().string(); }

bool is_feature_file(const std::string& path) { return fs::path(path).extension() == ".kpf"; }

FeatureOptions feature_options(const RunConfig& cfg) {
  FeatureOptions o;
  o.omega = cfg.omega;
  o.gamma = cfg.gamma;
  o.rings = cfg.rings;
  if (o.omega < 0) throw config_error("omega must be >= 0");
  if (o.gamma < 1) throw config_error("gamma must be >= 1");
  if (o.rings < 1) throw config_error("rings must be >= 1");
  return o;
}

NetworkModel read_model(const std::string& path) {
  require_file(path, "model");
  auto in = open_in(path);
  try {
    return load_model(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

GroundTruth read_truth(const std::string& path) {
  require_file(path, "ground truth");
  auto in = open_in(path);
  try {
    return read_ground_truth(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

// ---- subcommands -------------------------------------------------------------

void cmd_features(const RunConfig& cfg, std::ostream& out) {
  const auto options = feature_options(cfg);
  if (cfg.inputs.empty()) throw config_error("features needs at least one mesh");
  for (const auto& p : cfg.inputs) require_file(p, "mesh");
  prepare_out_dir(cfg.out_dir);
  for (const auto& p : cfg.inputs) {
    const auto features = build_feature_matrix(load_mesh(p), options);
    const auto target = cfg.out_dir / (mesh_id(p) + ".kpf");
    auto file = open_out(target);
    write_features(file, features);
    out << target.string() << ": " << features.values.rows() << " x " << features.values.cols() << '\n';
  }
}

TrainingConfig training_config(const RunConfig& cfg) {
  TrainingConfig t;
  const auto hidden = parse_list(cfg.hidden, "hidden");
  const auto rho = parse_list(cfg.rho, "rho");
  const auto beta = parse_list(cfg.beta, "beta");
  if (hidden.size() != 3 || rho.size() != 3 || beta.size() != 3) {
    throw config_error("hidden, rho and beta each need three values (one per autoencoder)");
  }
  t.dimensions = {0, static_cast<Eigen::Index>(hidden[0]), static_cast<Eigen::Index>(hidden[1]),
                  static_cast<Eigen::Index>(hidden[2]), 1};
  for (std::size_t k = 0; k < 3; ++k) t.sparsity[k] = {rho[k], beta[k]};
  t.optimizer = {cfg.step_size, cfg.momentum, cfg.decay, cfg.batch_size};
  t.pretrain_epochs = cfg.pretrain_epochs;
  t.head_epochs = cfg.head_epochs;
  t.finetune_epochs = cfg.finetune_epochs;
  t.seed = cfg.seed;
  t.positive_weight = cfg.positive_weight;
  if (cfg.first_decoder == "linear") {
    t.first_decoder = Activation::Identity;
  } else if (cfg.first_decoder == "sigmoid") {
    t.first_decoder = Activation::Sigmoid;
  } else {
    throw config_error("first-decoder must be 'linear' or 'sigmoid'");
  }
  return t;
}

void echo_config(std::ostream& out, const RunConfig& cfg, const TrainingConfig& t, const FeatureMatrix& sample,
                 const std::vector<std::string>& ids) {
  out.precision(17);
  out << "# kpdet train configuration\n";
  out << "omega=" << sample.layout.options.omega << "\ngamma=" << sample.layout.options.gamma
      << "\nrings=" << sample.layout.options.rings << '\n';
  out << "n-range=" << cfg.n_range << "\nsigma-range=" << cfg.sigma_range << '\n';
  out << "seed=" << t.seed << '\n';
  out << "hidden=" << t.dimensions[1] << ',' << t.dimensions[2] << ',' << t.dimensions[3] << '\n';
  out << "rho=" << t.sparsity[0].rho << ',' << t.sparsity[1].rho << ',' << t.sparsity[2].rho << '\n';
  out << "beta=" << t.sparsity[0].beta << ',' << t.sparsity[1].beta << ',' << t.sparsity[2].beta << '\n';
  out << "step-size=" << t.optimizer.step_size << "\nmomentum=" << t.optimizer.momentum
      << "\ndecay=" << t.optimizer.decay << "\nbatch-size=" << t.optimizer.batch_size << '\n';
  out << "pretrain-epochs=" << t.pretrain_epochs << "\nhead-epochs=" << t.head_epochs
      << "\nfinetune-epochs=" << t.finetune_epochs << '\n';
  if (t.positive_weight) out << "positive-weight=" << *t.positive_weight << '\n';
  out << "first-decoder=" << cfg.first_decoder << '\n';
  out << "# dimension chain " << t.dimensions[0] << "->" << t.dimensions[1] << "->" << t.dimensions[2] << "->"
      << t.dimensions[3] << "->1\n";
  out << "# training meshes:";
  for (const auto& id : ids) out << ' ' << id;
  out << '\n';
}

void cmd_train(RunConfig cfg, std::ostream& out) {
  const auto options = feature_options(cfg);
  auto config = training_config(cfg);
  if (cfg.n_range.empty()) cfg.n_range = "11:22";
  const auto n_values = parse_int_range(cfg.n_range, "n-range");
  const auto sigmas = parse_real_range(cfg.sigma_range, "sigma-range");
  if (cfg.inputs.empty()) throw config_error("train needs mesh or feature files");
  for (const auto& p : cfg.inputs) require_file(p, "training input");
  const auto truth = read_truth(cfg.truth_path);

  std::optional<std::set<std::string>> split_ids;
  if (!cfg.split_path.empty()) {
    require_file(cfg.split_path, "split list");
    auto in = open_in(cfg.split_path);
    split_ids.emplace();
    for (std::string line; std::getline(in, line);) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      split_ids->insert(line.substr(first, line.find_last_not_of(" \t\r") - first + 1));
    }
  }
  prepare_out_dir(cfg.out_dir);

  std::vector<std::string> ids;
  std::vector<FeatureMatrix> features;
  std::vector<std::optional<Positions>> positions;
  for (const auto& p : cfg.inputs) {
    const auto id = mesh_id(p);
    if (split_ids && !split_ids->count(id)) continue;
    ids.push_back(id);
    if (is_feature_file(p)) {
      auto in = open_in(p);
      features.push_back(read_features(in));
      positions.emplace_back();
    } else {
      const auto mesh = load_mesh(p);
      features.push_back(build_feature_matrix(mesh, options));
      positions.emplace_back(mesh.positions());
    }
  }
  if (ids.empty()) throw input_error("no training inputs are listed in the split");

  std::vector<TrainingMesh> meshes;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    meshes.push_back({ids[i], &features[i], positions[i] ? &*positions[i] : nullptr});
  }
  const auto labeled = build_labeled_set(truth, meshes, n_values, sigmas);
  config.dimensions[0] = labeled.layout.dimension();

  const auto model = train_model(config, labeled);
  {
    auto file = open_out(cfg.out_dir / "model.kpm");
    save_model(file, model);
  }
  {
    auto file = open_out(cfg.out_dir / "loss_history.csv");
    write_loss_history(file, model);
  }
  {
    auto file = open_out(cfg.out_dir / "train_config.txt");
    echo_config(file, cfg, config, features.front(), ids);
  }
  out << "trained on " << labeled.labels.size() << " samples (" << labeled.positives() << " positive) from "
      << ids.size() << " meshes; model " << model_id(model) << '\n';
}

// Feature options for detection: the model's, unless overridden on the command line.
FeatureOptions detection_options(const NetworkModel& model, const RunConfig& cfg, const CLI::App& sub) {
  auto o = model.layout.options;
  if (sub.count("--omega")) o.omega = cfg.omega;
  if (sub.count("--gamma")) o.gamma = cfg.gamma;
  if (sub.count("--rings")) o.rings = cfg.rings;
  return o;
}

void cmd_detect(const RunConfig& cfg, const CLI::App& sub, bool export_only, std::ostream& out) {
  if (cfg.inputs.empty()) throw config_error("no meshes given");
  for (const auto& p : cfg.inputs) require_file(p, "mesh");
  const auto model = read_model(cfg.model_path);
  if (cfg.select_rings < 1) throw config_error("select-rings must be >= 1");
  const auto options = detection_options(model, cfg, sub);
  prepare_out_dir(cfg.out_dir);

  for (const auto& p : cfg.inputs) {
    const auto mesh = load_mesh(p);
    const auto map = compute_saliency(build_feature_matrix(mesh, options), model);
    const auto result = select_keypoints(map, compute_rings(mesh, cfg.select_rings), cfg.threshold);
    const auto id = mesh_id(p);
    const auto keypoint_file = cfg.out_dir / (id + (export_only ? "_keypoints.txt" : ".kp"));
    {
      auto file = open_out(keypoint_file);
      write_keypoints(file, result);
    }
    if (export_only || cfg.export_saliency) {
      auto file = open_out(cfg.out_dir / (id + "_saliency.ply"));
      export_colored_mesh(file, mesh, map);
    }
    out << keypoint_file.string() << ": " << result.keypoints.size() << " keypoints\n";
  }
}

std::string setting_file_name(int n, double sigma) {
  auto key = setting_key(n, sigma);
  key.replace(key.find(','), 1, "_sigma");
  return "curves_n" + key + ".csv";
}

void cmd_eval(RunConfig cfg, std::ostream& out, std::ostream& err) {
  if (cfg.n_range.empty()) cfg.n_range = "2:23";
  const auto n_values = parse_int_range(cfg.n_range, "n-range");
  const auto sigmas = parse_real_range(cfg.sigma_range, "sigma-range");
  const auto r_grid = parse_real_range(cfg.r_grid, "r-grid");
  if (cfg.inputs.empty()) throw config_error("eval needs mesh files");
  if (cfg.detections_dir.empty()) throw config_error("detections directory is required");
  for (const auto& p : cfg.inputs) require_file(p, "mesh");
  std::vector<fs::path> detection_files;
  for (const auto& p : cfg.inputs) {
    detection_files.push_back(fs::path(cfg.detections_dir) / (mesh_id(p) + ".kp"));
    require_file(detection_files.back().string(), "detections");
  }
  const auto truth = read_truth(cfg.truth_path);
  prepare_out_dir(cfg.out_dir);

  struct Loaded {
    std::string id;
    Mesh mesh;
    std::vector<int> detected;
    const MeshGroundTruth* truth;
  };
  std::vector<Loaded> loaded;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const auto id = mesh_id(cfg.inputs[i]);
    const auto* gt = truth.find(id);
    if (gt == nullptr) throw input_error("unknown mesh id '" + id + "' in ground truth");
    auto in = open_in(detection_files[i]);
    loaded.push_back({id, load_mesh(cfg.inputs[i]), read_keypoints(in), gt});
  }

  std::vector<MetricCurves> settings;
  for (int n : n_values) {
    for (double sigma : sigmas) {
      std::vector<MetricCurves> per_mesh;
      for (const auto& l : loaded) {
        const auto clusters = clusters_for(*l.truth, &l.mesh.positions(), n, sigma);
        if (clusters.empty()) continue;
        const double diagonal = l.truth->diagonal > 0.0 ? l.truth->diagonal : l.mesh.diagonal();
        per_mesh.push_back(compute_metrics(l.detected, clusters, l.mesh.positions(), diagonal, r_grid));
      }
      if (per_mesh.empty()) {
        err << "warning: no ground-truth clusters for n=" << n << ", sigma=" << sigma << "; setting skipped\n";
        continue;
      }
      settings.push_back(average_curves(per_mesh));
      auto file = open_out(cfg.out_dir / setting_file_name(n, sigma));
      write_curves_csv(file, settings.back());
    }
  }
  if (settings.empty()) throw input_error("no setting has any ground-truth clusters");
  const auto average = average_curves(settings);
  auto file = open_out(cfg.out_dir / "curve_average.csv");
  write_curves_csv(file, average);
  out << "evaluated " << loaded.size() << " meshes over " << settings.size() << " settings\n";
}

// ---- option wiring ----------------------------------------------------------

// Splices "--key=value" arguments from a `--config` file in right after the
// subcommand, so flags given on the command line come later and win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw config_error("--config needs a file");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;
  require_file(config_path, "config file");
  auto in = open_in(config_path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw config_error(config_path + ": " + e.what());
  }
  std::vector<std::string> injected;
  for (const auto& item : items) {
    if (item.name.empty() || item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw config_error(config_path + ": sections are not supported");
    std::string value;
    for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
    injected.push_back("--" + item.name + "=" + value);
  }
  auto sub = std::find_if(rest.begin(), rest.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
  if (sub != rest.end()) ++sub;
  rest.insert(sub, injected.begin(), injected.end());
  return rest;
}

void add_common(CLI::App& sub, RunConfig& cfg) {
  sub.add_option("-o,--out-dir", cfg.out_dir, "Output directory")->capture_default_str();
}

void add_feature_flags(CLI::App& sub, RunConfig& cfg) {
  sub.add_option("--omega", cfg.omega, "Number of smoothed scales")->capture_default_str();
  sub.add_option("--gamma", cfg.gamma, "Spectral smoothing window")->capture_default_str();
  sub.add_option("--rings", cfg.rings, "Neighbourhood rings per vertex")->capture_default_str();
}

void add_detect_flags(CLI::App& sub, RunConfig& cfg) {
  sub.add_option("inputs", cfg.inputs, "Mesh files (.off, .ply)")->required();
  sub.add_option("-m,--model", cfg.model_path, "Trained model file")->required();
  sub.add_option("--threshold", cfg.threshold, "Minimum keypoint score")->capture_default_str();
  sub.add_option("--select-rings", cfg.select_rings, "Rings a keypoint must dominate")->capture_default_str();
  add_feature_flags(sub, cfg);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"3D keypoint detection on triangle meshes", "kpdet"};
  app.require_subcommand(1);
  app.footer("Every subcommand also accepts --config FILE: key=value lines whose keys are long option names.\n"
             "Options given on the command line override the file.");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  RunConfig cfg;

  auto* features = app.add_subcommand("features", "Compute per-vertex feature matrices");
  add_common(*features, cfg);
  add_feature_flags(*features, cfg);
  features->add_option("inputs", cfg.inputs, "Mesh files (.off, .ply)")->required();

  auto* train = app.add_subcommand("train", "Train a keypoint model");
  add_common(*train, cfg);
  add_feature_flags(*train, cfg);
  train->add_option("inputs", cfg.inputs, "Training meshes or .kpf feature files; the file stem is the mesh id")
      ->required();
  train->add_option("--truth", cfg.truth_path, "Ground-truth JSON")->required();
  train->add_option("--split", cfg.split_path, "File listing the training mesh ids, one per line");
  train->add_option("--n-range", cfg.n_range, "Annotator counts lo:hi or list [11:22]");
  train->add_option("--sigma-range", cfg.sigma_range, "Cluster radii lo:hi:step or list")->capture_default_str();
  train->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  train->add_option("--hidden", cfg.hidden, "Hidden sizes of the three autoencoders")->capture_default_str();
  train->add_option("--rho", cfg.rho, "Sparsity targets")->capture_default_str();
  train->add_option("--beta", cfg.beta, "Sparsity weights")->capture_default_str();
  train->add_option("--step-size", cfg.step_size)->capture_default_str();
  train->add_option("--momentum", cfg.momentum)->capture_default_str();
  train->add_option("--decay", cfg.decay, "Step-size factor after a non-improving epoch")->capture_default_str();
  train->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  train->add_option("--pretrain-epochs", cfg.pretrain_epochs)->capture_default_str();
  train->add_option("--head-epochs", cfg.head_epochs)->capture_default_str();
  train->add_option("--finetune-epochs", cfg.finetune_epochs)->capture_default_str();
  train->add_option("--positive-weight", cfg.positive_weight, "Default: negatives / positives");
  train->add_option("--first-decoder", cfg.first_decoder, "linear or sigmoid")->capture_default_str();

  auto* detect = app.add_subcommand("detect", "Detect keypoints with a trained model");
  add_common(*detect, cfg);
  add_detect_flags(*detect, cfg);
  detect->add_flag("--export-saliency", cfg.export_saliency, "Also write a colour-coded PLY");

  auto* eval = app.add_subcommand("eval", "Score detections against ground truth");
  add_common(*eval, cfg);
  eval->add_option("inputs", cfg.inputs, "Mesh files; detections are read from <detections>/<stem>.kp")->required();
  eval->add_option("--truth", cfg.truth_path, "Ground-truth JSON")->required();
  eval->add_option("--detections", cfg.detections_dir, "Directory of keypoint files")->required();
  eval->add_option("--n-range", cfg.n_range, "Annotator counts lo:hi or list [2:23]");
  eval->add_option("--sigma-range", cfg.sigma_range, "Cluster radii lo:hi:step or list")->capture_default_str();
  eval->add_option("--r-grid", cfg.r_grid, "Tolerances as diagonal fractions")->capture_default_str();

  auto* exporter = app.add_subcommand("export", "Write colour-coded saliency PLYs and keypoint sidecars");
  add_common(*exporter, cfg);
  add_detect_flags(*exporter, cfg);

  std::vector<std::string> reversed;
  try {
    const auto expanded = expand_config(args);
    reversed.assign(expanded.rbegin(), expanded.rend());
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidInput ? kBadInput : kConfigError;
  }
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    if (*features) {
      cmd_features(cfg, out);
    } else if (*train) {
      cmd_train(cfg, out);
    } else if (*detect) {
      cmd_detect(cfg, *detect, false, out);
    } else if (*eval) {
      cmd_eval(cfg, out, err);
    } else if (*exporter) {
      cmd_detect(cfg, *exporter, true, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::InvalidInput: return kBadInput;
      case ErrorKind::Config: return kConfigError;
      case ErrorKind::Internal: return kInternalError;
    }
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kSuccess;
}

}  // namespace kpdet::cli
