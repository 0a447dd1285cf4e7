#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

#include <CLI11.hpp>

#include "ircr/checkpoint.hpp"
#include "ircr/config.hpp"
#include "ircr/data.hpp"
#include "ircr/log.hpp"
#include "ircr/matching.hpp"
#include "ircr/priors.hpp"
#include "ircr/raster.hpp"
#include "ircr/tensor_io.hpp"
#include "ircr/trainer.hpp"
#include "svg.hpp"

namespace ircr::cli {

namespace fs = std::filesystem;

namespace {

// An output written under a hidden sibling name and moved into place on commit.
// Uncommitted outputs are deleted, so a failed command leaves nothing behind.
class Staged {
 public:
  explicit Staged(fs::path target) : target_(std::move(target)) {
    if (target_.empty()) throw std::invalid_argument("empty output path");
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    tmp_ = parent / ("." + target_.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
  }
  Staged(const Staged&) = delete;
  Staged& operator=(const Staged&) = delete;
  ~Staged() {
    std::error_code ec;
    if (!committed_) fs::remove_all(tmp_, ec);
  }

  const fs::path& path() const { return tmp_; }

  void commit() {
    fs::remove_all(target_);
    fs::rename(tmp_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path tmp_;
  bool committed_ = false;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(p.string() + ": cannot open for writing");
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.flush();
  if (!out) throw std::runtime_error(p.string() + ": write failed");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out = open_out(p);
  out << text;
  close_out(out, p);
}

config::RunConfig load_run_config(const std::string& path) {
  return path.empty() ? config::RunConfig{} : config::load_config(path);
}

Tensor plane_of(const Tensor& t) {
  if (t.rank() == 2) return t;
  if (t.rank() == 3 && t.channels() == 1) return t.channel(0);
  throw std::invalid_argument("expected an h x w or 1 x h x w intensity map");
}

// ---- gen-data -------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  std::size_t n_scenes = 0;
  std::size_t size = 64;
  double overlap = 0.2;
  std::string out;
  std::int64_t first_id = 0;
  double labeled_ratio = 0.0;
  std::string config;
};

void gen_data(const GenArgs& a) {
  config::RunConfig rc = load_run_config(a.config);
  rc.scene.size = a.size;
  rc.scene.overlap_fraction = a.overlap;
  std::vector<data::Scene> scenes = data::generate_dataset(rc.scene, a.n_scenes, a.seed, a.first_id);
  if (a.labeled_ratio > 0.0 && !scenes.empty()) {
    auto [lab, unl] = data::split_labeled(scenes, a.labeled_ratio, a.seed);
    std::map<std::int64_t, bool> flag;
    for (const auto& s : lab) flag[s.id] = true;
    for (auto& s : scenes) s.labeled = flag.count(s.id) > 0;
  }
  Staged out(a.out);
  data::save_dataset(out.path(), scenes);
  out.commit();
  log::get()->info("wrote {} scenes to {}", scenes.size(), a.out);
}

// ---- fit-priors -----------------------------------------------------------

struct FitArgs {
  std::string data_dir;
  std::uint64_t seed = 0;
  std::size_t n_scenes = 0;
  std::size_t size = 64;
  double overlap = 0.2;
  std::optional<double> bandwidth;
  std::string out;
};

void fit_priors(const FitArgs& a) {
  std::vector<data::Scene> scenes;
  if (!a.data_dir.empty()) {
    scenes = data::load_dataset(a.data_dir);
  } else {
    if (a.n_scenes == 0) throw std::invalid_argument("fit-priors: give --data or --n-scenes");
    data::SceneConfig sc;
    sc.size = a.size;
    sc.overlap_fraction = a.overlap;
    scenes = data::generate_dataset(sc, a.n_scenes, a.seed);
  }
  std::vector<priors::FeatureVector> samples;
  for (const data::Scene& s : scenes) {
    const auto f = priors::extract_all_features(s.gt_labels, plane_of(s.image));
    samples.insert(samples.end(), f.begin(), f.end());
  }
  const priors::PriorBank bank = priors::fit_kde(samples, a.bandwidth);
  Staged out(a.out);
  priors::save_bank(out.path(), bank);
  out.commit();
  log::get()->info("fitted prior bank on {} instances from {} scenes", samples.size(), scenes.size());
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string priors;
  std::string config;
  std::string out;
  std::string log_path;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> lr;
  std::optional<double> labeled_ratio;
};

void train(const TrainArgs& a) {
  config::RunConfig rc = load_run_config(a.config);
  trainer::TrainConfig& tc = rc.train;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.seed) tc.seed = *a.seed;
  if (a.mode) tc.mode = trainer::parse_mode(*a.mode);
  if (a.lr) tc.lr = *a.lr;
  if (a.labeled_ratio) tc.labeled_ratio = *a.labeled_ratio;

  std::vector<data::Scene> scenes = data::load_dataset(a.data_dir);
  if (scenes.empty()) throw std::invalid_argument("train: dataset " + a.data_dir + " is empty");
  std::vector<data::Scene> labeled;
  std::vector<data::Scene> unlabeled;
  const bool flagged = std::any_of(scenes.begin(), scenes.end(), [](const data::Scene& s) { return s.labeled; });
  if (flagged) {
    for (auto& s : scenes) (s.labeled ? labeled : unlabeled).push_back(std::move(s));
  } else {
    std::tie(labeled, unlabeled) = data::split_labeled(scenes, tc.labeled_ratio, tc.split_seed);
  }
  std::optional<priors::PriorBank> bank;
  if (!a.priors.empty()) bank = priors::load_bank(a.priors);

  Staged ckpt(a.out);
  const fs::path log_target = a.log_path.empty() ? fs::path(a.out) / "run_log.csv" : fs::path(a.log_path);
  std::optional<Staged> log_file;
  fs::path log_path;
  if (a.log_path.empty()) {
    fs::create_directories(ckpt.path());
    log_path = ckpt.path() / "run_log.csv";
  } else {
    log_file.emplace(log_target);
    log_path = log_file->path();
  }
  std::ofstream log_out = open_out(log_path);
  log_out << trainer::kRunLogHeader << '\n';

  trainer::Trainer tr(tc, std::move(labeled), std::move(unlabeled), std::move(bank));
  log::get()->info("training {} epochs x {} steps, mode {}", tc.epochs, tr.steps_per_epoch(), trainer::to_string(tc.mode));
  tr.run([&](const trainer::StepLog& l) { trainer::write_log_line(log_out, l); });
  close_out(log_out, log_path);
  log_out.close();
  tr.save(ckpt.path());
  ckpt.commit();
  if (log_file) log_file->commit();
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string config;
  std::string out;
};

void eval(const EvalArgs& a) {
  const config::RunConfig rc = load_run_config(a.config);
  const checkpoint::Checkpoint ckpt = checkpoint::load_checkpoint(a.checkpoint, rc.train.model);
  const std::vector<data::Scene> scenes = data::load_dataset(a.data_dir);
  const trainer::EvalResult res = trainer::evaluate(ckpt.student, scenes, rc.train.wbis);
  Staged out(a.out);
  std::ofstream f = open_out(out.path());
  trainer::write_eval_csv(f, res);
  close_out(f, out.path());
  f.close();
  out.commit();
  if (res.means) {
    log::get()->info("{} scenes: AJI {:.4f} Dice {:.4f} F1 {:.4f}", res.rows.size(), res.means->aji, res.means->dice,
                     res.means->f1_obj);
  } else {
    log::get()->info("no scenes");
  }
}

// ---- score ----------------------------------------------------------------

struct ScoreArgs {
  std::string priors;
  std::string labels;
  std::string intensity;
  std::string data_dir;
  std::optional<std::int64_t> id;
  double tau = 0.35;
  std::string out;
};

void score(const ScoreArgs& a) {
  const priors::PriorBank bank = priors::load_bank(a.priors);
  InstanceLabelMap labels;
  Tensor intensity;
  if (!a.data_dir.empty()) {
    if (!a.id) throw std::invalid_argument("score: --data needs --id");
    const auto scenes = data::load_dataset(a.data_dir);
    const auto it = std::find_if(scenes.begin(), scenes.end(), [&](const data::Scene& s) { return s.id == *a.id; });
    if (it == scenes.end()) throw std::invalid_argument("score: no scene with id " + std::to_string(*a.id));
    labels = it->gt_labels;
    intensity = plane_of(it->image);
  } else {
    if (a.labels.empty() || a.intensity.empty()) throw std::invalid_argument("score: give --labels and --intensity, or --data and --id");
    labels = io::load_labels(a.labels);
    intensity = plane_of(io::load_tensor(a.intensity));
  }
  const auto features = priors::extract_all_features(labels, intensity);
  Staged out(a.out);
  std::ofstream f = open_out(out.path());
  f.precision(10);
  f << "instance_id,area,solidity,circularity,intensity,extent,p_z,kept\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    const priors::FeatureVector& z = features[i];
    const double p = priors::score_instance(bank, z);
    f << (i + 1);
    for (double v : z.z) f << ',' << v;
    f << ',' << p << ',' << (p >= a.tau ? "true" : "false") << '\n';
  }
  close_out(f, out.path());
  f.close();
  out.commit();
}

// ---- match-debug ----------------------------------------------------------

struct MatchArgs {
  std::string teacher;
  std::string student;
  std::string checkpoint;
  std::string data_dir;
  std::optional<std::int64_t> id;
  std::string config;
  double r_factor = 1.5;
  std::string out;
  std::string svg_out;
};

void match_debug(const MatchArgs& a) {
  InstanceLabelMap t;
  InstanceLabelMap s;
  if (!a.checkpoint.empty()) {
    if (a.data_dir.empty() || !a.id) throw std::invalid_argument("match-debug: --checkpoint needs --data and --id");
    const config::RunConfig rc = load_run_config(a.config);
    const checkpoint::Checkpoint ckpt = checkpoint::load_checkpoint(a.checkpoint, rc.train.model);
    const auto scenes = data::load_dataset(a.data_dir);
    const auto it = std::find_if(scenes.begin(), scenes.end(), [&](const data::Scene& sc) { return sc.id == *a.id; });
    if (it == scenes.end()) throw std::invalid_argument("match-debug: no scene with id " + std::to_string(*a.id));
    t = trainer::predict_instances(ckpt.teacher, it->image, rc.train.wbis);
    s = trainer::predict_instances(ckpt.student, it->image, rc.train.wbis);
  } else {
    if (a.teacher.empty() || a.student.empty()) throw std::invalid_argument("match-debug: give --teacher and --student label files");
    t = io::load_labels(a.teacher);
    s = io::load_labels(a.student);
  }
  if (t.height() != s.height() || t.width() != s.width()) throw std::invalid_argument("match-debug: label maps differ in shape");
  const auto cands = matching::match_candidates(t, s, a.r_factor);

  Staged csv(a.out);
  std::ofstream f = open_out(csv.path());
  f.precision(10);
  f << "teacher_id,student_id,distance,kept\n";
  std::vector<char> t_seen(static_cast<std::size_t>(t.max_label()) + 1, 0);
  std::vector<char> s_seen(static_cast<std::size_t>(s.max_label()) + 1, 0);
  for (const matching::Candidate& c : cands) {
    f << c.pair.teacher_id << ',' << c.pair.student_id << ',' << c.pair.distance << ',' << (c.kept ? "true" : "false")
      << '\n';
    t_seen[static_cast<std::size_t>(c.pair.teacher_id)] = 1;
    s_seen[static_cast<std::size_t>(c.pair.student_id)] = 1;
  }
  for (std::size_t i = 1; i < t_seen.size(); ++i) {
    if (!t_seen[i]) f << i << ",,,false\n";
  }
  for (std::size_t j = 1; j < s_seen.size(); ++j) {
    if (!s_seen[j]) f << ',' << j << ",,false\n";
  }
  close_out(f, csv.path());
  f.close();

  std::optional<Staged> svg_file;
  if (!a.svg_out.empty()) {
    svg_file.emplace(a.svg_out);
    const auto tc = raster::centroids(t);
    const auto sc = raster::centroids(s);
    std::vector<svg::Marker> tm;
    std::vector<svg::Marker> sm;
    for (std::size_t i = 1; i < tc.size(); ++i) tm.push_back({tc[i].row, tc[i].col, std::to_string(i)});
    for (std::size_t j = 1; j < sc.size(); ++j) sm.push_back({sc[j].row, sc[j].col, std::to_string(j)});
    std::vector<svg::Link> links;
    for (const matching::Candidate& c : cands) {
      links.push_back({tm[static_cast<std::size_t>(c.pair.teacher_id) - 1], sm[static_cast<std::size_t>(c.pair.student_id) - 1],
                       c.kept});
    }
    std::vector<int> tfg(t.size());
    std::vector<int> sfg(s.size());
    for (std::size_t p = 0; p < t.size(); ++p) {
      tfg[p] = t[p] > 0 ? 1 : 0;
      sfg[p] = s[p] > 0 ? 1 : 0;
    }
    write_text(svg_file->path(), svg::match_overlay(t.height(), t.width(), tfg, sfg, tm, sm, links));
  }
  csv.commit();
  if (svg_file) svg_file->commit();
}

// ---- report ---------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error(p.string() + ": cannot open");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error(p.string() + ": empty CSV");
  return rows;
}

double to_double(const std::string& s, const fs::path& p) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw std::runtime_error(p.string() + ": not a number: '" + s + "'");
  }
}

struct ReportArgs {
  std::vector<std::string> run_logs;
  std::vector<std::string> evals;  // [label=]path
  std::string out;
};

void report(const ReportArgs& a) {
  if (a.run_logs.empty() && a.evals.empty()) throw std::invalid_argument("report: nothing to plot");
  Staged out(a.out);
  fs::create_directories(out.path());

  if (!a.run_logs.empty()) {
    const std::vector<std::string> columns = {"L_sup", "L_miac", "L_piac", "L_total"};
    std::vector<svg::Panel> panels;
    for (const std::string& c : columns) panels.push_back({c, {}});
    for (const std::string& path : a.run_logs) {
      const auto rows = read_csv(path);
      const auto& head = rows.front();
      const auto step_col = std::find(head.begin(), head.end(), "step") - head.begin();
      if (static_cast<std::size_t>(step_col) == head.size()) throw std::runtime_error(path + ": no step column");
      for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto col = std::find(head.begin(), head.end(), columns[k]) - head.begin();
        if (static_cast<std::size_t>(col) == head.size()) throw std::runtime_error(path + ": no " + columns[k] + " column");
        svg::Series s{fs::path(path).stem().string(), {}, {}};
        for (std::size_t r = 1; r < rows.size(); ++r) {
          s.x.push_back(to_double(rows[r].at(static_cast<std::size_t>(step_col)), path));
          s.y.push_back(to_double(rows[r].at(static_cast<std::size_t>(col)), path));
        }
        panels[k].series.push_back(std::move(s));
      }
    }
    write_text(out.path() / "loss_curves.svg", svg::line_panels("Training losses", panels, "step"));
  }

  if (!a.evals.empty()) {
    std::vector<svg::BarGroup> groups;
    for (const std::string& item : a.evals) {
      const auto eq = item.find('=');
      const std::string label = eq == std::string::npos ? fs::path(item).stem().string() : item.substr(0, eq);
      const fs::path path = eq == std::string::npos ? item : item.substr(eq + 1);
      const auto rows = read_csv(path);
      const auto mean = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return !r.empty() && r[0] == "mean"; });
      if (mean == rows.end() || mean->size() < 4) throw std::runtime_error(path.string() + ": no means row");
      groups.push_back({label, {to_double((*mean)[1], path), to_double((*mean)[2], path), to_double((*mean)[3], path)}});
    }
    write_text(out.path() / "metrics_by_ratio.svg",
               svg::grouped_bars("Test metrics by labeled ratio", {"AJI", "Dice", "F1obj"}, groups));
  }
  out.commit();
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Semi-supervised nuclei instance segmentation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  c_gen->add_option("--seed", gen.seed, "Base seed");
  c_gen->add_option("--n-scenes", gen.n_scenes, "Number of scenes")->required();
  c_gen->add_option("--size", gen.size, "Scene edge length in pixels (multiple of 4)");
  c_gen->add_option("--overlap", gen.overlap, "Maximum pairwise nucleus overlap fraction");
  c_gen->add_option("--first-id", gen.first_id, "Id of the first scene");
  c_gen->add_option("--labeled-ratio", gen.labeled_ratio, "Pre-split: flag this fraction as labeled");
  c_gen->add_option("--config", gen.config, "INI file with [data] overrides")->check(CLI::ExistingFile);
  c_gen->add_option("--out", gen.out, "Output dataset directory")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit-priors", "Fit the morphological prior bank on ground-truth instances");
  c_fit->add_option("--data", fit.data_dir, "Dataset directory to fit on")->check(CLI::ExistingDirectory);
  c_fit->add_option("--seed", fit.seed, "Seed when generating scenes instead of --data");
  c_fit->add_option("--n-scenes", fit.n_scenes, "Scenes to generate instead of --data");
  c_fit->add_option("--size", fit.size, "Generated scene size");
  c_fit->add_option("--overlap", fit.overlap, "Generated scene overlap fraction");
  c_fit->add_option("--bandwidth", fit.bandwidth, "Fixed KDE bandwidth (default: Silverman)");
  c_fit->add_option("--out", fit.out, "Output prior bank file")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train student/teacher networks");
  c_train->add_option("--data", tr.data_dir, "Training dataset directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--priors", tr.priors, "Prior bank file")->check(CLI::ExistingFile);
  c_train->add_option("--config", tr.config, "INI configuration")->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "Checkpoint directory")->required();
  c_train->add_option("--log", tr.log_path, "Run log CSV (default: <out>/run_log.csv)");
  c_train->add_option("--epochs", tr.epochs, "Override [train] epochs");
  c_train->add_option("--seed", tr.seed, "Override [train] seed");
  c_train->add_option("--mode", tr.mode, "Consistency: none | mse | ircr");
  c_train->add_option("--lr", tr.lr, "Override [train] lr");
  c_train->add_option("--labeled-ratio", tr.labeled_ratio, "Override [data] labeled_ratio");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint's student network");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--data", ev.data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--config", ev.config, "INI configuration")->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out, "Metrics CSV")->required();

  ScoreArgs sc;
  auto* c_score = app.add_subcommand("score", "Score instances against the prior bank");
  c_score->add_option("--priors", sc.priors, "Prior bank file")->required()->check(CLI::ExistingFile);
  c_score->add_option("--labels", sc.labels, "Instance label map (IRCR-T)")->check(CLI::ExistingFile);
  c_score->add_option("--intensity", sc.intensity, "Intensity map (IRCR-T)")->check(CLI::ExistingFile);
  c_score->add_option("--data", sc.data_dir, "Dataset directory (with --id)")->check(CLI::ExistingDirectory);
  c_score->add_option("--id", sc.id, "Scene id inside --data");
  c_score->add_option("--tau", sc.tau, "Likelihood threshold");
  c_score->add_option("--out", sc.out, "Scores CSV")->required();

  MatchArgs md;
  auto* c_match = app.add_subcommand("match-debug", "Dump teacher/student instance matching");
  c_match->add_option("--teacher", md.teacher, "Teacher label map (IRCR-T)")->check(CLI::ExistingFile);
  c_match->add_option("--student", md.student, "Student label map (IRCR-T)")->check(CLI::ExistingFile);
  c_match->add_option("--checkpoint", md.checkpoint, "Derive both maps from a checkpoint")->check(CLI::ExistingDirectory);
  c_match->add_option("--data", md.data_dir, "Dataset directory (with --checkpoint)")->check(CLI::ExistingDirectory);
  c_match->add_option("--id", md.id, "Scene id (with --checkpoint)");
  c_match->add_option("--config", md.config, "INI configuration")->check(CLI::ExistingFile);
  c_match->add_option("--r-factor", md.r_factor, "Acceptance radius factor");
  c_match->add_option("--out", md.out, "Matching CSV")->required();
  c_match->add_option("--svg", md.svg_out, "SVG overlay");

  ReportArgs rp;
  auto* c_report = app.add_subcommand("report", "Render SVG plots from run logs and eval CSVs");
  c_report->add_option("--run-log", rp.run_logs, "Run log CSV (repeatable)")->check(CLI::ExistingFile);
  c_report->add_option("--eval", rp.evals, "Eval CSV as [label=]path (repeatable)");
  c_report->add_option("--out", rp.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, std::cerr);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_gen->parsed()) gen_data(gen);
    if (c_fit->parsed()) fit_priors(fit);
    if (c_train->parsed()) train(tr);
    if (c_eval->parsed()) eval(ev);
    if (c_score->parsed()) score(sc);
    if (c_match->parsed()) match_debug(md);
    if (c_report->parsed()) report(rp);
  } catch (const std::exception& e) {
    std::cerr << "ircr: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ircr::cli
