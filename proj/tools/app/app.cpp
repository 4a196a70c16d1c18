#include "app.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "quicksilver/detail/parallel.hpp"
#include "quicksilver/error.hpp"
#include "quicksilver/eval.hpp"
#include "quicksilver/nn/qsnet.hpp"
#include "quicksilver/nn/train.hpp"
#include "quicksilver/predict.hpp"
#include "quicksilver/qsf.hpp"
#include "quicksilver/synthetic.hpp"

#ifndef QUICKSILVER_VERSION
#define QUICKSILVER_VERSION "0.0.0"
#endif

namespace quicksilver::app {

const char* version() { return QUICKSILVER_VERSION; }

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Options every subcommand accepts.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override one configuration key (key=value)");
  cmd->add_option("--seed", c.seed, "random seed (config key: seed)");
  cmd->add_option("--workers", c.workers, "worker threads (config key: workers)")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) cfg.load_file(c.config_file);
  for (const auto& s : c.sets) cfg.set_assignment(s);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (c.workers) cfg.set("workers", std::to_string(*c.workers));
  return cfg;
}

// resolved.cfg + run.meta, either inside an output directory or next to an output file.
struct RunFiles {
  fs::path config, meta;
  static RunFiles for_dir(const fs::path& dir) { return {dir / "resolved.cfg", dir / "run.meta"}; }
  static RunFiles for_file(const fs::path& file) {
    return {fs::path(file.string() + ".resolved.cfg"), fs::path(file.string() + ".run.meta")};
  }
};

class Meta {
 public:
  explicit Meta(std::string command) : command_(std::move(command)), t0_(Clock::now()) {}
  void add(const std::string& k, const std::string& v) { extra_.emplace_back(k, v); }
  void add(const std::string& k, double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    add(k, s.str());
  }
  void write(const RunFiles& files, const RunConfig& cfg) const {
    if (files.meta.has_parent_path()) fs::create_directories(files.meta.parent_path());
    cfg.write_snapshot(files.config);
    std::ofstream os(files.meta);
    if (!os) throw FormatError(FormatError::Kind::Io, "cannot write " + files.meta.string());
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    os << "version = " << version() << "\n"
       << "command = " << command_ << "\n"
       << "seed = " << cfg.get("seed") << "\n"
       << "workers = " << cfg.get("workers") << "\n"
       << "finished = " << stamp << "\n"
       << "elapsed_seconds = " << std::setprecision(6) << since(t0_) << "\n";
    for (const auto& [k, v] : extra_) os << k << " = " << v << "\n";
  }

 private:
  std::string command_;
  Clock::time_point t0_;
  std::vector<std::pair<std::string, std::string>> extra_;
};

struct Case {
  std::string id;
  ScalarImage moving, target;
  fs::path momentum_file, map_file;
};

std::vector<Case> load_dataset(const fs::path& dir) {
  std::vector<Case> out;
  for (const auto& e : read_manifest(dir)) {
    Case c;
    c.id = e.moving.parent_path().filename().string();
    if (c.id.empty()) c.id = e.moving.stem().string();
    c.moving = read_scalar(dir / e.moving);
    c.target = read_scalar(dir / e.target);
    require_same_geometry(c.moving.geometry(), c.target.geometry(), c.id.c_str());
    c.momentum_file = dir / e.momentum;
    c.map_file = dir / e.map;
    out.push_back(std::move(c));
  }
  if (out.empty()) throw Error("dataset " + dir.string() + " lists no pairs");
  return out;
}

// Momentum for a case: from `<dir>/<id>.qsf` when a momenta directory is given,
// else the dataset's ground truth.
VectorField case_momentum(const Case& c, const std::string& momenta_dir) {
  return momenta_dir.empty() ? read_vector(c.momentum_file) : read_vector(fs::path(momenta_dir) / (c.id + ".qsf"));
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  os << std::setprecision(10);
  return os;
}

struct Timing {
  double seconds = 0.0;
  long long predicted = 0, pruned = 0;
};

std::map<std::string, Timing> read_times(const fs::path& file) {
  std::map<std::string, Timing> out;
  std::ifstream is(file);
  if (!is) return out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string id, s, p, q;
    std::getline(ss, id, ',');
    std::getline(ss, s, ',');
    std::getline(ss, p, ',');
    std::getline(ss, q, ',');
    Timing t;
    t.seconds = std::stod(s);
    if (!p.empty()) t.predicted = std::stoll(p);
    if (!q.empty()) t.pruned = std::stoll(q);
    out[id] = t;
  }
  return out;
}

void write_loss(const fs::path& path, const nn::TrainResult& r) {
  auto os = open_out(path);
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) os << e + 1 << ',' << r.epoch_loss[e] << '\n';
}

nn::PatchDataset training_patches(const std::vector<Case>& cases, const std::string& momenta_dir,
                                  const RunConfig& cfg) {
  std::vector<TrainingPair> pairs;
  for (const auto& c : cases) pairs.push_back({c.moving, c.target, case_momentum(c, momenta_dir)});
  return build_training_dataset(pairs, cfg.patch()).data;
}

// ---- subcommands -------------------------------------------------------------------------------

struct MakeSynthetic {
  Common common;
  std::string out;
  std::optional<int> n;
  int first = 0;
  std::string size;
  bool remap = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("make-synthetic", "generate a synthetic registration dataset");
    add_common(cmd, common);
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--n", n, "number of pairs (config key: synth.n)");
    cmd->add_option("--first", first, "index of the first pair (pairs are independent of the range)");
    cmd->add_option("--size", size, "grid size, e.g. 64,64 (config key: synth.size)");
    cmd->add_flag("--remap", remap, "monotone intensity remap of the targets (config key: synth.remap)");
  }

  void operator()(std::ostream& os) {
    RunConfig cfg = resolve(common);
    if (n) cfg.set("synth.n", std::to_string(*n));
    if (!size.empty()) cfg.set("synth.size", size);
    if (remap) cfg.set("synth.remap", "true");
    if (first < 0) throw ConfigError("--first must be >= 0");
    Meta meta("make-synthetic");
    SynthConfig sc = cfg.synth();
    sc.validate();
    const ScalarImage tmpl = make_template(sc);
    const FluidKernel kernel(sc.geom, sc.kernel);
    std::vector<SynthPair> pairs(sc.n_pairs);
    detail::parallel_for(sc.n_pairs, cfg.integer("workers"),
                         [&](int i) { pairs[i] = make_pair(sc, tmpl, kernel, first + i); });
    const fs::path dir(out);
    write_dataset(dir, pairs, first);
    std::vector<double> disp;
    for (const auto& p : pairs) disp.push_back(median_foreground_displacement(p.phi_inv, p.moving));
    std::sort(disp.begin(), disp.end());
    meta.add("pairs", std::to_string(sc.n_pairs));
    meta.add("first", std::to_string(first));
    if (!disp.empty()) meta.add("median_foreground_displacement", disp[disp.size() / 2]);
    meta.write(RunFiles::for_dir(dir), cfg);
    os << "wrote " << sc.n_pairs << " pairs to " << dir.string() << "\n";
  }
};

struct Optimize {
  Common common;
  std::string data, out, moving, target;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("optimize", "numerical LDDMM optimisation from zero momentum");
    add_common(cmd, common);
    cmd->add_option("--data", data, "dataset directory (writes <out>/<pair>.qsf for every pair)");
    cmd->add_option("--moving", moving, "moving image (single-pair mode)");
    cmd->add_option("--target", target, "target image (single-pair mode)");
    cmd->add_option("--out", out, "output directory (dataset mode) or momentum file")->required();
  }

  static void write_trace(const fs::path& path, const OptimizeResult& r) {
    auto os = open_out(path);
    os << "iter,total,reg,match\n";
    for (const auto& t : r.energy_trace) os << t.iter << ',' << t.total << ',' << t.reg << ',' << t.match << '\n';
  }

  void operator()(std::ostream& os) {
    const RunConfig cfg = resolve(common);
    Meta meta("optimize");
    const OptimizeConfig oc = cfg.optimize();
    if (data.empty()) {
      if (moving.empty() || target.empty()) throw ConfigError("optimize needs --data or both --moving and --target");
      const auto t0 = Clock::now();
      const auto r = optimize(cfg.problem(read_scalar(moving), read_scalar(target)), oc);
      write_field(r.m0, out);
      write_trace(out + ".trace.csv", r);
      meta.add("seconds", since(t0));
      meta.add("iterations", std::to_string(r.iters_used));
      meta.write(RunFiles::for_file(out), cfg);
      os << "final energy " << r.energy_trace.back().total << " after " << r.iters_used << " iterations\n";
      return;
    }
    const auto cases = load_dataset(data);
    const fs::path dir(out);
    fs::create_directories(dir);
    std::vector<double> seconds(cases.size()), finals(cases.size());
    detail::parallel_for(static_cast<int>(cases.size()), cfg.integer("workers"), [&](int i) {
      const auto t0 = Clock::now();
      const auto r = optimize(cfg.problem(cases[i].moving, cases[i].target), oc);
      seconds[i] = since(t0);
      finals[i] = r.energy_trace.back().total;
      write_field(r.m0, dir / (cases[i].id + ".qsf"));
      write_trace(dir / (cases[i].id + ".trace.csv"), r);
    });
    auto ts = open_out(dir / "times.csv");
    ts << "case,seconds\n";
    double total = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      ts << cases[i].id << ',' << seconds[i] << '\n';
      total += seconds[i];
    }
    meta.add("pairs", std::to_string(cases.size()));
    meta.add("mean_seconds", total / cases.size());
    meta.write(RunFiles::for_dir(dir), cfg);
    os << "optimised " << cases.size() << " pairs, mean " << total / cases.size() << " s\n";
  }
};

struct Shoot {
  Common common;
  std::string momentum, out, moving, warped;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("shoot", "integrate the geodesic of an initial momentum");
    add_common(cmd, common);
    cmd->add_option("--momentum", momentum, "initial momentum (QSF)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output map Phi^-1 (QSF)")->required();
    cmd->add_option("--moving", moving, "image to warp with the result")->check(CLI::ExistingFile);
    cmd->add_option("--warped", warped, "where to write the warped image");
  }

  void operator()(std::ostream& os) {
    const RunConfig cfg = resolve(common);
    if (moving.empty() != warped.empty()) throw ConfigError("--moving and --warped go together");
    Meta meta("shoot");
    const VectorField m = read_vector(momentum);
    const auto st = shoot(m, FluidKernel(m.geometry(), cfg.kernel()), cfg.shooting());
    write_field(st.phi_inv, out);
    if (!moving.empty()) write_field(warp_image(read_scalar(moving), st.phi_inv), warped);
    const double detj = min_interior_jacobian(st.phi_inv);
    meta.add("min_detj", detj);
    meta.write(RunFiles::for_file(out), cfg);
    os << "min interior det J " << detj << "\n";
  }
};

struct TrainLp {
  Common common;
  std::string data, momenta, out, init;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-lp", "train the momentum prediction network");
    add_common(cmd, common);
    cmd->add_option("--data", data, "dataset directory")->required();
    cmd->add_option("--momenta", momenta, "directory of optimised momenta (default: dataset ground truth)");
    cmd->add_option("--init", init, "start from these weights")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output weights (QSNET)")->required();
  }

  void operator()(std::ostream& os) {
    const RunConfig cfg = resolve(common);
    Meta meta("train-lp");
    const auto cases = load_dataset(data);
    const auto patches = training_patches(cases, momenta, cfg);
    const int dim = cases.front().moving.geometry().dim;
    auto net = init.empty() ? nn::Network<float>::initialized(cfg.net(dim), cfg.u64("seed")) : nn::read_qsnet(init);
    const auto r = nn::train(net, patches, cfg.train(), [&](int e, double loss) {
      os << "epoch " << e + 1 << " loss " << loss << "\n";
    });
    nn::write_qsnet(net, out);
    write_loss(out + ".loss.csv", r);
    meta.add("patches", std::to_string(patches.size()));
    if (!r.epoch_loss.empty()) meta.add("final_loss", r.epoch_loss.back());
    meta.write(RunFiles::for_file(out), cfg);
  }
};

struct TrainCorrect {
  Common common;
  std::string data, momenta, lp, out;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-correct", "train the correction network on LP residuals");
    add_common(cmd, common);
    cmd->add_option("--data", data, "dataset directory")->required();
    cmd->add_option("--momenta", momenta, "directory of optimised momenta (default: dataset ground truth)");
    cmd->add_option("--lp", lp, "trained prediction network")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output weights (QSNET)")->required();
  }

  void operator()(std::ostream& os, std::ostream& err) {
    const RunConfig cfg = resolve(common);
    Meta meta("train-correct");
    const auto cases = load_dataset(data);
    const auto lp_net = nn::read_qsnet(lp);
    std::vector<TrainingPair> pairs;
    for (const auto& c : cases) pairs.push_back({c.moving, c.target, case_momentum(c, momenta)});
    std::vector<std::string> warnings;
    const auto ds = build_correction_dataset(pairs, lp_net, cfg.predict(), FluidKernel(pairs[0].moving.geometry(), cfg.kernel()),
                                             cfg.shooting(), &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    if (ds.size() == 0) throw Error("train-correct: no usable pairs");
    // the LP weights already map (moving, warped-back target) to a first guess of
    // the residual momentum, so they are the natural starting point
    auto net = cfg.flag("train.correct_from_lp") ? lp_net
                                                 : nn::Network<float>::initialized(cfg.net(lp_net.config().dim), cfg.u64("seed") + 1);
    const auto r = nn::train(net, ds.data, cfg.train(), [&](int e, double loss) {
      os << "epoch " << e + 1 << " loss " << loss << "\n";
    });
    nn::write_qsnet(net, out);
    write_loss(out + ".loss.csv", r);
    meta.add("patches", std::to_string(ds.size()));
    meta.add("skipped_pairs", std::to_string(warnings.size()));
    if (!r.epoch_loss.empty()) meta.add("final_loss", r.epoch_loss.back());
    meta.write(RunFiles::for_file(out), cfg);
  }
};

struct Predict {
  Common common;
  std::string data, moving, target, lp, correct, out;
  bool mc = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("predict", "predict initial momenta with trained networks");
    add_common(cmd, common);
    cmd->add_option("--data", data, "dataset directory (writes <out>/<pair>.qsf for every pair)");
    cmd->add_option("--moving", moving, "moving image (single-pair mode)");
    cmd->add_option("--target", target, "target image (single-pair mode)");
    cmd->add_option("--lp", lp, "prediction network")->required()->check(CLI::ExistingFile);
    cmd->add_option("--correct", correct, "correction network")->check(CLI::ExistingFile);
    cmd->add_flag("--mc", mc, "MC-dropout sampling with an uncertainty map (config: predict.mc_samples, predict.dropout)");
    cmd->add_option("--out", out, "output directory (dataset mode) or momentum file")->required();
  }

  struct One {
    VectorField m;
    std::optional<ScalarImage> uncertainty;
    double seconds = 0.0;
    long long predicted = 0, pruned = 0;
  };

  One predict_one(const RunConfig& cfg, const nn::Network<float>& lp_net, const nn::Network<float>* corr,
                  const ScalarImage& mv, const ScalarImage& tg, std::uint64_t seed) const {
    const PredictOptions po = cfg.predict();
    const FluidKernel kernel(mv.geometry(), cfg.kernel());
    PredictionResult r;
    if (mc)
      r = mc_predict(lp_net, mv, tg, po, kernel, cfg.shooting(), cfg.integer("predict.mc_samples"),
                     cfg.number("predict.dropout"), seed);
    else if (corr)
      r = predict_corrected(lp_net, *corr, mv, tg, po, kernel, cfg.shooting(), cfg.integer("predict.correct_iterations"));
    else
      r = predict_full(lp_net, mv, tg, po);
    return {std::move(r.momentum), std::move(r.uncertainty), r.wall_time, r.n_patches_predicted, r.n_patches_pruned};
  }

  void operator()(std::ostream& os) {
    const RunConfig cfg = resolve(common);
    if (mc && !correct.empty()) throw ConfigError("--mc and --correct cannot be combined");
    Meta meta("predict");
    const auto lp_net = nn::read_qsnet(lp);
    std::optional<nn::Network<float>> corr;
    if (!correct.empty()) corr = nn::read_qsnet(correct);
    const nn::Network<float>* corr_ptr = corr ? &*corr : nullptr;
    const std::uint64_t seed = cfg.u64("seed");

    if (data.empty()) {
      if (moving.empty() || target.empty()) throw ConfigError("predict needs --data or both --moving and --target");
      const auto r = predict_one(cfg, lp_net, corr_ptr, read_scalar(moving), read_scalar(target), seed);
      write_field(r.m, out);
      if (r.uncertainty) write_field(*r.uncertainty, out + ".uncertainty.qsf");
      meta.add("seconds", r.seconds);
      meta.write(RunFiles::for_file(out), cfg);
      os << "predicted in " << r.seconds << " s (" << r.predicted << " patches, " << r.pruned << " pruned)\n";
      return;
    }
    const auto cases = load_dataset(data);
    const fs::path dir(out);
    fs::create_directories(dir);
    auto ts = open_out(dir / "times.csv");
    ts << "case,seconds,patches_predicted,patches_pruned\n";
    double total = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto r = predict_one(cfg, lp_net, corr_ptr, cases[i].moving, cases[i].target, seed + i);
      write_field(r.m, dir / (cases[i].id + ".qsf"));
      if (r.uncertainty) write_field(*r.uncertainty, dir / (cases[i].id + ".uncertainty.qsf"));
      ts << cases[i].id << ',' << r.seconds << ',' << r.predicted << ',' << r.pruned << '\n';
      total += r.seconds;
    }
    meta.add("pairs", std::to_string(cases.size()));
    meta.add("mean_seconds", total / cases.size());
    meta.add("mode", mc ? "mc" : corr ? "corrected" : "lp");
    meta.write(RunFiles::for_dir(dir), cfg);
    os << "predicted " << cases.size() << " pairs, mean " << total / cases.size() << " s\n";
  }
};

struct Evaluate {
  Common common;
  std::string data, out, reference;
  std::vector<std::string> methods;
  bool timings = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("evaluate", "compare methods on a dataset");
    add_common(cmd, common);
    cmd->add_option("--data", data, "dataset directory")->required();
    cmd->add_option("--method", methods, "NAME=DIR with <DIR>/<pair>.qsf momenta (repeatable)")->required();
    cmd->add_option("--reference", reference,
                    "method used as the reference map (config key: eval.reference; default: ground truth)");
    cmd->add_option("--out", out, "report directory")->required();
    cmd->add_flag("--timings", timings,
                  "include <DIR>/times.csv wall times (the report then differs between otherwise identical runs)");
  }

  void operator()(std::ostream& os) {
    RunConfig cfg = resolve(common);
    if (!reference.empty()) cfg.set("eval.reference", reference);
    Meta meta("evaluate");
    const auto loaded = load_dataset(data);
    const int levels = cfg.integer("eval.label_levels");
    const bool use_truth = cfg.get("eval.reference").empty();
    std::vector<EvalCase> cases;
    for (const auto& c : loaded) {
      EvalCase ec{c.id, cfg.problem(c.moving, c.target), std::nullopt, std::nullopt, std::nullopt};
      if (use_truth) ec.reference_map = read_map(c.map_file);
      if (levels > 0) {
        ec.moving_labels = intensity_labels(c.moving, levels);
        ec.target_labels = intensity_labels(c.target, levels);
      }
      cases.push_back(std::move(ec));
    }
    std::vector<MethodResult> results;
    for (const auto& spec : methods) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--method expects NAME=DIR, got '" + spec + "'");
      MethodResult mr;
      mr.method = spec.substr(0, eq);
      const fs::path dir = spec.substr(eq + 1);
      const auto times = timings ? read_times(dir / "times.csv") : std::map<std::string, Timing>{};
      for (const auto& c : loaded) {
        mr.momenta.push_back(read_vector(dir / (c.id + ".qsf")));
        if (const auto it = times.find(c.id); it != times.end()) {
          mr.seconds.push_back(it->second.seconds);
          mr.patches_predicted += it->second.predicted;
          mr.patches_pruned += it->second.pruned;
        }
      }
      if (mr.seconds.size() != loaded.size()) mr.seconds.clear();
      results.push_back(std::move(mr));
    }
    const auto rep = evaluate(cases, results, cfg.eval());
    const fs::path dir(out);
    write_report_csv(rep, dir / "report.csv");
    write_report_json(rep, dir / "report.json");
    const std::string& ref = cfg.get("eval.reference");
    const Histogram* ref_hist = rep.logdetj.count(ref) ? &rep.logdetj.at(ref) : nullptr;
    for (const auto& [name, h] : rep.logdetj)
      write_histogram_csv(h, dir / ("logdetj_" + name + ".csv"), name == ref ? nullptr : ref_hist);

    // Table-style summary on stdout
    os << std::left << std::setw(10) << "method";
    for (double p : cfg.eval().percentiles) os << std::setw(10) << (std::to_string(p).substr(0, 4) + "%");
    os << std::setw(10) << "detJ>0" << std::setw(12) << "energy" << "\n";
    for (const auto& r : results) {
      os << std::setw(10) << r.method;
      if (const auto it = rep.percentiles.find(r.method); it != rep.percentiles.end())
        for (const auto& p : it->second) os << std::setw(10) << std::setprecision(4) << p.value;
      os << std::setw(10) << rep.detj_positive_ratio.at(r.method);
      for (const auto& e : rep.energies)
        if (e.method == r.method) os << std::setw(12) << e.mean;
      os << "\n";
    }
    for (const auto& w : rep.warnings) os << "warning: " << w << "\n";
    meta.add("pairs", std::to_string(cases.size()));
    meta.add("methods", std::to_string(results.size()));
    meta.write(RunFiles::for_dir(dir), cfg);
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"quicksilver: fast predictive image registration", "quicksilver"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  MakeSynthetic make_synthetic;
  Optimize optimize_cmd;
  Shoot shoot_cmd;
  TrainLp train_lp;
  TrainCorrect train_correct;
  Predict predict_cmd;
  Evaluate evaluate_cmd;
  make_synthetic.attach(app);
  optimize_cmd.attach(app);
  shoot_cmd.attach(app);
  train_lp.attach(app);
  train_correct.attach(app);
  predict_cmd.attach(app);
  evaluate_cmd.attach(app);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "make-synthetic") make_synthetic(out);
    else if (cmd == "optimize") optimize_cmd(out);
    else if (cmd == "shoot") shoot_cmd(out);
    else if (cmd == "train-lp") train_lp(out);
    else if (cmd == "train-correct") train_correct(out, err);
    else if (cmd == "predict") predict_cmd(out);
    else if (cmd == "evaluate") evaluate_cmd(out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace quicksilver::app
