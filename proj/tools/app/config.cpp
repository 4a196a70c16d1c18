#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "quicksilver/error.hpp"

namespace quicksilver::app {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::defaults() {
  return {
      {"seed", "7"},
      {"workers", "1"},
      {"kernel.a", "0.01"},
      {"kernel.b", "0.01"},
      {"kernel.c", "0.001"},
      {"match.sigma", "0.2"},
      {"shoot.steps", "10"},
      {"shoot.integrator", "rk4"},
      {"optimize.iters", "200"},
      {"optimize.grad_tol", "1e-6"},
      {"optimize.step0", "0.05"},
      {"patch.size", "15"},
      {"patch.stride", "14"},
      {"patch.prune_threshold", "0.01"},
      {"net.features", "64"},
      {"train.lr", "1e-4"},
      {"train.epochs", "10"},
      {"train.batch", "16"},
      {"train.dropout", "0"},
      {"train.weight_decay", "0"},
      {"train.correct_from_lp", "true"},
      {"predict.batch", "32"},
      {"predict.correct_iterations", "1"},
      {"predict.mc_samples", "50"},
      {"predict.dropout", "0.2"},
      {"synth.n", "200"},
      {"synth.size", "64,64"},
      {"synth.spacing", "1"},
      {"synth.momentum_scale", "0.08"},
      {"synth.smoothness", "0.25"},
      {"synth.variant_scale", "0.5"},
      {"synth.template", "shapes"},
      {"synth.template_file", ""},
      {"synth.remap", "false"},
      {"eval.percentiles", "0.3,5,25,50,75,95,99.7"},
      {"eval.reference", ""},
      {"eval.mask_threshold", ""},
      {"eval.label_levels", "5"},
      {"eval.hist_bins", "101"},
      {"eval.hist_range", "-1,1"},
  };
}

RunConfig::RunConfig() {
  for (auto& [k, v] : defaults()) values_[k] = v;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  load_text(ss.str(), path.string());
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  int lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second = value;
}

void RunConfig::set_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const { return parse_number<double>(key, get(key)); }
int RunConfig::integer(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t RunConfig::u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool RunConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split(get(key), ',')) out.push_back(parse_number<double>(key, item));
  return out;
}

std::string RunConfig::snapshot() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  os << "# resolved configuration\n" << snapshot();
}

FluidKernel::Params RunConfig::kernel() const { return {number("kernel.a"), number("kernel.b"), number("kernel.c")}; }

ShootingConfig RunConfig::shooting() const {
  ShootingConfig s;
  s.n_steps = integer("shoot.steps");
  const auto& in = get("shoot.integrator");
  if (in == "rk4")
    s.integrator = Integrator::Rk4;
  else if (in == "euler")
    s.integrator = Integrator::Euler;
  else
    throw ConfigError("config: shoot.integrator must be rk4 or euler");
  return s;
}

OptimizeConfig RunConfig::optimize() const {
  OptimizeConfig o;
  o.max_iters = integer("optimize.iters");
  o.grad_tol = number("optimize.grad_tol");
  o.step0 = number("optimize.step0");
  return o;
}

PatchSpec RunConfig::patch() const {
  return {integer("patch.size"), integer("patch.stride"), number("patch.prune_threshold")};
}

nn::NetConfig RunConfig::net(int dim) const { return {dim, integer("net.features")}; }

nn::TrainConfig RunConfig::train() const {
  nn::TrainConfig t;
  t.lr = number("train.lr");
  t.epochs = integer("train.epochs");
  t.batch_size = integer("train.batch");
  t.dropout_p = number("train.dropout");
  t.weight_decay = number("train.weight_decay");
  t.seed = u64("seed");
  return t;
}

PredictOptions RunConfig::predict() const {
  PredictOptions p;
  p.patch = patch();
  p.workers = integer("workers");
  p.batch_size = integer("predict.batch");
  return p;
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  std::vector<int> sizes;
  for (double s : numbers("synth.size")) sizes.push_back(static_cast<int>(s));
  std::vector<double> spacing = numbers("synth.spacing");
  if (spacing.size() == 1) spacing.assign(sizes.size(), spacing[0]);
  try {
    c.geom = GridGeometry::make(sizes, spacing);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: synth.size/spacing: ") + e.what());
  }
  c.n_pairs = integer("synth.n");
  c.momentum_scale = number("synth.momentum_scale");
  c.smoothness = number("synth.smoothness");
  c.variant_scale = number("synth.variant_scale");
  const auto& t = get("synth.template");
  if (t == "shapes")
    c.template_kind = TemplateKind::Shapes;
  else if (t == "blobs")
    c.template_kind = TemplateKind::Blobs;
  else if (t == "file")
    c.template_kind = TemplateKind::File;
  else
    throw ConfigError("config: synth.template must be shapes, blobs or file");
  c.template_file = get("synth.template_file");
  c.seed = u64("seed");
  c.remap = flag("synth.remap");
  c.kernel = kernel();
  c.shooting = shooting();
  return c;
}

EvalOptions RunConfig::eval() const {
  EvalOptions e;
  e.percentiles = numbers("eval.percentiles");
  e.reference_method = get("eval.reference");
  if (!get("eval.mask_threshold").empty()) e.mask_threshold = number("eval.mask_threshold");
  e.hist_bins = integer("eval.hist_bins");
  const auto range = numbers("eval.hist_range");
  if (range.size() != 2) throw ConfigError("config: eval.hist_range expects lo,hi");
  e.hist_lo = range[0];
  e.hist_hi = range[1];
  e.workers = integer("workers");
  return e;
}

RegistrationProblem RunConfig::problem(const ScalarImage& moving, const ScalarImage& target) const {
  RegistrationProblem p{moving, target, FluidKernel(moving.geometry(), kernel()), number("match.sigma"), shooting()};
  p.validate();
  return p;
}

}  // namespace quicksilver::app
