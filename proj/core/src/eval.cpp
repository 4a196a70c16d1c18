#include "quicksilver/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "quicksilver/detail/parallel.hpp"
#include "quicksilver/error.hpp"

namespace quicksilver {

namespace {

using Clock = std::chrono::steady_clock;

bool interior(const GridGeometry& g, std::size_t i) {
  const auto idx = g.unravel(i);
  for (int a = 0; a < g.dim; ++a)
    if (idx[a] == 0 || idx[a] == g.sizes[a] - 1) return false;
  return true;
}

void accumulate(Histogram& h, const DeformationMap& map) {
  const GridGeometry& g = map.geometry();
  const ScalarImage jac = jacobian_determinant(map);
  const int bins = static_cast<int>(h.counts.size());
  const double lo = h.edges.front(), hi = h.edges.back();
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (!interior(g, i)) continue;
    if (!(jac[i] > 0.0)) {
      ++h.overflow;
      continue;
    }
    const double v = std::log10(jac[i]);
    const int b = std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * bins)), 0, bins - 1);
    ++h.counts[b];
    h.sum += v;
    h.sum_sq += v * v;
  }
}

Histogram empty_histogram(int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw InvalidArgument("histogram: need bins >= 1 and hi > lo");
  Histogram h;
  h.counts.assign(bins, 0);
  for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
  return h;
}

MethodEnergy summarize(std::string method, std::vector<std::optional<double>> per_case) {
  MethodEnergy e;
  e.method = std::move(method);
  e.per_case = std::move(per_case);
  std::vector<double> v;
  for (const auto& x : e.per_case) {
    if (x)
      v.push_back(*x);
    else
      ++e.missing;
  }
  if (!v.empty()) {
    for (double x : v) e.mean += x / v.size();
    if (v.size() > 1) {
      double s = 0.0;
      for (double x : v) s += (x - e.mean) * (x - e.mean);
      e.std = std::sqrt(s / (v.size() - 1));
    }
  }
  return e;
}

std::optional<double> try_energy(const VectorField& m, const RegistrationProblem& prob) {
  try {
    return energy(m, prob).total;
  } catch (const ShootingDiverged&) {
    return std::nullopt;
  }
}

std::vector<double> pct_or_default(std::span<const double> pcts) {
  return pcts.empty() ? default_percentiles() : std::vector<double>(pcts.begin(), pcts.end());
}

std::vector<PercentileValue> zip(const std::vector<double>& p, const std::vector<double>& v) {
  std::vector<PercentileValue> out;
  for (std::size_t i = 0; i < p.size(); ++i) out.push_back({p[i], v[i]});
  return out;
}

}  // namespace

std::vector<double> default_percentiles() { return {0.3, 5, 25, 50, 75, 95, 99.7}; }

std::vector<double> percentiles(std::vector<double> values, std::span<const double> pcts) {
  if (values.empty()) throw InvalidArgument("percentiles of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<long long>(values.size());
  std::vector<double> out;
  for (double p : pcts) {
    if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must be in [0, 100]");
    const long long rank = std::clamp(static_cast<long long>(std::ceil(p / 100.0 * n - 1e-9)), 1LL, n);
    out.push_back(values[rank - 1]);
  }
  return out;
}

std::vector<double> deformation_errors(const DeformationMap& pred, const DeformationMap& ref, const ScalarImage* mask) {
  require_same_geometry(pred.geometry(), ref.geometry(), "deformation_errors");
  if (mask) require_same_geometry(pred.geometry(), mask->geometry(), "deformation_errors mask");
  const GridGeometry& g = pred.geometry();
  std::vector<double> out;
  out.reserve(g.voxel_count());
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (mask && !((*mask)[i] > 0.0)) continue;
    double s = 0.0;
    for (int a = 0; a < g.dim; ++a) {
      const double r = pred.at(i, a) - ref.at(i, a);
      s += r * r;
    }
    out.push_back(std::sqrt(s));
  }
  return out;
}

std::vector<PercentileValue> deformation_error_percentiles(std::span<const DeformationMap> pred,
                                                           std::span<const DeformationMap> ref,
                                                           std::span<const ScalarImage> masks,
                                                           std::span<const double> pcts) {
  if (pred.size() != ref.size()) throw InvalidArgument("deformation errors: case counts differ");
  if (!masks.empty() && masks.size() != pred.size()) throw InvalidArgument("deformation errors: one mask per case");
  std::vector<double> pooled;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const auto e = deformation_errors(pred[c], ref[c], masks.empty() ? nullptr : &masks[c]);
    pooled.insert(pooled.end(), e.begin(), e.end());
  }
  const auto p = pct_or_default(pcts);
  return zip(p, percentiles(std::move(pooled), p));
}

double detj_positive_ratio(std::span<const DeformationMap> maps) {
  if (maps.empty()) throw InvalidArgument("detj_positive_ratio of an empty list");
  std::size_t ok = 0;
  for (const auto& m : maps) ok += min_interior_jacobian(m) > 0.0;
  return static_cast<double>(ok) / maps.size();
}

double target_overlap(const ScalarImage& warped_labels, const ScalarImage& target_labels) {
  require_same_geometry(warped_labels.geometry(), target_labels.geometry(), "target_overlap");
  std::map<long long, std::pair<std::size_t, std::size_t>> hits;  // label -> (overlap, target size)
  for (std::size_t i = 0; i < target_labels.size(); ++i) {
    const auto t = std::llround(target_labels[i]);
    if (t == 0) continue;
    auto& h = hits[t];
    ++h.second;
    h.first += std::llround(warped_labels[i]) == t;
  }
  if (hits.empty()) throw InvalidArgument("target_overlap: target has no labels");
  double s = 0.0;
  for (const auto& [label, h] : hits) s += static_cast<double>(h.first) / h.second;
  return s / hits.size();
}

ScalarImage intensity_labels(const ScalarImage& img, int levels) {
  if (levels < 1) throw InvalidArgument("intensity_labels: levels must be >= 1");
  ScalarImage out(img.geometry());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::round(std::clamp(img[i], 0.0, 1.0) * levels);
  return out;
}

std::vector<MethodEnergy> energy_report(const std::vector<RegistrationProblem>& problems,
                                        const std::vector<std::pair<std::string, std::vector<VectorField>>>& momenta) {
  std::vector<MethodEnergy> out;
  std::vector<std::optional<double>> initial;
  for (const auto& p : problems) initial.push_back(try_energy(VectorField(p.moving.geometry()), p));
  out.push_back(summarize("initial", std::move(initial)));
  for (const auto& [name, ms] : momenta) {
    if (ms.size() != problems.size()) throw InvalidArgument("energy_report: method " + name + " has a wrong case count");
    std::vector<std::optional<double>> e;
    for (std::size_t c = 0; c < ms.size(); ++c) e.push_back(try_energy(ms[c], problems[c]));
    out.push_back(summarize(name, std::move(e)));
  }
  return out;
}

long long Histogram::binned() const {
  long long n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::vector<double> Histogram::centers() const {
  std::vector<double> c;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) c.push_back(0.5 * (edges[b] + edges[b + 1]));
  return c;
}

double Histogram::mean() const {
  const auto n = binned();
  return n ? sum / n : 0.0;
}

double Histogram::variance() const {
  const auto n = binned();
  if (n == 0) return 0.0;
  const double m = sum / n;
  return std::max(0.0, sum_sq / n - m * m);
}

Histogram logdetj_histogram(std::span<const DeformationMap> maps, int bins, double lo, double hi) {
  Histogram h = empty_histogram(bins, lo, hi);
  for (const auto& m : maps) accumulate(h, m);
  return h;
}

std::vector<long long> histogram_difference(const Histogram& a, const Histogram& b) {
  if (a.edges != b.edges) throw InvalidArgument("histogram_difference: bin edges differ");
  std::vector<long long> d(a.counts.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.counts[i] - b.counts[i];
  return d;
}

double TimedMethod::mean() const {
  if (seconds.empty()) return 0.0;
  double s = 0.0;
  for (double x : seconds) s += x;
  return s / seconds.size();
}

const TimedMethod& TimingReport::get(const std::string& method) const {
  for (const auto& m : methods)
    if (m.method == method) return m;
  throw InvalidArgument("timing report has no method " + method);
}

double TimingReport::speedup(const std::string& fast, const std::string& slow) const {
  const double f = get(fast).mean();
  return f > 0.0 ? get(slow).mean() / f : 0.0;
}

TimingReport timing_report(const std::vector<RegistrationProblem>& problems, const nn::Network<float>& lp,
                           const nn::Network<float>* corr, const PredictOptions& opts,
                           const OptimizeConfig& optimize_cfg) {
  TimingReport r;
  TimedMethod lo, lpm, lpc;
  lo.method = "LO";
  lpm.method = "LP";
  lpc.method = "LPC";
  for (const auto& p : problems) {
    auto t0 = Clock::now();
    optimize(p, optimize_cfg);
    lo.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());

    const auto a = predict_full(lp, p.moving, p.target, opts);
    lpm.seconds.push_back(a.wall_time);
    lpm.patches_predicted += a.n_patches_predicted;
    lpm.patches_pruned += a.n_patches_pruned;

    if (corr) {
      const auto b = predict_corrected(lp, *corr, p.moving, p.target, opts, p.kernel, p.shooting);
      lpc.seconds.push_back(b.wall_time);
      lpc.patches_predicted += b.n_patches_predicted;
      lpc.patches_pruned += b.n_patches_pruned;
    }
  }
  r.methods.push_back(std::move(lo));
  r.methods.push_back(std::move(lpm));
  if (corr) r.methods.push_back(std::move(lpc));
  return r;
}

EvalReport evaluate(const std::vector<EvalCase>& cases, const std::vector<MethodResult>& methods,
                    const EvalOptions& opts) {
  if (cases.empty()) throw InvalidArgument("evaluate: no cases");
  const std::size_t nc = cases.size(), nm = methods.size();
  int ref_index = -1;
  for (std::size_t k = 0; k < nm; ++k) {
    if (methods[k].momenta.size() != nc)
      throw InvalidArgument("evaluate: method " + methods[k].method + " has a wrong case count");
    if (!methods[k].seconds.empty() && methods[k].seconds.size() != nc)
      throw InvalidArgument("evaluate: method " + methods[k].method + " has a wrong timing count");
    if (methods[k].method == opts.reference_method) ref_index = static_cast<int>(k);
  }
  if (!opts.reference_method.empty() && ref_index < 0)
    throw InvalidArgument("evaluate: unknown reference method " + opts.reference_method);

  struct Slot {
    std::optional<double> initial;
    std::vector<std::optional<DeformationMap>> maps;
    std::vector<std::optional<double>> energy, to;
    std::vector<std::vector<double>> errors;
    std::optional<ScalarImage> mask;
  };
  std::vector<Slot> slots(nc);
  detail::parallel_for(static_cast<int>(nc), opts.workers, [&](int c) {
    const EvalCase& ec = cases[c];
    Slot& s = slots[c];
    s.initial = try_energy(VectorField(ec.problem.moving.geometry()), ec.problem);
    s.maps.resize(nm);
    s.energy.resize(nm);
    s.to.resize(nm);
    s.errors.resize(nm);
    for (std::size_t k = 0; k < nm; ++k) {
      try {
        s.maps[k] = shoot(methods[k].momenta[c], ec.problem.kernel, ec.problem.shooting).phi_inv;
      } catch (const ShootingDiverged&) {
        continue;
      }
      s.energy[k] = try_energy(methods[k].momenta[c], ec.problem);
      if (ec.moving_labels && ec.target_labels)
        s.to[k] = target_overlap(warp_labels(*ec.moving_labels, *s.maps[k]), *ec.target_labels);
    }
    if (opts.mask_threshold) {
      ScalarImage m(ec.problem.moving.geometry());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = ec.problem.moving[i] > *opts.mask_threshold ? 1.0 : 0.0;
      s.mask = std::move(m);
    }
    const DeformationMap* ref = nullptr;
    if (ref_index >= 0)
      ref = s.maps[ref_index] ? &*s.maps[ref_index] : nullptr;
    else if (ec.reference_map)
      ref = &*ec.reference_map;
    if (!ref) return;
    for (std::size_t k = 0; k < nm; ++k)
      if (s.maps[k] && static_cast<int>(k) != ref_index)
        s.errors[k] = deformation_errors(*s.maps[k], *ref, s.mask ? &*s.mask : nullptr);
  });

  // ordered reduction
  EvalReport rep;
  std::vector<std::optional<double>> initial;
  for (const auto& s : slots) initial.push_back(s.initial);
  rep.energies.push_back(summarize("initial", std::move(initial)));
  TimingReport timing;
  for (std::size_t k = 0; k < nm; ++k) {
    const MethodResult& mr = methods[k];
    std::vector<double> pooled;
    std::vector<std::optional<double>> energies;
    Histogram hist = empty_histogram(opts.hist_bins, opts.hist_lo, opts.hist_hi);
    std::size_t positive = 0;
    double to_sum = 0.0;
    int to_n = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      const Slot& s = slots[c];
      CaseRow row;
      row.case_id = cases[c].id;
      row.method = mr.method;
      if (!mr.seconds.empty()) row.wall_time = mr.seconds[c];
      energies.push_back(s.energy[k]);
      if (!s.maps[k]) {
        rep.warnings.push_back(mr.method + " case " + cases[c].id + ": shooting diverged");
        rep.rows.push_back(std::move(row));
        continue;
      }
      row.min_detj = min_interior_jacobian(*s.maps[k]);
      positive += *row.min_detj > 0.0;
      accumulate(hist, *s.maps[k]);
      row.energy = s.energy[k];
      row.target_overlap = s.to[k];
      if (s.to[k]) {
        to_sum += *s.to[k];
        ++to_n;
      }
      if (!s.errors[k].empty()) {
        const double med = 50.0;
        row.median_error = percentiles(s.errors[k], std::span<const double>(&med, 1))[0];
        pooled.insert(pooled.end(), s.errors[k].begin(), s.errors[k].end());
      }
      rep.rows.push_back(std::move(row));
    }
    if (!pooled.empty()) rep.percentiles[mr.method] = zip(opts.percentiles, percentiles(std::move(pooled), opts.percentiles));
    rep.detj_positive_ratio[mr.method] = static_cast<double>(positive) / nc;
    if (to_n) rep.target_overlap_mean[mr.method] = to_sum / to_n;
    rep.energies.push_back(summarize(mr.method, std::move(energies)));
    rep.logdetj[mr.method] = std::move(hist);
    if (!mr.seconds.empty()) {
      timing.methods.push_back({mr.method, mr.seconds, mr.patches_predicted, mr.patches_pruned});
    }
  }
  if (!timing.methods.empty()) rep.timings = std::move(timing);
  return rep;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  os << std::setprecision(10);
  return os;
}

template <class T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); }

}  // namespace

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "case,method,median_error,min_detj,target_overlap,energy,wall_time\n";
  for (const auto& r : report.rows)
    os << r.case_id << ',' << r.method << ',' << opt(r.median_error) << ',' << opt(r.min_detj) << ','
       << opt(r.target_overlap) << ',' << opt(r.energy) << ',' << opt(r.wall_time) << '\n';
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  for (const auto& [method, pv] : report.percentiles) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (const auto& p : pv) {
      std::ostringstream key;
      key << p.percentile;
      row[key.str()] = p.value;
    }
    j["deformation_error_percentiles"][method] = row;
  }
  j["detj_positive_ratio"] = report.detj_positive_ratio;
  if (!report.target_overlap_mean.empty()) j["target_overlap_mean"] = report.target_overlap_mean;
  for (const auto& e : report.energies) {
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const auto& x : e.per_case) per.push_back(opt_json(x));
    j["energy"][e.method] = {{"mean", e.mean}, {"std", e.std}, {"missing", e.missing}, {"per_case", per}};
  }
  for (const auto& [method, h] : report.logdetj)
    j["logdetj"][method] = {{"mean", h.mean()}, {"variance", h.variance()}, {"binned", h.binned()},
                            {"nonpositive", h.overflow}};
  if (report.timings) {
    for (const auto& m : report.timings->methods)
      j["timing"][m.method] = {{"mean_seconds", m.mean()},
                               {"patches_predicted", m.patches_predicted},
                               {"patches_pruned", m.patches_pruned}};
  }
  j["warnings"] = report.warnings;
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

void write_histogram_csv(const Histogram& h, const std::filesystem::path& path, const Histogram* reference) {
  const auto diff = reference ? histogram_difference(h, *reference) : std::vector<long long>{};
  auto os = open_out(path);
  os << (reference ? "bin_center,count,difference\n" : "bin_center,count\n");
  const auto c = h.centers();
  for (std::size_t b = 0; b < c.size(); ++b) {
    os << c[b] << ',' << h.counts[b];
    if (reference) os << ',' << diff[b];
    os << '\n';
  }
}

}  // namespace quicksilver
