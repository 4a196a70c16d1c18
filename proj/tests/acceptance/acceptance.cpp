// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any fails. Arguments select criteria by number (default: all).
//
// QS_ACCEPT_CACHE=<dir> keeps optimised momenta and trained networks between
// runs; without it everything is recomputed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "quicksilver/eval.hpp"
#include "quicksilver/nn/qsnet.hpp"
#include "quicksilver/optimizer.hpp"
#include "quicksilver/predict.hpp"
#include "quicksilver/qsf.hpp"
#include "quicksilver/synthetic.hpp"
#include "test_util.hpp"

using namespace quicksilver;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// Standard suite: 2D 64x64, seed 7, pairs 0-199 train, 200-229 test.

constexpr int kTrain = 200;
constexpr int kTest = 30;
constexpr int kTrainIters = 100;  // LO iterations for the training targets
constexpr int kFeatures = 16;

struct LoCase {
  VectorField m;
  std::vector<TraceEntry> trace;
};

class Suite {
 public:
  Suite() : kernel_(cfg_.geom, cfg_.kernel) {
    cfg_.n_pairs = kTrain + kTest;
    opts_.patch = PatchSpec{15, 14, 0.01};
    if (const char* c = std::getenv("QS_ACCEPT_CACHE"); c && *c) {
      cache_ = fs::path(c);
      fs::create_directories(*cache_);
    }
  }

  const SynthConfig& cfg() const { return cfg_; }
  const FluidKernel& kernel() const { return kernel_; }
  const PredictOptions& opts() const { return opts_; }
  const ShootingConfig& shooting() const { return cfg_.shooting; }

  const ScalarImage& tmpl() {
    if (!tmpl_) tmpl_ = make_template(cfg_);
    return *tmpl_;
  }

  const std::vector<SynthPair>& pairs() {
    if (pairs_.empty()) {
      progress("generating 230 synthetic pairs");
      pairs_ = generate_pairs(cfg_, 0, kTrain + kTest);
    }
    return pairs_;
  }
  const SynthPair& test_pair(int i) { return pairs()[kTrain + i]; }

  RegistrationProblem problem(const SynthPair& p) const { return {p.moving, p.target, kernel_, 0.2, cfg_.shooting}; }

  const std::vector<LoCase>& lo_test() {
    if (lo_test_.empty()) lo_test_ = run_lo("lo_test", kTrain, kTest, 200);
    return lo_test_;
  }

  const std::vector<LoCase>& lo_train() {
    if (lo_train_.empty()) lo_train_ = run_lo("lo_train", 0, kTrain, kTrainIters);
    return lo_train_;
  }

  std::vector<TrainingPair> training_pairs() {
    std::vector<TrainingPair> out;
    const auto& lo = lo_train();
    for (int i = 0; i < kTrain; ++i) out.push_back({pairs()[i].moving, pairs()[i].target, lo[i].m});
    return out;
  }

  const PatchBatch& lp_dataset() {
    if (!lp_data_) lp_data_ = build_training_dataset(training_pairs(), opts_.patch);
    return *lp_data_;
  }

  // LP after 10 epochs; lp_loss() covers all 20 epochs of the same run.
  const nn::Network<float>& lp() {
    load_lp();
    return *lp_;
  }
  const std::vector<double>& lp_loss() {
    load_lp();
    return lp_loss_;
  }

  const nn::Network<float>& corr() {
    load_corr();
    return *corr_;
  }
  const std::vector<double>& corr_loss() {
    load_corr();
    return corr_loss_;
  }
  const std::vector<std::string>& corr_warnings() {
    load_corr();
    return corr_warnings_;
  }

  const nn::Network<float>& prob() {
    if (!prob_) {
      std::vector<double> loss;
      prob_ = cached_net("prob", loss, [&](std::vector<double>& l) {
        nn::TrainConfig tc;
        tc.epochs = 10;
        tc.dropout_p = 0.2;
        tc.seed = cfg_.seed + 2;
        auto net = nn::Network<float>::initialized({2, kFeatures}, cfg_.seed + 2);
        progress("training the dropout network (10 epochs)");
        l = nn::train(net, lp_dataset().data, tc).epoch_loss;
        return net;
      });
    }
    return *prob_;
  }

 private:
  SynthConfig cfg_;
  FluidKernel kernel_;
  PredictOptions opts_;
  std::optional<fs::path> cache_;
  std::optional<ScalarImage> tmpl_;
  std::vector<SynthPair> pairs_;
  std::vector<LoCase> lo_test_, lo_train_;
  std::optional<PatchBatch> lp_data_;
  std::optional<nn::Network<float>> lp_, corr_, prob_;
  std::vector<double> lp_loss_, corr_loss_;
  std::vector<std::string> corr_warnings_;

  std::vector<LoCase> run_lo(const std::string& tag, int first, int count, int iters) {
    std::vector<LoCase> out;
    const auto t0 = Clock::now();
    for (int k = 0; k < count; ++k) {
      const int idx = first + k;
      const auto mpath = cache_ ? *cache_ / fmt("%s_%04d.qsf", tag.c_str(), idx) : fs::path();
      const auto tpath = cache_ ? *cache_ / fmt("%s_%04d.trace", tag.c_str(), idx) : fs::path();
      if (cache_ && fs::exists(mpath) && fs::exists(tpath)) {
        LoCase c{read_vector(mpath), {}};
        std::ifstream is(tpath);
        TraceEntry e;
        while (is >> e.iter >> e.total >> e.reg >> e.match) c.trace.push_back(e);
        out.push_back(std::move(c));
        continue;
      }
      OptimizeConfig oc;
      oc.max_iters = iters;
      auto res = optimize(problem(pairs()[idx]), oc);
      if (cache_) {
        write_field(res.m0, mpath);
        std::ofstream os(tpath);
        os.precision(17);
        for (const auto& e : res.energy_trace) os << e.iter << ' ' << e.total << ' ' << e.reg << ' ' << e.match << '\n';
      }
      out.push_back({std::move(res.m0), std::move(res.energy_trace)});
      if ((k + 1) % 10 == 0) progress(fmt("%s: %d/%d optimised (%.0f s)", tag.c_str(), k + 1, count, since(t0)));
    }
    return out;
  }

  nn::Network<float> cached_net(const std::string& name, std::vector<double>& loss,
                                const std::function<nn::Network<float>(std::vector<double>&)>& make) {
    const auto npath = cache_ ? *cache_ / (name + ".qsnet") : fs::path();
    const auto lpath = cache_ ? *cache_ / (name + ".loss") : fs::path();
    if (cache_ && fs::exists(npath) && fs::exists(lpath)) {
      std::ifstream is(lpath);
      double v;
      while (is >> v) loss.push_back(v);
      return nn::read_qsnet(npath);
    }
    auto net = make(loss);
    if (cache_) {
      nn::write_qsnet(net, npath);
      std::ofstream os(lpath);
      os.precision(17);
      for (double v : loss) os << v << '\n';
    }
    return net;
  }

  void load_lp() {
    if (lp_) return;
    lp_ = cached_net("lp", lp_loss_, [&](std::vector<double>& l) {
      nn::TrainConfig tc;
      tc.epochs = 20;
      tc.seed = cfg_.seed;
      auto net = nn::Network<float>::initialized({2, kFeatures}, cfg_.seed);
      std::optional<nn::Network<float>> at10;
      progress(fmt("training LP on %zu patches (20 epochs, snapshot at 10)", lp_dataset().size()));
      l = nn::train(net, lp_dataset().data, tc, [&](int epoch, double loss) {
            progress(fmt("LP epoch %d loss %.6g", epoch + 1, loss));
            if (epoch == 9) at10 = net;
          }).epoch_loss;
      return *at10;
    });
  }

  void load_corr() {
    if (corr_) return;
    corr_ = cached_net("corr", corr_loss_, [&](std::vector<double>& l) {
      const auto data = build_correction_dataset(training_pairs(), lp(), opts_, kernel_, cfg_.shooting, &corr_warnings_);
      nn::TrainConfig tc;
      tc.epochs = 10;
      tc.seed = cfg_.seed + 1;
      auto net = lp();  // warm start, as train-correct does by default
      progress(fmt("training the correction network on %zu patches (10 epochs, from LP)", data.size()));
      l = nn::train(net, data.data, tc, [&](int epoch, double loss) {
            progress(fmt("correction epoch %d loss %.6g", epoch + 1, loss));
          }).epoch_loss;
      return net;
    });
  }
};

Suite& suite() {
  static Suite s;
  return s;
}

// ---------------------------------------------------------------------------

Outcome kernel_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  const FluidKernel::Params prm{};
  double worst_op = 0.0, worst_trip = 0.0;
  const std::array<int, 2> s2{8, 8};
  const std::array<double, 2> h2{1.0, 0.7};
  for (const auto& g : {GridGeometry::cube(2, 8), GridGeometry::make(s2, h2)}) {
    const FluidKernel k(g, prm);
    const Eigen::MatrixXd L = oracles::dense_L(g, prm);
    const auto lu = L.partialPivLu();
    for (int trial = 0; trial < 5; ++trial) {
      const auto v = testutil::random_field(g, rng);
      const Eigen::Map<const Eigen::VectorXd> x(v.values().data(), v.values().size());
      const Eigen::VectorXd Lref = L * x, Kref = lu.solve(x);
      const auto Lv = k.apply_L(v), Kv = k.apply_K(v);
      for (std::size_t i = 0; i < Lv.values().size(); ++i) {
        worst_op = std::max(worst_op, std::abs(Lv.values()[i] - Lref[i]));
        // K amplifies by up to 1/c, so its error is measured on the output scale
        worst_op = std::max(worst_op, std::abs(Kv.values()[i] - Kref[i]) / std::max(1.0, Kref.cwiseAbs().maxCoeff()));
      }
      const auto a = k.apply_K(Lv), b = k.apply_L(Kv);
      for (std::size_t i = 0; i < a.values().size(); ++i)
        worst_trip = std::max({worst_trip, std::abs(a.values()[i] - v.values()[i]), std::abs(b.values()[i] - v.values()[i])});
    }
  }
  const double secs = since(t0);
  return {worst_op < 1e-10 && worst_trip < 1e-10 && secs < 1.0,
          fmt("max op diff %.2e, round trip %.2e, %.2f s", worst_op, worst_trip, secs)};
}

constexpr double kBumpSigma = 4.0;

double ad_consistency(int n, std::uint64_t seed) {
  const auto g = GridGeometry::cube(2, n, 16.0 / n);
  std::mt19937_64 rng(seed);
  const auto v = testutil::BumpField::random(rng, 16.0, kBumpSigma);
  const auto m = testutil::BumpField::random(rng, 16.0, kBumpSigma);
  const auto w = testutil::BumpField::random(rng, 16.0, kBumpSigma);
  const auto ms = m.sample(g);
  const double lhs = testutil::dot(ad_star(v.sample(g), ms).values(), w.sample(g).values());
  const double rhs = testutil::dot(ms.values(), testutil::analytic_ad(g, v, w).values());
  return std::abs(lhs - rhs) / std::abs(rhs);
}

Outcome ad_duality() {
  // The grid pairing <ad*_v m, w> = <m, ad_v w> on random smooth periodic
  // fields; ad* is built as the transpose of ad, so what remains to shrink
  // under refinement is the error against the continuum ad.
  double dual16 = 0.0, dual32 = 0.0;
  for (int n : {16, 32}) {
    const auto g = GridGeometry::cube(2, n);
    std::mt19937_64 rng(2 + n);
    for (int t = 0; t < 5; ++t) {
      const auto v = testutil::smooth_periodic_field(g, rng), m = testutil::smooth_periodic_field(g, rng);
      const auto w = testutil::smooth_periodic_field(g, rng);
      const double lhs = testutil::dot(ad_star(v, m).values(), w.values());
      const double rhs = testutil::dot(m.values(), ad(v, w).values());
      (n == 16 ? dual16 : dual32) = std::max(n == 16 ? dual16 : dual32, std::abs(lhs - rhs) / std::abs(rhs));
    }
  }
  bool ok = dual16 < 1e-2 && dual32 < 1e-2;
  double w16 = 0.0, w32 = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double e16 = ad_consistency(16, seed), e32 = ad_consistency(32, seed);
    ok = ok && e32 < e16;
    w16 = std::max(w16, e16);
    w32 = std::max(w32, e32);
  }
  return {ok, fmt("grid duality 16^2 %.1e, 32^2 %.1e; continuum error worst 16^2 %.2e -> 32^2 %.2e", dual16, dual32,
                  w16, w32)};
}

double max_drift(const VectorField& m0, const FluidKernel& k, int steps) {
  const double e0 = k.pairing(m0, m0);
  double worst = 0.0;
  for (const auto& s : shoot_trajectory(m0, k, {steps, Integrator::Rk4}))
    worst = std::max(worst, std::abs(k.pairing(s.m, s.m) - e0) / e0);
  return worst;
}

Outcome shooting_conservation() {
  auto& S = suite();
  std::mt19937_64 rng(S.cfg().seed + 100);
  bool ok = true;
  double w20 = 0.0, w40 = 0.0;
  for (int t = 0; t < 5; ++t) {
    const auto acc = sample_momentum(S.tmpl(), S.cfg(), S.kernel(), S.cfg().momentum_scale, rng);
    const double d20 = max_drift(acc.m, S.kernel(), 20), d40 = max_drift(acc.m, S.kernel(), 40);
    ok = ok && d20 < 0.01 && d40 < d20;
    w20 = std::max(w20, d20);
    w40 = std::max(w40, d40);
  }
  return {ok, fmt("worst drift 20 steps %.2e, 40 steps %.2e", w20, w40)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const auto g = GridGeometry::cube(2, 16);
  auto blob = [&](double cx, double cy, double r) {
    ScalarImage img(g);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const auto idx = g.unravel(i);
      img[i] = std::exp(-((idx[0] - cx) * (idx[0] - cx) + (idx[1] - cy) * (idx[1] - cy)) / (2 * r * r));
    }
    return img;
  };
  const RegistrationProblem prob{blob(7.5, 7.5, 16 / 6.0), blob(9.0, 6.5, 16 / 5.0), FluidKernel(g, {}), 0.2,
                                 {5, Integrator::Rk4}};
  std::mt19937_64 rng(4);
  auto m0 = testutil::smooth_periodic_field(g, rng, 1.0, 2);
  m0 *= 1e-3;
  const auto grad = energy_gradient(m0, prob);
  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    auto dir = testutil::random_field(g, rng);
    dir *= 1.0 / std::sqrt(testutil::dot(dir.values(), dir.values()));
    const double eps = 1e-6;
    const double fd = (energy(m0 + eps * dir, prob).total - energy(m0 - eps * dir, prob).total) / (2 * eps);
    const double an = testutil::dot(grad.values(), dir.values());
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), 1e-12));
  }
  const double secs = since(t0);
  return {worst < 1e-4 && secs < 60.0, fmt("worst relative error %.2e over 20 directions, %.1f s", worst, secs)};
}

Outcome optimizer_quality() {
  auto& S = suite();
  const auto& lo = S.lo_test();
  int monotone = 0, fitted = 0, positive = 0;
  double worst_ratio = 0.0, min_det = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kTest; ++i) {
    const auto& tr = lo[i].trace;
    bool mono = true;
    for (std::size_t k = 1; k < tr.size(); ++k) mono = mono && tr[k].total <= tr[k - 1].total;
    monotone += mono;
    const double ratio = tr.back().match / tr.front().match;
    fitted += ratio < 0.2;
    worst_ratio = std::max(worst_ratio, ratio);
    const double d = min_interior_jacobian(shoot(lo[i].m, S.kernel(), S.shooting()).phi_inv);
    positive += d > 0.0;
    min_det = std::min(min_det, d);
  }
  return {monotone == kTest && fitted == kTest && positive == kTest,
          fmt("monotone %d/%d, match ratio < 0.2 %d/%d (worst %.3f), det J > 0 %d/%d (min %.3f)", monotone, kTest,
              fitted, kTest, worst_ratio, positive, kTest, min_det)};
}

// Maps of the LO reference and of a prediction method on every test pair.
std::vector<DeformationMap> lo_maps() {
  auto& S = suite();
  std::vector<DeformationMap> out;
  for (const auto& c : S.lo_test()) out.push_back(shoot(c.m, S.kernel(), S.shooting()).phi_inv);
  return out;
}

double median_error(std::span<const DeformationMap> pred, std::span<const DeformationMap> ref,
                    std::span<const ScalarImage> masks = {}) {
  const std::vector<double> p50{50.0};
  return deformation_error_percentiles(pred, ref, masks, p50)[0].value;
}

struct Predictions {
  std::vector<VectorField> lp, lpc;
  std::vector<DeformationMap> lp_maps, lpc_maps;
  std::vector<ScalarImage> masks;
};

const Predictions& predictions() {
  static std::optional<Predictions> P;
  if (P) return *P;
  auto& S = suite();
  Predictions p;
  for (int i = 0; i < kTest; ++i) {
    const auto& tp = S.test_pair(i);
    p.lp.push_back(predict_full(S.lp(), tp.moving, tp.target, S.opts()).momentum);
    p.lpc.push_back(predict_corrected(S.lp(), S.corr(), tp.moving, tp.target, S.opts(), S.kernel(), S.shooting())
                        .momentum);
    p.lp_maps.push_back(shoot(p.lp.back(), S.kernel(), S.shooting()).phi_inv);
    p.lpc_maps.push_back(shoot(p.lpc.back(), S.kernel(), S.shooting()).phi_inv);
    ScalarImage mask(tp.moving.geometry());
    for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = tp.moving[v] > 0.01 ? 1.0 : 0.0;
    p.masks.push_back(std::move(mask));
  }
  P = std::move(p);
  return *P;
}

Outcome lp_quality() {
  auto& S = suite();
  const auto ref = lo_maps();
  const auto& P = predictions();
  const std::vector<DeformationMap> ids(kTest, identity_map(S.cfg().geom));
  const double lp = median_error(P.lp_maps, ref), base = median_error(ids, ref);
  const double lp_fg = median_error(P.lp_maps, ref, P.masks), base_fg = median_error(ids, ref, P.masks);
  return {lp < 0.5 * base, fmt("median error LP %.4f vs identity %.4f (ratio %.3f); foreground %.4f vs %.4f", lp, base,
                               lp / base, lp_fg, base_fg)};
}

Outcome correction_quality() {
  auto& S = suite();
  const auto ref = lo_maps();
  const auto& P = predictions();
  const double e_lp = median_error(P.lp_maps, ref), e_lpc = median_error(P.lpc_maps, ref);
  double lo_sum = 0, lp_sum = 0, lpc_sum = 0;
  int closer = 0;
  for (int i = 0; i < kTest; ++i) {
    const auto prob = S.problem(S.test_pair(i));
    const double elo = S.lo_test()[i].trace.back().total;
    const double elp = energy(P.lp[i], prob).total, elpc = energy(P.lpc[i], prob).total;
    lo_sum += elo;
    lp_sum += elp;
    lpc_sum += elpc;
    closer += elpc <= elp;
  }
  const double lo_mean = lo_sum / kTest, lp_mean = lp_sum / kTest, lpc_mean = lpc_sum / kTest;
  const double corr_final = S.corr_loss().back(), lp20 = S.lp_loss().back();
  const bool ok = e_lpc < e_lp && lo_mean <= lpc_mean && lpc_mean <= lp_mean && closer >= 0.7 * kTest &&
                  corr_final < lp20;
  std::string d = fmt("median error LPC %.4f < LP %.4f; mean energy LO %.2f <= LPC %.2f <= LP %.2f; "
                      "E(LPC) <= E(LP) on %d/%d; loss corr(10) %.5f < LP(20) %.5f",
                      e_lpc, e_lp, lo_mean, lpc_mean, lp_mean, closer, kTest, corr_final, lp20);
  if (!S.corr_warnings().empty()) d += fmt("; %zu pairs skipped", S.corr_warnings().size());
  return {ok, d};
}

Outcome probabilistic() {
  auto& S = suite();
  const auto& net = S.prob();
  const auto& tp = S.test_pair(0);
  const auto mc = mc_predict(net, tp.moving, tp.target, S.opts(), S.kernel(), S.shooting(), 50, 0.2, 11);
  bool unc_ok = mc.uncertainty.has_value() && mc.samples.size() == 50;
  double umax = 0.0;
  if (unc_ok)
    for (std::size_t v = 0; v < mc.uncertainty->size(); ++v) {
      const double u = (*mc.uncertainty)[v];
      unc_ok = unc_ok && std::isfinite(u) && u >= 0.0;
      umax = std::max(umax, u);
    }
  unc_ok = unc_ok && umax > 0.0;

  const auto det = predict_full(net, tp.moving, tp.target, S.opts()).momentum;
  const auto off = mc_predict(net, tp.moving, tp.target, S.opts(), S.kernel(), S.shooting(), 5, 0.0, 11);
  const bool exact = std::equal(det.values().begin(), det.values().end(), off.momentum.values().begin(),
                                off.momentum.values().end());

  const int total = 240;
  std::vector<VectorField> samples;
  for (int s = 0; s < total; ++s) samples.push_back(predict_sample(net, tp.moving, tp.target, S.opts(), 0.2, 5000 + s));
  auto group_variance = [&](int n) {
    const int groups = total / n;
    double acc = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < samples[0].values().size(); ++i) {
      std::vector<double> means(groups, 0.0);
      for (int g = 0; g < groups; ++g)
        for (int k = 0; k < n; ++k) means[g] += samples[g * n + k].values()[i] / n;
      double mu = 0.0, var = 0.0;
      for (double m : means) mu += m / groups;
      for (double m : means) var += (m - mu) * (m - mu) / (groups - 1);
      if (var > 0.0) {
        acc += var;
        ++used;
      }
    }
    return used ? acc / used : 0.0;
  };
  const double v10 = group_variance(10), v40 = group_variance(40);
  const double ratio = v40 > 0.0 ? v10 / v40 : 0.0;
  return {unc_ok && exact && ratio >= 2.0 && ratio <= 8.0,
          fmt("uncertainty finite and >= 0: %s (max %.3g); p=0 exact: %s; group variance ratio %.2f", unc_ok ? "yes" : "no",
              umax, exact ? "yes" : "no", ratio)};
}

bool covers(const std::vector<int>& starts, int size, int p) {
  std::vector<int> hit(size, 0);
  for (int s : starts) {
    if (s < 0 || s + p > size) return false;
    for (int i = s; i < s + p; ++i) hit[i] = 1;
  }
  return std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; });
}

VectorField float_field(const GridGeometry& g, std::mt19937_64& rng) {
  VectorField f(g);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (double& v : f.values()) v = u(rng);
  return f;
}

Outcome patch_system() {
  auto& S = suite();
  std::mt19937_64 rng(9);
  int covered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int p = std::uniform_int_distribution<int>(1, 20)(rng);
    const int s = std::uniform_int_distribution<int>(1, p)(rng);
    std::uniform_int_distribution<int> extent(std::max(p, 4), 90);  // grids need 4 voxels per axis
    const int n0 = extent(rng), n1 = extent(rng);
    bool ok = covers(axis_starts(n0, p, s), n0, p) && covers(axis_starts(n1, p, s), n1, p);
    const auto g = GridGeometry::make(std::vector<int>{n0, n1});
    const auto count = coverage_count(grid_locations(g, {p, s, 0.01}), g, p);
    for (std::size_t i = 0; i < count.size(); ++i) ok = ok && count[i] >= 1.0;
    covered += ok;
  }

  bool identity = true;
  for (const auto& g : {S.cfg().geom, GridGeometry::cube(3, 20)}) {
    const PatchSpec spec = g.dim == 2 ? S.opts().patch : PatchSpec{7, 6, 0.01};
    const auto mom = float_field(g, rng);
    const ScalarImage blank(g);
    const auto b = extract(blank, blank, &mom, spec);
    const auto back = assemble(b.data.momentum, b.locations, g, spec.patch_size);
    identity = identity && std::equal(back.values().begin(), back.values().end(), mom.values().begin());
  }

  const auto& spec = S.opts().patch;
  const auto all = extract(S.tmpl(), S.tmpl(), nullptr, spec);
  const double removed = 1.0 - static_cast<double>(prune_background(all, spec).size()) / all.size();

  // pruned-only voxels of a real pair receive exactly zero momentum
  const auto& tp = S.test_pair(0);
  const auto mom = float_field(S.cfg().geom, rng);
  const auto kept = prune_background(extract(tp.moving, tp.target, &mom, spec), spec);
  const auto back = assemble(kept.data.momentum, kept.locations, S.cfg().geom, spec.patch_size);
  const auto cov = coverage_count(kept.locations, S.cfg().geom, spec.patch_size);
  bool zero = true;
  int uncovered = 0;
  for (std::size_t v = 0; v < cov.size(); ++v)
    if (cov[v] == 0.0) {
      ++uncovered;
      for (int a = 0; a < 2; ++a) zero = zero && back.at(v, a) == 0.0;
    }
  return {covered == 1000 && identity && removed >= 0.4 && zero && uncovered > 0,
          fmt("coverage %d/1000, round trip %s, template pruning %.0f%%, %d pruned-only voxels all zero: %s", covered,
              identity ? "exact" : "broken", 100 * removed, uncovered, zero ? "yes" : "no")};
}

template <class T>
nn::Tensor<T> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  nn::Tensor<T> t(std::move(shape));
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.data) v = static_cast<T>(nd(rng));
  return t;
}

double weighted_sum(const nn::Tensor<double>& y, const nn::Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
  return s;
}

Outcome neural_core() {
  using nn::ConvSpec;
  std::mt19937_64 rng(10);
  double worst = 0.0;
  // 3^d convolution, 2^d stride-2 pooling and transposed unpooling, 2D and 3D
  const std::vector<std::pair<ConvSpec, std::vector<int>>> convs{
      {{2, 2, 3, 3, 1, 1, 0, false}, {1, 2, 7, 7}}, {{2, 2, 3, 2, 2, 1, 0, false}, {1, 2, 7, 7}},
      {{2, 2, 3, 2, 2, 0, 1, true}, {1, 2, 4, 4}},  {{3, 2, 2, 3, 1, 1, 0, false}, {1, 2, 4, 5, 4}},
      {{3, 2, 2, 2, 2, 1, 0, false}, {1, 2, 5, 5, 5}}, {{3, 2, 2, 2, 2, 1, 1, true}, {1, 2, 3, 3, 3}}};
  for (const auto& [spec, shape] : convs) {
    auto x = random_tensor<double>(shape, rng);
    auto w = random_tensor<double>(spec.weight_shape(), rng);
    auto b = random_tensor<double>({spec.out_ch}, rng);
    const auto r = random_tensor<double>(nn::conv_forward(x, w, b, spec).shape, rng);
    auto loss = [&] { return weighted_sum(nn::conv_forward(x, w, b, spec), r); };
    nn::Tensor<double> gx, gw, gb;
    nn::conv_backward(x, w, spec, r, &gx, gw, gb);
    worst = std::max({worst, oracles::fd_check(x.data, gx.data, loss, rng), oracles::fd_check(w.data, gw.data, loss, rng),
                      oracles::fd_check(b.data, gb.data, loss, rng)});
  }
  {
    auto x = random_tensor<double>({2, 3, 7, 7}, rng);
    auto slope = random_tensor<double>({3}, rng, 0.3);
    const auto r = random_tensor<double>(x.shape, rng);
    auto loss = [&] { return weighted_sum(nn::prelu_forward(x, slope), r); };
    nn::Tensor<double> gx, gs;
    nn::prelu_backward(x, slope, r, gx, gs);
    worst = std::max({worst, oracles::fd_check(x.data, gx.data, loss, rng, 60, 1e-7),
                      oracles::fd_check(slope.data, gs.data, loss, rng)});
  }
  {
    auto net = nn::Network<double>::initialized({2, 2}, 4);
    for (auto& p : net.params())
      for (auto& v : p.value.data) v += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
    auto mv = random_tensor<double>({2, 1, 7, 7}, rng), tg = random_tensor<double>({2, 1, 7, 7}, rng);
    auto run = [&](nn::ForwardCache<double>* cache) {
      std::mt19937_64 r(77);
      return net.forward(mv, tg, nn::Mode::McDropout, 0.3, &r, cache);
    };
    nn::ForwardCache<double> cache;
    const auto r = random_tensor<double>(run(&cache).shape, rng);
    const auto grads = net.backward(cache, r);
    auto loss = [&] { return weighted_sum(run(nullptr), r); };
    for (std::size_t i = 0; i < net.params().size(); ++i)
      worst = std::max(worst, oracles::fd_check(net.params()[i].value.data, grads[i].data, loss, rng, 6, 1e-6));
  }

  // two training runs from the same seed on real patches, with dropout
  auto& S = suite();
  const auto& tp = S.test_pair(0);
  auto data = prune_background(extract(tp.moving, tp.target, &tp.momentum, S.opts().patch), S.opts().patch).data;
  nn::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.dropout_p = 0.2;
  tc.seed = 5;
  auto a = nn::Network<float>::initialized({2, 4}, 3), b = a;
  const auto ra = nn::train(a, data, tc), rb = nn::train(b, data, tc);
  bool same = ra.step_loss == rb.step_loss;
  for (std::size_t i = 0; i < a.params().size(); ++i) same = same && a.params()[i].value.data == b.params()[i].value.data;
  return {worst < 1e-4 && same,
          fmt("worst layer/network FD error %.2e; repeated training bitwise identical: %s", worst, same ? "yes" : "no")};
}

Outcome runtime_direction() {
  // 128^2 pairs with F=64 networks briefly trained on ground-truth momenta
  auto& S = suite();
  SynthConfig c = S.cfg();
  c.geom = GridGeometry::cube(2, 128);
  progress("generating 128^2 pairs");
  const auto pairs = generate_pairs(c, 0, 7);
  const FluidKernel k(c.geom, c.kernel);
  std::vector<TrainingPair> warm;
  for (int i = 3; i < 7; ++i) warm.push_back({pairs[i].moving, pairs[i].target, pairs[i].momentum});
  nn::TrainConfig tc;
  tc.epochs = 5;  // enough for momenta that shoot without diverging
  tc.seed = 3;
  progress("warm-up training of the F=64 networks");
  auto lp = nn::Network<float>::initialized({2, 64}, 3);
  nn::train(lp, build_training_dataset(warm, S.opts().patch).data, tc);
  auto corr = lp;
  nn::train(corr, build_correction_dataset(warm, lp, S.opts(), k, c.shooting).data, tc);

  std::vector<double> t_lo, t_lp, t_lpc;
  for (int i = 0; i < 3; ++i) {
    const RegistrationProblem prob{pairs[i].moving, pairs[i].target, k, 0.2, c.shooting};
    progress(fmt("timing pair %d", i));
    auto t0 = Clock::now();
    optimize(prob, {});
    t_lo.push_back(since(t0));
    t0 = Clock::now();
    predict_full(lp, prob.moving, prob.target, S.opts());
    t_lp.push_back(since(t0));
    t0 = Clock::now();
    predict_corrected(lp, corr, prob.moving, prob.target, S.opts(), k, c.shooting);
    t_lpc.push_back(since(t0));
  }
  const double lo = median_of(t_lo), lpt = median_of(t_lp), lpc = median_of(t_lpc);
  const double speedup = lo / lpt, ratio = lpc / lpt;
  return {speedup >= 5.0 && ratio >= 1.5 && ratio <= 2.5,
          fmt("median per pair: LO %.2f s, LP %.3f s, LPC %.3f s; LO/LP %.1fx, LPC/LP %.2f", lo, lpt, lpc, speedup,
              ratio)};
}

Outcome eval_oracles() {
  std::mt19937_64 rng(12);
  int agree = 0, trials = 0;
  for (int t = 0; t < 500; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 80)(rng);
    std::vector<double> v(n);
    for (double& x : v) x = std::uniform_int_distribution<int>(0, 30)(rng) * 0.25;
    std::vector<double> ps = default_percentiles();
    ps.push_back(std::uniform_real_distribution<double>(0.0, 100.0)(rng));
    const auto got = percentiles(v, ps);
    for (std::size_t i = 0; i < ps.size(); ++i, ++trials) agree += got[i] == oracles::oracle_percentile(v, ps[i]);
  }

  // 10x10 label maps: label 1 a 4x4 square, label 2 a 2x5 bar; the warped
  // square is shifted one column (12 of 16 kept), the bar is intact
  const auto g = GridGeometry::cube(2, 10);
  ScalarImage target(g), warped(g);
  for (int i = 1; i < 5; ++i)
    for (int j = 1; j < 5; ++j) target[i * 10 + j] = 1;
  for (int i = 1; i < 5; ++i)
    for (int j = 2; j < 6; ++j) warped[i * 10 + j] = 1;
  for (int j = 3; j < 8; ++j)
    for (int i = 7; i < 9; ++i) target[i * 10 + j] = warped[i * 10 + j] = 2;
  const double to = target_overlap(warped, target);
  const double hand = (12.0 / 16.0 + 10.0 / 10.0) / 2.0;

  const std::vector<DeformationMap> ids(4, identity_map(GridGeometry::cube(2, 32)));
  const auto h = logdetj_histogram(ids, 101);
  int zero_bin = -1;
  for (int b = 0; b < 101; ++b)
    if (h.edges[b] <= 0.0 && 0.0 < h.edges[b + 1]) zero_bin = b;
  const bool concentrated = zero_bin >= 0 && h.counts[zero_bin] == h.binned() && h.binned() == 4 * 30 * 30 && h.overflow == 0;
  return {agree == trials && to == hand && concentrated,
          fmt("percentiles %d/%d exact; TO %.4f vs hand %.4f; identity histogram in bin %d: %lld/%lld", agree, trials, to,
              hand, zero_bin, zero_bin >= 0 ? h.counts[zero_bin] : 0LL, h.binned())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "kernel oracle", kernel_oracle},
      {2, "ad* duality", ad_duality},
      {3, "shooting conservation", shooting_conservation},
      {4, "gradient correctness", gradient_check},
      {5, "optimizer", optimizer_quality},
      {6, "LP quality", lp_quality},
      {7, "correction improves prediction", correction_quality},
      {8, "probabilistic network", probabilistic},
      {9, "patch system", patch_system},
      {10, "neural core", neural_core},
      {11, "runtime direction", runtime_direction},
      {12, "evaluation oracles", eval_oracles},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s %2d %-32s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
