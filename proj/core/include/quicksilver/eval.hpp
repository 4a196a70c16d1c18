#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quicksilver/grid.hpp"
#include "quicksilver/optimizer.hpp"
#include "quicksilver/predict.hpp"

namespace quicksilver {

/// {0.3, 5, 25, 50, 75, 95, 99.7}
std::vector<double> default_percentiles();

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (rank
/// clamped to [1, n]). `values` is taken by value and sorted.
std::vector<double> percentiles(std::vector<double> values, std::span<const double> pcts);

struct PercentileValue {
  double percentile = 0.0;
  double value = 0.0;
};

/// Euclidean distance between mapped positions (physical units) at every voxel
/// where mask > 0, or every voxel when mask is null.
std::vector<double> deformation_errors(const DeformationMap& pred, const DeformationMap& ref,
                                       const ScalarImage* mask = nullptr);

/// Errors pooled over all cases. `masks` is empty or one per case.
std::vector<PercentileValue> deformation_error_percentiles(std::span<const DeformationMap> pred,
                                                           std::span<const DeformationMap> ref,
                                                           std::span<const ScalarImage> masks = {},
                                                           std::span<const double> pcts = {});

/// Fraction of maps whose minimum interior det J is positive.
double detj_positive_ratio(std::span<const DeformationMap> maps);

/// Mean over the nonzero labels l of the target of |warped = l and target = l| / |target = l|.
/// Labels are compared after rounding to integers.
double target_overlap(const ScalarImage& warped_labels, const ScalarImage& target_labels);

/// Integer label image from intensities: round(levels * I) (0 stays background).
ScalarImage intensity_labels(const ScalarImage& img, int levels);

struct MethodEnergy {
  std::string method;
  std::vector<std::optional<double>> per_case;  // empty where shooting diverged
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over the present cases
  int missing = 0;
};

/// Total energy per case and method. An "initial" row (m0 = 0) comes first.
std::vector<MethodEnergy> energy_report(const std::vector<RegistrationProblem>& problems,
                                        const std::vector<std::pair<std::string, std::vector<VectorField>>>& momenta);

struct Histogram {
  std::vector<double> edges;      // bins + 1
  std::vector<long long> counts;  // values outside the range land in the end bins
  long long overflow = 0;         // det J <= 0, not binned
  double sum = 0.0;               // of the binned log10 det J values
  double sum_sq = 0.0;

  long long binned() const;
  std::vector<double> centers() const;
  double mean() const;
  double variance() const;
};

/// Pooled histogram of log10 det J over interior voxels. An odd bin count
/// keeps 0 at a bin centre.
Histogram logdetj_histogram(std::span<const DeformationMap> maps, int bins = 101, double lo = -1.0, double hi = 1.0);

/// a.counts - b.counts; the histograms must share their edges.
std::vector<long long> histogram_difference(const Histogram& a, const Histogram& b);

struct TimedMethod {
  std::string method;
  std::vector<double> seconds;  // per case
  long long patches_predicted = 0;
  long long patches_pruned = 0;
  double mean() const;
};

struct TimingReport {
  std::vector<TimedMethod> methods;
  const TimedMethod& get(const std::string& method) const;
  /// mean(slow) / mean(fast)
  double speedup(const std::string& fast, const std::string& slow) const;
};

/// Times optimize ("LO"), predict_full ("LP") and, when a correction network
/// is given, predict_corrected ("LPC") on the same problems.
TimingReport timing_report(const std::vector<RegistrationProblem>& problems, const nn::Network<float>& lp,
                           const nn::Network<float>* corr, const PredictOptions& opts,
                           const OptimizeConfig& optimize_cfg = {});

struct EvalCase {
  std::string id;
  RegistrationProblem problem;
  std::optional<DeformationMap> reference_map;  // ground truth Phi^-1, if known
  std::optional<ScalarImage> moving_labels;
  std::optional<ScalarImage> target_labels;
};

struct MethodResult {
  std::string method;
  std::vector<VectorField> momenta;  // one per case
  std::vector<double> seconds;       // optional, one per case
  long long patches_predicted = 0;
  long long patches_pruned = 0;
};

struct EvalOptions {
  std::vector<double> percentiles = default_percentiles();
  /// Method whose maps serve as reference; empty means the cases' reference maps.
  std::string reference_method;
  /// Restrict the error statistics to voxels where the moving image exceeds this.
  std::optional<double> mask_threshold;
  int hist_bins = 101;
  double hist_lo = -1.0;
  double hist_hi = 1.0;
  int workers = 1;
};

struct CaseRow {
  std::string case_id;
  std::string method;
  std::optional<double> median_error;
  std::optional<double> min_detj;
  std::optional<double> target_overlap;
  std::optional<double> energy;
  std::optional<double> wall_time;
};

struct EvalReport {
  std::vector<CaseRow> rows;
  std::map<std::string, std::vector<PercentileValue>> percentiles;  // per method
  std::map<std::string, double> detj_positive_ratio;
  std::map<std::string, double> target_overlap_mean;
  std::vector<MethodEnergy> energies;
  std::map<std::string, Histogram> logdetj;
  std::optional<TimingReport> timings;
  std::vector<std::string> warnings;
};

/// Shoots every method's momenta and gathers all metrics. Cases are processed
/// in parallel; results are reduced in case order.
EvalReport evaluate(const std::vector<EvalCase>& cases, const std::vector<MethodResult>& methods,
                    const EvalOptions& opts = {});

/// Per-case rows: case, method, median_error, min_detj, target_overlap, energy, wall_time.
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
/// Summary as JSON (percentiles, ratios, energies, timings, warnings).
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
/// Two columns: bin_center,count. With `reference`, a third column holds the difference.
void write_histogram_csv(const Histogram& h, const std::filesystem::path& path, const Histogram* reference = nullptr);

}  // namespace quicksilver
