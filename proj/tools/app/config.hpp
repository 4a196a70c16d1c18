#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "quicksilver/eval.hpp"
#include "quicksilver/nn/train.hpp"
#include "quicksilver/optimizer.hpp"
#include "quicksilver/predict.hpp"
#include "quicksilver/synthetic.hpp"

namespace quicksilver::app {

/// Bad key, bad value or malformed config line. Reported as a usage error.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` settings with a fixed key set; every key has a default.
class RunConfig {
 public:
  RunConfig();

  /// `key = value` lines; `#` starts a comment; blank lines ignored.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void set_assignment(const std::string& kv);

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;

  /// Every key, sorted, one `key = value` per line.
  std::string snapshot() const;
  void write_snapshot(const std::filesystem::path& path) const;

  static std::vector<std::pair<std::string, std::string>> defaults();

  FluidKernel::Params kernel() const;
  ShootingConfig shooting() const;
  OptimizeConfig optimize() const;
  PatchSpec patch() const;
  nn::NetConfig net(int dim) const;
  nn::TrainConfig train() const;
  PredictOptions predict() const;
  SynthConfig synth() const;
  EvalOptions eval() const;
  /// Problem for one pair with the configured kernel, sigma and shooting.
  RegistrationProblem problem(const ScalarImage& moving, const ScalarImage& target) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace quicksilver::app
