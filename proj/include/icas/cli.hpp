#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icas/attacks.hpp"
#include "icas/fit.hpp"
#include "icas/toymodel.hpp"

namespace icas::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kNumericError = 3 };

/// Everything a command may need; filled from the config file, then from flags.
struct RunConfig {
  ToyWorldConfig world;
  int members_per_condition = 25;
  int nonmembers_per_condition = 25;
  std::optional<std::uint64_t> data_seed;  // defaults to world.seed + 1
  TrainConfig train;
  bool train_seed_set = false;             // otherwise world.seed + 2
  std::vector<RenyiOrder> alphas{RenyiOrder(0.5), RenyiOrder(1.0), RenyiOrder(2.0), RenyiOrder::infinity()};

  std::optional<std::filesystem::path> manifest;  // defaults to <out_dir>/manifest.txt
  std::vector<AttackConfig> attacks;
  ScaleFilter scales = ScaleFilter::all();

  std::vector<double> fpr_budgets{0.05};
  std::optional<double> calibration_fraction;
  std::optional<std::uint64_t> eval_seed;

  std::optional<std::filesystem::path> fit_input;
  XTransform x_transform = XTransform::identity;
  std::optional<double> max_auroc;

  std::optional<std::filesystem::path> convert_input;
  std::optional<std::filesystem::path> convert_output;

  std::filesystem::path out_dir = ".";
  bool quiet = false;

  std::uint64_t resolved_data_seed() const { return data_seed.value_or(world.seed + 1); }
  std::filesystem::path resolved_manifest() const { return manifest.value_or(out_dir / "manifest.txt"); }
};

/// Default attack list: ICAS with and without adaptive aggregation plus the four baselines.
std::vector<AttackConfig> default_attacks();

/// Parses the INI-style config text. Unknown sections or keys are rejected;
/// errors name the offending "section.key".
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Score table file for one attack inside `dir`.
std::filesystem::path score_table_path(const std::filesystem::path& dir, const AttackConfig& attack);

struct ScoreTable {
  AttackConfig attack;
  std::vector<ScoredSample> rows;
};

void write_score_table(const ScoreTable& table, const std::string& scales, const std::filesystem::path& path);
ScoreTable read_score_table(const std::filesystem::path& path);

/// Reads "x,auroc" rows; a non-numeric first line is treated as a header.
std::vector<FitPoint> read_fit_points(const std::filesystem::path& path);

int cmd_simulate(const RunConfig& cfg, std::ostream& out);
int cmd_score(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_fit(const RunConfig& cfg, std::ostream& out);
int cmd_convert(const RunConfig& cfg, std::ostream& out);

/// Entry point shared by the binary and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace icas::cli
