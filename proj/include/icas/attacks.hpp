#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "icas/records.hpp"
#include "icas/stats.hpp"

namespace icas {

enum class Direction { higher_is_member, lower_is_member };

const char* to_string(Direction d) noexcept;
Direction parse_direction(const std::string& text);

inline constexpr double kDefaultIcasA = 1.75;
inline constexpr double kDefaultIcasB = 1.3;
inline constexpr double kDefaultKPercent = 20.0;
inline constexpr double kDefaultSigmaFloor = 1e-6;

/// Implicit-classifier score with optional adaptive aggregation.
struct IcasConfig {
  double a = kDefaultIcasA;
  double b = kDefaultIcasB;
  bool adaptive = true;
};

struct LossConfig {};

struct MinKConfig {
  double k_percent = kDefaultKPercent;
};

struct MinKppConfig {
  double k_percent = kDefaultKPercent;
  double sigma_floor = kDefaultSigmaFloor;
};

struct RenyiConfig {
  RenyiOrder alpha{2.0};
  double k_percent = kDefaultKPercent;
  Direction direction = Direction::lower_is_member;
};

using AttackConfig = std::variant<IcasConfig, LossConfig, MinKConfig, MinKppConfig, RenyiConfig>;

/// Parses "name[:key=value,...]", e.g. "icas:a=1.75,b=1.3", "mink:k=20",
/// "renyi:alpha=inf,k=10,direction=higher". Throws ConfigError.
AttackConfig parse_attack(const std::string& spec);
/// Canonical spec string; parse_attack(describe(c)) reproduces c.
std::string describe(const AttackConfig& cfg);
/// Short file-name-safe identifier, unique per distinct configuration.
std::string attack_slug(const AttackConfig& cfg);
/// Human-readable row label for report tables.
std::string attack_title(const AttackConfig& cfg);
void validate(const AttackConfig& cfg);

/// Subset of scale levels whose tokens take part in scoring.
class ScaleFilter {
 public:
  static ScaleFilter all() { return ScaleFilter(); }
  static ScaleFilter only(std::set<int> scales);
  /// Scales 1..j.
  static ScaleFilter first(int j);
  /// "all" or a comma list such as "1,2,3".
  static ScaleFilter parse(const std::string& text);

  bool is_all() const noexcept { return !scales_; }
  bool includes(int scale) const { return !scales_ || scales_->count(scale) > 0; }
  /// Throws ConfigError unless every listed scale lies in [1, K].
  void check(const ScaleLayout& layout) const;
  std::string to_string() const;

 private:
  std::optional<std::set<int>> scales_;
};

struct ScoredSample {
  std::string sample_id;
  Label label = Label::unknown;
  double score = 0.0;
  Direction direction = Direction::higher_is_member;

  bool operator==(const ScoredSample&) const = default;
};

/// log p(x_i|c) - log p(x_i).
inline double icas_token_score(const TokenObservation& t) { return t.cond_lp - t.uncond_lp; }

/// 1 / (a + exp(b s)), with the exponent clamped at 700.
double adaptive_weight(double s, double a, double b);

/// Number of tokens kept by a k% selection over n tokens: max(1, ceil(k n / 100)).
std::size_t selection_count(double k_percent, std::size_t n);

ScoredSample score_icas(const SampleRecord& r, const IcasConfig& cfg, const ScaleFilter& f);
ScoredSample score_loss(const SampleRecord& r, const ScaleFilter& f);
ScoredSample score_mink(const SampleRecord& r, const MinKConfig& cfg, const ScaleFilter& f);
ScoredSample score_minkpp(const SampleRecord& r, const MinKppConfig& cfg, const ScaleFilter& f);
ScoredSample score_renyi(const SampleRecord& r, const RenyiConfig& cfg, const ScaleFilter& f);

ScoredSample score_record(const SampleRecord& r, const AttackConfig& cfg, const ScaleFilter& f);

/// One score per record, input order preserved for any worker count.
/// Errors carry the failing sample_id.
std::vector<ScoredSample> score_dataset(std::span<const SampleRecord> records, const AttackConfig& cfg,
                                        const ScaleFilter& f, std::size_t workers = 1);

/// True when the records do not all share one layout (raw sums are then not comparable).
bool mixed_layouts(std::span<const SampleRecord> records);

}  // namespace icas
