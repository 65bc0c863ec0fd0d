#include "icas/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "icas/error.hpp"
#include "icas/numfmt.hpp"
#include "icas/parallel.hpp"

namespace icas {

namespace {

constexpr double kMaxExponent = 700.0;

// Tokens that pass the filter, in canonical (scale, position) order so every
// sum below is evaluated in the same order regardless of how tokens arrived.
std::vector<const TokenObservation*> filtered(const SampleRecord& r, const ScaleFilter& f) {
  f.check(r.layout);
  std::vector<const TokenObservation*> out;
  out.reserve(r.tokens.size());
  for (const TokenObservation& t : r.tokens)
    if (f.includes(t.scale)) out.push_back(&t);
  if (out.empty())
    throw ConfigError("scale filter " + f.to_string() + " excludes every token of " + r.sample_id);
  auto key = [](const TokenObservation* t) { return std::pair(t->scale, t->position); };
  if (!std::is_sorted(out.begin(), out.end(), [&](auto* x, auto* y) { return key(x) < key(y); }))
    std::sort(out.begin(), out.end(), [&](auto* x, auto* y) { return key(x) < key(y); });
  return out;
}

struct KeyedValue {
  double value;
  int scale;
  int position;
};

std::vector<KeyedValue> keyed(const std::vector<const TokenObservation*>& tokens, auto&& value_of) {
  std::vector<KeyedValue> out;
  out.reserve(tokens.size());
  for (const TokenObservation* t : tokens) out.push_back({value_of(*t), t->scale, t->position});
  return out;
}

// Sum of the m smallest (or largest) values; ties resolved by (scale, position).
// The chosen values are added in (scale, position) order, so a full selection
// reproduces the plain canonical-order sum bit for bit.
double select_sum(std::vector<KeyedValue> values, double k_percent, bool largest) {
  const std::size_t m = selection_count(k_percent, values.size());
  auto less = [largest](const KeyedValue& x, const KeyedValue& y) {
    if (x.value != y.value) return largest ? x.value > y.value : x.value < y.value;
    return std::tie(x.scale, x.position) < std::tie(y.scale, y.position);
  };
  const auto cut = values.begin() + static_cast<std::ptrdiff_t>(m);
  if (m < values.size()) std::nth_element(values.begin(), cut, values.end(), less);
  std::sort(values.begin(), cut, [](const KeyedValue& x, const KeyedValue& y) {
    return std::tie(x.scale, x.position) < std::tie(y.scale, y.position);
  });
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += values[i].value;
  return sum;
}

void check_k(double k, const char* who) {
  if (!(k > 0.0 && k <= 100.0)) throw ConfigError(std::string(who) + ": k must lie in (0, 100]");
}

ScoredSample make(const SampleRecord& r, double score, Direction d) {
  if (!std::isfinite(score)) throw NumericError("non-finite score for " + r.sample_id);
  return {r.sample_id, r.label, score, d};
}

std::map<std::string, std::string> parse_params(const std::string& spec, std::string& name) {
  std::map<std::string, std::string> params;
  const auto colon = spec.find(':');
  name = spec.substr(0, colon);
  if (colon == std::string::npos) return params;
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("attack '" + spec + "': expected key=value, got '" + item + "'");
    if (!params.emplace(item.substr(0, eq), item.substr(eq + 1)).second)
      throw ConfigError("attack '" + spec + "': duplicate key '" + item.substr(0, eq) + "'");
  }
  return params;
}

double take_real(std::map<std::string, std::string>& params, const std::string& key, double fallback,
                 const std::string& spec) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const auto v = parse_real(it->second);
  if (!v) throw ConfigError("attack '" + spec + "': " + key + " is not a number");
  params.erase(it);
  return *v;
}

bool take_bool(std::map<std::string, std::string>& params, const std::string& key, bool fallback,
               const std::string& spec) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const std::string v = it->second;
  params.erase(it);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("attack '" + spec + "': " + key + " must be true or false");
}

}  // namespace

const char* to_string(Direction d) noexcept {
  return d == Direction::higher_is_member ? "higher_is_member" : "lower_is_member";
}

Direction parse_direction(const std::string& text) {
  if (text == "higher_is_member" || text == "higher") return Direction::higher_is_member;
  if (text == "lower_is_member" || text == "lower") return Direction::lower_is_member;
  throw ConfigError("direction must be higher_is_member or lower_is_member, got '" + text + "'");
}

AttackConfig parse_attack(const std::string& raw) {
  std::string spec = raw;
  spec.erase(std::remove_if(spec.begin(), spec.end(), [](unsigned char c) { return std::isspace(c); }),
             spec.end());
  std::string name;
  auto params = parse_params(spec, name);
  AttackConfig cfg;
  if (name == "icas" || name == "icas-sum") {
    IcasConfig c;
    c.adaptive = name == "icas";
    c.a = take_real(params, "a", c.a, spec);
    c.b = take_real(params, "b", c.b, spec);
    c.adaptive = take_bool(params, "adaptive", c.adaptive, spec);
    cfg = c;
  } else if (name == "loss") {
    cfg = LossConfig{};
  } else if (name == "mink") {
    cfg = MinKConfig{take_real(params, "k", kDefaultKPercent, spec)};
  } else if (name == "minkpp") {
    MinKppConfig c;
    c.k_percent = take_real(params, "k", c.k_percent, spec);
    c.sigma_floor = take_real(params, "floor", c.sigma_floor, spec);
    cfg = c;
  } else if (name == "renyi") {
    RenyiConfig c;
    if (auto it = params.find("alpha"); it != params.end()) {
      const auto v = it->second == "inf" ? std::optional(std::numeric_limits<double>::infinity())
                                         : parse_real(it->second);
      if (!v || !(*v > 0.0)) throw ConfigError("attack '" + spec + "': alpha must be > 0 or inf");
      c.alpha = RenyiOrder(*v);
      params.erase(it);
    }
    c.k_percent = take_real(params, "k", c.k_percent, spec);
    if (auto it = params.find("direction"); it != params.end()) {
      c.direction = parse_direction(it->second);
      params.erase(it);
    }
    cfg = c;
  } else {
    throw ConfigError("unknown attack '" + name + "' (expected icas, icas-sum, loss, mink, minkpp, renyi)");
  }
  if (!params.empty())
    throw ConfigError("attack '" + spec + "': unknown key '" + params.begin()->first + "'");
  validate(cfg);
  return cfg;
}

void validate(const AttackConfig& cfg) {
  std::visit(
      [](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IcasConfig>) {
          if (!(c.a > 0.0) || !(c.b > 0.0) || !std::isfinite(c.a) || !std::isfinite(c.b))
            throw ConfigError("icas: a and b must be finite and > 0");
        } else if constexpr (std::is_same_v<T, MinKConfig>) {
          check_k(c.k_percent, "mink");
        } else if constexpr (std::is_same_v<T, MinKppConfig>) {
          check_k(c.k_percent, "minkpp");
          if (!(c.sigma_floor > 0.0)) throw ConfigError("minkpp: floor must be > 0");
        } else if constexpr (std::is_same_v<T, RenyiConfig>) {
          check_k(c.k_percent, "renyi");
        }
      },
      cfg);
}

std::string describe(const AttackConfig& cfg) {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IcasConfig>) {
          return "icas:a=" + format_real(c.a) + ",b=" + format_real(c.b) +
                 ",adaptive=" + (c.adaptive ? "true" : "false");
        } else if constexpr (std::is_same_v<T, LossConfig>) {
          return "loss";
        } else if constexpr (std::is_same_v<T, MinKConfig>) {
          return "mink:k=" + format_real(c.k_percent);
        } else if constexpr (std::is_same_v<T, MinKppConfig>) {
          return "minkpp:k=" + format_real(c.k_percent) + ",floor=" + format_real(c.sigma_floor);
        } else {
          return "renyi:alpha=" + c.alpha.key() + ",k=" + format_real(c.k_percent) +
                 ",direction=" + to_string(c.direction);
        }
      },
      cfg);
}

std::string attack_slug(const AttackConfig& cfg) {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IcasConfig>) {
          std::string s = c.adaptive ? "icas" : "icas-sum";
          if (c.a != kDefaultIcasA || c.b != kDefaultIcasB)
            s += "-a" + format_real(c.a) + "-b" + format_real(c.b);
          return s;
        } else if constexpr (std::is_same_v<T, LossConfig>) {
          return "loss";
        } else if constexpr (std::is_same_v<T, MinKConfig>) {
          return "mink-k" + format_real(c.k_percent);
        } else if constexpr (std::is_same_v<T, MinKppConfig>) {
          std::string s = "minkpp-k" + format_real(c.k_percent);
          if (c.sigma_floor != kDefaultSigmaFloor) s += "-f" + format_real(c.sigma_floor);
          return s;
        } else {
          std::string s = "renyi-a" + c.alpha.key() + "-k" + format_real(c.k_percent);
          if (c.direction == Direction::higher_is_member) s += "-higher";
          return s;
        }
      },
      cfg);
}

std::string attack_title(const AttackConfig& cfg) {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IcasConfig>) {
          return std::string(c.adaptive ? "ICAS" : "ICAS w/o AS") + " (a=" + format_real(c.a) +
                 ", b=" + format_real(c.b) + ")";
        } else if constexpr (std::is_same_v<T, LossConfig>) {
          return "Loss";
        } else if constexpr (std::is_same_v<T, MinKConfig>) {
          return "Min-k% (k=" + format_real(c.k_percent) + ")";
        } else if constexpr (std::is_same_v<T, MinKppConfig>) {
          return "Min-k%++ (k=" + format_real(c.k_percent) + ")";
        } else {
          return "Renyi (alpha=" + c.alpha.key() + ", k=" + format_real(c.k_percent) + ")";
        }
      },
      cfg);
}

ScaleFilter ScaleFilter::only(std::set<int> scales) {
  if (scales.empty()) throw ConfigError("scale filter must name at least one scale");
  if (*scales.begin() < 1) throw ConfigError("scale levels start at 1");
  ScaleFilter f;
  f.scales_ = std::move(scales);
  return f;
}

ScaleFilter ScaleFilter::first(int j) {
  if (j < 1) throw ConfigError("scale filter must name at least one scale");
  std::set<int> s;
  for (int k = 1; k <= j; ++k) s.insert(k);
  return only(std::move(s));
}

ScaleFilter ScaleFilter::parse(const std::string& text) {
  if (text == "all" || text.empty()) return all();
  std::set<int> scales;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_real(item);
    if (!v || *v != std::floor(*v) || *v < 1 || *v > 1e6)
      throw ConfigError("scales: expected \"all\" or positive integers, got '" + item + "'");
    scales.insert(static_cast<int>(*v));
  }
  return only(std::move(scales));
}

void ScaleFilter::check(const ScaleLayout& layout) const {
  if (scales_ && *scales_->rbegin() > layout.num_scales())
    throw ConfigError("scale filter " + to_string() + " exceeds the " + std::to_string(layout.num_scales()) +
                      " scales of the layout");
}

std::string ScaleFilter::to_string() const {
  if (!scales_) return "all";
  std::string out;
  for (int k : *scales_) out += (out.empty() ? "" : ",") + std::to_string(k);
  return out;
}

double adaptive_weight(double s, double a, double b) {
  return 1.0 / (a + std::exp(std::min(b * s, kMaxExponent)));
}

std::size_t selection_count(double k_percent, std::size_t n) {
  const long long m = ceil_count(k_percent * static_cast<double>(n) / 100.0);
  return static_cast<std::size_t>(std::clamp<long long>(m, 1, static_cast<long long>(n)));
}

ScoredSample score_icas(const SampleRecord& r, const IcasConfig& cfg, const ScaleFilter& f) {
  double sum = 0.0;
  for (const TokenObservation* t : filtered(r, f)) {
    const double s = icas_token_score(*t);
    sum += cfg.adaptive ? s * adaptive_weight(s, cfg.a, cfg.b) : s;
  }
  return make(r, sum, Direction::higher_is_member);
}

ScoredSample score_loss(const SampleRecord& r, const ScaleFilter& f) {
  double sum = 0.0;
  for (const TokenObservation* t : filtered(r, f)) sum += t->cond_lp;
  return make(r, sum, Direction::higher_is_member);
}

ScoredSample score_mink(const SampleRecord& r, const MinKConfig& cfg, const ScaleFilter& f) {
  check_k(cfg.k_percent, "mink");
  auto values = keyed(filtered(r, f), [](const TokenObservation& t) { return t.cond_lp; });
  return make(r, select_sum(std::move(values), cfg.k_percent, false), Direction::higher_is_member);
}

ScoredSample score_minkpp(const SampleRecord& r, const MinKppConfig& cfg, const ScaleFilter& f) {
  check_k(cfg.k_percent, "minkpp");
  auto values = keyed(filtered(r, f), [&](const TokenObservation& t) {
    return (t.cond_lp - t.vocab_mean) / std::max(t.vocab_std, cfg.sigma_floor);
  });
  return make(r, select_sum(std::move(values), cfg.k_percent, false), Direction::higher_is_member);
}

ScoredSample score_renyi(const SampleRecord& r, const RenyiConfig& cfg, const ScaleFilter& f) {
  check_k(cfg.k_percent, "renyi");
  const std::string key = cfg.alpha.key();
  auto values = keyed(filtered(r, f), [&](const TokenObservation& t) {
    if (auto it = t.renyi.find(key); it != t.renyi.end()) return it->second;
    if (cfg.alpha.is_infinite()) return -t.max_cond_lp;
    throw ValidationError("renyi." + key, "Renyi entropy of order " + key + " absent from " + r.sample_id);
  });
  return make(r, select_sum(std::move(values), cfg.k_percent, true), cfg.direction);
}

ScoredSample score_record(const SampleRecord& r, const AttackConfig& cfg, const ScaleFilter& f) {
  return std::visit(
      [&](const auto& c) -> ScoredSample {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IcasConfig>) return score_icas(r, c, f);
        else if constexpr (std::is_same_v<T, LossConfig>) return score_loss(r, f);
        else if constexpr (std::is_same_v<T, MinKConfig>) return score_mink(r, c, f);
        else if constexpr (std::is_same_v<T, MinKppConfig>) return score_minkpp(r, c, f);
        else return score_renyi(r, c, f);
      },
      cfg);
}

std::vector<ScoredSample> score_dataset(std::span<const SampleRecord> records, const AttackConfig& cfg,
                                        const ScaleFilter& f, std::size_t workers) {
  validate(cfg);
  std::vector<ScoredSample> out(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const SampleRecord& r = records[i];
    const std::string where = " [sample " + r.sample_id + "]";
    try {
      out[i] = score_record(r, cfg, f);
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), e.detail() + where);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what() + where);
    } catch (const NumericError& e) {
      throw NumericError(e.what() + where);
    }
  });
  return out;
}

bool mixed_layouts(std::span<const SampleRecord> records) {
  return std::any_of(records.begin(), records.end(),
                     [&](const SampleRecord& r) { return !(r.layout == records.front().layout); });
}

}  // namespace icas
