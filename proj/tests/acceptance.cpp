// Acceptance suite: one PASS/FAIL line per criterion. Every oracle below is a
// deliberately plain reimplementation that shares no code with the library.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "icas/attacks.hpp"
#include "icas/cli.hpp"
#include "icas/fit.hpp"
#include "icas/metrics.hpp"
#include "icas/parallel.hpp"
#include "icas/stats.hpp"
#include "icas/toymodel.hpp"

namespace fs = std::filesystem;
using namespace icas;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;
};

int g_failures = 0;

void report(const char* name, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ostringstream timing;
  timing << secs << " s";
  if (limit_s > 0) {
    timing << " (limit " << limit_s << " s)";
    if (secs >= limit_s) v.pass = false;
  }
  if (!v.pass) ++g_failures;
  std::printf("%s  %-26s %s; %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(), timing.str().c_str());
  std::fflush(stdout);
}

std::string fmt(double x) {
  std::ostringstream ss;
  ss.precision(4);
  ss << x;
  return ss.str();
}

double rel_err(double got, double want) {
  if (got == want) return 0.0;
  return std::abs(got - want) / std::max(std::abs(want), std::numeric_limits<double>::min());
}

// ---------------------------------------------------------------------------
// Random records: tokens in canonical order, every Renyi order present.

const std::vector<std::string> kOrderKeys{"0.5", "1", "2", "inf"};

SampleRecord make_record(std::mt19937_64& rng, const std::string& id) {
  std::uniform_int_distribution<int> n_scales(1, 4), side(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SampleRecord r;
  r.sample_id = id;
  r.label = Label::member;
  r.condition = "c";
  const int k = n_scales(rng);
  for (int i = 0; i < k; ++i) r.layout.sides.emplace_back(side(rng), side(rng));
  for (int s = 1; s <= k; ++s) {
    const auto [h, w] = r.layout.sides[static_cast<std::size_t>(s - 1)];
    for (int p = 0; p < h * w; ++p) {
      TokenObservation t;
      t.scale = s;
      t.position = p;
      t.max_cond_lp = -3.0 * u(rng);
      t.cond_lp = t.max_cond_lp - 8.0 * u(rng);
      // ICAS token scores spread over roughly [-8, 8] with an occasional exact zero.
      t.uncond_lp = u(rng) < 0.05 ? t.cond_lp : -12.0 * u(rng);
      t.vocab_mean = t.max_cond_lp - 6.0 * u(rng);
      t.vocab_std = u(rng) < 0.05 ? 0.0 : 3.0 * u(rng);
      for (const auto& key : kOrderKeys) t.renyi[key] = 6.0 * u(rng);
      t.renyi["inf"] = -t.max_cond_lp;
      r.tokens.push_back(t);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Formula oracles.

double oracle_weight(double s, double a, double b) {
  const double e = b * s > 700.0 ? std::exp(700.0) : std::exp(b * s);
  return 1.0 / (a + e);
}

std::size_t oracle_m(int k_percent, std::size_t n) {
  const std::size_t m = (static_cast<std::size_t>(k_percent) * n + 99) / 100;
  return m < 1 ? 1 : m;
}

double oracle_icas(const SampleRecord& r, double a, double b, bool adaptive) {
  double total = 0.0;
  for (const auto& t : r.tokens) {
    const double s = t.cond_lp - t.uncond_lp;
    total += adaptive ? oracle_weight(s, a, b) * s : s;
  }
  return total;
}

double oracle_loss(const SampleRecord& r) {
  double total = 0.0;
  for (const auto& t : r.tokens) total += t.cond_lp;
  return total;
}

double sum_extreme(std::vector<double> v, std::size_t m, bool largest) {
  std::sort(v.begin(), v.end());
  if (largest) std::reverse(v.begin(), v.end());
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += v[i];
  return total;
}

double oracle_mink(const SampleRecord& r, int k) {
  std::vector<double> v;
  for (const auto& t : r.tokens) v.push_back(t.cond_lp);
  return sum_extreme(v, oracle_m(k, v.size()), false);
}

double oracle_minkpp(const SampleRecord& r, int k, double floor) {
  std::vector<double> v;
  for (const auto& t : r.tokens) v.push_back((t.cond_lp - t.vocab_mean) / (t.vocab_std > floor ? t.vocab_std : floor));
  return sum_extreme(v, oracle_m(k, v.size()), false);
}

double oracle_renyi(const SampleRecord& r, const std::string& key, int k) {
  std::vector<double> v;
  for (const auto& t : r.tokens) v.push_back(t.renyi.at(key));
  return sum_extreme(v, oracle_m(k, v.size()), true);
}

Verdict formula_oracles() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pct(1, 100), key(0, 3);
  const int n = 10000;
  double worst = 0.0;
  std::string worst_name = "none";
  auto track = [&](const char* name, double got, double want) {
    const double e = rel_err(got, want);
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  int direction_errors = 0;
  for (int i = 0; i < n; ++i) {
    const SampleRecord r = make_record(rng, "r" + std::to_string(i));
    const auto& t = r.tokens[static_cast<std::size_t>(i) % r.tokens.size()];
    const double a = 0.1 + 3.0 * u(rng), b = 0.1 + 3.0 * u(rng);
    const double s = (u(rng) - 0.5) * 40.0;
    const int k = pct(rng);
    const std::string& ord = kOrderKeys[static_cast<std::size_t>(key(rng))];
    const auto all = ScaleFilter::all();

    track("icas_token_score", icas_token_score(t), t.cond_lp - t.uncond_lp);
    track("adaptive_weight", adaptive_weight(s, a, b), oracle_weight(s, a, b));
    track("score_icas", score_icas(r, IcasConfig{a, b, true}, all).score, oracle_icas(r, a, b, true));
    track("score_icas(sum)", score_icas(r, IcasConfig{a, b, false}, all).score, oracle_icas(r, a, b, false));
    track("score_loss", score_loss(r, all).score, oracle_loss(r));
    track("score_mink", score_mink(r, MinKConfig{static_cast<double>(k)}, all).score, oracle_mink(r, k));
    track("score_minkpp", score_minkpp(r, MinKppConfig{static_cast<double>(k), 1e-6}, all).score,
          oracle_minkpp(r, k, 1e-6));
    const RenyiConfig rc{RenyiOrder::parse(ord), static_cast<double>(k), Direction::lower_is_member};
    const ScoredSample rs = score_renyi(r, rc, all);
    track("score_renyi", rs.score, oracle_renyi(r, ord, k));
    direction_errors += rs.direction != Direction::lower_is_member;
  }
  Verdict v;
  v.pass = worst <= 1e-9 && direction_errors == 0;
  v.detail = std::to_string(n) + " random records x 8 formulas, max relative error " + fmt(worst) + " (" +
             worst_name + ")";
  return v;
}

// ---------------------------------------------------------------------------
// Stats oracles.

std::vector<double> random_distribution(std::mt19937_64& rng, int V, double concentration) {
  std::gamma_distribution<double> g(concentration, 1.0);
  std::vector<double> p(static_cast<std::size_t>(V));
  double total = 0.0;
  do {
    total = 0.0;
    for (auto& x : p) total += (x = g(rng));
  } while (!(total > 0.0));
  for (auto& x : p) x = std::max(x / total, 1e-300);
  total = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& x : p) x /= total;
  return p;
}

double brute_renyi(const std::vector<double>& p, double alpha) {
  if (std::isinf(alpha)) return -std::log(*std::max_element(p.begin(), p.end()));
  if (alpha == 1.0) {
    double h = 0.0;
    for (double x : p) h -= x * std::log(x);
    return h;
  }
  double s = 0.0;
  for (double x : p) s += std::pow(x, alpha);
  return std::log(s) / (1.0 - alpha);
}

Verdict stats_oracles() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> vocab(2, 256);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> grid{0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0, 1.01, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0, inf};
  const std::vector<double> checked{0.5, 1.0, 2.0, 3.0, inf};
  double worst = 0.0, worst_cont = 0.0;
  int monotone_violations = 0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i) {
    const int V = vocab(rng);
    const double conc = i % 4 == 0 ? 0.02 : (i % 4 == 1 ? 0.3 : (i % 4 == 2 ? 1.0 : 20.0));
    const auto p = random_distribution(rng, V, conc);
    Eigen::VectorXd lp(V);
    for (int j = 0; j < V; ++j) lp(j) = std::log(p[static_cast<std::size_t>(j)]);

    double mu = 0.0;
    for (double x : p) mu += x * std::log(x);
    double var = 0.0;
    for (double x : p) var += x * (std::log(x) - mu) * (std::log(x) - mu);
    const auto [got_mu, got_sd] = vocab_mean_std(lp);
    worst = std::max({worst, std::abs(got_mu - mu), std::abs(got_sd - std::sqrt(var))});
    for (double a : checked) worst = std::max(worst, std::abs(renyi_entropy(lp, RenyiOrder(a)) - brute_renyi(p, a)));

    const double h1 = renyi_entropy(lp, RenyiOrder(1.0));
    for (double d : {1e-6, -1e-6})
      worst_cont = std::max(worst_cont, std::abs(renyi_entropy(lp, RenyiOrder(1.0 + d)) - h1));
    double prev = inf;
    for (double a : grid) {
      const double h = renyi_entropy(lp, RenyiOrder(a));
      if (h > prev + 1e-12) ++monotone_violations;
      prev = h;
    }
  }
  Verdict v;
  v.pass = worst <= 1e-9 && worst_cont <= 1e-3 && monotone_violations == 0;
  v.detail = std::to_string(trials) + " distributions (V <= 256), max abs error " + fmt(worst) +
             ", |H(1+-1e-6) - H(1)| <= " + fmt(worst_cont) + ", monotonicity violations " +
             std::to_string(monotone_violations);
  return v;
}

// ---------------------------------------------------------------------------
// Metric oracles.

struct Oracle {
  std::vector<LabeledScore> data;

  std::size_t count(bool member) const {
    return static_cast<std::size_t>(
        std::count_if(data.begin(), data.end(), [&](const LabeledScore& d) { return d.is_member == member; }));
  }

  double auroc() const {
    long long twice = 0;
    for (const auto& m : data)
      if (m.is_member)
        for (const auto& n : data)
          if (!n.is_member) twice += m.score > n.score ? 2 : (m.score == n.score ? 1 : 0);
    return static_cast<double>(twice) / (2.0 * static_cast<double>(count(true)) * static_cast<double>(count(false)));
  }

  /// Every "member iff score >= v" classifier, v over the distinct scores plus +inf.
  std::vector<double> cutoffs() const {
    std::vector<double> v;
    for (const auto& d : data) v.push_back(d.score);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    v.push_back(std::numeric_limits<double>::infinity());
    return v;
  }

  double tpr_at(double budget) const {
    const double P = static_cast<double>(count(true)), N = static_cast<double>(count(false));
    double best = 0.0;
    for (double c : cutoffs()) {
      std::size_t tp = 0, fp = 0;
      for (const auto& d : data)
        if (d.score >= c) ++(d.is_member ? tp : fp);
      if (static_cast<double>(fp) / N <= budget + 1e-12) best = std::max(best, static_cast<double>(tp) / P);
    }
    return best;
  }
};

double trapezoid(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += 0.5 * (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr);
  return area;
}

/// Calibrated threshold and held-out accuracy by exhaustive enumeration of
/// partitions; accuracy ties go to the partition that predicts more members.
std::pair<double, double> oracle_asr(const std::vector<LabeledScore>& calib, const std::vector<LabeledScore>& eval) {
  const auto cuts = Oracle{calib}.cutoffs();
  std::size_t best_correct = 0, best_i = 0;
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    std::size_t correct = 0;
    for (const auto& d : calib) correct += (d.score >= cuts[i]) == d.is_member;
    if (correct > best_correct) {
      best_correct = correct;
      best_i = i;
    }
  }
  const double tau = best_i == 0                  ? cuts[0] - 1.0
                     : best_i + 1 == cuts.size() ? cuts[best_i - 1] + 1.0
                                                  : 0.5 * (cuts[best_i - 1] + cuts[best_i]);
  std::size_t correct = 0;
  for (const auto& d : eval) correct += (d.score >= tau) == d.is_member;
  return {tau, static_cast<double>(correct) / static_cast<double>(eval.size())};
}

Verdict metric_oracles() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> size(4, 500);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> budgets{0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  int auroc_mismatch = 0, tpr_mismatch = 0, asr_mismatch = 0;
  double worst_area = 0.0;
  const int datasets = 200;
  for (int i = 0; i < datasets; ++i) {
    const int n = size(rng);
    // Alternate between heavily tied integer grids and continuous scores.
    const int levels = i % 2 == 0 ? 1 + static_cast<int>(rng() % 12) : 0;
    const double shift = u(rng);
    std::vector<LabeledScore> data;
    for (int j = 0; j < n; ++j) {
      const bool member = j < 2 ? j == 0 : u(rng) < 0.5;
      double s = u(rng) + (member ? shift : 0.0);
      if (levels > 0) s = std::floor(s * levels) / 4.0;
      data.push_back({s, member});
    }
    const Oracle oracle{data};
    if (icas::auroc(data) != oracle.auroc()) ++auroc_mismatch;
    worst_area = std::max({worst_area, std::abs(trapezoid(roc_points(data)) - oracle.auroc()),
                           std::abs(roc_area(roc_points(data)) - icas::auroc(data))});
    for (double b : budgets)
      if (tpr_at_fpr(data, b) != oracle.tpr_at(b)) ++tpr_mismatch;

    // Stratified-ish calibration split done by the oracle itself.
    std::vector<LabeledScore> calib, eval;
    for (std::size_t j = 0; j < data.size(); ++j) (j % 5 == 0 || j < 2 ? calib : eval).push_back(data[j]);
    if (std::none_of(eval.begin(), eval.end(), [](const auto& d) { return d.is_member; })) continue;
    const Threshold got = attack_success_rate(calib, eval);
    const auto [tau, asr] = oracle_asr(calib, eval);
    if (got.accuracy != asr || rel_err(got.tau, tau) > 1e-12) ++asr_mismatch;
  }
  Verdict v;
  v.pass = auroc_mismatch == 0 && worst_area <= 1e-12 && tpr_mismatch == 0 && asr_mismatch == 0;
  v.detail = std::to_string(datasets) + " datasets (n <= 500, tied and untied): AUROC mismatches " +
             std::to_string(auroc_mismatch) + ", max |trapezoid - AUROC| " + fmt(worst_area) +
             ", TPR@FPR mismatches " + std::to_string(tpr_mismatch) + ", ASR mismatches " +
             std::to_string(asr_mismatch);
  return v;
}

// ---------------------------------------------------------------------------
// Edge consistency.

Verdict edge_consistency() {
  std::mt19937_64 rng(404);
  int mink_mismatch = 0;
  for (int i = 0; i < 100; ++i) {
    const SampleRecord r = make_record(rng, "e" + std::to_string(i));
    if (score_mink(r, MinKConfig{100}, ScaleFilter::all()).score != score_loss(r, ScaleFilter::all()).score)
      ++mink_mismatch;
  }
  std::vector<ScoredSample> scores;
  int nonzero = 0;
  for (int i = 0; i < 200; ++i) {
    SampleRecord r = make_record(rng, "z" + std::to_string(i));
    r.label = i < 100 ? Label::member : Label::nonmember;
    for (auto& t : r.tokens) t.uncond_lp = t.cond_lp;
    const auto adaptive = score_icas(r, IcasConfig{}, ScaleFilter::all());
    const auto plain = score_icas(r, IcasConfig{kDefaultIcasA, kDefaultIcasB, false}, ScaleFilter::all());
    nonzero += (adaptive.score != 0.0) + (plain.score != 0.0);
    scores.push_back(adaptive);
  }
  const double a = icas::auroc(orient(scores));
  Verdict v;
  v.pass = mink_mismatch == 0 && nonzero == 0 && a == 0.5;
  v.detail = "Min-k%(100) != Loss on " + std::to_string(mink_mismatch) + "/100 records; nonzero ICAS scores " +
             std::to_string(nonzero) + "/400; all-tie AUROC " + fmt(a);
  return v;
}

// ---------------------------------------------------------------------------
// End-to-end toy model runs.

std::vector<AttackConfig> all_attacks() { return cli::default_attacks(); }

std::map<std::string, double> attack_aurocs(const std::vector<SampleRecord>& members,
                                            const std::vector<SampleRecord>& nonmembers) {
  std::vector<SampleRecord> records = members;
  records.insert(records.end(), nonmembers.begin(), nonmembers.end());
  std::map<std::string, double> out;
  for (const AttackConfig& a : all_attacks()) {
    const auto scores = score_dataset(records, a, ScaleFilter::all(), default_workers());
    out[attack_slug(a)] = icas::auroc(orient(scores));
  }
  return out;
}

ToyWorldConfig acceptance_world(std::uint64_t seed) {
  ToyWorldConfig w;
  w.n_conditions = 4;
  w.layout = ScaleLayout{{{1, 1}, {2, 2}, {3, 3}, {4, 4}}};
  w.vocab_size = 64;
  w.dirichlet_concentration = 0.05;
  w.seed = seed;
  return w;
}

Verdict null_calibration() {
  const ToyWorldConfig wc = acceptance_world(7);
  const ToyWorld world = sample_world(wc);
  const ToyDataset data = draw_dataset(world, 250, 250, 8);
  TrainConfig tc;
  tc.epochs = 0;
  tc.init_noise = 1e-3;
  tc.seed = 9;
  const auto params = train(ToyModelParams::zeros(4, wc.layout.total_tokens(), 64), data.members, tc);
  const auto orders = parse_orders("0.5,1,2,inf");
  const auto members = emit_records(params, wc.layout, data.members, Label::member, "m", orders, default_workers());
  const auto nonmembers =
      emit_records(params, wc.layout, data.nonmembers, Label::nonmember, "n", orders, default_workers());
  const auto aurocs = attack_aurocs(members, nonmembers);
  Verdict v;
  v.detail = std::to_string(members.size()) + "+" + std::to_string(nonmembers.size()) + " samples, AUROC";
  for (const auto& [slug, a] : aurocs) {
    v.pass = v.pass && a >= 0.45 && a <= 0.55;
    v.detail += " " + slug + "=" + fmt(a);
  }
  return v;
}

Verdict overfitting_separation() {
  const ToyWorldConfig wc = acceptance_world(42);
  const ToyWorld world = sample_world(wc);
  // Seeds follow the simulate command's defaults: data = world + 1, training = world + 2.
  const ToyDataset data = draw_dataset(world, 25, 25, 43);
  TrainConfig tc;
  tc.epochs = 200;
  tc.learning_rate = 0.5;
  tc.condition_dropout = 0.1;
  tc.seed = 44;
  const auto params = train(ToyModelParams::zeros(4, wc.layout.total_tokens(), 64), data.members, tc);
  const auto orders = parse_orders("0.5,1,2,inf");
  const auto members = emit_records(params, wc.layout, data.members, Label::member, "m", orders, default_workers());
  const auto nonmembers =
      emit_records(params, wc.layout, data.nonmembers, Label::nonmember, "n", orders, default_workers());
  const auto a = attack_aurocs(members, nonmembers);
  const double adaptive = a.at("icas"), plain = a.at("icas-sum"), loss = a.at("loss");
  Verdict v;
  v.pass = adaptive >= 0.70 && adaptive > loss && adaptive >= plain - 0.01;
  v.detail = "N=" + std::to_string(wc.layout.total_tokens()) + ", ICAS " + fmt(adaptive) + " (>= 0.70), Loss " +
             fmt(loss) + ", ICAS sum " + fmt(plain) + "; others:";
  for (const auto& [slug, x] : a)
    if (slug != "icas" && slug != "icas-sum" && slug != "loss") v.detail += " " + slug + "=" + fmt(x);
  return v;
}

// ---------------------------------------------------------------------------
// Fit correctness.

struct OlsOracle {
  double slope, intercept, r;
};

OlsOracle ols(const std::vector<FitPoint>& pts) {
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pts) {
    sx += p.x;
    sy += p.y;
  }
  const double mx = sx / n, my = sy / n;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  return {sxy / sxx, my - sxy / sxx * mx, syy > 0 ? sxy / std::sqrt(sxx * syy) : 1.0};
}

Verdict fit_correctness() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g;
  double line_err = 0.0, line_r = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double slope = 3.0 * g(rng), icpt = 3.0 * g(rng);
    std::vector<FitPoint> pts;
    const int n = 2 + i % 20;
    for (int j = 0; j < n; ++j) {
      const double x = j + 0.5 * g(rng);
      pts.push_back({x, slope * x + icpt});
    }
    const FitResult f = linear_fit(pts);
    line_err = std::max({line_err, std::abs(f.slope - slope), std::abs(f.intercept - icpt)});
    if (slope != 0.0) line_r = std::max(line_r, std::abs(std::abs(f.pearson_r) - 1.0));
  }

  const std::vector<FitPoint> hand{{1, 1}, {2, 2}, {3, 2}};
  const FitResult h = linear_fit(hand);
  const double hand_err =
      std::max({std::abs(h.slope - 0.5), std::abs(h.intercept - 2.0 / 3.0), std::abs(h.pearson_r - std::sqrt(3.0) / 2.0)});

  double normal_eq = 0.0, vs_oracle = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<FitPoint> pts;
    const int n = 2 + static_cast<int>(rng() % 60);
    const double slope = g(rng), icpt = g(rng), xs = std::exp(2.0 * g(rng));
    for (int j = 0; j < n; ++j) {
      const double x = xs * g(rng);
      pts.push_back({x, slope * x + icpt + g(rng)});
    }
    const FitResult f = linear_fit(pts);
    double e = 0, ex = 0, scale = 0, xscale = 0;
    for (const auto& p : pts) {
      const double res = p.y - f.slope * p.x - f.intercept;
      e += res;
      ex += p.x * res;
      scale += std::abs(p.y);
      xscale += std::abs(p.x * p.y);
    }
    normal_eq = std::max({normal_eq, std::abs(e) / std::max(1.0, scale), std::abs(ex) / std::max(1.0, xscale)});
    const OlsOracle o = ols(pts);
    vs_oracle = std::max({vs_oracle, rel_err(f.slope, o.slope), std::abs(f.intercept - o.intercept),
                          std::abs(f.pearson_r - o.r)});
  }
  Verdict v;
  v.pass = line_err <= 1e-6 && line_r <= 1e-12 && hand_err <= 1e-9 && normal_eq <= 1e-9 && vs_oracle <= 1e-9;
  v.detail = "exact lines: max coef error " + fmt(line_err) + ", max |r| - 1 " + fmt(line_r) +
             "; 3-point error " + fmt(hand_err) + "; normal-equation residual " + fmt(normal_eq) +
             " over 1000 datasets; vs oracle " + fmt(vs_oracle);
  return v;
}

// ---------------------------------------------------------------------------
// Determinism of the command pipeline.

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

Verdict determinism(const fs::path& root) {
  const fs::path cfg = root / "pipeline.ini";
  {
    std::ofstream out(cfg);
    out << "[world]\nn_conditions = 4\nlayout = 1x1,2x2,3x3,4x4\nvocab_size = 64\nconcentration = 0.05\nseed = 42\n"
           "[data]\nmembers_per_condition = 25\nnonmembers_per_condition = 25\n"
           "[train]\nepochs = 200\nlearning_rate = 0.5\ncondition_dropout = 0.1\n"
           "[eval]\nfpr = 0.01,0.05\n[output]\nquiet = true\n";
  }
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* threads : {"1", "8", "3"}) {
    ::setenv("ICAS_AUDIT_THREADS", threads, 1);
    const fs::path out = root / (std::string("run_") + threads);
    for (const char* cmd : {"simulate", "score", "eval"}) {
      std::ostringstream o, e;
      const int code = cli::run({"icas-audit", cmd, "--config", cfg.string(), "--out-dir", out.string()}, o, e);
      if (code != 0) return {false, std::string(cmd) + " exited " + std::to_string(code) + ": " + e.str()};
    }
    runs.push_back(snapshot(out));
  }
  ::unsetenv("ICAS_AUDIT_THREADS");
  std::size_t bytes = 0;
  for (const auto& [name, body] : runs[0]) bytes += body.size();
  const bool same = runs[1] == runs[0] && runs[2] == runs[0];
  return {same && runs[0].size() > 3, "simulate -> score -> eval with 1, 8 and 3 workers: " +
                                          std::to_string(runs[0].size()) + " files, " + std::to_string(bytes) +
                                          " bytes, " + (same ? "byte-identical" : "DIFFERENT")};
}

// ---------------------------------------------------------------------------
// Scale-filter accounting.

Verdict scale_filter_accounting() {
  std::mt19937_64 rng(606);
  int count_errors = 0, all_errors = 0, checks = 0;
  for (int i = 0; i < 500; ++i) {
    SampleRecord r = make_record(rng, "s" + std::to_string(i));
    SampleRecord ones = r;
    for (auto& t : ones.tokens) {
      t.cond_lp = t.max_cond_lp = -1.0;
      t.renyi["inf"] = 1.0;
      t.uncond_lp = -2.0;
    }
    std::size_t expected = 0;
    for (int j = 1; j <= r.layout.num_scales(); ++j) {
      const auto [h, w] = r.layout.sides[static_cast<std::size_t>(j - 1)];
      expected += static_cast<std::size_t>(h * w);
      const auto f = ScaleFilter::first(j);
      const double loss = score_loss(ones, f).score;
      const double plain = score_icas(ones, IcasConfig{kDefaultIcasA, kDefaultIcasB, false}, f).score;
      count_errors += (loss != -static_cast<double>(expected)) + (plain != static_cast<double>(expected));
      ++checks;
    }
    const auto full = ScaleFilter::first(r.layout.num_scales());
    for (const AttackConfig& a : all_attacks())
      all_errors += score_record(r, a, ScaleFilter::all()).score != score_record(r, a, full).score;
  }
  Verdict v;
  v.pass = count_errors == 0 && all_errors == 0;
  v.detail = std::to_string(checks) + " prefix filters: token-count mismatches " + std::to_string(count_errors) +
             "; all-scales vs unfiltered mismatches " + std::to_string(all_errors) + " over 500 records x " +
             std::to_string(all_attacks().size()) + " attacks";
  return v;
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / ("icas_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  report("formula oracles", 5, formula_oracles);
  report("stats oracles", 5, stats_oracles);
  report("metric oracles", 30, metric_oracles);
  report("edge consistency", 0, edge_consistency);
  report("null calibration", 60, null_calibration);
  report("overfitting separation", 120, overfitting_separation);
  report("fit correctness", 0, fit_correctness);
  report("determinism", 0, [&] { return determinism(root); });
  report("scale-filter accounting", 0, scale_filter_accounting);

  fs::remove_all(root);
  std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
