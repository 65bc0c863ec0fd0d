#include "icas/toymodel.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "icas/error.hpp"
#include "icas/parallel.hpp"

namespace icas {

namespace {

constexpr double kLossSlack = 1e-9;
constexpr double kMinLearningRate = 1e-12;

// Uniform double in [0, 1) from the top 53 bits.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int draw_token(const Eigen::Ref<const Eigen::RowVectorXd>& q, std::mt19937_64& rng) {
  const double u = unit_uniform(rng);
  double cum = 0.0;
  int last_nonzero = 0;
  for (Eigen::Index v = 0; v < q.size(); ++v) {
    if (q[v] <= 0.0) continue;
    last_nonzero = static_cast<int>(v);
    cum += q[v];
    if (u < cum) return static_cast<int>(v);
  }
  return last_nonzero;  // rounding left u just above the final cumulative sum
}

// Expected-dropout sufficient statistics of the training objective for one table.
struct TableTargets {
  LogitTable target;     // summed (smoothed) target distributions
  Eigen::VectorXd weight;  // summed sample weights per row
};

struct Targets {
  std::vector<TableTargets> cond;
  TableTargets uncond;
};

Targets build_targets(const ToyModelParams& params, std::span<const TokenSequence> members,
                      const TrainConfig& cfg) {
  const auto n_tok = static_cast<Eigen::Index>(params.n_tokens());
  const auto vocab = static_cast<Eigen::Index>(params.vocab_size());
  auto empty = [&] { return TableTargets{LogitTable::Zero(n_tok, vocab), Eigen::VectorXd::Zero(n_tok)}; };
  Targets t;
  t.cond.assign(params.cond_logits.size(), empty());
  t.uncond = empty();
  const double scale = 1.0 / static_cast<double>(members.size());
  const double keep = (1.0 - cfg.condition_dropout) * scale;
  const double drop = cfg.condition_dropout * scale;
  const double spread = cfg.label_smoothing / static_cast<double>(vocab);
  for (const TokenSequence& s : members) {
    if (s.condition < 0 || s.condition >= params.n_conditions())
      throw ConfigError("training sequence has condition " + std::to_string(s.condition) + " outside the model");
    if (static_cast<Eigen::Index>(s.tokens.size()) != n_tok)
      throw ConfigError("training sequence length does not match the model");
    TableTargets& c = t.cond[static_cast<std::size_t>(s.condition)];
    for (Eigen::Index p = 0; p < n_tok; ++p) {
      const int x = s.tokens[static_cast<std::size_t>(p)];
      if (x < 0 || x >= vocab) throw ConfigError("training token outside the vocabulary");
      c.weight[p] += keep;
      t.uncond.weight[p] += drop;
      c.target.row(p).array() += keep * spread;
      t.uncond.target.row(p).array() += drop * spread;
      c.target(p, x) += keep * (1.0 - cfg.label_smoothing);
      t.uncond.target(p, x) += drop * (1.0 - cfg.label_smoothing);
    }
  }
  return t;
}

double row_lse(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double peak = row.maxCoeff();
  return peak + std::log((row.array() - peak).exp().sum());
}

double table_loss(const LogitTable& logits, const TableTargets& t) {
  double loss = 0.0;
  for (Eigen::Index p = 0; p < logits.rows(); ++p) {
    if (t.weight[p] == 0.0) continue;
    loss += t.weight[p] * row_lse(logits.row(p)) - t.target.row(p).dot(logits.row(p));
  }
  return loss;
}

double objective(const ToyModelParams& params, const Targets& t) {
  double loss = table_loss(params.uncond_logits, t.uncond);
  for (std::size_t c = 0; c < params.cond_logits.size(); ++c) loss += table_loss(params.cond_logits[c], t.cond[c]);
  return loss;
}

void descend(LogitTable& logits, const TableTargets& t, double lr) {
  for (Eigen::Index p = 0; p < logits.rows(); ++p) {
    if (t.weight[p] == 0.0) continue;
    const double lse = row_lse(logits.row(p));
    const Eigen::RowVectorXd probs = (logits.row(p).array() - lse).exp().matrix();
    logits.row(p) -= lr * (t.weight[p] * probs - t.target.row(p));
  }
}

std::vector<std::pair<int, int>> token_coordinates(const ScaleLayout& layout) {
  std::vector<std::pair<int, int>> coords;
  coords.reserve(layout.total_tokens());
  for (int k = 1; k <= layout.num_scales(); ++k)
    for (std::size_t i = 0; i < layout.scale_size(k); ++i) coords.emplace_back(k, static_cast<int>(i));
  return coords;
}

std::string sample_id(const std::string& prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return prefix + buf;
}

void check_emission(const ToyModelParams& params, const ScaleLayout& layout,
                    std::span<const TokenSequence> sequences) {
  layout.validate();
  if (layout.total_tokens() != params.n_tokens()) throw ConfigError("layout does not match the model's token count");
  for (const TokenSequence& s : sequences) {
    if (s.condition < 0 || s.condition >= params.n_conditions()) throw ConfigError("sequence condition outside the model");
    if (s.tokens.size() != params.n_tokens()) throw ConfigError("sequence length does not match the model");
    for (int x : s.tokens)
      if (x < 0 || x >= params.vocab_size()) throw ConfigError("sequence token outside the vocabulary");
  }
}

}  // namespace

void ToyWorldConfig::validate() const {
  if (n_conditions < 2) throw ConfigError("world.n_conditions must be >= 2");
  layout.validate();
  if (vocab_size < 2) throw ConfigError("world.vocab_size must be >= 2");
  if (!(dirichlet_concentration > 0.0) || !std::isfinite(dirichlet_concentration))
    throw ConfigError("world.concentration must be > 0");
}

ToyWorld sample_world(const ToyWorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::gamma_distribution<double> gamma(cfg.dirichlet_concentration, 1.0);
  const auto n_tok = static_cast<Eigen::Index>(cfg.layout.total_tokens());
  ToyWorld world{cfg, {}};
  world.probs.reserve(static_cast<std::size_t>(cfg.n_conditions));
  for (int c = 0; c < cfg.n_conditions; ++c) {
    LogitTable q(n_tok, cfg.vocab_size);
    for (Eigen::Index p = 0; p < n_tok; ++p) {
      double sum = 0.0;
      do {
        for (Eigen::Index v = 0; v < q.cols(); ++v) q(p, v) = gamma(rng);
        sum = q.row(p).sum();
      } while (!(sum > 0.0));
      q.row(p) /= sum;
    }
    world.probs.push_back(std::move(q));
  }
  return world;
}

ToyDataset draw_dataset(const ToyWorld& world, int n_member_per_cond, int n_nonmember_per_cond,
                        std::uint64_t seed) {
  if (n_member_per_cond < 1 || n_nonmember_per_cond < 1)
    throw ConfigError("member and nonmember counts per condition must be >= 1");
  std::mt19937_64 rng(seed);
  ToyDataset data;
  auto draw = [&](int count, std::vector<TokenSequence>& out) {
    for (int c = 0; c < world.config.n_conditions; ++c) {
      const LogitTable& q = world.probs[static_cast<std::size_t>(c)];
      for (int i = 0; i < count; ++i) {
        TokenSequence s{c, std::vector<int>(static_cast<std::size_t>(q.rows()))};
        for (Eigen::Index p = 0; p < q.rows(); ++p) s.tokens[static_cast<std::size_t>(p)] = draw_token(q.row(p), rng);
        out.push_back(std::move(s));
      }
    }
  };
  draw(n_member_per_cond, data.members);
  draw(n_nonmember_per_cond, data.nonmembers);
  return data;
}

ToyModelParams ToyModelParams::zeros(int n_conditions, std::size_t n_tokens, int vocab_size) {
  const auto rows = static_cast<Eigen::Index>(n_tokens);
  ToyModelParams p;
  p.cond_logits.assign(static_cast<std::size_t>(n_conditions), LogitTable::Zero(rows, vocab_size));
  p.uncond_logits = LogitTable::Zero(rows, vocab_size);
  return p;
}

std::size_t param_count(const ToyModelParams& params) {
  std::size_t n = static_cast<std::size_t>(params.uncond_logits.size());
  for (const LogitTable& t : params.cond_logits) n += static_cast<std::size_t>(t.size());
  return n;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
  if (!(condition_dropout >= 0.0 && condition_dropout < 1.0))
    throw ConfigError("train.condition_dropout must lie in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ConfigError("train.label_smoothing must lie in [0, 1)");
  if (!(init_noise >= 0.0) || !std::isfinite(init_noise)) throw ConfigError("train.init_noise must be >= 0");
}

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int target, double smoothing) {
  const auto vocab = static_cast<double>(logits.size());
  const double lse = row_lse(logits.transpose());
  return lse - (1.0 - smoothing) * logits[target] - smoothing / vocab * logits.sum();
}

Eigen::VectorXd cross_entropy_grad(const Eigen::Ref<const Eigen::VectorXd>& logits, int target, double smoothing) {
  const double lse = row_lse(logits.transpose());
  Eigen::VectorXd g = (logits.array() - lse).exp().matrix();
  g.array() -= smoothing / static_cast<double>(logits.size());
  g[target] -= 1.0 - smoothing;
  return g;
}

double training_loss(const ToyModelParams& params, std::span<const TokenSequence> members, const TrainConfig& cfg) {
  if (members.empty()) throw ConfigError("training needs at least one member");
  return objective(params, build_targets(params, members, cfg));
}

ToyModelParams train(ToyModelParams params, std::span<const TokenSequence> members, const TrainConfig& cfg,
                     std::vector<double>* loss_history) {
  cfg.validate();
  if (members.empty()) throw ConfigError("training needs at least one member");
  if (cfg.init_noise > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.init_noise);
    for (LogitTable& t : params.cond_logits)
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += noise(rng);
    for (Eigen::Index i = 0; i < params.uncond_logits.size(); ++i) params.uncond_logits.data()[i] += noise(rng);
  }
  const Targets targets = build_targets(params, members, cfg);
  double loss = objective(params, targets);
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
  if (loss_history) loss_history->push_back(loss);
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (;;) {
      ToyModelParams next = params;
      descend(next.uncond_logits, targets.uncond, lr);
      for (std::size_t c = 0; c < next.cond_logits.size(); ++c) descend(next.cond_logits[c], targets.cond[c], lr);
      const double next_loss = objective(next, targets);
      if (!std::isfinite(next_loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      if (next_loss <= loss + kLossSlack) {
        params = std::move(next);
        loss = next_loss;
        break;
      }
      lr /= 2.0;
      if (lr < kMinLearningRate) throw NumericError("learning rate underflow while enforcing a non-increasing loss");
    }
    if (loss_history) loss_history->push_back(loss);
  }
  return params;
}

std::string condition_name(int condition) { return "class_" + std::to_string(condition); }

std::vector<SampleRecord> emit_records(const ToyModelParams& params, const ScaleLayout& layout,
                                       std::span<const TokenSequence> sequences, Label label,
                                       const std::string& id_prefix, const std::vector<RenyiOrder>& orders,
                                       std::size_t workers) {
  check_emission(params, layout, sequences);
  const auto n_tok = static_cast<Eigen::Index>(params.n_tokens());
  const auto coords = token_coordinates(layout);

  // Every sample with the same condition shares the rows of the table model,
  // so the per-row distributions and their statistics are computed once.
  struct Row {
    std::vector<double> lp;
    VocabStats stats;
  };
  const auto n_cond = static_cast<std::size_t>(params.n_conditions());
  std::vector<Row> cond_rows(n_cond * static_cast<std::size_t>(n_tok));
  parallel_for(cond_rows.size(), workers, [&](std::size_t i) {
    const std::size_t c = i / static_cast<std::size_t>(n_tok);
    const auto p = static_cast<Eigen::Index>(i % static_cast<std::size_t>(n_tok));
    Row& row = cond_rows[i];
    const Eigen::VectorXd lp = log_normalize(params.cond_logits[c].row(p).transpose());
    row.lp.assign(lp.data(), lp.data() + lp.size());
    row.stats = summarize_distribution(row.lp, orders);
  });
  std::vector<Eigen::VectorXd> uncond_rows(static_cast<std::size_t>(n_tok));
  for (Eigen::Index p = 0; p < n_tok; ++p)
    uncond_rows[static_cast<std::size_t>(p)] = log_normalize(params.uncond_logits.row(p).transpose());

  std::vector<SampleRecord> out(sequences.size());
  parallel_for(sequences.size(), workers, [&](std::size_t i) {
    const TokenSequence& s = sequences[i];
    SampleRecord& r = out[i];
    r.sample_id = sample_id(id_prefix, i);
    r.label = label;
    r.condition = condition_name(s.condition);
    r.layout = layout;
    r.tokens.resize(coords.size());
    for (std::size_t p = 0; p < coords.size(); ++p) {
      const Row& row = cond_rows[static_cast<std::size_t>(s.condition) * static_cast<std::size_t>(n_tok) + p];
      const int x = s.tokens[p];
      TokenObservation& t = r.tokens[p];
      t.scale = coords[p].first;
      t.position = coords[p].second;
      t.cond_lp = row.lp[static_cast<std::size_t>(x)];
      t.uncond_lp = uncond_rows[p][x];
      t.vocab_mean = row.stats.vocab_mean;
      t.vocab_std = row.stats.vocab_std;
      t.renyi = row.stats.renyi;
      t.max_cond_lp = row.stats.max_cond_lp;
    }
    r.validate();
  });
  return out;
}

std::vector<FullDistributionRecord> emit_full_records(const ToyModelParams& params, const ScaleLayout& layout,
                                                      std::span<const TokenSequence> sequences, Label label,
                                                      const std::string& id_prefix) {
  check_emission(params, layout, sequences);
  const auto coords = token_coordinates(layout);
  std::vector<FullDistributionRecord> out;
  out.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const TokenSequence& s = sequences[i];
    FullDistributionRecord r;
    r.sample_id = sample_id(id_prefix, i);
    r.label = label;
    r.condition = condition_name(s.condition);
    r.layout = layout;
    for (std::size_t p = 0; p < coords.size(); ++p) {
      const auto row = static_cast<Eigen::Index>(p);
      const Eigen::VectorXd lp = log_normalize(params.cond_logits[static_cast<std::size_t>(s.condition)].row(row).transpose());
      const Eigen::VectorXd ulp = log_normalize(params.uncond_logits.row(row).transpose());
      FullToken t;
      t.scale = coords[p].first;
      t.position = coords[p].second;
      t.gt = s.tokens[p];
      t.clp_vec.assign(lp.data(), lp.data() + lp.size());
      t.uncond_lp = ulp[t.gt];
      r.tokens.push_back(std::move(t));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace icas
