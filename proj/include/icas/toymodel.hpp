#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "icas/records.hpp"
#include "icas/stats.hpp"

namespace icas {

/// Rows are token positions (flattened over scales), columns the vocabulary.
using LogitTable = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ToyWorldConfig {
  int n_conditions = 2;
  ScaleLayout layout{{{1, 1}, {2, 2}}};
  int vocab_size = 8;
  double dirichlet_concentration = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground-truth token distributions q(v | c, position), one N x V table per condition.
struct ToyWorld {
  ToyWorldConfig config;
  std::vector<LogitTable> probs;
};

ToyWorld sample_world(const ToyWorldConfig& cfg);

struct TokenSequence {
  int condition = 0;
  std::vector<int> tokens;

  bool operator==(const TokenSequence&) const = default;
};

struct ToyDataset {
  std::vector<TokenSequence> members;
  std::vector<TokenSequence> nonmembers;
};

/// Independent position-wise draws; members and nonmembers come from the same q.
ToyDataset draw_dataset(const ToyWorld& world, int n_member_per_cond, int n_nonmember_per_cond,
                        std::uint64_t seed);

struct ToyModelParams {
  std::vector<LogitTable> cond_logits;  // [condition](position, token)
  LogitTable uncond_logits;             // (position, token)

  static ToyModelParams zeros(int n_conditions, std::size_t n_tokens, int vocab_size);

  int n_conditions() const noexcept { return static_cast<int>(cond_logits.size()); }
  std::size_t n_tokens() const noexcept { return static_cast<std::size_t>(uncond_logits.rows()); }
  int vocab_size() const noexcept { return static_cast<int>(uncond_logits.cols()); }
};

/// n_conditions * N * V + N * V.
std::size_t param_count(const ToyModelParams& params);

struct TrainConfig {
  int epochs = 0;
  double learning_rate = 0.5;
  double condition_dropout = 0.1;
  double label_smoothing = 0.0;
  /// Std of seeded Gaussian noise added to the logits before training; 0 keeps the exact zero init.
  double init_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cross-entropy of one logit row against a (label-smoothed) target token.
double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int target, double smoothing = 0.0);
/// softmax(logits) - smoothed one-hot(target).
Eigen::VectorXd cross_entropy_grad(const Eigen::Ref<const Eigen::VectorXd>& logits, int target,
                                   double smoothing = 0.0);

/// Per-sample summed token cross-entropy averaged over members, with condition
/// dropout taken in expectation: weight (1 - d) on the conditional table and d
/// on the unconditional one.
double training_loss(const ToyModelParams& params, std::span<const TokenSequence> members,
                     const TrainConfig& cfg);

/// Full-batch gradient descent on training_loss. The step is halved and the
/// epoch retried whenever the loss would rise by more than 1e-9. Appends the
/// loss before each epoch and after the last one to `loss_history` if given.
ToyModelParams train(ToyModelParams params, std::span<const TokenSequence> members, const TrainConfig& cfg,
                     std::vector<double>* loss_history = nullptr);

/// Canonical records: ids are `id_prefix` followed by a zero-padded index.
std::vector<SampleRecord> emit_records(const ToyModelParams& params, const ScaleLayout& layout,
                                       std::span<const TokenSequence> sequences, Label label,
                                       const std::string& id_prefix, const std::vector<RenyiOrder>& orders,
                                       std::size_t workers = 1);

/// The same samples in the debug full-distribution format.
std::vector<FullDistributionRecord> emit_full_records(const ToyModelParams& params, const ScaleLayout& layout,
                                                      std::span<const TokenSequence> sequences, Label label,
                                                      const std::string& id_prefix);

std::string condition_name(int condition);

}  // namespace icas
