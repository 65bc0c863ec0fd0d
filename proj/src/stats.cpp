#include "icas/stats.hpp"

#include <sstream>

namespace icas {

std::vector<RenyiOrder> parse_orders(const std::string& text) {
  std::vector<RenyiOrder> orders;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) continue;
    item = item.substr(first, last - first + 1);
    RenyiOrder order = RenyiOrder::parse(item);
    bool seen = false;
    for (const auto& o : orders) seen = seen || o == order;
    if (!seen) orders.push_back(order);
  }
  return orders;
}

VocabStats summarize_distribution(std::span<const double> logprobs, const std::vector<RenyiOrder>& orders) {
  const Eigen::Map<const Eigen::VectorXd> lp(logprobs.data(), static_cast<Eigen::Index>(logprobs.size()));
  return vocab_stats(lp, orders);
}

SampleRecord summarize(const FullDistributionRecord& full, const std::vector<RenyiOrder>& orders) {
  full.validate();
  SampleRecord out;
  out.sample_id = full.sample_id;
  out.label = full.label;
  out.condition = full.condition;
  out.layout = full.layout;
  out.tokens.reserve(full.tokens.size());
  for (const FullToken& t : full.tokens) {
    VocabStats stats = summarize_distribution(t.clp_vec, orders);
    TokenObservation obs;
    obs.scale = t.scale;
    obs.position = t.position;
    obs.cond_lp = t.clp_vec[static_cast<std::size_t>(t.gt)];
    obs.uncond_lp = t.uncond_lp;
    obs.vocab_mean = stats.vocab_mean;
    obs.vocab_std = stats.vocab_std;
    obs.renyi = std::move(stats.renyi);
    obs.max_cond_lp = stats.max_cond_lp;
    out.tokens.push_back(std::move(obs));
  }
  out.validate();
  return out;
}

}  // namespace icas
