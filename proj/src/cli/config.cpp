#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "icas/cli.hpp"
#include "icas/error.hpp"
#include "icas/numfmt.hpp"

namespace icas::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

double to_real(const std::string& v) {
  const auto d = parse_real(v);
  if (!d || !std::isfinite(*d)) throw ConfigError("expected a finite number, got '" + v + "'");
  return *d;
}

long long to_int(const std::string& v) {
  const double d = to_real(v);
  if (d != std::floor(d) || std::abs(d) > 9e15) throw ConfigError("expected an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

int to_int32(const std::string& v) {
  const long long i = to_int(v);
  if (i < -2147483647LL || i > 2147483647LL) throw ConfigError("integer out of range: '" + v + "'");
  return static_cast<int>(i);
}

std::uint64_t to_seed(const std::string& v) {
  std::size_t used = 0;
  try {
    if (v.empty() || v.front() == '-') throw std::invalid_argument(v);
    const unsigned long long s = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ConfigError("expected an unsigned 64-bit seed, got '" + v + "'");
  }
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const auto b = item.find_last_not_of(" \t");
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"world.n_conditions", [](RunConfig& c, const std::string& v) { c.world.n_conditions = to_int32(v); }},
      {"world.layout", [](RunConfig& c, const std::string& v) { c.world.layout = ScaleLayout::parse(v); }},
      {"world.vocab_size", [](RunConfig& c, const std::string& v) { c.world.vocab_size = to_int32(v); }},
      {"world.concentration", [](RunConfig& c, const std::string& v) { c.world.dirichlet_concentration = to_real(v); }},
      {"world.seed", [](RunConfig& c, const std::string& v) { c.world.seed = to_seed(v); }},
      {"data.members_per_condition", [](RunConfig& c, const std::string& v) { c.members_per_condition = to_int32(v); }},
      {"data.nonmembers_per_condition",
       [](RunConfig& c, const std::string& v) { c.nonmembers_per_condition = to_int32(v); }},
      {"data.seed", [](RunConfig& c, const std::string& v) { c.data_seed = to_seed(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_int32(v); }},
      {"train.learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_real(v); }},
      {"train.condition_dropout", [](RunConfig& c, const std::string& v) { c.train.condition_dropout = to_real(v); }},
      {"train.label_smoothing", [](RunConfig& c, const std::string& v) { c.train.label_smoothing = to_real(v); }},
      {"train.init_noise", [](RunConfig& c, const std::string& v) { c.train.init_noise = to_real(v); }},
      {"train.seed",
       [](RunConfig& c, const std::string& v) {
         c.train.seed = to_seed(v);
         c.train_seed_set = true;
       }},
      {"records.alphas", [](RunConfig& c, const std::string& v) { c.alphas = parse_orders(v); }},
      {"score.manifest", [](RunConfig& c, const std::string& v) { c.manifest = v; }},
      {"score.attacks",
       [](RunConfig& c, const std::string& v) {
         c.attacks.clear();
         for (const auto& spec : split(v, ';')) c.attacks.push_back(parse_attack(spec));
       }},
      {"score.scales", [](RunConfig& c, const std::string& v) { c.scales = ScaleFilter::parse(v); }},
      {"eval.fpr",
       [](RunConfig& c, const std::string& v) {
         c.fpr_budgets.clear();
         for (const auto& b : split(v, ',')) c.fpr_budgets.push_back(to_real(b));
       }},
      {"eval.calibration_fraction", [](RunConfig& c, const std::string& v) { c.calibration_fraction = to_real(v); }},
      {"eval.seed", [](RunConfig& c, const std::string& v) { c.eval_seed = to_seed(v); }},
      {"fit.input", [](RunConfig& c, const std::string& v) { c.fit_input = v; }},
      {"fit.x_transform", [](RunConfig& c, const std::string& v) { c.x_transform = parse_x_transform(v); }},
      {"fit.max_auroc", [](RunConfig& c, const std::string& v) { c.max_auroc = to_real(v); }},
      {"convert.input", [](RunConfig& c, const std::string& v) { c.convert_input = v; }},
      {"convert.output", [](RunConfig& c, const std::string& v) { c.convert_output = v; }},
      {"output.dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"output.quiet", [](RunConfig& c, const std::string& v) { c.quiet = to_bool(v); }},
  };
  return table;
}

}  // namespace

std::vector<AttackConfig> default_attacks() {
  return {IcasConfig{}, IcasConfig{kDefaultIcasA, kDefaultIcasB, false}, LossConfig{}, MinKConfig{},
          MinKppConfig{}, RenyiConfig{}};
}

RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  cfg.attacks = default_attacks();
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) throw ConfigError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, node] : keys) {
      const std::string path = section + "." + key;
      auto it = setters().find(path);
      if (it == setters().end()) throw ConfigError("unknown config key '" + path + "'");
      try {
        it->second(cfg, node.get_value<std::string>());
      } catch (const Error& e) {
        throw ConfigError(path + ": " + e.what());
      }
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  return parse_config(in);
}

}  // namespace icas::cli
