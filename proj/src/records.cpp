#include "icas/records.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "icas/error.hpp"
#include "icas/numfmt.hpp"

namespace icas {

using json = nlohmann::ordered_json;

namespace {

constexpr double kCrossFieldSlack = 1e-9;

void require_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) throw ValidationError(field, "must be finite");
}

void require_nonpositive(double v, const std::string& field) {
  require_finite(v, field);
  if (v > 0.0) throw ValidationError(field, "log-probability must be <= 0, got " + format_real(v));
}

const json& member(const json& obj, const char* key, const std::string& field) {
  if (!obj.is_object()) throw ValidationError(field, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(field.empty() ? key : field + "." + key, "missing");
  return *it;
}

double get_real(const json& obj, const char* key, const std::string& prefix) {
  const std::string field = prefix.empty() ? key : prefix + "." + key;
  const json& v = member(obj, key, prefix);
  if (!v.is_number()) throw ValidationError(field, "expected a number");
  const double d = v.get<double>();
  require_finite(d, field);
  return d;
}

long long get_int(const json& obj, const char* key, const std::string& prefix) {
  const std::string field = prefix.empty() ? key : prefix + "." + key;
  const json& v = member(obj, key, prefix);
  if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
  return v.get<long long>();
}

std::string get_string(const json& obj, const char* key) {
  const json& v = member(obj, key, "");
  if (!v.is_string()) throw ValidationError(key, "expected a string");
  return v.get<std::string>();
}

int narrow_int(long long v, const std::string& field) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ValidationError(field, "out of range");
  return static_cast<int>(v);
}

ScaleLayout layout_from_json(const json& obj) {
  const json& arr = member(obj, "layout", "");
  if (!arr.is_array()) throw ValidationError("layout", "expected a list of [h, w] pairs");
  ScaleLayout layout;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    const json& hw = arr[k];
    const std::string field = "layout[" + std::to_string(k) + "]";
    if (!hw.is_array() || hw.size() != 2 || !hw[0].is_number_integer() || !hw[1].is_number_integer())
      throw ValidationError(field, "expected [h, w] integers");
    layout.sides.emplace_back(narrow_int(hw[0].get<long long>(), field),
                              narrow_int(hw[1].get<long long>(), field));
  }
  layout.validate();
  return layout;
}

json layout_to_json(const ScaleLayout& layout) {
  json arr = json::array();
  for (auto [h, w] : layout.sides) arr.push_back(json::array({h, w}));
  return arr;
}

void check_version(const json& obj) {
  const long long v = get_int(obj, "v", "");
  if (v != kSchemaVersion)
    throw ValidationError("v", "unsupported schema version " + std::to_string(v));
}

json parse_line(const std::string& line, std::size_t line_no) {
  try {
    json obj = json::parse(line);
    if (!obj.is_object()) throw ParseError(line_no, "record must be a JSON object");
    return obj;
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, e.what());
  } catch (const json::out_of_range&) {
    // Literals such as 1e999 overflow to infinity, which no field accepts.
    throw ValidationError("number", "non-finite value (line " + std::to_string(line_no) + ")");
  }
}

// Validates position bookkeeping shared by both record kinds.
template <typename Tokens>
void validate_token_grid(const ScaleLayout& layout, const Tokens& tokens) {
  if (tokens.size() != layout.total_tokens())
    throw ValidationError("tokens", "expected " + std::to_string(layout.total_tokens()) +
                                        " tokens for layout " + layout.to_string() + ", got " +
                                        std::to_string(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const std::string field = "tokens[" + std::to_string(i) + "]";
    if (t.scale < 1 || t.scale > layout.num_scales())
      throw ValidationError(field + ".scale", "outside [1, " + std::to_string(layout.num_scales()) + "]");
    if (t.position < 0 || static_cast<std::size_t>(t.position) >= layout.scale_size(t.scale))
      throw ValidationError(field + ".pos", "outside scale " + std::to_string(t.scale));
    if (i > 0) {
      const auto& p = tokens[i - 1];
      if (std::pair(p.scale, p.position) >= std::pair(t.scale, t.position))
        throw ValidationError(field, "tokens must be strictly sorted by (scale, pos)");
    }
  }
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return in;
}

// Unbiased draw in [0, n) from raw engine output; libstdc++/libc++ agree on
// mt19937_64 but not on uniform_int_distribution.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

void seeded_shuffle(std::vector<std::string>& ids, std::mt19937_64& rng) {
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(ids[i - 1], ids[j]);
  }
}

}  // namespace

std::size_t ScaleLayout::scale_size(int k) const {
  if (k < 1 || k > num_scales()) throw ValidationError("scale", "scale " + std::to_string(k) + " out of range");
  const auto [h, w] = sides[static_cast<std::size_t>(k - 1)];
  return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
}

std::size_t ScaleLayout::total_tokens() const {
  std::size_t n = 0;
  for (auto [h, w] : sides) n += static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  return n;
}

void ScaleLayout::validate() const {
  if (sides.empty()) throw ValidationError("layout", "needs at least one scale");
  for (std::size_t k = 0; k < sides.size(); ++k)
    if (sides[k].first < 1 || sides[k].second < 1)
      throw ValidationError("layout[" + std::to_string(k) + "]", "sides must be >= 1");
}

ScaleLayout ScaleLayout::parse(const std::string& text) {
  ScaleLayout layout;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    const auto h = x == std::string::npos ? std::nullopt : parse_real(item.substr(0, x));
    const auto w = x == std::string::npos ? std::nullopt : parse_real(item.substr(x + 1));
    if (!h || !w || *h != std::floor(*h) || *w != std::floor(*w) || *h > 1e6 || *w > 1e6)
      throw ValidationError("layout", "expected HxW items, got '" + item + "'");
    layout.sides.emplace_back(static_cast<int>(*h), static_cast<int>(*w));
  }
  layout.validate();
  return layout;
}

std::string ScaleLayout::to_string() const {
  std::string out;
  for (std::size_t k = 0; k < sides.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(sides[k].first) + "x" + std::to_string(sides[k].second);
  }
  return out;
}

const char* to_string(Label label) noexcept {
  switch (label) {
    case Label::member: return "member";
    case Label::nonmember: return "nonmember";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Label parse_label(const std::string& text) {
  if (text == "member") return Label::member;
  if (text == "nonmember") return Label::nonmember;
  if (text == "unknown") return Label::unknown;
  throw ValidationError("label", "expected member, nonmember or unknown, got '" + text + "'");
}

std::string renyi_key(double alpha) {
  if (std::isinf(alpha) && alpha > 0) return "inf";
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("alpha", "Renyi order must be > 0");
  return format_real(alpha);
}

double parse_renyi_key(const std::string& key) {
  if (key == "inf") return std::numeric_limits<double>::infinity();
  const auto v = parse_real(key);
  if (!v || !std::isfinite(*v) || *v <= 0.0 || format_real(*v) != key)
    throw ValidationError("renyi", "non-canonical order key '" + key + "'");
  return *v;
}

void SampleRecord::validate() const {
  if (sample_id.empty()) throw ValidationError("sample_id", "must be non-empty");
  layout.validate();
  validate_token_grid(layout, tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenObservation& t = tokens[i];
    const std::string f = "tokens[" + std::to_string(i) + "].";
    require_nonpositive(t.cond_lp, f + "clp");
    require_nonpositive(t.uncond_lp, f + "ulp");
    require_nonpositive(t.max_cond_lp, f + "maxlp");
    require_finite(t.vocab_mean, f + "mu");
    require_finite(t.vocab_std, f + "sigma");
    if (t.vocab_std < 0.0) throw ValidationError(f + "sigma", "must be >= 0");
    if (t.cond_lp > t.max_cond_lp + kCrossFieldSlack)
      throw ValidationError(f + "clp", "exceeds maxlp");
    for (const auto& [key, value] : t.renyi) {
      parse_renyi_key(key);
      require_finite(value, f + "renyi." + key);
    }
    if (auto it = t.renyi.find("inf"); it != t.renyi.end()) {
      if (std::abs(it->second + t.max_cond_lp) > kCrossFieldSlack)
        throw ValidationError(f + "renyi.inf", "must equal -maxlp");
    }
  }
}

void FullDistributionRecord::validate() const {
  if (sample_id.empty()) throw ValidationError("sample_id", "must be non-empty");
  layout.validate();
  validate_token_grid(layout, tokens);
  const std::size_t vocab = tokens.empty() ? 0 : tokens.front().clp_vec.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const FullToken& t = tokens[i];
    const std::string f = "tokens[" + std::to_string(i) + "].";
    if (t.clp_vec.size() < 2 || t.clp_vec.size() > kMaxDebugVocab)
      throw ValidationError(f + "clp_vec", "vocabulary size must be in [2, 65536]");
    if (t.clp_vec.size() != vocab) throw ValidationError(f + "clp_vec", "vocabulary size differs across tokens");
    if (t.gt < 0 || static_cast<std::size_t>(t.gt) >= t.clp_vec.size())
      throw ValidationError(f + "gt", "token id outside [0, V)");
    require_nonpositive(t.uncond_lp, f + "ulp");
    double peak = -std::numeric_limits<double>::infinity();
    for (double lp : t.clp_vec) {
      require_finite(lp, f + "clp_vec");
      peak = std::max(peak, lp);
    }
    double sum = 0.0;
    for (double lp : t.clp_vec) sum += std::exp(lp - peak);
    const double lse = peak + std::log(sum);
    if (std::abs(lse) > 1e-6) throw ValidationError(f + "clp_vec", "not normalized (log-sum-exp " + format_real(lse) + ")");
  }
}

std::string encode_record(const SampleRecord& r) {
  json obj;
  obj["v"] = kSchemaVersion;
  obj["sample_id"] = r.sample_id;
  obj["label"] = to_string(r.label);
  obj["condition"] = r.condition;
  obj["layout"] = layout_to_json(r.layout);
  json tokens = json::array();
  for (const TokenObservation& t : r.tokens) {
    json tok;
    tok["scale"] = t.scale;
    tok["pos"] = t.position;
    tok["clp"] = t.cond_lp;
    tok["ulp"] = t.uncond_lp;
    tok["mu"] = t.vocab_mean;
    tok["sigma"] = t.vocab_std;
    json renyi = json::object();
    for (const auto& [key, value] : t.renyi) renyi[key] = value;
    tok["renyi"] = std::move(renyi);
    tok["maxlp"] = t.max_cond_lp;
    tokens.push_back(std::move(tok));
  }
  obj["tokens"] = std::move(tokens);
  return obj.dump();
}

SampleRecord decode_record(const std::string& line, std::size_t line_no) {
  const json obj = parse_line(line, line_no);
  try {
    check_version(obj);
    SampleRecord r;
    r.sample_id = get_string(obj, "sample_id");
    r.label = parse_label(get_string(obj, "label"));
    r.condition = get_string(obj, "condition");
    r.layout = layout_from_json(obj);
    const json& tokens = member(obj, "tokens", "");
    if (!tokens.is_array()) throw ValidationError("tokens", "expected a list");
    r.tokens.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const json& tok = tokens[i];
      const std::string f = "tokens[" + std::to_string(i) + "]";
      TokenObservation t;
      t.scale = narrow_int(get_int(tok, "scale", f), f + ".scale");
      t.position = narrow_int(get_int(tok, "pos", f), f + ".pos");
      t.cond_lp = get_real(tok, "clp", f);
      t.uncond_lp = get_real(tok, "ulp", f);
      t.vocab_mean = get_real(tok, "mu", f);
      t.vocab_std = get_real(tok, "sigma", f);
      const json& renyi = member(tok, "renyi", f);
      if (!renyi.is_object()) throw ValidationError(f + ".renyi", "expected an object");
      for (auto it = renyi.begin(); it != renyi.end(); ++it) {
        if (!it.value().is_number()) throw ValidationError(f + ".renyi." + it.key(), "expected a number");
        t.renyi[it.key()] = it.value().get<double>();
      }
      t.max_cond_lp = get_real(tok, "maxlp", f);
      r.tokens.push_back(std::move(t));
    }
    r.validate();
    return r;
  } catch (const ValidationError& e) {
    throw e.at_line(line_no);
  }
}

RecordReader::RecordReader(const std::filesystem::path& path) : path_(path), in_(open_for_read(path)) {}

std::optional<SampleRecord> RecordReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (blank(line)) continue;
    return decode_record(line, line_);
  }
  if (in_.bad()) throw IoError(path_.string(), "read failure");
  return std::nullopt;
}

std::vector<SampleRecord> read_records(const std::filesystem::path& path) {
  RecordReader reader(path);
  std::vector<SampleRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

void write_records(const std::vector<SampleRecord>& records, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (const SampleRecord& r : records) out << encode_record(r) << '\n';
  out.flush();
  if (!out) throw IoError(path.string(), "write failure");
}

std::vector<FullDistributionRecord> read_full_records(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<FullDistributionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const json obj = parse_line(line, line_no);
    try {
      check_version(obj);
      FullDistributionRecord r;
      r.sample_id = get_string(obj, "sample_id");
      r.label = parse_label(get_string(obj, "label"));
      r.condition = get_string(obj, "condition");
      r.layout = layout_from_json(obj);
      const json& tokens = member(obj, "tokens", "");
      if (!tokens.is_array()) throw ValidationError("tokens", "expected a list");
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const json& tok = tokens[i];
        const std::string f = "tokens[" + std::to_string(i) + "]";
        FullToken t;
        t.scale = narrow_int(get_int(tok, "scale", f), f + ".scale");
        t.position = narrow_int(get_int(tok, "pos", f), f + ".pos");
        t.gt = narrow_int(get_int(tok, "gt", f), f + ".gt");
        t.uncond_lp = get_real(tok, "ulp", f);
        const json& vec = member(tok, "clp_vec", f);
        if (!vec.is_array()) throw ValidationError(f + ".clp_vec", "expected a list");
        t.clp_vec.reserve(vec.size());
        for (const json& x : vec) {
          if (!x.is_number()) throw ValidationError(f + ".clp_vec", "expected numbers");
          t.clp_vec.push_back(x.get<double>());
        }
        r.tokens.push_back(std::move(t));
      }
      r.validate();
      out.push_back(std::move(r));
    } catch (const ValidationError& e) {
      throw e.at_line(line_no);
    }
  }
  return out;
}

void write_full_records(const std::vector<FullDistributionRecord>& records,
                        const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (const FullDistributionRecord& r : records) {
    json obj;
    obj["v"] = kSchemaVersion;
    obj["sample_id"] = r.sample_id;
    obj["label"] = to_string(r.label);
    obj["condition"] = r.condition;
    obj["layout"] = layout_to_json(r.layout);
    json tokens = json::array();
    for (const FullToken& t : r.tokens) {
      json tok;
      tok["scale"] = t.scale;
      tok["pos"] = t.position;
      tok["gt"] = t.gt;
      tok["clp_vec"] = t.clp_vec;
      tok["ulp"] = t.uncond_lp;
      tokens.push_back(std::move(tok));
    }
    obj["tokens"] = std::move(tokens);
    out << obj.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError(path.string(), "write failure");
}

void DatasetManifest::validate() const {
  if (member_path.empty()) throw ValidationError("member_path", "missing");
  if (nonmember_path.empty()) throw ValidationError("nonmember_path", "missing");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw ValidationError("calibration_fraction", "must lie strictly between 0 and 1");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    auto in = open_for_read(path);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.line(), e.message());
  }
  DatasetManifest m;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  for (const auto& [key, node] : tree) {
    const std::string value = node.get_value<std::string>();
    if (!node.empty()) throw ValidationError(key, "manifest has no sections");
    if (key == "member_path") {
      m.member_path = resolve(value);
    } else if (key == "nonmember_path") {
      m.nonmember_path = resolve(value);
    } else if (key == "seed") {
      try {
        std::size_t used = 0;
        m.seed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ValidationError("seed", "expected an unsigned integer");
      }
    } else if (key == "calibration_fraction") {
      const auto f = parse_real(value);
      if (!f) throw ValidationError("calibration_fraction", "expected a number");
      m.calibration_fraction = *f;
    } else {
      throw ValidationError(key, "unknown manifest key");
    }
  }
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  m.validate();
  auto out = open_for_write(path);
  out << "member_path = " << m.member_path.generic_string() << '\n'
      << "nonmember_path = " << m.nonmember_path.generic_string() << '\n'
      << "seed = " << m.seed << '\n'
      << "calibration_fraction = " << format_real(m.calibration_fraction) << '\n';
  out.flush();
  if (!out) throw IoError(path.string(), "write failure");
}

CalibrationSplit split_calibration(std::vector<std::string> ids_member,
                                   std::vector<std::string> ids_nonmember, std::uint64_t seed,
                                   double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("calibration fraction must lie strictly between 0 and 1");
  std::sort(ids_member.begin(), ids_member.end());
  std::sort(ids_nonmember.begin(), ids_nonmember.end());
  std::vector<std::string> shared;
  std::set_intersection(ids_member.begin(), ids_member.end(), ids_nonmember.begin(),
                        ids_nonmember.end(), std::back_inserter(shared));
  if (!shared.empty()) throw ValidationError("sample_id", "id '" + shared.front() + "' appears in both classes");
  std::mt19937_64 rng(seed);
  CalibrationSplit split;
  for (auto* ids : {&ids_member, &ids_nonmember}) {
    const char* cls = ids == &ids_member ? "member" : "nonmember";
    if (ids->size() < 2)
      throw ConfigError(std::string("need at least 2 ") + cls + " samples to both calibrate and evaluate");
    if (std::adjacent_find(ids->begin(), ids->end()) != ids->end())
      throw ValidationError("sample_id", std::string("duplicate ") + cls + " id");
    const auto take = static_cast<std::size_t>(ceil_count(fraction * static_cast<double>(ids->size())));
    if (take >= ids->size())
      throw ConfigError(std::string("calibration fraction leaves no ") + cls + " samples for evaluation");
    seeded_shuffle(*ids, rng);
    split.calibration.insert(split.calibration.end(), ids->begin(), ids->begin() + static_cast<std::ptrdiff_t>(take));
    split.evaluation.insert(split.evaluation.end(), ids->begin() + static_cast<std::ptrdiff_t>(take), ids->end());
  }
  std::sort(split.calibration.begin(), split.calibration.end());
  std::sort(split.evaluation.begin(), split.evaluation.end());
  return split;
}

}  // namespace icas
