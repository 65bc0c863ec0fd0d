#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace icas {

/// Token-map sides (h_k, w_k) for scales k = 1..K.
struct ScaleLayout {
  std::vector<std::pair<int, int>> sides;

  int num_scales() const noexcept { return static_cast<int>(sides.size()); }
  /// Tokens on scale k (1-based).
  std::size_t scale_size(int k) const;
  /// N = sum over k of h_k * w_k.
  std::size_t total_tokens() const;
  void validate() const;

  /// Parses "1x1,2x2,3x3".
  static ScaleLayout parse(const std::string& text);
  std::string to_string() const;

  bool operator==(const ScaleLayout&) const = default;
};

enum class Label { member, nonmember, unknown };

const char* to_string(Label label) noexcept;
Label parse_label(const std::string& text);

/// Rényi entropies keyed by canonical order strings: "0.5", "1", "2", "inf".
using RenyiMap = std::map<std::string, double>;

/// Observations for one ground-truth token.
struct TokenObservation {
  int scale = 1;
  int position = 0;
  double cond_lp = 0.0;    // log p(x_i | c)
  double uncond_lp = 0.0;  // log p(x_i)
  double vocab_mean = 0.0;
  double vocab_std = 0.0;
  RenyiMap renyi;
  double max_cond_lp = 0.0;

  bool operator==(const TokenObservation&) const = default;
};

struct SampleRecord {
  std::string sample_id;
  Label label = Label::unknown;
  std::string condition;
  ScaleLayout layout;
  std::vector<TokenObservation> tokens;

  /// Throws ValidationError naming the first offending field.
  void validate() const;
  bool operator==(const SampleRecord&) const = default;
};

/// Debug-format token: the whole conditional log-prob vector.
struct FullToken {
  int scale = 1;
  int position = 0;
  int gt = 0;
  std::vector<double> clp_vec;
  double uncond_lp = 0.0;

  bool operator==(const FullToken&) const = default;
};

struct FullDistributionRecord {
  std::string sample_id;
  Label label = Label::unknown;
  std::string condition;
  ScaleLayout layout;
  std::vector<FullToken> tokens;

  void validate() const;
  bool operator==(const FullDistributionRecord&) const = default;
};

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMaxDebugVocab = 65536;

/// Canonical key for a Rényi order: shortest decimal, or "inf".
std::string renyi_key(double alpha);
/// Inverse of renyi_key; throws ValidationError for non-canonical keys.
double parse_renyi_key(const std::string& key);

/// Single-pass line reader over a record file.
class RecordReader {
 public:
  explicit RecordReader(const std::filesystem::path& path);

  /// Next record, or nullopt at end of file. Throws ParseError/ValidationError
  /// with the line number in the message.
  std::optional<SampleRecord> next();
  std::size_t line() const noexcept { return line_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

std::vector<SampleRecord> read_records(const std::filesystem::path& path);
void write_records(const std::vector<SampleRecord>& records, const std::filesystem::path& path);

/// One record as a single line (no newline).
std::string encode_record(const SampleRecord& record);
SampleRecord decode_record(const std::string& line, std::size_t line_no = 1);

std::vector<FullDistributionRecord> read_full_records(const std::filesystem::path& path);
void write_full_records(const std::vector<FullDistributionRecord>& records,
                        const std::filesystem::path& path);

struct DatasetManifest {
  std::filesystem::path member_path;
  std::filesystem::path nonmember_path;
  std::uint64_t seed = 0;
  double calibration_fraction = 0.2;

  void validate() const;
};

/// Relative record paths resolve against the manifest's own directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct CalibrationSplit {
  std::vector<std::string> calibration;
  std::vector<std::string> evaluation;
};

/// Stratified split: ceil(fraction * n) ids per class go to calibration.
/// Ids are sorted before a seeded shuffle, so input order does not matter.
CalibrationSplit split_calibration(std::vector<std::string> ids_member,
                                   std::vector<std::string> ids_nonmember, std::uint64_t seed,
                                   double fraction);

}  // namespace icas
