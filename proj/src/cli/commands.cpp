#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "icas/cli.hpp"
#include "icas/error.hpp"
#include "icas/numfmt.hpp"
#include "icas/parallel.hpp"

namespace icas::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError(path.string(), "write failure");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

std::vector<SampleRecord> read_labeled(const fs::path& path, Label expected) {
  auto records = read_records(path);
  for (SampleRecord& r : records) {
    if (r.label == Label::unknown) r.label = expected;
    if (r.label != expected)
      throw ValidationError("label", "sample " + r.sample_id + " in " + path.string() + " is labeled " +
                                         to_string(r.label) + " but the manifest lists the file as " +
                                         to_string(expected));
  }
  return records;
}

std::string budget_name(double b) { return "tpr@fpr=" + format_real(b); }

std::string percent_header(double b) { return "TPR@" + format_real(b * 100.0) + "%"; }

std::string fixed4(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

}  // namespace

fs::path score_table_path(const fs::path& dir, const AttackConfig& attack) {
  return dir / ("scores_" + attack_slug(attack) + ".tsv");
}

void write_score_table(const ScoreTable& table, const std::string& scales, const fs::path& path) {
  auto out = open_output(path);
  out << "# attack = " << describe(table.attack) << '\n' << "# scales = " << scales << '\n';
  out << "sample_id\tlabel\tscore\tdirection\n";
  for (const ScoredSample& s : table.rows)
    out << s.sample_id << '\t' << to_string(s.label) << '\t' << format_real(s.score) << '\t'
        << to_string(s.direction) << '\n';
  finish(out, path);
}

ScoreTable read_score_table(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open score table (run the score command first)");
  std::optional<AttackConfig> attack;
  ScoreTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# attack = ", 0) == 0) {
      attack = parse_attack(line.substr(11));
      continue;
    }
    if (line.front() == '#') continue;
    if (!header) {
      if (line != "sample_id\tlabel\tscore\tdirection") throw ParseError(line_no, "unexpected score table header");
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError(line_no, "expected 4 tab-separated columns");
    const auto score = parse_real(cells[2]);
    if (!score || !std::isfinite(*score)) throw ValidationError("score", "not a finite number (line " + std::to_string(line_no) + ")");
    table.rows.push_back({cells[0], parse_label(cells[1]), *score, parse_direction(cells[3])});
  }
  if (!attack) throw ParseError(line_no, "score table lacks an '# attack = ' line");
  table.attack = *attack;
  return table;
}

std::vector<FitPoint> read_fit_points(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open fit input");
  std::vector<FitPoint> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto comma = line.find(',');
    const auto x = comma == std::string::npos ? std::nullopt : parse_real(line.substr(0, comma));
    const auto y = comma == std::string::npos ? std::nullopt : parse_real(line.substr(comma + 1));
    if (!x || !y) {
      if (points.empty() && line_no == 1) continue;  // header
      throw ParseError(line_no, "expected 'x,auroc'");
    }
    if (!std::isfinite(*x) || !std::isfinite(*y)) throw ValidationError("x,auroc", "non-finite value (line " + std::to_string(line_no) + ")");
    points.push_back({*x, *y});
  }
  return points;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const ToyWorld world = sample_world(cfg.world);
  const ToyDataset data =
      draw_dataset(world, cfg.members_per_condition, cfg.nonmembers_per_condition, cfg.resolved_data_seed());
  TrainConfig tcfg = cfg.train;
  if (!cfg.train_seed_set) tcfg.seed = cfg.world.seed + 2;
  const std::size_t n_tok = cfg.world.layout.total_tokens();
  std::vector<double> losses;
  const ToyModelParams params =
      train(ToyModelParams::zeros(cfg.world.n_conditions, n_tok, cfg.world.vocab_size), data.members, tcfg, &losses);
  const std::size_t workers = default_workers();
  const auto members = emit_records(params, cfg.world.layout, data.members, Label::member, "m", cfg.alphas, workers);
  const auto nonmembers =
      emit_records(params, cfg.world.layout, data.nonmembers, Label::nonmember, "n", cfg.alphas, workers);

  ensure_dir(cfg.out_dir);
  write_records(members, cfg.out_dir / "members.jsonl");
  write_records(nonmembers, cfg.out_dir / "nonmembers.jsonl");
  DatasetManifest manifest;
  manifest.member_path = "members.jsonl";
  manifest.nonmember_path = "nonmembers.jsonl";
  manifest.seed = cfg.eval_seed.value_or(cfg.world.seed);
  manifest.calibration_fraction = cfg.calibration_fraction.value_or(0.2);
  write_manifest(manifest, cfg.resolved_manifest());

  if (!cfg.quiet) {
    out << "param_count = " << param_count(params) << '\n'
        << "members = " << members.size() << '\n'
        << "nonmembers = " << nonmembers.size() << '\n'
        << "tokens_per_sample = " << n_tok << '\n'
        << "final_train_loss = " << format_real(losses.back()) << '\n'
        << "manifest = " << cfg.resolved_manifest().generic_string() << '\n';
  }
  return kSuccess;
}

int cmd_score(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.attacks.empty()) throw ConfigError("no attacks configured");
  const DatasetManifest manifest = read_manifest(cfg.resolved_manifest());
  std::vector<SampleRecord> records = read_labeled(manifest.member_path, Label::member);
  std::vector<SampleRecord> nonmembers = read_labeled(manifest.nonmember_path, Label::nonmember);
  records.insert(records.end(), std::make_move_iterator(nonmembers.begin()), std::make_move_iterator(nonmembers.end()));
  if (records.empty()) throw ValidationError("records", "manifest lists no samples");
  if (mixed_layouts(records) && !cfg.quiet)
    err << "warning: records mix scale layouts; raw score sums are not normalized by token count\n";
  ensure_dir(cfg.out_dir);
  const std::size_t workers = default_workers();
  for (const AttackConfig& attack : cfg.attacks) {
    ScoreTable table{attack, score_dataset(records, attack, cfg.scales, workers)};
    const fs::path path = score_table_path(cfg.out_dir, attack);
    write_score_table(table, cfg.scales.to_string(), path);
    if (!cfg.quiet) out << describe(attack) << " -> " << path.generic_string() << '\n';
  }
  return kSuccess;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.attacks.empty()) throw ConfigError("no attacks configured");
  std::optional<DatasetManifest> manifest;
  if (fs::exists(cfg.resolved_manifest())) manifest = read_manifest(cfg.resolved_manifest());
  const std::uint64_t seed = cfg.eval_seed.value_or(manifest ? manifest->seed : 0);
  const double fraction = cfg.calibration_fraction.value_or(manifest ? manifest->calibration_fraction : 0.2);
  for (double b : cfg.fpr_budgets)
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("fpr budgets must lie in (0, 1]");

  ensure_dir(cfg.out_dir);
  const fs::path metrics_path = cfg.out_dir / "metrics.csv";
  const fs::path table_path = cfg.out_dir / "table.csv";
  const fs::path md_path = cfg.out_dir / "table.md";
  auto metrics = open_output(metrics_path);
  auto table = open_output(table_path);
  metrics << "attack,metric,value\n";
  table << "attack,AUROC";
  for (double b : cfg.fpr_budgets) table << ',' << percent_header(b);
  table << ",ASR\n";

  std::vector<std::vector<std::string>> md_rows;
  for (const AttackConfig& attack : cfg.attacks) {
    const ScoreTable scores = read_score_table(score_table_path(cfg.out_dir, attack));
    const std::vector<LabeledScore> oriented = orient(scores.rows);
    std::vector<std::string> ids_member, ids_nonmember;
    std::map<std::string, LabeledScore> by_id;
    for (std::size_t i = 0; i < scores.rows.size(); ++i) {
      const auto& row = scores.rows[i];
      if (!by_id.emplace(row.sample_id, oriented[i]).second)
        throw ValidationError("sample_id", "duplicate id " + row.sample_id + " in score table");
      (oriented[i].is_member ? ids_member : ids_nonmember).push_back(row.sample_id);
    }
    const CalibrationSplit split = split_calibration(ids_member, ids_nonmember, seed, fraction);
    std::vector<LabeledScore> calibration, evaluation;
    for (const auto& id : split.calibration) calibration.push_back(by_id.at(id));
    for (const auto& id : split.evaluation) evaluation.push_back(by_id.at(id));
    const EvalReport report = evaluate(calibration, evaluation, cfg.fpr_budgets);

    const std::string name = describe(attack);
    const std::string slug = attack_slug(attack);
    const fs::path summary_path = cfg.out_dir / ("eval_" + slug + ".txt");
    auto summary = open_output(summary_path);
    summary << "attack = " << name << '\n'
            << "auroc = " << format_real(report.auroc) << '\n';
    for (const auto& [b, tpr] : report.tpr_at_fpr) summary << budget_name(b) << " = " << format_real(tpr) << '\n';
    summary << "asr = " << format_real(report.asr) << '\n'
            << "threshold = " << format_real(report.threshold) << '\n'
            << "n_member = " << report.n_member << '\n'
            << "n_nonmember = " << report.n_nonmember << '\n'
            << "n_calibration = " << calibration.size() << '\n'
            << "n_evaluation = " << evaluation.size() << '\n'
            << "split_seed = " << seed << '\n'
            << "calibration_fraction = " << format_real(fraction) << '\n';
    finish(summary, summary_path);

    const fs::path roc_path = cfg.out_dir / ("roc_" + slug + ".csv");
    auto roc = open_output(roc_path);
    roc << "fpr,tpr\n";
    for (const RocPoint& p : report.roc) roc << format_real(p.fpr) << ',' << format_real(p.tpr) << '\n';
    finish(roc, roc_path);

    // Slugs carry no commas, unlike the full attack spec.
    metrics << slug << ",auroc," << format_real(report.auroc) << '\n';
    for (const auto& [b, tpr] : report.tpr_at_fpr) metrics << slug << ',' << budget_name(b) << ',' << format_real(tpr) << '\n';
    metrics << slug << ",asr," << format_real(report.asr) << '\n';
    metrics << slug << ",threshold," << format_real(report.threshold) << '\n';

    table << slug << ',' << format_real(report.auroc);
    std::vector<std::string> md{attack_title(attack), fixed4(report.auroc)};
    for (const auto& [b, tpr] : report.tpr_at_fpr) {
      table << ',' << format_real(tpr);
      md.push_back(fixed4(tpr));
    }
    table << ',' << format_real(report.asr) << '\n';
    md.push_back(fixed4(report.asr));
    md_rows.push_back(std::move(md));
    if (!cfg.quiet) out << name << ": auroc = " << fixed4(report.auroc) << ", asr = " << fixed4(report.asr) << '\n';
  }
  finish(metrics, metrics_path);
  finish(table, table_path);

  std::vector<std::string> head{"Method", "AUROC"};
  for (double b : cfg.fpr_budgets) head.push_back(percent_header(b));
  head.push_back("ASR");
  std::vector<std::size_t> width(head.size());
  for (std::size_t j = 0; j < head.size(); ++j) {
    width[j] = head[j].size();
    for (const auto& row : md_rows) width[j] = std::max(width[j], row[j].size());
  }
  auto md = open_output(md_path);
  auto emit_row = [&](const std::vector<std::string>& cells) {
    md << '|';
    for (std::size_t j = 0; j < cells.size(); ++j)
      md << ' ' << cells[j] << std::string(width[j] - cells[j].size(), ' ') << " |";
    md << '\n';
  };
  emit_row(head);
  md << '|';
  for (std::size_t j = 0; j < head.size(); ++j) md << std::string(width[j] + 2, '-') << '|';
  md << '\n';
  for (const auto& row : md_rows) emit_row(row);
  finish(md, md_path);
  return kSuccess;
}

int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.fit_input) throw ConfigError("fit.input is required");
  std::vector<FitPoint> points = read_fit_points(*cfg.fit_input);
  if (cfg.max_auroc) points = drop_saturated(points, *cfg.max_auroc);
  if (cfg.x_transform == XTransform::log2) {
    for (FitPoint& p : points) {
      if (!(p.x > 0.0)) throw ConfigError("log2 transform needs x > 0");
      p.x = std::log2(p.x);
    }
  }
  const FitResult fit = linear_fit(points);
  ensure_dir(cfg.out_dir);
  const fs::path path = cfg.out_dir / "fit.txt";
  auto file = open_output(path);
  std::ostringstream body;
  body << "alpha = " << format_real(fit.slope) << '\n'
       << "beta = " << format_real(fit.intercept) << '\n'
       << "r = " << format_real(fit.pearson_r) << '\n'
       << "n = " << fit.n << '\n'
       << "x_transform = " << (cfg.x_transform == XTransform::log2 ? "log2" : "identity") << '\n';
  file << body.str();
  finish(file, path);
  if (!cfg.quiet) out << body.str();
  return kSuccess;
}

int cmd_convert(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.convert_input) throw ConfigError("convert.input is required");
  const auto full = read_full_records(*cfg.convert_input);
  std::vector<SampleRecord> records;
  records.reserve(full.size());
  for (const auto& f : full) records.push_back(summarize(f, cfg.alphas));
  const fs::path path = cfg.convert_output.value_or(cfg.out_dir / "converted.jsonl");
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_records(records, path);
  if (!cfg.quiet) out << "converted " << records.size() << " records -> " << path.generic_string() << '\n';
  return kSuccess;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-data detection toolkit for conditional autoregressive models", "icas-audit"};
  app.require_subcommand(1);
  std::optional<std::string> config_path, out_dir, scales;
  std::optional<std::uint64_t> seed;
  std::optional<double> calib_fraction;
  std::vector<std::string> attacks;
  std::vector<double> fprs;
  bool quiet = false;
  app.add_option("--config", config_path, "INI config file");
  app.add_option("--seed", seed, "Seed override (world seed for simulate, split seed for eval)");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--attack", attacks, "Attack spec, e.g. icas:a=1.75,b=1.3 (repeatable)");
  app.add_option("--fpr", fprs, "FPR budget for TPR@FPR (repeatable)");
  app.add_option("--calib-fraction", calib_fraction, "Calibration share of each class for ASR");
  app.add_option("--scales", scales, "Scale levels to score: comma list or \"all\"");
  app.add_flag("--quiet", quiet, "Suppress progress output");
  auto* simulate = app.add_subcommand("simulate", "Train the toy model and emit member/nonmember records");
  auto* score = app.add_subcommand("score", "Score both record files with every configured attack");
  auto* eval = app.add_subcommand("eval", "AUROC, TPR@FPR and ASR for every scored attack");
  auto* fit = app.add_subcommand("fit", "Fit a linear scaling law to (x, auroc) rows");
  auto* convert = app.add_subcommand("convert", "Full-distribution debug records to canonical records");
  for (auto* sub : {simulate, score, eval, fit, convert}) sub->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    RunConfig cfg = config_path ? load_config(*config_path) : [] {
      RunConfig c;
      c.attacks = default_attacks();
      return c;
    }();
    if (out_dir) cfg.out_dir = *out_dir;
    if (!attacks.empty()) {
      cfg.attacks.clear();
      for (const auto& a : attacks) cfg.attacks.push_back(parse_attack(a));
    }
    if (!fprs.empty()) cfg.fpr_budgets = fprs;
    if (calib_fraction) cfg.calibration_fraction = *calib_fraction;
    if (scales) cfg.scales = ScaleFilter::parse(*scales);
    if (quiet) cfg.quiet = true;
    if (seed) {
      if (simulate->parsed()) cfg.world.seed = *seed;
      if (eval->parsed()) cfg.eval_seed = *seed;
    }
    if (cfg.calibration_fraction && !(*cfg.calibration_fraction > 0.0 && *cfg.calibration_fraction < 1.0))
      throw ConfigError("calibration fraction must lie strictly between 0 and 1");

    if (simulate->parsed()) return cmd_simulate(cfg, out);
    if (score->parsed()) return cmd_score(cfg, out, err);
    if (eval->parsed()) return cmd_eval(cfg, out);
    if (fit->parsed()) return cmd_fit(cfg, out);
    return cmd_convert(cfg, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  }
}

}  // namespace icas::cli
