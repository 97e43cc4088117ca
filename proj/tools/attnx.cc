/*
 * Copyright 2026 The attnx Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// attnx: command-line front end.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attnx/attention.h"
#include "attnx/conformance.h"
#include "attnx/core.h"
#include "attnx/error.h"
#include "attnx/faithfulness.h"
#include "attnx/harness.h"
#include "attnx/protocol.h"
#include "attnx/remote_probe.h"
#include "attnx/report.h"
#include "attnx/selectors.h"
#include "attnx/stats.h"
#include "attnx/toy_probe.h"
#include "json.hpp"

namespace attnx {
namespace {

namespace fs = std::filesystem;
using OrderedJson = nlohmann::ordered_json;

constexpr const char* kProbeEnv = "ATTNX_PROBE";

struct Common {
  std::uint64_t seed = 42;
  std::string probe;
  std::vector<std::string> variants{"A"};
  std::string mode = "unk";
  std::string granularity = "token";
  std::string out;
  bool strict = false;
  std::size_t workers = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Toy probe seed")->capture_default_str();
  cmd->add_option("--probe", c.probe,
                  "Probe spec: toy:SEED, toy-multilabel:SEED, "
                  "toy-weights:PATH, cmd:COMMAND, unix:PATH (default: $" +
                      std::string(kProbeEnv) + ", else toy:SEED)");
  cmd->add_option("--variant", c.variants, "Attention variant A or A*")
      ->capture_default_str();
  cmd->add_option("--mode", c.mode, "Perturbation: unk or delete")
      ->capture_default_str();
  cmd->add_option("--granularity", c.granularity, "token or sentence")
      ->capture_default_str();
  cmd->add_option("-o,--out", c.out, "Output directory");
  cmd->add_flag("--strict", c.strict, "Fail on any rejected record or failure");
  cmd->add_option("-j,--workers", c.workers, "Worker threads")
      ->capture_default_str();
}

std::string probe_spec(const Common& c) {
  if (!c.probe.empty()) return c.probe;
  if (const char* env = std::getenv(kProbeEnv); env != nullptr && *env != '\0') {
    return env;
  }
  return "toy:" + std::to_string(c.seed);
}

std::string out_dir(const Common& c, const std::string& command) {
  return c.out.empty() ? "attnx-results/" + command : c.out;
}

std::vector<AttentionVariant> parse_variants(const Common& c) {
  std::vector<AttentionVariant> out;
  for (const std::string& v : c.variants) {
    try {
      out.push_back(parse_variant(v));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

template <typename T, typename Fn>
T parse_config(const std::string& text, Fn fn) {
  try {
    return fn(text);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, value);
  return buffer;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Arguments minus execution-only options (output directory, worker count),
// so the recorded command line is identical across those choices.
std::vector<std::string> recordable_args(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "-o" || a == "--out" || a == "-j" || a == "--workers") {
      ++i;
      continue;
    }
    if (a.starts_with("--out=") || a.starts_with("--workers=")) continue;
    out.push_back(a);
  }
  return out;
}

OrderedJson command_record(const std::string& command,
                           const std::vector<std::string>& args) {
  OrderedJson j;
  j["command"] = command;
  j["argv"] = recordable_args(args);
  return j;
}

void report_problems(const ExperimentResult& result) {
  if (!result.rejections.empty()) {
    std::cerr << "attnx: " << result.rejections.size()
              << " corpus record(s) rejected (see rejected.tsv)\n";
  }
  if (!result.failures.empty()) {
    std::cerr << "attnx: " << result.failures.size()
              << " instance failure(s) (see failures.tsv)\n";
  }
}

void print_summary(const ExperimentResult& result) {
  std::cout << "technique\tvariant\tinstances\trft\tfaithfulness\tauprc\n";
  for (const TechniqueSummary& s : result.summaries) {
    std::cout << s.technique << '\t' << to_string(s.variant) << '\t'
              << s.instances << '\t' << fixed(s.rft, 6) << '\t'
              << fixed(s.faithfulness, 6) << '\t'
              << (s.auprc ? fixed(*s.auprc, 6) : std::string("NA")) << '\n';
  }
}

// ---------------------------------------------------------------------------
// evaluate / calibrate-batch

struct EvaluateOptions {
  std::string corpus;
  std::string techniques = "baseline,optimus-prime";
  std::string metric = "rft";
  double threshold = 0.5;
  std::size_t calibration_size = 10;
  std::vector<std::string> imported;
  std::string layer_order = "last_to_first";
  bool timings = false;
  CarbonParams carbon;
};

void add_carbon_options(CLI::App* cmd, CarbonParams& p) {
  cmd->add_option("--gpus", p.gpu_count, "GPU count")->capture_default_str();
  cmd->add_option("--watts", p.avg_power_watts, "Average power per GPU (W)")
      ->capture_default_str();
  cmd->add_option("--pue", p.pue, "Power usage effectiveness")
      ->capture_default_str();
  cmd->add_option("--kg-per-kwh", p.kg_co2e_per_kwh, "kg CO2e per kWh")
      ->capture_default_str();
}

void add_evaluate_options(CLI::App* cmd, EvaluateOptions& o, bool techniques) {
  cmd->add_option("--corpus", o.corpus, "Corpus (JSON lines)")->required();
  if (techniques) {
    cmd->add_option("--techniques", o.techniques,
                    "Comma list: baseline, optimus-prime, optimus-batch, "
                    "optimus-label, imported:NAME")
        ->capture_default_str();
    cmd->add_option("--imported", o.imported,
                    "Imported interpretations file (repeatable)");
    cmd->add_flag("--timings", o.timings,
                  "Record wall-clock timings and emissions");
  }
  cmd->add_option("--metric", o.metric, "Selection metric: rft or faithfulness")
      ->capture_default_str();
  cmd->add_option("--threshold", o.threshold, "Multi-label threshold")
      ->capture_default_str();
  cmd->add_option("--calibration-size", o.calibration_size,
                  "Leading instances used for batch calibration")
      ->capture_default_str();
  cmd->add_option("--layer-order", o.layer_order,
                  "Layer product order: last_to_first or first_to_last")
      ->capture_default_str();
  add_carbon_options(cmd, o.carbon);
}

ExperimentConfig experiment_config(const Common& c, const EvaluateOptions& o) {
  ExperimentConfig cfg;
  cfg.probe_spec = probe_spec(c);
  cfg.corpus_path = o.corpus;
  cfg.techniques = split_list(o.techniques);
  cfg.variants = parse_variants(c);
  cfg.selection_metric = parse_config<MetricKind>(o.metric, parse_metric);
  cfg.mode = parse_config<PerturbationMode>(c.mode, parse_mode);
  cfg.granularity = parse_config<Granularity>(c.granularity, parse_granularity);
  if (o.layer_order == "last_to_first") {
    cfg.layer_order = LayerProductOrder::kLastToFirst;
  } else if (o.layer_order == "first_to_last") {
    cfg.layer_order = LayerProductOrder::kFirstToLast;
  } else {
    throw ConfigError("unknown layer order '" + o.layer_order + "'");
  }
  cfg.label_threshold = o.threshold;
  cfg.calibration_size = o.calibration_size;
  cfg.imported_paths = o.imported;
  cfg.carbon = o.carbon;
  cfg.strict = c.strict;
  cfg.record_timings = o.timings;
  cfg.workers = c.workers;
  return cfg;
}

int cmd_evaluate(const Common& c, const EvaluateOptions& o,
                 const std::string& command,
                 const std::vector<std::string>& args) {
  const ExperimentConfig cfg = experiment_config(c, o);
  validate_config(cfg);
  const auto probe = open_probe(cfg.probe_spec, c.workers);
  const ExperimentResult result = run_experiment(cfg, *probe);
  const std::string dir = out_dir(c, command);
  write_bundle(dir, cfg, result, command_record(command, args));
  if (command == "calibrate-batch") {
    for (const BatchCalibration& cal : result.calibrations) {
      std::cout << "variant " << to_string(cal.variant) << "\tcombo "
                << (cal.combo ? to_string(*cal.combo) : std::string("NA"))
                << "\tsummed_score " << fixed(cal.summed_score, 6)
                << "\tcalibration_instances " << cal.instance_ids.size()
                << '\n';
    }
  } else {
    print_summary(result);
  }
  report_problems(result);
  std::cerr << "attnx: bundle written to " << dir << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainOptions {
  std::string text;
  std::string corpus;
  std::string id;
  std::string technique = "optimus-prime";
  std::string combo;
  std::string metric = "rft";
  int label = -1;
  double threshold = 0.5;
};

int cmd_explain(const Common& c, const ExplainOptions& o,
                const std::vector<std::string>& args) {
  const std::vector<AttentionVariant> variants = parse_variants(c);
  if (variants.size() != 1) throw ConfigError("explain takes one --variant");
  const AttentionVariant variant = variants.front();
  const PerturbationMode mode = parse_config<PerturbationMode>(c.mode, parse_mode);
  const Granularity granularity =
      parse_config<Granularity>(c.granularity, parse_granularity);
  const MetricKind metric = parse_config<MetricKind>(o.metric, parse_metric);
  const std::string spec = probe_spec(c);
  const auto probe = open_probe(spec);
  const ProbeInfo& info = probe->info();
  if (variant == AttentionVariant::kRaw && !info.pre_softmax) {
    throw ProbeError("variant A* needs pre-softmax scores, which this probe "
                     "does not expose");
  }

  if (!o.text.empty() == !o.corpus.empty()) {
    throw ConfigError("explain needs exactly one of --text or --corpus/--id");
  }
  const Instance instance = [&]() -> Instance {
    if (!o.text.empty()) {
      if (granularity == Granularity::kSentence) {
        throw ConfigError(
            "sentence granularity needs a corpus record with spans");
      }
      return {"text",
              parse_config<TokenSequence>(
                  o.text,
                  [&](const std::string& t) { return probe->tokenize(t); }),
              std::nullopt};
    }
    if (o.id.empty()) throw ConfigError("--corpus needs --id");
    const Corpus corpus = ingest_corpus(o.corpus, *probe, c.strict);
    for (const CorpusEntry& e : corpus.entries) {
      if (e.instance.id == o.id) return e.instance;
    }
    throw DataError("no valid record with id '" + o.id + "' in " + o.corpus);
  }();

  const SearchSettings settings{variant, {metric, mode, granularity},
                                LayerProductOrder::kLastToFirst};
  const ComboScorer scorer(*probe, instance, settings);
  const PredictionVector& prediction = scorer.prediction();
  std::vector<int> labels;
  if (o.label >= 0) {
    if (static_cast<std::size_t>(o.label) >= info.labels.size()) {
      throw ConfigError("--label outside the probe's labels");
    }
    labels = {o.label};
  } else if (o.technique == "optimus-label") {
    labels = predicted_labels(prediction, ThresholdPolicy{o.threshold});
    if (labels.empty()) labels = {prediction.argmax()};
  } else {
    labels = {prediction.argmax()};
  }

  std::vector<Interpretation> interps;
  for (int label : labels) {
    if (o.technique == "optimus-prime" || o.technique == "optimus-label") {
      interps.push_back(optimus_prime(scorer, label).interpretation);
      continue;
    }
    OperationCombo combo = OperationCombo::Baseline(variant);
    if (o.technique == "combo") {
      combo = parse_config<OperationCombo>(
          o.combo, [&](const std::string& t) { return parse_combo(t, variant); });
    } else if (o.technique != "baseline") {
      throw ConfigError("explain technique must be baseline, optimus-prime, "
                        "optimus-label or combo");
    }
    Interpretation interp = optimus_apply(*probe, instance.seq, combo, label);
    if (granularity == Granularity::kSentence) {
      interp = to_sentence_level(interp, *instance.sentences);
    }
    interps.push_back(std::move(interp));
  }

  const std::string dir = out_dir(c, "explain");
  std::map<std::string, std::string> files;
  std::string text_all;
  std::string jsonl;
  for (const Interpretation& interp : interps) {
    ExplainReport report;
    report.instance_id = instance.id;
    report.technique = o.technique;
    report.combo = interp.combo;
    report.variant = variant;
    report.granularity = granularity;
    report.label = interp.label;
    report.label_name = info.labels[static_cast<std::size_t>(interp.label)];
    report.probability = prediction.probability(interp.label);
    report.metric = to_string(metric);
    report.score = scorer.value(metric, interp);
    const std::span<const SentenceSpan> spans =
        instance.sentences ? std::span<const SentenceSpan>(*instance.sentences)
                           : std::span<const SentenceSpan>();
    report.units = report_units(instance.seq, interp, spans);
    text_all += render_text(report);
    files["report-" + std::to_string(interp.label) + ".html"] =
        render_html(report);
    nlohmann::ordered_json line;
    line["id"] = instance.id;
    line["label"] = interp.label;
    line["weights"] = interp.weights;
    line["technique"] = o.technique;
    jsonl += line.dump() + "\n";
  }
  files["report.txt"] = text_all;
  files["interpretations.jsonl"] = jsonl;
  OrderedJson config = command_record("explain", args);
  config["probe"] = spec;
  write_artifact_bundle(dir, config, files);
  std::cout << text_all;
  return 0;
}

// ---------------------------------------------------------------------------
// correlate

struct CorrelateOptions {
  std::string x_path;
  std::string y_path;
  std::string x_column;
  std::string y_column;
};

bool parse_number(const std::string& text, double* value) {
  if (text.empty()) return false;
  char* end = nullptr;
  *value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

// Numbers from a tab-separated file. A non-numeric first row is a header;
// `column` picks a header name, otherwise the last column is used.
std::vector<double> read_series(const std::string& path,
                                const std::string& column) {
  std::stringstream in(read_text(path));
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw DataError(path + ": no values");
  std::size_t start = 0;
  std::optional<std::size_t> index;
  const std::vector<std::string> first = split_tabs(rows.front());
  double probe_value = 0.0;
  const bool header = !parse_number(first.back(), &probe_value) ||
                      (!column.empty());
  if (header) {
    start = 1;
    if (!column.empty()) {
      for (std::size_t i = 0; i < first.size(); ++i) {
        if (first[i] == column) index = i;
      }
      if (!index) throw ConfigError(path + ": no column named '" + column + "'");
    }
  } else if (!column.empty()) {
    throw ConfigError(path + ": has no header row to select '" + column + "'");
  }
  std::vector<double> out;
  for (std::size_t r = start; r < rows.size(); ++r) {
    const std::vector<std::string> cells = split_tabs(rows[r]);
    const std::size_t i = index ? *index : cells.size() - 1;
    double value = 0.0;
    if (i >= cells.size() || !parse_number(cells[i], &value)) {
      throw DataError(path + ":" + std::to_string(r + 1) +
                      ": expected a number");
    }
    out.push_back(value);
  }
  return out;
}

int cmd_correlate(const Common& c, const CorrelateOptions& o,
                  const std::vector<std::string>& args) {
  const std::vector<double> x = read_series(o.x_path, o.x_column);
  const std::vector<double> y = read_series(o.y_path, o.y_column);
  if (x.size() != y.size()) {
    throw DataError("series lengths differ: " + std::to_string(x.size()) +
                    " vs " + std::to_string(y.size()));
  }
  const Correlation r = correlate(x, y);
  std::cout << "pairs\t" << x.size() << "\npearson\t" << fixed(r.pearson, 6)
            << "\nspearman\t" << fixed(r.spearman, 6) << '\n';
  const std::string table = "pairs\tpearson\tspearman\n" +
                            std::to_string(x.size()) + "\t" +
                            format_real(r.pearson) + "\t" +
                            format_real(r.spearman) + "\n";
  write_artifact_bundle(out_dir(c, "correlate"),
                        command_record("correlate", args),
                        {{"correlations.tsv", table}});
  return 0;
}

// ---------------------------------------------------------------------------
// frequencies

int cmd_frequencies(const Common& c, const std::string& bundle,
                    const std::vector<std::string>& args) {
  const nlohmann::json manifest =
      nlohmann::json::parse(read_text(fs::path(bundle) / "manifest.json"));
  if (!manifest.contains("probe")) {
    throw DataError(bundle + ": manifest has no probe info (not an evaluate "
                            "bundle)");
  }
  const ProbeInfo info =
      protocol::decode_info(manifest["probe"]["info"]);
  std::stringstream in(read_text(fs::path(bundle) / "scores.tsv"));
  std::string line;
  std::getline(in, line);
  if (line.rfind("technique\tvariant\tinstance\tlabel\tcombo", 0) != 0) {
    throw DataError(bundle + "/scores.tsv: unexpected header");
  }
  std::map<std::string, std::vector<OperationCombo>> choices;
  std::string last_key;
  while (std::getline(in, line)) {
    const std::vector<std::string> cells = split_tabs(line);
    if (cells.size() < 5) throw DataError(bundle + "/scores.tsv: short row");
    if (cells[0].starts_with(kImportedPrefix)) continue;
    const std::string key = technique_key(cells[0], parse_variant(cells[1]));
    const std::string instance_key = key + "\n" + cells[2];
    // One selection per instance, except per-label selections.
    if (cells[0] != kTechniqueLabel && instance_key == last_key) continue;
    last_key = instance_key;
    choices[key].push_back(parse_combo(cells[4], parse_variant(cells[1])));
  }
  if (choices.empty()) throw DataError(bundle + ": no selections to count");
  std::string table = "technique\tcategory\top\tcount\tpercent\n";
  std::cout << "technique\tcategory\top\tcount\tpercent\n";
  for (const auto& [key, combos] : choices) {
    for (const FrequencyEntry& e :
         operation_frequencies(combos, info.h_heads, info.m_layers)) {
      table += key + "\t" + e.category + "\t" + e.op + "\t" +
               std::to_string(e.count) + "\t" + format_real(e.percent) + "\n";
      std::cout << key << '\t' << e.category << '\t' << e.op << '\t' << e.count
                << '\t' << fixed(e.percent, 1) << '\n';
    }
  }
  write_artifact_bundle(out_dir(c, "frequencies"),
                        command_record("frequencies", args),
                        {{"frequencies.tsv", table}});
  return 0;
}

// ---------------------------------------------------------------------------
// carbon

int cmd_carbon(const Common& c, const std::vector<double>& seconds,
               const CarbonParams& params,
               const std::vector<std::string>& args) {
  validate_carbon_params(params);
  std::string table =
      "seconds\tkwh_published\ttco2e_published\ttco2e_literal\tkwh_si\ttco2e_si\n";
  std::cout << "seconds\tkwh_published\ttco2e_published\ttco2e_literal\tkwh_si\t"
               "tco2e_si\n";
  for (double s : seconds) {
    const CarbonEstimate e = carbon_emissions(s, params);
    std::cout << format_real(s) << '\t' << fixed(e.kwh_published, 3) << '\t'
              << fixed(e.tco2e_published, 3) << '\t' << fixed(e.tco2e_literal, 6)
              << '\t' << fixed(e.kwh_si, 6) << '\t' << fixed(e.tco2e_si, 9)
              << '\n';
    table += format_real(s) + "\t" + format_real(e.kwh_published) + "\t" +
             format_real(e.tco2e_published) + "\t" + format_real(e.tco2e_literal) +
             "\t" + format_real(e.kwh_si) + "\t" + format_real(e.tco2e_si) +
             "\n";
  }
  write_artifact_bundle(out_dir(c, "carbon"), command_record("carbon", args),
                        {{"carbon.tsv", table}});
  return 0;
}

// ---------------------------------------------------------------------------
// rank

int cmd_rank(const Common& c, const std::string& grid_path,
             const std::string& ties, const std::vector<std::string>& args) {
  TieMethod method = TieMethod::kAverage;
  if (ties == "min") {
    method = TieMethod::kMin;
  } else if (ties != "average") {
    throw ConfigError("--ties must be average or min");
  }
  const ScoreGrid grid = parse_score_grid(read_text(grid_path));
  const std::vector<double> ranks = average_rank(grid, method);
  std::string table = "technique\taverage_rank\n";
  for (std::size_t t = 0; t < ranks.size(); ++t) {
    std::cout << grid.techniques[t] << '\t' << fixed(ranks[t], 2) << '\n';
    table += grid.techniques[t] + "\t" + format_real(ranks[t]) + "\n";
  }
  write_artifact_bundle(out_dir(c, "rank"), command_record("rank", args),
                        {{"ranks.tsv", table}});
  return 0;
}

// ---------------------------------------------------------------------------
// serve-toy / toy-dump

std::unique_ptr<ToyProbe> toy_from(std::uint64_t seed, bool multilabel,
                                   const std::string& weights) {
  if (!weights.empty()) {
    return std::make_unique<ToyProbe>(ToyWeights::Load(weights));
  }
  return std::make_unique<ToyProbe>(ToyProbeConfig{
      seed, multilabel ? TaskKind::kMultiLabel : TaskKind::kSingleLabel,
      multilabel ? std::size_t{3} : std::size_t{2}});
}

int cmd_serve_toy(const Common& c, bool multilabel, const std::string& weights,
                  const std::string& socket, std::size_t max_connections) {
  const auto probe = toy_from(c.seed, multilabel, weights);
  const protocol::ProtocolServer server(*probe);
  if (socket.empty()) {
    std::ios::sync_with_stdio(false);
    server.serve(std::cin, std::cout);
  } else {
    protocol::serve_unix_socket(server, socket, max_connections);
  }
  return 0;
}

int cmd_toy_dump(const Common& c, bool multilabel) {
  const auto probe = toy_from(c.seed, multilabel, "");
  if (c.out.empty()) throw ConfigError("toy-dump needs --out FILE");
  probe->weights().save(c.out);
  std::cerr << "attnx: weights written to " << c.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// conformance

int cmd_conformance(const Common& c, const std::string& golden,
                    const std::string& text) {
  const std::string spec = probe_spec(c);
  std::unique_ptr<ModelProbe> local;
  std::unique_ptr<protocol::ProtocolServer> server;
  std::unique_ptr<LineChannel> channel;
  if (spec.starts_with("cmd:")) {
    channel = std::make_unique<ChildProcessChannel>(spec.substr(4));
  } else if (spec.starts_with("unix:")) {
    channel = std::make_unique<UnixSocketChannel>(spec.substr(5));
  } else {
    local = open_probe(spec);
    server = std::make_unique<protocol::ProtocolServer>(*local);
    channel = std::make_unique<protocol::LoopbackChannel>(*server);
  }
  std::vector<protocol::CheckResult> results =
      protocol::run_conformance(*channel, text);
  if (!golden.empty()) {
    for (auto& r : protocol::run_golden(*channel, protocol::load_golden(golden))) {
      results.push_back(std::move(r));
    }
  }
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.passed) std::cout << ": " << r.detail;
    std::cout << '\n';
    failed += r.passed ? 0 : 1;
  }
  if (failed > 0) {
    throw ProbeError(std::to_string(failed) + " of " +
                     std::to_string(results.size()) +
                     " conformance checks failed");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// rerun

int run_cli(const std::vector<std::string>& args);

int cmd_rerun(const Common& c, const std::string& bundle, bool verify) {
  const nlohmann::json config =
      nlohmann::json::parse(read_text(fs::path(bundle) / "config.json"));
  if (!config.contains("argv") || !config["argv"].is_array()) {
    throw DataError(bundle + "/config.json: no recorded command line");
  }
  if (c.out.empty()) throw ConfigError("rerun needs --out DIR");
  std::vector<std::string> argv = config["argv"].get<std::vector<std::string>>();
  argv.push_back("--out");
  argv.push_back(c.out);
  argv.push_back("--workers");
  argv.push_back(std::to_string(c.workers));
  const int status = run_cli(argv);
  if (status != 0 || !verify) return status;

  const nlohmann::json before =
      nlohmann::json::parse(read_text(fs::path(bundle) / "manifest.json"));
  const nlohmann::json after =
      nlohmann::json::parse(read_text(fs::path(c.out) / "manifest.json"));
  std::vector<std::string> differing;
  for (const auto& [name, hash] : before["files"].items()) {
    if (name == "timings.tsv" || name == "carbon.tsv") continue;
    if (!after["files"].contains(name) || after["files"][name] != hash) {
      differing.push_back(name);
    }
  }
  if (before.contains("probe") &&
      before["probe"].value("fingerprint", "") !=
          after["probe"].value("fingerprint", "")) {
    differing.push_back("probe fingerprint");
  }
  if (!differing.empty()) {
    std::string names;
    for (const auto& d : differing) names += (names.empty() ? "" : ", ") + d;
    throw DataError("rerun differs from " + bundle + ": " + names);
  }
  std::cerr << "attnx: rerun reproduces " << bundle << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"attnx: attention-based interpretations and their faithfulness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "attnx 1.0.0");

  Common common;
  EvaluateOptions eval;
  ExplainOptions explain;
  CorrelateOptions corr;
  std::string bundle;
  std::vector<double> seconds;
  CarbonParams carbon;
  std::string grid;
  std::string ties = "average";
  bool multilabel = false;
  std::string weights;
  std::string socket;
  std::size_t max_connections = 0;
  bool verify = false;
  std::string golden;
  std::string sample_text = "good movie";

  auto* evaluate = app.add_subcommand("evaluate", "Score techniques over a corpus");
  add_common(evaluate, common);
  add_evaluate_options(evaluate, eval, true);

  auto* calibrate = app.add_subcommand(
      "calibrate-batch", "Pick one combo for a whole corpus and apply it");
  add_common(calibrate, common);
  add_evaluate_options(calibrate, eval, false);

  auto* exp = app.add_subcommand("explain", "Interpret one instance");
  add_common(exp, common);
  exp->add_option("--text", explain.text, "Input text");
  exp->add_option("--corpus", explain.corpus, "Corpus holding the instance");
  exp->add_option("--id", explain.id, "Instance id within --corpus");
  exp->add_option("--technique", explain.technique,
                  "baseline, optimus-prime, optimus-label or combo")
      ->capture_default_str();
  exp->add_option("--combo", explain.combo,
                  "Combo for --technique combo, e.g. mean/select2/to_cls");
  exp->add_option("--metric", explain.metric, "rft or faithfulness")
      ->capture_default_str();
  exp->add_option("--label", explain.label, "Label to explain (default: predicted)");
  exp->add_option("--threshold", explain.threshold, "Multi-label threshold")
      ->capture_default_str();

  auto* cor = app.add_subcommand("correlate",
                                 "Pearson and Spearman between two score files");
  add_common(cor, common);
  cor->add_option("x", corr.x_path, "First score file")->required();
  cor->add_option("y", corr.y_path, "Second score file")->required();
  cor->add_option("--x-column", corr.x_column, "Header column of the first file");
  cor->add_option("--y-column", corr.y_column, "Header column of the second file");

  auto* freq = app.add_subcommand("frequencies",
                                  "Operation frequencies of an evaluate bundle");
  add_common(freq, common);
  freq->add_option("bundle", bundle, "Results bundle directory")->required();

  auto* carb = app.add_subcommand("carbon", "Energy and emissions estimate");
  add_common(carb, common);
  carb->add_option("--seconds", seconds, "Interpretation time in seconds")
      ->required();
  add_carbon_options(carb, carbon);

  auto* rank = app.add_subcommand("rank", "Average rank of techniques over datasets");
  add_common(rank, common);
  rank->add_option("grid", grid,
                   "TSV: header of dataset names, one row per technique")
      ->required();
  rank->add_option("--ties", ties, "average or min")->capture_default_str();

  auto* serve = app.add_subcommand("serve-toy",
                                   "Serve the toy probe over the wire protocol");
  add_common(serve, common);
  serve->add_flag("--multilabel", multilabel, "Three-label multi-label toy task");
  serve->add_option("--weights", weights, "Weights file from toy-dump");
  serve->add_option("--socket", socket, "Unix socket path (default: stdio)");
  serve->add_option("--max-connections", max_connections,
                    "Exit after this many connections (0 = never)");

  auto* dump = app.add_subcommand("toy-dump", "Write toy probe weights as JSON");
  add_common(dump, common);
  dump->add_flag("--multilabel", multilabel, "Three-label multi-label toy task");

  auto* conf = app.add_subcommand(
      "conformance", "Check a probe server against wire protocol v1");
  add_common(conf, common);
  conf->add_option("--golden", golden, "Golden request/response pairs (JSONL)");
  conf->add_option("--text", sample_text, "Sample text for the checks")
      ->capture_default_str();

  auto* rerun = app.add_subcommand("rerun", "Re-run the command recorded in a bundle");
  add_common(rerun, common);
  rerun->add_option("bundle", bundle, "Results bundle directory")->required();
  rerun->add_flag("--verify", verify, "Fail unless the new bundle is identical");

  std::vector<const char*> argv{"attnx"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorClass::kConfig);
  }

  if (evaluate->parsed()) return cmd_evaluate(common, eval, "evaluate", args);
  if (calibrate->parsed()) {
    eval.techniques = std::string(kTechniqueBatch);
    return cmd_evaluate(common, eval, "calibrate-batch", args);
  }
  if (exp->parsed()) return cmd_explain(common, explain, args);
  if (cor->parsed()) return cmd_correlate(common, corr, args);
  if (freq->parsed()) return cmd_frequencies(common, bundle, args);
  if (carb->parsed()) return cmd_carbon(common, seconds, carbon, args);
  if (rank->parsed()) return cmd_rank(common, grid, ties, args);
  if (serve->parsed()) {
    return cmd_serve_toy(common, multilabel, weights, socket, max_connections);
  }
  if (dump->parsed()) return cmd_toy_dump(common, multilabel);
  if (conf->parsed()) return cmd_conformance(common, golden, sample_text);
  if (rerun->parsed()) return cmd_rerun(common, bundle, verify);
  return static_cast<int>(ErrorClass::kConfig);
}

std::string class_label(ErrorClass c) {
  switch (c) {
    case ErrorClass::kContract:
      return "contract";
    case ErrorClass::kConfig:
      return "config";
    case ErrorClass::kProbe:
      return "probe";
    case ErrorClass::kData:
      return "data";
  }
  return "unknown";
}

int run_cli(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const Error& e) {
    std::cerr << "attnx: " << class_label(e.error_class())
              << " error: " << e.what() << '\n';
    return static_cast<int>(e.error_class());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "attnx: data error: " << e.what() << '\n';
    return static_cast<int>(ErrorClass::kData);
  } catch (const std::exception& e) {
    std::cerr << "attnx: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace
}  // namespace attnx

int main(int argc, char** argv) {
  return attnx::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
