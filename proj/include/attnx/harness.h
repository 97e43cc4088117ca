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

#ifndef ATTNX_HARNESS_H_
#define ATTNX_HARNESS_H_

// Corpus ingestion, experiment runs over a corpus, and results bundles.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnx/attention.h"
#include "attnx/core.h"
#include "attnx/error.h"
#include "attnx/faithfulness.h"
#include "attnx/probe.h"
#include "attnx/selectors.h"
#include "attnx/stats.h"
#include "json.hpp"

namespace attnx {

// ---------------------------------------------------------------------------
// Carbon accounting.

struct CarbonParams {
  int gpu_count = 1;
  double avg_power_watts = 271.0;
  double pue = 1.10;
  double kg_co2e_per_kwh = 0.429;
};

// Throws ConfigError unless every field is positive.
void validate_carbon_params(const CarbonParams& params);

struct CarbonEstimate {
  // seconds x GPUs x W x PUE / 1e3, the published arithmetic.
  double kwh_published = 0.0;
  // kwh_published x kg CO2e per kWh; matches the published emission column.
  double tco2e_published = 0.0;
  // kwh_published x kg CO2e per kWh / 1e3, the emission formula as printed.
  double tco2e_literal = 0.0;
  // Unit-consistent variant: hours x kW x PUE, kg converted to tonnes.
  double kwh_si = 0.0;
  double tco2e_si = 0.0;
};

// Throws ContractError for negative seconds.
CarbonEstimate carbon_emissions(double seconds, const CarbonParams& params);

// ---------------------------------------------------------------------------
// Operation frequencies.

struct FrequencyEntry {
  std::string category;  // "head" | "layer" | "matrix"
  std::string op;        // "mean", "multi", "select3", "from_cls", ...
  std::size_t count = 0;
  double percent = 0.0;
};

// Counts every possible op of each category (zeros included) in canonical
// order; percentages are per category. Throws ContractError when `combos`
// is empty or a combo does not fit (heads, layers).
std::vector<FrequencyEntry> operation_frequencies(
    std::span<const OperationCombo> combos, int heads, int layers);

// ---------------------------------------------------------------------------
// Corpus ingestion.

struct CorpusEntry {
  std::size_t line = 0;  // 1-based
  EvalRecord record;
  Instance instance;
};

struct Rejection {
  std::size_t line = 0;
  std::string id;  // empty when the id itself was unreadable
  std::string reason;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::vector<Rejection> rejections;
};

// Parses one corpus line; throws DataError naming the offending field.
EvalRecord parse_corpus_record(std::string_view line);

// Reads the line-delimited corpus, tokenizes each record with the probe and
// validates it. Bad lines are collected as rejections; with `strict` the
// first one throws DataError instead. Blank lines are skipped. Throws
// ConfigError when the file cannot be opened.
Corpus ingest_corpus(const std::filesystem::path& path, const ModelProbe& probe,
                     bool strict = false);

// ---------------------------------------------------------------------------
// Imported interpretations (weights from an external tool).

struct ImportedInterpretation {
  std::string id;
  int label = 0;
  std::vector<double> weights;
  std::string technique;
};

// Throws DataError naming the line and field of the first bad record.
std::vector<ImportedInterpretation> load_imported(
    const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiments.

inline constexpr std::string_view kTechniqueBaseline = "baseline";
inline constexpr std::string_view kTechniquePrime = "optimus-prime";
inline constexpr std::string_view kTechniqueBatch = "optimus-batch";
inline constexpr std::string_view kTechniqueLabel = "optimus-label";
inline constexpr std::string_view kImportedPrefix = "imported:";

struct ExperimentConfig {
  std::string probe_spec = "toy:42";
  std::string corpus_path;
  std::vector<std::string> techniques{std::string(kTechniqueBaseline),
                                      std::string(kTechniquePrime)};
  std::vector<AttentionVariant> variants{AttentionVariant::kSoftmax};
  // Metric the selectors maximize. Every technique is reported on both.
  MetricKind selection_metric = MetricKind::kRft;
  PerturbationMode mode = PerturbationMode::kReplaceWithUnk;
  Granularity granularity = Granularity::kToken;
  LayerProductOrder layer_order = LayerProductOrder::kLastToFirst;
  double label_threshold = 0.5;
  // Leading corpus instances used to calibrate optimus-batch.
  std::size_t calibration_size = 10;
  std::vector<std::string> imported_paths;
  CarbonParams carbon;
  bool strict = false;
  // Wall-clock timings and emissions are written only on request, so
  // default bundles stay byte-identical across runs.
  bool record_timings = false;
  // Execution only; not part of the persisted config.
  std::size_t workers = 1;
};

// Throws ConfigError on unknown techniques, an empty technique or variant
// list, a threshold outside (0, 1), or a zero calibration size.
void validate_config(const ExperimentConfig& config);

nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

// One interpretation scored for one label of one instance.
struct ScoreRow {
  std::string technique;
  AttentionVariant variant = AttentionVariant::kSoftmax;
  std::string instance_id;
  int label = 0;
  std::string combo;  // "-" for imported interpretations
  double rft = 0.0;
  double faithfulness = 0.0;
  std::optional<double> auprc;  // absent without a usable rationale
};

struct TechniqueSummary {
  std::string technique;
  AttentionVariant variant = AttentionVariant::kSoftmax;
  std::size_t instances = 0;
  // Means over instances of the per-instance means over labels.
  double rft = 0.0;
  double faithfulness = 0.0;
  std::optional<double> auprc;
  std::size_t auprc_instances = 0;
  double seconds = 0.0;  // interpretation time, summed over instances
};

struct CorrelationRow {
  std::string metric;  // "rft" | "faithfulness"
  std::size_t pairs = 0;
  std::optional<Correlation> value;
  std::string note;  // why value is absent
};

struct BatchCalibration {
  AttentionVariant variant = AttentionVariant::kSoftmax;
  std::vector<std::string> instance_ids;
  std::optional<OperationCombo> combo;
  double summed_score = 0.0;
  double seconds = 0.0;
};

struct Failure {
  std::string technique;  // "*" when the whole instance failed
  std::string instance_id;
  ErrorClass error_class = ErrorClass::kData;
  std::string message;
};

struct InstanceTiming {
  std::string technique;
  AttentionVariant variant = AttentionVariant::kSoftmax;
  std::string instance_id;
  double seconds = 0.0;
};

struct ExperimentResult {
  ProbeInfo probe_info;
  std::string probe_fingerprint;
  std::size_t instances = 0;
  std::vector<ScoreRow> rows;
  std::vector<TechniqueSummary> summaries;
  std::vector<CorrelationRow> correlations;
  // Per technique key ("optimus-prime(A)"), frequency table of its choices.
  std::map<std::string, std::vector<FrequencyEntry>> frequencies;
  std::vector<BatchCalibration> calibrations;
  std::vector<Rejection> rejections;
  std::vector<Failure> failures;
  std::vector<InstanceTiming> timings;
};

// "optimus-prime(A)", "imported:lime(A*)".
std::string technique_key(std::string_view technique, AttentionVariant variant);

// Runs every (technique, variant) pair over the corpus. Instances are
// processed by `config.workers` threads and reduced in corpus order, so the
// result does not depend on the worker count. With config.strict any
// rejection or failure throws.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const ModelProbe& probe);

// SHA-1 of "blob <size>\0<content>", hex encoded.
std::string git_blob_sha1(std::string_view content);

// SHA-1 over the probe's info and its answer to a fixed input.
std::string probe_fingerprint(const ModelProbe& probe,
                              const TokenSequence& sample);

// Writes the results bundle into `dir` (created if needed):
// config.json, scores.tsv, summary.tsv, correlations.tsv, frequencies.tsv,
// selections.tsv, rejected.tsv, failures.tsv, [timings.tsv, carbon.tsv]
// and manifest.json with git-style hashes of every other file.
// `extra_config` fields are merged into config.json.
void write_bundle(const std::filesystem::path& dir,
                  const ExperimentConfig& config,
                  const ExperimentResult& result,
                  const nlohmann::ordered_json& extra_config = {});

// Writes `files` plus config.json (`config`) and a manifest.json carrying
// git-style hashes of every other file.
void write_artifact_bundle(const std::filesystem::path& dir,
                           const nlohmann::ordered_json& config,
                           std::map<std::string, std::string> files);

// Decimal form used in every bundle table: shortest round-trip.
std::string format_real(double value);

}  // namespace attnx

#endif  // ATTNX_HARNESS_H_
