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

#include "attnx/harness.h"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "attnx/error.h"
#include "attnx/protocol.h"

namespace attnx {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Carbon.

void validate_carbon_params(const CarbonParams& params) {
  if (params.gpu_count <= 0 || !(params.avg_power_watts > 0.0) ||
      !(params.pue > 0.0) || !(params.kg_co2e_per_kwh > 0.0)) {
    throw ConfigError("carbon parameters must all be positive");
  }
}

CarbonEstimate carbon_emissions(double seconds, const CarbonParams& params) {
  if (!(seconds >= 0.0)) {
    throw ContractError("carbon_emissions: seconds must be >= 0");
  }
  CarbonEstimate out;
  out.kwh_published =
      seconds * params.gpu_count * params.avg_power_watts * params.pue / 1e3;
  out.tco2e_published = out.kwh_published * params.kg_co2e_per_kwh;
  out.tco2e_literal = out.tco2e_published / 1e3;
  out.kwh_si = (seconds / 3600.0) * params.gpu_count *
               (params.avg_power_watts / 1e3) * params.pue;
  out.tco2e_si = out.kwh_si * params.kg_co2e_per_kwh / 1e3;
  return out;
}

// ---------------------------------------------------------------------------
// Frequencies.

namespace {

std::vector<std::string> reduce_op_names(int count) {
  std::vector<std::string> out{"mean", "multi"};
  for (int i = 1; i <= count; ++i) out.push_back("select" + std::to_string(i));
  return out;
}

void append_category(const std::string& category,
                     const std::vector<std::string>& names,
                     const std::map<std::string, std::size_t>& counts,
                     std::size_t total, std::vector<FrequencyEntry>& out) {
  for (const std::string& name : names) {
    const auto it = counts.find(name);
    const std::size_t count = it == counts.end() ? 0 : it->second;
    out.push_back({category, name, count,
                   100.0 * static_cast<double>(count) /
                       static_cast<double>(total)});
  }
}

}  // namespace

std::vector<FrequencyEntry> operation_frequencies(
    std::span<const OperationCombo> combos, int heads, int layers) {
  if (combos.empty()) {
    throw ContractError("operation_frequencies: no selections");
  }
  std::map<std::string, std::size_t> head_counts;
  std::map<std::string, std::size_t> layer_counts;
  std::map<std::string, std::size_t> matrix_counts;
  for (const OperationCombo& combo : combos) {
    check_combo(combo, heads, layers);
    ++head_counts[to_string(combo.head)];
    ++layer_counts[to_string(combo.layer)];
    ++matrix_counts[to_string(combo.matrix)];
  }
  std::vector<std::string> matrix_names;
  for (MatrixOp op : kAllMatrixOps) matrix_names.push_back(to_string(op));
  std::vector<FrequencyEntry> out;
  append_category("head", reduce_op_names(heads), head_counts, combos.size(),
                  out);
  append_category("layer", reduce_op_names(layers), layer_counts,
                  combos.size(), out);
  append_category("matrix", matrix_names, matrix_counts, combos.size(), out);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus.

namespace {

std::vector<std::uint8_t> binary_list(const Json& value, const std::string& field) {
  if (!value.is_array()) {
    throw DataError("field '" + field + "': expected a list of 0/1");
  }
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const Json& v = value[i];
    if (!v.is_number_integer() || (v.get<long long>() != 0 && v.get<long long>() != 1)) {
      throw DataError("field '" + field + "'[" + std::to_string(i) +
                      "]: expected 0 or 1");
    }
    out.push_back(static_cast<std::uint8_t>(v.get<int>()));
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> binary_lists(const Json& value,
                                                    const std::string& field) {
  if (!value.is_array()) {
    throw DataError("field '" + field + "': expected one list per label");
  }
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    out.push_back(binary_list(value[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Json parse_json_line(std::string_view line) {
  try {
    return Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed JSON near byte " +
                    std::to_string(e.byte > 0 ? e.byte - 1 : 0));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> split_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::string current;
  std::istringstream in(content);
  while (std::getline(in, current)) {
    if (!current.empty() && current.back() == '\r') current.pop_back();
    lines.push_back(current);
  }
  return lines;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

EvalRecord parse_corpus_record(std::string_view line) {
  const Json j = parse_json_line(line);
  if (!j.is_object()) throw DataError("record is not a JSON object");
  EvalRecord record;
  const auto id = j.find("id");
  if (id == j.end()) throw DataError("field 'id': missing");
  if (!id->is_string()) throw DataError("field 'id': expected a string");
  record.id = id->get<std::string>();
  if (record.id.empty()) throw DataError("field 'id': empty");

  const auto text = j.find("text");
  if (text == j.end()) throw DataError("field 'text': missing");
  if (!text->is_string()) throw DataError("field 'text': expected a string");
  record.text = text->get<std::string>();

  const auto labels = j.find("labels");
  if (labels == j.end()) throw DataError("field 'labels': missing");
  record.gold_labels = binary_list(*labels, "labels");

  if (const auto it = j.find("token_rationales"); it != j.end()) {
    record.token_rationales = binary_lists(*it, "token_rationales");
  }
  if (const auto it = j.find("sentences"); it != j.end()) {
    if (!it->is_array()) {
      throw DataError("field 'sentences': expected a list of [start, end]");
    }
    std::vector<SentenceSpan> spans;
    for (std::size_t k = 0; k < it->size(); ++k) {
      const Json& s = (*it)[k];
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() ||
          !s[1].is_number_unsigned()) {
        throw DataError("field 'sentences'[" + std::to_string(k) +
                        "]: expected [start, end] with non-negative integers");
      }
      spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    record.sentence_spans = std::move(spans);
  }
  if (const auto it = j.find("sentence_rationales"); it != j.end()) {
    if (!record.sentence_spans) {
      throw DataError("field 'sentence_rationales': requires 'sentences'");
    }
    record.sentence_rationales = binary_lists(*it, "sentence_rationales");
  }
  return record;
}

namespace {

// Best-effort id of a record that failed to parse.
std::string readable_id(const std::string& line) {
  const Json j = Json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_object() && j.contains("id") && j["id"].is_string()) {
    return j["id"].get<std::string>();
  }
  return "";
}

}  // namespace

Corpus ingest_corpus(const std::filesystem::path& path, const ModelProbe& probe,
                     bool strict) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  const ProbeInfo& info = probe.info();
  Corpus corpus;
  std::set<std::string> seen;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (is_blank(lines[n])) continue;
    const std::size_t line_no = n + 1;
    std::string id;
    try {
      EvalRecord record = parse_corpus_record(lines[n]);
      id = record.id;
      if (!seen.insert(record.id).second) {
        throw DataError("field 'id': duplicate id '" + record.id + "'");
      }
      if (record.gold_labels.size() != info.labels.size()) {
        throw DataError("field 'labels': " +
                        std::to_string(record.gold_labels.size()) +
                        " entries, probe has " +
                        std::to_string(info.labels.size()) + " labels");
      }
      TokenSequence seq = [&] {
        try {
          return probe.tokenize(record.text);
        } catch (const ContractError& e) {
          throw DataError(std::string("field 'text': ") + e.what());
        }
      }();
      if (seq.size() > info.max_seq_len) {
        throw DataError("field 'text': " + std::to_string(seq.size()) +
                        " tokens exceed the probe limit of " +
                        std::to_string(info.max_seq_len));
      }
      const std::vector<std::string> violations = validate_record(record, seq);
      if (!violations.empty()) {
        std::string joined;
        for (const std::string& v : violations) {
          if (!joined.empty()) joined += "; ";
          joined += v;
        }
        throw DataError(joined);
      }
      Instance instance{record.id, std::move(seq), record.sentence_spans};
      corpus.entries.push_back({line_no, std::move(record), std::move(instance)});
    } catch (const DataError& e) {
      if (strict) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
      }
      if (id.empty()) id = readable_id(lines[n]);
      corpus.rejections.push_back({line_no, id, e.what()});
    }
  }
  return corpus;
}

std::vector<ImportedInterpretation> load_imported(
    const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<ImportedInterpretation> out;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (is_blank(lines[n])) continue;
    const std::string where = path.string() + ":" + std::to_string(n + 1);
    try {
      const Json j = parse_json_line(lines[n]);
      if (!j.is_object()) throw DataError("record is not a JSON object");
      ImportedInterpretation item;
      if (!j.contains("id") || !j["id"].is_string()) {
        throw DataError("field 'id': expected a string");
      }
      item.id = j["id"].get<std::string>();
      if (!j.contains("label") || !j["label"].is_number_unsigned()) {
        throw DataError("field 'label': expected a non-negative integer");
      }
      item.label = j["label"].get<int>();
      if (!j.contains("technique") || !j["technique"].is_string() ||
          j["technique"].get<std::string>().empty()) {
        throw DataError("field 'technique': expected a non-empty string");
      }
      item.technique = j["technique"].get<std::string>();
      if (!j.contains("weights") || !j["weights"].is_array()) {
        throw DataError("field 'weights': expected a list of numbers");
      }
      for (std::size_t i = 0; i < j["weights"].size(); ++i) {
        const Json& w = j["weights"][i];
        if (!w.is_number() || !std::isfinite(w.get<double>())) {
          throw DataError("field 'weights'[" + std::to_string(i) +
                          "]: expected a finite number");
        }
        item.weights.push_back(w.get<double>());
      }
      out.push_back(std::move(item));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config.

namespace {

bool is_known_technique(const std::string& t) {
  return t == kTechniqueBaseline || t == kTechniquePrime ||
         t == kTechniqueBatch || t == kTechniqueLabel ||
         (t.starts_with(kImportedPrefix) && t.size() > kImportedPrefix.size());
}

std::string order_name(LayerProductOrder order) {
  return order == LayerProductOrder::kLastToFirst ? "last_to_first"
                                                  : "first_to_last";
}

LayerProductOrder parse_order(const std::string& text) {
  if (text == "last_to_first") return LayerProductOrder::kLastToFirst;
  if (text == "first_to_last") return LayerProductOrder::kFirstToLast;
  throw ConfigError("unknown layer order '" + text + "'");
}

std::string class_name(ErrorClass c) {
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

[[noreturn]] void rethrow_as(ErrorClass c, const std::string& message) {
  switch (c) {
    case ErrorClass::kContract:
      throw ContractError(message);
    case ErrorClass::kConfig:
      throw ConfigError(message);
    case ErrorClass::kProbe:
      throw ProbeError(message);
    case ErrorClass::kData:
      break;
  }
  throw DataError(message);
}

}  // namespace

void validate_config(const ExperimentConfig& config) {
  if (config.techniques.empty()) throw ConfigError("no techniques requested");
  std::set<std::string> seen;
  for (const std::string& t : config.techniques) {
    if (!is_known_technique(t)) {
      throw ConfigError("unknown technique '" + t + "'");
    }
    if (!seen.insert(t).second) {
      throw ConfigError("technique '" + t + "' listed twice");
    }
    if (t.starts_with(kImportedPrefix) && config.imported_paths.empty()) {
      throw ConfigError("technique '" + t +
                        "' needs an imported interpretations file");
    }
  }
  if (config.variants.empty()) throw ConfigError("no attention variants");
  if (!(config.label_threshold > 0.0 && config.label_threshold < 1.0)) {
    throw ConfigError("label threshold must lie in (0, 1)");
  }
  if (config.calibration_size == 0) {
    throw ConfigError("calibration size must be positive");
  }
  if (config.corpus_path.empty()) throw ConfigError("no corpus given");
  validate_carbon_params(config.carbon);
}

OrderedJson config_to_json(const ExperimentConfig& config) {
  OrderedJson j;
  j["format"] = "attnx-run-config";
  j["version"] = 1;
  j["probe"] = config.probe_spec;
  j["corpus"] = config.corpus_path;
  j["techniques"] = config.techniques;
  OrderedJson variants = OrderedJson::array();
  for (AttentionVariant v : config.variants) variants.push_back(to_string(v));
  j["variants"] = variants;
  j["metric"] = to_string(config.selection_metric);
  j["mode"] = to_string(config.mode);
  j["granularity"] = to_string(config.granularity);
  j["layer_order"] = order_name(config.layer_order);
  j["label_threshold"] = config.label_threshold;
  j["calibration_size"] = config.calibration_size;
  j["imported"] = config.imported_paths;
  j["carbon"] = {{"gpu_count", config.carbon.gpu_count},
                 {"avg_power_watts", config.carbon.avg_power_watts},
                 {"pue", config.carbon.pue},
                 {"kg_co2e_per_kwh", config.carbon.kg_co2e_per_kwh}};
  j["strict"] = config.strict;
  j["timings"] = config.record_timings;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "attnx-run-config" ||
        j.value("version", 0) != 1) {
      throw ConfigError("not an attnx run config (format/version)");
    }
    ExperimentConfig c;
    c.probe_spec = j.at("probe").get<std::string>();
    c.corpus_path = j.at("corpus").get<std::string>();
    c.techniques = j.at("techniques").get<std::vector<std::string>>();
    c.variants.clear();
    for (const auto& v : j.at("variants")) {
      c.variants.push_back(parse_variant(v.get<std::string>()));
    }
    c.selection_metric = parse_metric(j.at("metric").get<std::string>());
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.granularity = parse_granularity(j.at("granularity").get<std::string>());
    c.layer_order = parse_order(j.at("layer_order").get<std::string>());
    c.label_threshold = j.at("label_threshold").get<double>();
    c.calibration_size = j.at("calibration_size").get<std::size_t>();
    c.imported_paths = j.at("imported").get<std::vector<std::string>>();
    const Json& carbon = j.at("carbon");
    c.carbon.gpu_count = carbon.at("gpu_count").get<int>();
    c.carbon.avg_power_watts = carbon.at("avg_power_watts").get<double>();
    c.carbon.pue = carbon.at("pue").get<double>();
    c.carbon.kg_co2e_per_kwh = carbon.at("kg_co2e_per_kwh").get<double>();
    c.strict = j.at("strict").get<bool>();
    c.record_timings = j.at("timings").get<bool>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

std::string technique_key(std::string_view technique, AttentionVariant variant) {
  return std::string(technique) + "(" + to_string(variant) + ")";
}

// ---------------------------------------------------------------------------
// Hashing.

namespace {

std::string sha1_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha1(),
                 nullptr) != 1) {
    throw ContractError("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data.append(content);
  return sha1_hex(data);
}

std::string probe_fingerprint(const ModelProbe& probe,
                              const TokenSequence& sample) {
  const ProbeResponse response = probe.forward(sample.token_ids());
  const std::string text = protocol::encode_info(probe.info()).dump() + "\n" +
                           protocol::encode_response(response).dump();
  return sha1_hex(text);
}

std::string format_real(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

// ---------------------------------------------------------------------------
// Experiment.

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, const Fn& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    threads.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mutex);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

struct InstanceOutput {
  std::vector<ScoreRow> rows;
  std::vector<Failure> failures;
  std::vector<InstanceTiming> timings;
  // technique key -> combos chosen on this instance
  std::vector<std::pair<std::string, OperationCombo>> choices;
};

struct CalibrationOutput {
  std::optional<std::vector<double>> scores;
  std::optional<Failure> failure;
  double seconds = 0.0;
};

const std::vector<std::uint8_t>* rationale_mask(const EvalRecord& record,
                                                Granularity granularity,
                                                int label) {
  const auto& masks = granularity == Granularity::kToken
                          ? record.token_rationales
                          : record.sentence_rationales;
  if (!masks || label < 0 || static_cast<std::size_t>(label) >= masks->size()) {
    return nullptr;
  }
  return &(*masks)[static_cast<std::size_t>(label)];
}

class InstanceRunner {
 public:
  InstanceRunner(const ExperimentConfig& config, const ModelProbe& probe,
                 const std::map<std::string, std::vector<const ImportedInterpretation*>>&
                     imported,
                 const std::map<AttentionVariant, std::optional<OperationCombo>>&
                     batch_combos)
      : config_(config),
        probe_(probe),
        imported_(imported),
        batch_combos_(batch_combos) {}

  InstanceOutput run(const CorpusEntry& entry) const {
    InstanceOutput out;
    for (AttentionVariant variant : config_.variants) {
      run_variant(entry, variant, out);
    }
    return out;
  }

 private:
  void run_variant(const CorpusEntry& entry, AttentionVariant variant,
                   InstanceOutput& out) const {
    const Instance& instance = entry.instance;
    const SearchSettings settings{
        variant,
        {config_.selection_metric, config_.mode, config_.granularity},
        config_.layer_order};
    std::optional<ComboScorer> scorer;
    double build_seconds = 0.0;
    try {
      const auto start = Clock::now();
      scorer.emplace(probe_, instance, settings);
      build_seconds = seconds_since(start);
    } catch (const Error& e) {
      out.failures.push_back({technique_key("*", variant), instance.id,
                              e.error_class(), e.what()});
      return;
    }
    const PredictionVector& prediction = scorer->prediction();
    const int top = prediction.argmax();
    std::vector<int> labels = predicted_labels(
        prediction, ThresholdPolicy{config_.label_threshold});
    if (labels.empty()) labels = {top};

    for (const std::string& technique : config_.techniques) {
      const std::string key = technique_key(technique, variant);
      try {
        run_technique(entry, *scorer, build_seconds, technique, key, variant,
                      top, labels, out);
      } catch (const Error& e) {
        out.failures.push_back({key, instance.id, e.error_class(), e.what()});
      }
    }
  }

  Interpretation at_granularity(Interpretation token_level,
                                const Instance& instance) const {
    if (config_.granularity == Granularity::kSentence) {
      return to_sentence_level(token_level, *instance.sentences);
    }
    return token_level;
  }

  void emit(const CorpusEntry& entry, const ComboScorer& scorer,
            const std::string& technique, AttentionVariant variant,
            Interpretation interp, std::span<const int> labels,
            InstanceOutput& out) const {
    for (int label : labels) {
      interp.label = label;
      ScoreRow row;
      row.technique = technique;
      row.variant = variant;
      row.instance_id = entry.instance.id;
      row.label = label;
      row.combo = interp.combo ? to_string(*interp.combo) : "-";
      row.rft = scorer.value(MetricKind::kRft, interp);
      row.faithfulness = scorer.value(MetricKind::kFaithfulness, interp);
      const auto* mask = rationale_mask(entry.record, config_.granularity, label);
      if (mask != nullptr &&
          std::any_of(mask->begin(), mask->end(), [](auto m) { return m != 0; })) {
        row.auprc = auprc(interp, *mask, entry.instance.seq);
      }
      out.rows.push_back(std::move(row));
    }
  }

  void run_technique(const CorpusEntry& entry, const ComboScorer& scorer,
                     double build_seconds, const std::string& technique,
                     const std::string& key, AttentionVariant variant, int top,
                     const std::vector<int>& labels, InstanceOutput& out) const {
    const Instance& instance = entry.instance;
    const auto start = Clock::now();
    if (technique == kTechniqueBaseline || technique == kTechniqueBatch) {
      OperationCombo combo = OperationCombo::Baseline(variant);
      if (technique == kTechniqueBatch) {
        const auto& chosen = batch_combos_.at(variant);
        if (!chosen) {
          throw DataError("optimus-batch has no calibrated combo (every "
                          "calibration instance failed)");
        }
        combo = *chosen;
      }
      Interpretation interp = at_granularity(
          optimus_apply(probe_, instance.seq, combo, top, config_.layer_order),
          instance);
      out.timings.push_back({technique, variant, instance.id,
                             seconds_since(start)});
      out.choices.emplace_back(key, combo);
      emit(entry, scorer, technique, variant, std::move(interp), labels, out);
    } else if (technique == kTechniquePrime) {
      SelectionResult sel = optimus_prime(scorer, top);
      out.timings.push_back({technique, variant, instance.id,
                             build_seconds + seconds_since(start)});
      out.choices.emplace_back(key, sel.best_combo);
      emit(entry, scorer, technique, variant, std::move(sel.interpretation),
           labels, out);
    } else if (technique == kTechniqueLabel) {
      LabelSelection sel = optimus_label(scorer, labels);
      out.timings.push_back({technique, variant, instance.id,
                             build_seconds + seconds_since(start)});
      for (auto& [label, result] : sel.per_label) {
        out.choices.emplace_back(key, result.best_combo);
        const int one[] = {label};
        emit(entry, scorer, technique, variant, std::move(result.interpretation),
             one, out);
      }
    } else {
      const std::string name = technique.substr(kImportedPrefix.size());
      const auto it = imported_.find(name + "\n" + instance.id);
      if (it == imported_.end()) {
        throw DataError("no imported interpretation for this instance");
      }
      const std::size_t units = config_.granularity == Granularity::kToken
                                    ? instance.seq.size()
                                    : instance.sentences->size();
      for (const ImportedInterpretation* item : it->second) {
        if (item->weights.size() != units) {
          throw DataError("imported weights have " +
                          std::to_string(item->weights.size()) +
                          " entries, expected " + std::to_string(units));
        }
        if (static_cast<std::size_t>(item->label) >=
            probe_.info().labels.size()) {
          throw DataError("imported label " + std::to_string(item->label) +
                          " outside the probe's labels");
        }
        Interpretation interp{item->weights, std::nullopt, item->label,
                              config_.granularity};
        const int one[] = {item->label};
        emit(entry, scorer, technique, variant, std::move(interp), one, out);
      }
    }
  }

  const ExperimentConfig& config_;
  const ModelProbe& probe_;
  const std::map<std::string, std::vector<const ImportedInterpretation*>>&
      imported_;
  const std::map<AttentionVariant, std::optional<OperationCombo>>& batch_combos_;
};

bool wants(const ExperimentConfig& config, std::string_view technique) {
  return std::find(config.techniques.begin(), config.techniques.end(),
                   technique) != config.techniques.end();
}

std::vector<TechniqueSummary> summarize(const ExperimentConfig& config,
                                        const std::vector<ScoreRow>& rows,
                                        const std::vector<InstanceTiming>& timings) {
  std::vector<TechniqueSummary> out;
  for (AttentionVariant variant : config.variants) {
    for (const std::string& technique : config.techniques) {
      TechniqueSummary s;
      s.technique = technique;
      s.variant = variant;
      double rft_total = 0.0;
      double f_total = 0.0;
      double auprc_total = 0.0;
      // Rows of one instance are contiguous.
      std::size_t i = 0;
      while (i < rows.size()) {
        const ScoreRow& r = rows[i];
        if (r.technique != technique || r.variant != variant) {
          ++i;
          continue;
        }
        std::size_t j = i;
        double rft = 0.0;
        double f = 0.0;
        double a = 0.0;
        std::size_t n = 0;
        std::size_t na = 0;
        while (j < rows.size() && rows[j].technique == technique &&
               rows[j].variant == variant &&
               rows[j].instance_id == r.instance_id) {
          rft += rows[j].rft;
          f += rows[j].faithfulness;
          if (rows[j].auprc) {
            a += *rows[j].auprc;
            ++na;
          }
          ++n;
          ++j;
        }
        ++s.instances;
        rft_total += rft / static_cast<double>(n);
        f_total += f / static_cast<double>(n);
        if (na > 0) {
          auprc_total += a / static_cast<double>(na);
          ++s.auprc_instances;
        }
        i = j;
      }
      if (s.instances > 0) {
        s.rft = rft_total / static_cast<double>(s.instances);
        s.faithfulness = f_total / static_cast<double>(s.instances);
      }
      if (s.auprc_instances > 0) {
        s.auprc = auprc_total / static_cast<double>(s.auprc_instances);
      }
      for (const InstanceTiming& t : timings) {
        if (t.technique == technique && t.variant == variant) {
          s.seconds += t.seconds;
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<CorrelationRow> correlations(
    const std::vector<TechniqueSummary>& summaries) {
  std::vector<CorrelationRow> out;
  for (MetricKind kind : {MetricKind::kRft, MetricKind::kFaithfulness}) {
    CorrelationRow row;
    row.metric = to_string(kind);
    std::vector<double> x;
    std::vector<double> y;
    for (const TechniqueSummary& s : summaries) {
      if (!s.auprc) continue;
      x.push_back(kind == MetricKind::kRft ? s.rft : s.faithfulness);
      y.push_back(*s.auprc);
    }
    row.pairs = x.size();
    if (x.size() < 3) {
      row.note = "needs at least 3 techniques with AUPRC";
    } else {
      try {
        row.value = correlate(x, y);
      } catch (const Error& e) {
        row.note = e.what();
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const ModelProbe& probe) {
  validate_config(config);
  const ProbeInfo& info = probe.info();
  for (AttentionVariant v : config.variants) {
    if (v == AttentionVariant::kRaw && !info.pre_softmax) {
      throw ProbeError("variant A* needs pre-softmax scores, which this probe "
                       "does not expose");
    }
  }

  ExperimentResult result;
  result.probe_info = info;
  Corpus corpus = ingest_corpus(config.corpus_path, probe, config.strict);
  result.rejections = corpus.rejections;
  if (corpus.entries.empty()) throw DataError("corpus has no valid records");
  if (config.granularity == Granularity::kSentence &&
      std::none_of(corpus.entries.begin(), corpus.entries.end(),
                   [](const CorpusEntry& e) {
                     return e.instance.sentences.has_value();
                   })) {
    throw ConfigError("sentence granularity needs sentence spans in the corpus");
  }
  result.instances = corpus.entries.size();
  result.probe_fingerprint =
      probe_fingerprint(probe, corpus.entries.front().instance.seq);

  std::vector<ImportedInterpretation> imported_items;
  for (const std::string& path : config.imported_paths) {
    auto items = load_imported(path);
    imported_items.insert(imported_items.end(),
                          std::make_move_iterator(items.begin()),
                          std::make_move_iterator(items.end()));
  }
  std::map<std::string, std::vector<const ImportedInterpretation*>> imported;
  for (const auto& item : imported_items) {
    imported[item.technique + "\n" + item.id].push_back(&item);
  }

  const std::size_t workers =
      info.reentrant ? std::max<std::size_t>(1, config.workers) : 1;

  // Calibration for optimus-batch over the leading instances.
  std::map<AttentionVariant, std::optional<OperationCombo>> batch_combos;
  if (wants(config, kTechniqueBatch)) {
    const std::size_t count =
        std::min(config.calibration_size, corpus.entries.size());
    for (AttentionVariant variant : config.variants) {
      const SearchSettings settings{
          variant,
          {config.selection_metric, config.mode, config.granularity},
          config.layer_order};
      std::vector<CalibrationOutput> outputs(count);
      parallel_for(count, workers, [&](std::size_t i) {
        const Instance& instance = corpus.entries[i].instance;
        const auto start = Clock::now();
        try {
          const ComboScorer scorer(probe, instance, settings);
          outputs[i].scores = scorer.score_all(scorer.prediction().argmax());
        } catch (const Error& e) {
          outputs[i].failure = Failure{
              technique_key(std::string(kTechniqueBatch) + "-calibration",
                            variant),
              instance.id, e.error_class(), e.what()};
        }
        outputs[i].seconds = seconds_since(start);
      });
      BatchCalibration calibration;
      calibration.variant = variant;
      std::vector<double> summed(
          combo_count(info.h_heads, info.m_layers), 0.0);
      for (std::size_t i = 0; i < count; ++i) {
        calibration.seconds += outputs[i].seconds;
        if (outputs[i].failure) {
          result.failures.push_back(*outputs[i].failure);
          continue;
        }
        calibration.instance_ids.push_back(corpus.entries[i].instance.id);
        for (std::size_t c = 0; c < summed.size(); ++c) {
          summed[c] += (*outputs[i].scores)[c];
        }
      }
      if (!calibration.instance_ids.empty()) {
        const auto combos =
            enumerate_combos(info.h_heads, info.m_layers, variant);
        const std::size_t baseline = combo_index(
            OperationCombo::Baseline(variant), info.h_heads, info.m_layers);
        const std::size_t best =
            select_best_index(summed, baseline, &calibration.summed_score);
        calibration.combo = combos[best];
      }
      batch_combos[variant] = calibration.combo;
      result.calibrations.push_back(std::move(calibration));
    }
  }

  const InstanceRunner runner(config, probe, imported, batch_combos);
  std::vector<InstanceOutput> outputs(corpus.entries.size());
  parallel_for(corpus.entries.size(), workers, [&](std::size_t i) {
    outputs[i] = runner.run(corpus.entries[i]);
  });

  std::map<std::string, std::vector<OperationCombo>> choices;
  for (InstanceOutput& out : outputs) {
    for (auto& row : out.rows) result.rows.push_back(std::move(row));
    for (auto& f : out.failures) result.failures.push_back(std::move(f));
    for (auto& t : out.timings) result.timings.push_back(std::move(t));
    for (auto& [key, combo] : out.choices) choices[key].push_back(combo);
  }
  // Rows arrive instance-major; regroup by technique so each technique's
  // instances are contiguous, keeping instance order.
  std::vector<ScoreRow> grouped;
  grouped.reserve(result.rows.size());
  for (AttentionVariant variant : config.variants) {
    for (const std::string& technique : config.techniques) {
      for (const ScoreRow& row : result.rows) {
        if (row.technique == technique && row.variant == variant) {
          grouped.push_back(row);
        }
      }
    }
  }
  result.rows = std::move(grouped);

  result.summaries = summarize(config, result.rows, result.timings);
  result.correlations = correlations(result.summaries);
  for (const auto& [key, combos] : choices) {
    result.frequencies[key] =
        operation_frequencies(combos, info.h_heads, info.m_layers);
  }

  if (config.strict && !result.failures.empty()) {
    const Failure& f = result.failures.front();
    rethrow_as(f.error_class, f.technique + " on instance '" + f.instance_id +
                                  "': " + f.message);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Bundle.

namespace {

std::string cell(std::string text) {
  for (char& c : text) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

std::string optional_real(const std::optional<double>& value) {
  return value ? format_real(*value) : "NA";
}

class TableWriter {
 public:
  explicit TableWriter(std::initializer_list<std::string> header) {
    row(std::vector<std::string>(header));
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) text_ += '\t';
      text_ += cell(cells[i]);
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("write failed for " + path.string());
}

}  // namespace

namespace {

void create_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
}

OrderedJson file_hashes(const std::map<std::string, std::string>& files) {
  OrderedJson hashes = OrderedJson::object();
  for (const auto& [name, content] : files) {
    hashes[name] = git_blob_sha1(content);
  }
  return hashes;
}

}  // namespace

void write_artifact_bundle(const std::filesystem::path& dir,
                           const OrderedJson& config,
                           std::map<std::string, std::string> files) {
  create_dir(dir);
  files["config.json"] = config.dump(2) + "\n";
  OrderedJson manifest;
  manifest["format"] = "attnx-results";
  manifest["version"] = 1;
  manifest["files"] = file_hashes(files);
  files["manifest.json"] = manifest.dump(2) + "\n";
  for (const auto& [name, content] : files) write_file(dir / name, content);
}

void write_bundle(const std::filesystem::path& dir,
                  const ExperimentConfig& config,
                  const ExperimentResult& result,
                  const OrderedJson& extra_config) {
  create_dir(dir);

  std::map<std::string, std::string> files;
  OrderedJson config_json = config_to_json(config);
  if (extra_config.is_object()) {
    for (const auto& [key, value] : extra_config.items()) config_json[key] = value;
  }
  files["config.json"] = config_json.dump(2) + "\n";

  TableWriter scores({"technique", "variant", "instance", "label", "combo",
                      "rft", "faithfulness", "auprc"});
  for (const ScoreRow& r : result.rows) {
    scores.row({r.technique, to_string(r.variant), r.instance_id,
                std::to_string(r.label), r.combo, format_real(r.rft),
                format_real(r.faithfulness), optional_real(r.auprc)});
  }
  files["scores.tsv"] = scores.text();

  TableWriter summary({"technique", "variant", "instances", "rft",
                       "faithfulness", "auprc", "auprc_instances"});
  for (const TechniqueSummary& s : result.summaries) {
    summary.row({s.technique, to_string(s.variant), std::to_string(s.instances),
                 format_real(s.rft), format_real(s.faithfulness),
                 optional_real(s.auprc), std::to_string(s.auprc_instances)});
  }
  files["summary.tsv"] = summary.text();

  TableWriter corr({"metric", "pairs", "pearson", "spearman", "note"});
  for (const CorrelationRow& c : result.correlations) {
    corr.row({c.metric, std::to_string(c.pairs),
              c.value ? format_real(c.value->pearson) : "NA",
              c.value ? format_real(c.value->spearman) : "NA", c.note});
  }
  files["correlations.tsv"] = corr.text();

  TableWriter freq({"technique", "category", "op", "count", "percent"});
  for (const auto& [key, entries] : result.frequencies) {
    for (const FrequencyEntry& e : entries) {
      freq.row({key, e.category, e.op, std::to_string(e.count),
                format_real(e.percent)});
    }
  }
  files["frequencies.tsv"] = freq.text();

  TableWriter selections(
      {"variant", "combo", "summed_score", "calibration_instances"});
  for (const BatchCalibration& c : result.calibrations) {
    std::string ids;
    for (const std::string& id : c.instance_ids) {
      if (!ids.empty()) ids += ',';
      ids += id;
    }
    selections.row({to_string(c.variant), c.combo ? to_string(*c.combo) : "NA",
                    format_real(c.summed_score), ids});
  }
  files["selections.tsv"] = selections.text();

  TableWriter rejected({"line", "id", "reason"});
  for (const Rejection& r : result.rejections) {
    rejected.row({std::to_string(r.line), r.id, r.reason});
  }
  files["rejected.tsv"] = rejected.text();

  TableWriter failures({"technique", "instance", "class", "message"});
  for (const Failure& f : result.failures) {
    failures.row({f.technique, f.instance_id, class_name(f.error_class),
                  f.message});
  }
  files["failures.tsv"] = failures.text();

  if (config.record_timings) {
    TableWriter timings({"technique", "variant", "instance", "seconds"});
    for (const BatchCalibration& c : result.calibrations) {
      timings.row({std::string(kTechniqueBatch) + "-calibration",
                   to_string(c.variant), "*", format_real(c.seconds)});
    }
    for (const InstanceTiming& t : result.timings) {
      timings.row({t.technique, to_string(t.variant), t.instance_id,
                   format_real(t.seconds)});
    }
    files["timings.tsv"] = timings.text();

    TableWriter carbon({"technique", "variant", "seconds", "kwh_published",
                        "tco2e_published", "tco2e_literal", "kwh_si", "tco2e_si"});
    for (const TechniqueSummary& s : result.summaries) {
      double seconds = s.seconds;
      if (s.technique == kTechniqueBatch) {
        for (const BatchCalibration& c : result.calibrations) {
          if (c.variant == s.variant) seconds += c.seconds;
        }
      }
      const CarbonEstimate e = carbon_emissions(seconds, config.carbon);
      carbon.row({s.technique, to_string(s.variant), format_real(seconds),
                  format_real(e.kwh_published), format_real(e.tco2e_published),
                  format_real(e.tco2e_literal), format_real(e.kwh_si),
                  format_real(e.tco2e_si)});
    }
    files["carbon.tsv"] = carbon.text();
  }

  OrderedJson manifest;
  manifest["format"] = "attnx-results";
  manifest["version"] = 1;
  manifest["probe"] = {{"spec", config.probe_spec},
                       {"fingerprint", result.probe_fingerprint},
                       {"info", protocol::encode_info(result.probe_info)}};
  std::string corpus_hash = "NA";
  try {
    corpus_hash = git_blob_sha1(read_file(config.corpus_path));
  } catch (const ConfigError&) {
  }
  manifest["corpus"] = {{"path", config.corpus_path},
                        {"sha1", corpus_hash},
                        {"instances", result.instances},
                        {"rejected", result.rejections.size()}};
  manifest["files"] = file_hashes(files);
  files["manifest.json"] = manifest.dump(2) + "\n";

  for (const auto& [name, content] : files) write_file(dir / name, content);
}

}  // namespace attnx
