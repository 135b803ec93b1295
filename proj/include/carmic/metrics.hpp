#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carmic/audio_io.hpp"
#include "carmic/fixtures.hpp"

namespace carmic::metrics {

/// Descriptive columns of one rendered condition as they appear in dataset.csv.
/// peak_fc and peak_q are -1 for profiles without a resonance peak.
struct ConditionKey {
  std::string condition_id;
  std::string car;
  std::string noise;
  double hp_fc = 0.0;
  double lp_fc = 0.0;
  double peak_fc = -1.0;
  double peak_q = -1.0;
};

struct SentenceRecord {
  std::string condition_id;
  int sentence_idx = 0;
  std::string metric;
  double value = 0.0;
};

struct DatasetRow {
  ConditionKey condition;
  int sentence_idx = 0;
  std::string metric;
  double value = 0.0;
};

using Dataset = std::vector<DatasetRow>;

inline constexpr std::string_view kSnrMetric = "snr_a";
inline constexpr double kSnrPowerFloor = 1e-20;

/// One sentence window cut into its three fixed-time regions. The spans view
/// the segmented buffer, which must outlive them.
struct SentenceSlice {
  std::span<const double> whole;
  std::span<const double> lead;
  std::span<const double> active;
  std::span<const double> trail;
  int sample_rate = kCanonicalSampleRate;
};

std::vector<SentenceSlice> segment(const AudioBuffer& x, const fixtures::StimulusLayout& layout);

/// A-weights the whole slice, then compares active power against the mean
/// power of both silences, with power subtraction:
///   10 log10(max(P_active - P_noise, 1e-20) / P_noise)
/// Returns +inf when the silences are exactly zero.
double snr_a_weighted(const SentenceSlice& slice);

std::vector<std::string> normalize_text(std::string_view text);

struct WerCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int reference_words = 0;

  int errors() const { return substitutions + deletions + insertions; }
  double rate() const { return static_cast<double>(errors()) / reference_words; }
};

/// Minimal unit-cost edit alignment. Ties prefer substitution, then deletion.
WerCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// Pooled rate over sentences: sum of errors / sum of reference words.
/// A missing hypothesis (nullopt) counts every reference word as deleted.
struct SentencePair {
  std::vector<std::string> reference;
  std::optional<std::vector<std::string>> hypothesis;
};
WerCounts wer_aggregate(std::span<const SentencePair> sentences);

// ---- dataset.csv -------------------------------------------------------

inline constexpr std::string_view kDatasetHeader =
    "condition_id,car,noise,hp_fc,lp_fc,peak_fc,peak_q,sentence_idx,metric,value";

/// Shortest round-trip decimal; infinities print as "inf" / "-inf".
std::string format_value(double v);
double parse_value(std::string_view text);

void write_dataset(const std::filesystem::path& path, const Dataset& rows);
Dataset read_dataset(const std::filesystem::path& path);

/// Distinct conditions in first-appearance order.
std::vector<ConditionKey> dataset_conditions(const Dataset& rows);

// ---- external metrics ----------------------------------------------------

/// Parses `condition_id,sentence_idx,metric,value`. Conditions must be known,
/// *_mos values must be in [1, 5], (condition, sentence, metric) unique.
std::vector<SentenceRecord> parse_external_metrics(
    std::string_view csv_text, const std::map<std::string, ConditionKey>& known,
    int sentence_count);
std::vector<SentenceRecord> ingest_external_metrics(
    const std::filesystem::path& csv_path, const std::map<std::string, ConditionKey>& known,
    int sentence_count);

/// Appends records; rejects keys already present in the dataset. Output keeps
/// the dataset's condition order, then sentence, then metric insertion order.
Dataset merge_records(const Dataset& dataset, std::span<const SentenceRecord> records,
                      const std::map<std::string, ConditionKey>& known);

// ---- ASR bridge ----------------------------------------------------------

/// Twenty Harvard sentences (lists 1 and 2), the default reference texts.
const std::vector<std::string>& default_reference_sentences();

struct AsrJob {
  std::string condition_id;
  int sentence_idx = 0;
  std::string wav_path;  // relative to the asr directory
  std::string reference;
};

inline constexpr std::string_view kJobsHeader = "condition_id,sentence_idx,wav_path,reference";
inline constexpr std::string_view kHypothesesHeader = "condition_id,sentence_idx,hypothesis";

/// Writes `<asr_dir>/<condition_id>/<sentence_idx>.wav` (float32) for each
/// sentence of one rendered condition and returns the matching jobs.
std::vector<AsrJob> export_condition_sentences(const std::filesystem::path& asr_dir,
                                               const std::string& condition_id,
                                               const AudioBuffer& render,
                                               const fixtures::StimulusLayout& layout,
                                               std::span<const std::string> references);

void write_jobs(const std::filesystem::path& path, std::span<const AsrJob> jobs);
std::vector<AsrJob> read_jobs(const std::filesystem::path& path);

/// condition_id -> sentence_idx -> hypothesis text.
using Hypotheses = std::map<std::string, std::map<int, std::string>>;
Hypotheses read_hypotheses(const std::filesystem::path& path);

struct ConditionWer {
  std::string condition_id;
  WerCounts counts;
};

/// Pooled WER per condition that has at least one hypothesis, in job order.
std::vector<ConditionWer> wer_by_condition(std::span<const AsrJob> jobs, const Hypotheses& hyps);

}  // namespace carmic::metrics
