#include "carmic/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <tuple>

#include <fmt/core.h>

#include "carmic/csv.hpp"
#include "carmic/dsp.hpp"

namespace carmic::metrics {

std::vector<SentenceSlice> segment(const AudioBuffer& x, const fixtures::StimulusLayout& layout) {
  layout.validate();
  const int fs = x.sample_rate;
  const std::size_t per = layout.sentence_samples(fs);
  const std::size_t lead = layout.lead_samples(fs);
  const std::size_t trail = layout.trail_samples(fs);
  if (x.size() != layout.total_samples(fs)) {
    throw Error(fmt::format("buffer has {} samples but the layout needs exactly {}", x.size(),
                            layout.total_samples(fs)));
  }
  std::vector<SentenceSlice> out;
  out.reserve(static_cast<std::size_t>(layout.sentence_count));
  const std::span<const double> all(x.samples);
  for (int s = 0; s < layout.sentence_count; ++s) {
    const auto whole = all.subspan(static_cast<std::size_t>(s) * per, per);
    out.push_back({whole, whole.first(lead), whole.subspan(lead, per - lead - trail),
                   whole.last(trail), fs});
  }
  return out;
}

namespace {

double sum_squares(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

}  // namespace

double snr_a_weighted(const SentenceSlice& slice) {
  if (slice.active.empty() || slice.lead.size() + slice.trail.size() == 0) {
    throw Error("SNR needs nonempty silence and active regions");
  }
  const auto weighted = dsp::apply_cascade(dsp::a_weighting_cascade(slice.sample_rate), slice.whole);
  const std::span<const double> w(weighted);
  const std::size_t lead = slice.lead.size();
  const std::size_t active = slice.active.size();
  const std::size_t trail = slice.trail.size();

  const double p_noise = (sum_squares(w.first(lead)) + sum_squares(w.last(trail))) /
                         static_cast<double>(lead + trail);
  const double p_active = sum_squares(w.subspan(lead, active)) / static_cast<double>(active);
  if (p_noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(std::max(p_active - p_noise, kSnrPowerFloor) / p_noise);
}

std::vector<std::string> normalize_text(std::string_view text) {
  const auto is_word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  std::vector<std::string> words;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (is_word(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
               is_word(static_cast<unsigned char>(text[i + 1]))) {
      current += '\'';
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

WerCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw Error("WER is undefined for an empty reference");
  const std::size_t n = reference.size();
  const std::size_t m = hypothesis.size();
  std::vector<int> cost((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> int& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  WerCounts counts;
  counts.reference_words = static_cast<int>(n);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = reference[i - 1] == hypothesis[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++counts.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

WerCounts wer_aggregate(std::span<const SentencePair> sentences) {
  WerCounts total;
  bool any_hypothesis = false;
  for (const auto& s : sentences) {
    if (s.hypothesis) {
      any_hypothesis = true;
      const WerCounts c = wer(s.reference, *s.hypothesis);
      total.substitutions += c.substitutions;
      total.deletions += c.deletions;
      total.insertions += c.insertions;
      total.reference_words += c.reference_words;
    } else {
      if (s.reference.empty()) throw Error("WER is undefined for an empty reference");
      total.deletions += static_cast<int>(s.reference.size());
      total.reference_words += static_cast<int>(s.reference.size());
    }
  }
  if (!any_hypothesis) throw Error("no transcripts for this condition");
  return total;
}

// ---- dataset.csv -------------------------------------------------------

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) throw Error("refusing to serialize NaN");
  return fmt::format("{}", v);
}

double parse_value(std::string_view text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty() || !std::isfinite(v)) {
    throw Error(fmt::format("'{}' is not a finite number", text));
  }
  return v;
}

namespace {

int parse_int(std::string_view text) {
  int v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(fmt::format("'{}' is not an integer", text));
  }
  return v;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& rows) {
  std::string text = std::string(kDatasetHeader) + "\n";
  for (const auto& r : rows) {
    const auto& c = r.condition;
    text += csv::format_row({c.condition_id, c.car, c.noise, format_value(c.hp_fc),
                             format_value(c.lp_fc), format_value(c.peak_fc),
                             format_value(c.peak_q), std::to_string(r.sentence_idx), r.metric,
                             format_value(r.value)});
    text += '\n';
  }
  csv::write_text(path, text);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || csv::format_row(rows[0]) != kDatasetHeader) {
    throw Error(fmt::format("{}: expected header '{}'", path.string(), kDatasetHeader));
  }
  Dataset out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 10) {
      throw Error(fmt::format("{}:{}: expected 10 fields, got {}", path.string(), i + 1, r.size()));
    }
    try {
      DatasetRow row;
      row.condition = {r[0], r[1], r[2], parse_value(r[3]), parse_value(r[4]),
                       parse_value(r[5]), parse_value(r[6])};
      row.sentence_idx = parse_int(r[7]);
      row.metric = r[8];
      row.value = parse_value(r[9]);
      out.push_back(std::move(row));
    } catch (const Error& e) {
      throw Error(fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
  }
  return out;
}

std::vector<ConditionKey> dataset_conditions(const Dataset& rows) {
  std::vector<ConditionKey> out;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.condition.condition_id).second) out.push_back(r.condition);
  }
  return out;
}

// ---- external metrics ----------------------------------------------------

std::vector<SentenceRecord> parse_external_metrics(
    std::string_view csv_text, const std::map<std::string, ConditionKey>& known,
    int sentence_count) {
  const auto rows = csv::parse(csv_text);
  if (rows.empty() || csv::format_row(rows[0]) != "condition_id,sentence_idx,metric,value") {
    throw Error("external metrics: expected header 'condition_id,sentence_idx,metric,value'");
  }
  std::vector<SentenceRecord> out;
  std::map<std::tuple<std::string, int, std::string>, std::size_t> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::size_t line = i + 1;
    if (r.size() != 4) {
      throw Error(fmt::format("external metrics line {}: expected 4 fields, got {}", line, r.size()));
    }
    SentenceRecord rec;
    try {
      rec = {r[0], parse_int(r[1]), r[2], parse_value(r[3])};
    } catch (const Error& e) {
      throw Error(fmt::format("external metrics line {}: {}", line, e.what()));
    }
    if (!known.contains(rec.condition_id)) {
      throw Error(fmt::format("external metrics line {}: unknown condition_id '{}'", line,
                              rec.condition_id));
    }
    if (rec.sentence_idx < 0 || rec.sentence_idx >= sentence_count) {
      throw Error(fmt::format("external metrics line {}: sentence_idx {} outside [0, {})", line,
                              rec.sentence_idx, sentence_count));
    }
    if (rec.metric.empty()) throw Error(fmt::format("external metrics line {}: empty metric", line));
    if (rec.metric.ends_with("_mos") && !(rec.value >= 1.0 && rec.value <= 5.0)) {
      throw Error(fmt::format("external metrics line {}: {} = {} outside the MOS scale [1, 5]", line,
                              rec.metric, r[3]));
    }
    const auto key = std::make_tuple(rec.condition_id, rec.sentence_idx, rec.metric);
    if (const auto it = seen.find(key); it != seen.end()) {
      throw Error(fmt::format("external metrics line {}: duplicate of line {} ({}, {}, {})", line,
                              it->second, rec.condition_id, rec.sentence_idx, rec.metric));
    }
    seen.emplace(key, line);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SentenceRecord> ingest_external_metrics(
    const std::filesystem::path& csv_path, const std::map<std::string, ConditionKey>& known,
    int sentence_count) {
  try {
    return parse_external_metrics(csv::read_text(csv_path), known, sentence_count);
  } catch (const Error& e) {
    throw Error(fmt::format("{}: {}", csv_path.string(), e.what()));
  }
}

Dataset merge_records(const Dataset& dataset, std::span<const SentenceRecord> records,
                      const std::map<std::string, ConditionKey>& known) {
  std::set<std::tuple<std::string, int, std::string>> present;
  for (const auto& r : dataset) present.emplace(r.condition.condition_id, r.sentence_idx, r.metric);

  std::map<std::string, std::vector<DatasetRow>> incoming;
  for (const auto& rec : records) {
    if (!present.emplace(rec.condition_id, rec.sentence_idx, rec.metric).second) {
      throw Error(fmt::format("record ({}, {}, {}) already exists in the dataset",
                              rec.condition_id, rec.sentence_idx, rec.metric));
    }
    const auto it = known.find(rec.condition_id);
    if (it == known.end()) throw Error(fmt::format("unknown condition_id '{}'", rec.condition_id));
    incoming[rec.condition_id].push_back({it->second, rec.sentence_idx, rec.metric, rec.value});
  }

  // Keep each condition's rows contiguous: existing rows first, then new ones
  // sorted by sentence.
  Dataset out;
  out.reserve(dataset.size() + records.size());
  std::set<std::string> done;
  for (std::size_t i = 0; i < dataset.size();) {
    const std::string& id = dataset[i].condition.condition_id;
    std::size_t j = i;
    while (j < dataset.size() && dataset[j].condition.condition_id == id) out.push_back(dataset[j++]);
    if (done.insert(id).second) {
      if (auto it = incoming.find(id); it != incoming.end()) {
        std::stable_sort(it->second.begin(), it->second.end(),
                         [](const auto& a, const auto& b) { return a.sentence_idx < b.sentence_idx; });
        out.insert(out.end(), it->second.begin(), it->second.end());
        incoming.erase(it);
      }
    }
    i = j;
  }
  for (auto& [id, rows] : incoming) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.sentence_idx < b.sentence_idx; });
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

// ---- ASR bridge ----------------------------------------------------------

const std::vector<std::string>& default_reference_sentences() {
  static const std::vector<std::string> sentences = {
      "The birch canoe slid on the smooth planks.",
      "Glue the sheet to the dark blue background.",
      "It's easy to tell the depth of a well.",
      "These days a chicken leg is a rare dish.",
      "Rice is often served in round bowls.",
      "The juice of lemons makes fine punch.",
      "The box was thrown beside the parked truck.",
      "The hogs were fed chopped corn and garbage.",
      "Four hours of steady work faced us.",
      "A large size in stockings is hard to sell.",
      "The boy was there when the sun rose.",
      "A rod is used to catch pink salmon.",
      "The source of the huge river is the clear spring.",
      "Kick the ball straight and follow through.",
      "Help the woman get back to her feet.",
      "A pot of tea helps to pass the evening.",
      "Smoky fires lack flame and heat.",
      "The soft cushion broke the man's fall.",
      "The salt breeze came across from the sea.",
      "The girl at the booth sold fifty bonds.",
  };
  return sentences;
}

std::vector<AsrJob> export_condition_sentences(const std::filesystem::path& asr_dir,
                                               const std::string& condition_id,
                                               const AudioBuffer& render,
                                               const fixtures::StimulusLayout& layout,
                                               std::span<const std::string> references) {
  if (references.size() < static_cast<std::size_t>(layout.sentence_count)) {
    throw Error(fmt::format("{} reference sentences for a {}-sentence stimulus", references.size(),
                            layout.sentence_count));
  }
  const auto slices = segment(render, layout);
  const auto dir = asr_dir / condition_id;
  std::filesystem::create_directories(dir);
  std::vector<AsrJob> jobs;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    const std::string rel = fmt::format("{}/{}.wav", condition_id, s);
    AudioBuffer piece{{slices[s].whole.begin(), slices[s].whole.end()}, render.sample_rate};
    write_wav(asr_dir / rel, piece, WavFormat::Float32, [](const std::string&) {});
    jobs.push_back({condition_id, static_cast<int>(s), rel, references[s]});
  }
  return jobs;
}

void write_jobs(const std::filesystem::path& path, std::span<const AsrJob> jobs) {
  std::vector<csv::Row> rows{{"condition_id", "sentence_idx", "wav_path", "reference"}};
  for (const auto& j : jobs) {
    rows.push_back({j.condition_id, std::to_string(j.sentence_idx), j.wav_path, j.reference});
  }
  csv::write_file(path, rows);
}

std::vector<AsrJob> read_jobs(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || csv::format_row(rows[0]) != kJobsHeader) {
    throw Error(fmt::format("{}: expected header '{}'", path.string(), kJobsHeader));
  }
  std::vector<AsrJob> jobs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) throw Error(fmt::format("{}:{}: expected 4 fields", path.string(), i + 1));
    jobs.push_back({r[0], parse_int(r[1]), r[2], r[3]});
  }
  return jobs;
}

Hypotheses read_hypotheses(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || csv::format_row(rows[0]) != kHypothesesHeader) {
    throw Error(fmt::format("{}: expected header '{}'", path.string(), kHypothesesHeader));
  }
  Hypotheses out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 3) throw Error(fmt::format("{}:{}: expected 3 fields", path.string(), i + 1));
    int idx = 0;
    try {
      idx = parse_int(r[1]);
    } catch (const Error& e) {
      throw Error(fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
    if (!out[r[0]].emplace(idx, r[2]).second) {
      throw Error(fmt::format("{}:{}: duplicate hypothesis for ({}, {})", path.string(), i + 1,
                              r[0], idx));
    }
  }
  return out;
}

std::vector<ConditionWer> wer_by_condition(std::span<const AsrJob> jobs, const Hypotheses& hyps) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SentencePair>> pairs;
  std::map<std::string, std::set<int>> job_index;
  for (const auto& j : jobs) {
    if (!pairs.contains(j.condition_id)) order.push_back(j.condition_id);
    job_index[j.condition_id].insert(j.sentence_idx);
    SentencePair p{normalize_text(j.reference), std::nullopt};
    if (auto c = hyps.find(j.condition_id); c != hyps.end()) {
      if (auto h = c->second.find(j.sentence_idx); h != c->second.end()) {
        p.hypothesis = normalize_text(h->second);
      }
    }
    pairs[j.condition_id].push_back(std::move(p));
  }
  for (const auto& [id, by_sentence] : hyps) {
    const auto it = job_index.find(id);
    if (it == job_index.end()) throw Error(fmt::format("hypothesis for unknown condition '{}'", id));
    for (const auto& [idx, text] : by_sentence) {
      if (!it->second.contains(idx)) {
        throw Error(fmt::format("hypothesis for unknown sentence ({}, {})", id, idx));
      }
    }
  }
  std::vector<ConditionWer> out;
  for (const auto& id : order) {
    if (!hyps.contains(id)) continue;
    out.push_back({id, wer_aggregate(pairs[id])});
  }
  return out;
}

}  // namespace carmic::metrics
