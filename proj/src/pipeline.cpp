#include "carmic/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <json.hpp>

#include "carmic/csv.hpp"

namespace carmic::pipeline {

using fixtures::NoiseClass;
using json = nlohmann::json;

std::string MicProfile::id() const {
  std::string out = fmt::format("hp{}-lp{}", hp_fc, lp_fc);
  if (!peak) return out + "-flat";
  out += fmt::format("-pk{}q{}", peak->fc, peak->q);
  if (peak->gain_db != kDefaultPeakGainDb) out += fmt::format("g{}", peak->gain_db);
  return out;
}

void MicProfile::validate(double sample_rate) const {
  const double nyquist = sample_rate / 2.0;
  if (!(hp_fc > 0.0 && hp_fc < lp_fc && lp_fc < nyquist)) {
    throw Error(fmt::format("microphone {}: need 0 < hp_fc < lp_fc < {} Hz", id(), nyquist));
  }
  if (peak && !(peak->fc > hp_fc && peak->fc < nyquist && peak->q > 0.0)) {
    throw Error(fmt::format("microphone {}: peak must lie in ({}, {}) Hz with q > 0", id(), hp_fc,
                            nyquist));
  }
}

dsp::FilterCascade MicProfile::cascade(double sample_rate) const {
  validate(sample_rate);
  dsp::FilterCascade c{
      dsp::design_biquad(dsp::FilterKind::high_pass(hp_fc, kButterworthQ), sample_rate),
      dsp::design_biquad(dsp::FilterKind::low_pass(lp_fc, kButterworthQ), sample_rate),
  };
  if (peak) {
    c.push_back(dsp::design_biquad(dsp::FilterKind::peak(peak->fc, peak->q, peak->gain_db),
                                   sample_rate));
  }
  return c;
}

std::vector<MicProfile> full_grid(bool include_no_peak, double peak_gain_db) {
  std::vector<MicProfile> grid;
  for (double hp : kHighPassCorners) {
    for (double lp : kLowPassCorners) {
      for (double fc : kPeakCenters) {
        for (double q : kPeakQs) grid.push_back({hp, lp, PeakSpec{fc, q, peak_gain_db}});
      }
      if (include_no_peak) grid.push_back({hp, lp, std::nullopt});
    }
  }
  return grid;
}

std::vector<MicProfile> default_selection(double peak_gain_db) {
  const auto grid = full_grid(true, peak_gain_db);
  std::vector<const MicProfile*> flat;
  std::vector<const MicProfile*> candidates;
  for (const auto& m : grid) {
    if (!m.peak) {
      flat.push_back(&m);
    } else if (m.peak->fc > m.hp_fc && m.peak->fc < 1.25 * m.lp_fc) {
      candidates.push_back(&m);
    }
  }
  const std::size_t wanted = kDefaultSelectionSize - flat.size();
  std::set<const MicProfile*> chosen(flat.begin(), flat.end());
  if (candidates.size() <= wanted) {
    chosen.insert(candidates.begin(), candidates.end());
    // Pad from the remaining peak profiles in grid order.
    for (const auto& m : grid) {
      if (chosen.size() >= kDefaultSelectionSize) break;
      chosen.insert(&m);
    }
  } else {
    for (std::size_t i = 0; i < wanted; ++i) chosen.insert(candidates[i * candidates.size() / wanted]);
  }
  std::vector<MicProfile> out;
  for (const auto& m : grid) {
    if (chosen.contains(&m)) out.push_back(m);
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<MicProfile> parse_selection(std::string_view text, const std::vector<MicProfile>& grid) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < grid.size(); ++i) by_id.emplace(grid[i].id(), i);

  std::set<std::size_t> picked;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string entry = trim(line);
    if (entry.empty()) continue;

    std::string id = entry;
    if (entry.find(',') != std::string::npos) {
      const auto fields = csv::parse(entry);
      if (fields.size() != 1 || fields[0].size() != 4) {
        throw Error(fmt::format("selection line {}: expected hp,lp,peak_fc,peak_q", line_no));
      }
      double v[4];
      for (int k = 0; k < 4; ++k) v[k] = metrics::parse_value(trim(fields[0][static_cast<std::size_t>(k)]));
      MicProfile m{v[0], v[1], std::nullopt};
      if (v[2] >= 0.0) {
        const double gain = grid.empty() || !grid.front().peak ? kDefaultPeakGainDb
                                                               : grid.front().peak->gain_db;
        m.peak = PeakSpec{v[2], v[3], gain};
      }
      id = m.id();
    }
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(fmt::format("selection line {}: unknown profile '{}'", line_no, entry));
    if (!picked.insert(it->second).second) {
      throw Error(fmt::format("selection line {}: duplicate profile '{}'", line_no, id));
    }
  }
  if (picked.empty()) throw Error("selection is empty");
  std::vector<MicProfile> out;
  for (std::size_t i : picked) out.push_back(grid[i]);
  return out;
}

std::vector<MicProfile> select_profiles(const std::vector<MicProfile>& grid,
                                        const std::filesystem::path& selection_file) {
  try {
    return parse_selection(csv::read_text(selection_file), grid);
  } catch (const Error& e) {
    throw Error(fmt::format("{}: {}", selection_file.string(), e.what()));
  }
}

std::string format_selection(const std::vector<MicProfile>& profiles) {
  std::string out;
  for (const auto& m : profiles) out += m.id() + "\n";
  return out;
}

void Sources::validate() const {
  layout.validate();
  if (sample_rate != stimulus.sample_rate) {
    throw Error(fmt::format("stimulus is {} Hz, expected {}", stimulus.sample_rate, sample_rate));
  }
  if (stimulus.size() != layout.total_samples(sample_rate)) {
    throw Error(fmt::format("stimulus has {} samples; the layout needs {}", stimulus.size(),
                            layout.total_samples(sample_rate)));
  }
  if (cars.empty()) throw Error("no cars configured");
  if (noise_classes.empty()) throw Error("no noise classes configured");
  if (mics.empty()) throw Error("no microphone profiles selected");
  for (const auto& car : cars) {
    car.ir.validate();
    if (car.ir.audio.sample_rate != sample_rate) {
      throw Error(fmt::format("car {}: impulse response is {} Hz, expected {}", car.id,
                              car.ir.audio.sample_rate, sample_rate));
    }
    for (NoiseClass nc : noise_classes) {
      const auto it = car.noises.find(nc);
      if (it == car.noises.end()) {
        throw Error(fmt::format("car {}: no {} noise", car.id, fixtures::to_string(nc)));
      }
      if (it->second.sample_rate != sample_rate) {
        throw Error(fmt::format("car {}: {} noise is {} Hz, expected {}", car.id,
                                fixtures::to_string(nc), it->second.sample_rate, sample_rate));
      }
    }
  }
  for (const auto& m : mics) m.validate(sample_rate);
}

std::string Condition::id() const { return fmt::format("C{:04d}", index); }

metrics::ConditionKey Condition::key() const {
  metrics::ConditionKey k;
  k.condition_id = id();
  k.car = car;
  k.noise = std::string(fixtures::to_string(noise));
  k.hp_fc = mic.hp_fc;
  k.lp_fc = mic.lp_fc;
  k.peak_fc = mic.peak ? mic.peak->fc : -1.0;
  k.peak_q = mic.peak ? mic.peak->q : -1.0;
  return k;
}

std::vector<Condition> enumerate_conditions(const Sources& sources) {
  std::vector<Condition> out;
  out.reserve(sources.cars.size() * sources.noise_classes.size() * sources.mics.size());
  for (std::size_t c = 0; c < sources.cars.size(); ++c) {
    for (NoiseClass nc : sources.noise_classes) {
      for (const auto& mic : sources.mics) {
        out.push_back({out.size(), mic, c, sources.cars[c].id, nc});
      }
    }
  }
  return out;
}

const Condition& find_condition(const std::vector<Condition>& conditions, const std::string& id) {
  for (const auto& c : conditions) {
    if (c.id() == id) return c;
  }
  throw Error(fmt::format("unknown condition '{}'", id));
}

std::map<std::string, metrics::ConditionKey> condition_index(const std::vector<Condition>& conditions) {
  std::map<std::string, metrics::ConditionKey> out;
  for (const auto& c : conditions) out.emplace(c.id(), c.key());
  return out;
}

std::vector<double> reverberant_speech(const AudioBuffer& stimulus, const ImpulseResponse& ir) {
  AudioBuffer y = dsp::convolve(stimulus, ir);
  y.samples.resize(stimulus.size());
  return std::move(y.samples);
}

std::vector<double> tile_noise(const AudioBuffer& noise, std::size_t length) {
  if (noise.size() < static_cast<std::size_t>(noise.sample_rate)) {
    throw Error(fmt::format("noise of {} samples is shorter than one second", noise.size()));
  }
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise.samples[i % noise.size()];
  return out;
}

namespace {

std::vector<double> mixture(std::vector<double> speech, const AudioBuffer& noise) {
  const auto v = tile_noise(noise, speech.size());
  for (std::size_t i = 0; i < speech.size(); ++i) speech[i] += v[i];
  return speech;
}

}  // namespace

AudioBuffer render_condition(const Condition& condition, const Sources& sources) {
  if (condition.car_index >= sources.cars.size()) {
    throw Error(fmt::format("condition {} references a missing car", condition.id()));
  }
  const CarSource& car = sources.cars[condition.car_index];
  if (car.ir.audio.sample_rate != sources.stimulus.sample_rate) {
    throw Error(fmt::format("condition {}: sample-rate mismatch", condition.id()));
  }
  const auto it = car.noises.find(condition.noise);
  if (it == car.noises.end()) {
    throw Error(fmt::format("condition {}: car {} has no {} noise", condition.id(), car.id,
                            fixtures::to_string(condition.noise)));
  }
  if (it->second.sample_rate != sources.stimulus.sample_rate) {
    throw Error(fmt::format("condition {}: sample-rate mismatch", condition.id()));
  }
  const auto x = mixture(reverberant_speech(sources.stimulus, car.ir), it->second);
  return {dsp::apply_cascade(condition.mic.cascade(sources.sample_rate), std::span<const double>(x)),
          sources.sample_rate};
}

namespace {

std::vector<metrics::DatasetRow> condition_rows(const Condition& cond, const AudioBuffer& render,
                                                const fixtures::StimulusLayout& layout) {
  const auto key = cond.key();
  const auto slices = metrics::segment(render, layout);
  std::vector<metrics::DatasetRow> rows;
  rows.reserve(slices.size());
  for (std::size_t s = 0; s < slices.size(); ++s) {
    rows.push_back({key, static_cast<int>(s), std::string(metrics::kSnrMetric),
                    metrics::snr_a_weighted(slices[s])});
  }
  return rows;
}

}  // namespace

metrics::Dataset run_sweep(const Sources& sources, const SweepOptions& options) {
  sources.validate();
  const auto conditions = enumerate_conditions(sources);
  if (options.render_dir) std::filesystem::create_directories(*options.render_dir);

  std::vector<std::vector<metrics::DatasetRow>> results(conditions.size());
  const std::size_t mic_count = sources.mics.size();
  const unsigned workers = std::max(1u, options.workers);
  std::size_t done = 0;

  // Conditions sharing (car, noise) share the unfiltered mixture; the mic
  // block for each pair is rendered in parallel.
  for (std::size_t block = 0; block < conditions.size(); block += mic_count) {
    const Condition& first = conditions[block];
    const CarSource& car = sources.cars[first.car_index];
    std::vector<double> mixed;
    try {
      mixed = mixture(reverberant_speech(sources.stimulus, car.ir), car.noises.at(first.noise));
    } catch (const std::exception& e) {
      throw Error(fmt::format("condition {} failed: {}", first.id(), e.what()));
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::optional<std::pair<std::size_t, std::string>> failure;

    const auto work = [&] {
      for (;;) {
        const std::size_t m = next.fetch_add(1);
        if (m >= mic_count) return;
        const Condition& cond = conditions[block + m];
        try {
          AudioBuffer render{dsp::apply_cascade(cond.mic.cascade(sources.sample_rate),
                                                std::span<const double>(mixed)),
                             sources.sample_rate};
          if (options.render_dir) {
            write_wav(*options.render_dir / (cond.id() + ".wav"), render, WavFormat::Float32,
                      [](const std::string&) {});
          }
          results[cond.index] = condition_rows(cond, render, sources.layout);
        } catch (const std::exception& e) {
          std::lock_guard lock(error_mutex);
          if (!failure || cond.index < failure->first) failure.emplace(cond.index, e.what());
          next.store(mic_count);
        }
      }
    };

    if (workers == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < std::min<std::size_t>(workers, mic_count); ++w) pool.emplace_back(work);
    }
    if (failure) {
      throw Error(fmt::format("condition {} failed: {}", conditions[failure->first].id(),
                              failure->second));
    }
    done += mic_count;
    if (options.progress) options.progress(done, conditions.size());
  }

  metrics::Dataset out;
  out.reserve(conditions.size() * static_cast<std::size_t>(sources.layout.sentence_count));
  for (auto& rows : results) {
    for (auto& r : rows) out.push_back(std::move(r));
  }
  return out;
}

// ---- manifest --------------------------------------------------------------

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

AudioBuffer load_stimulus(const json& spec, const std::filesystem::path& base,
                          const fixtures::StimulusLayout& layout, int fs, const WarningSink& warn) {
  if (spec.is_string()) return read_wav(resolve(base, spec.get<std::string>()), warn);
  const json& s = spec.at("synth");
  fixtures::StimulusOptions opt;
  opt.sample_rate = fs;
  opt.peak_dbfs = get_or(s, "peak_dbfs", opt.peak_dbfs);
  opt.max_harmonic_hz = get_or(s, "max_harmonic_hz", opt.max_harmonic_hz);
  return fixtures::synth_stimulus(layout, s.at("seed").get<std::uint64_t>(), opt);
}

ImpulseResponse load_ir(const json& spec, const std::string& car_id,
                        const std::filesystem::path& base, int fs, const WarningSink& warn) {
  if (spec.is_string()) {
    return {read_wav(resolve(base, spec.get<std::string>()), warn), car_id};
  }
  const json& s = spec.at("synth");
  fixtures::CarModel model{car_id, s.at("rt60").get<double>(),
                           get_or(s, "direct_to_reverb_db", 6.0)};
  return fixtures::synth_impulse_response(model, get_or(s, "length_s", 0.3),
                                          s.at("seed").get<std::uint64_t>(), fs);
}

AudioBuffer load_noise(const json& spec, NoiseClass nc, const std::filesystem::path& base, int fs,
                       const WarningSink& warn) {
  if (spec.is_string()) return read_wav(resolve(base, spec.get<std::string>()), warn);
  const json& s = spec.at("synth");
  return fixtures::synth_noise_at_level(get_or(s, "level_dbfs", fixtures::default_level_dbfs(nc)),
                                        get_or(s, "duration_s", 20.0),
                                        s.at("seed").get<std::uint64_t>(), fs);
}

fixtures::StimulusLayout parse_layout(const json& j) {
  fixtures::StimulusLayout layout;
  if (j.contains("layout")) {
    const json& l = j.at("layout");
    layout.sentence_count = get_or(l, "sentence_count", layout.sentence_count);
    layout.sentence_seconds = get_or(l, "sentence_seconds", layout.sentence_seconds);
    layout.lead_silence_s = get_or(l, "lead_silence_s", layout.lead_silence_s);
    layout.trail_silence_s = get_or(l, "trail_silence_s", layout.trail_silence_s);
  }
  layout.validate();
  return layout;
}

std::filesystem::path base_dir(const std::filesystem::path& path) {
  return path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
}

}  // namespace

ManifestInfo read_manifest_info(const std::filesystem::path& path) {
  const std::string text = csv::read_text(path);
  ManifestInfo info;
  info.path = path;
  info.hash = content_hash(text);
  try {
    const json j = json::parse(text);
    info.layout = parse_layout(j);
    info.output_dir = resolve(base_dir(path), get_or<std::string>(j, "output_dir", "out"));
  } catch (const json::exception& e) {
    throw Error(fmt::format("{}: invalid manifest: {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw Error(fmt::format("{}: {}", path.string(), e.what()));
  }
  return info;
}

Manifest load_manifest(const std::filesystem::path& path, const WarningSink& warn) {
  const std::string text = csv::read_text(path);
  Manifest m;
  m.path = path;
  m.hash = content_hash(text);
  const auto base = base_dir(path);
  try {
    const json j = json::parse(text);
    const int fs = get_or(j, "sample_rate", kCanonicalSampleRate);
    if (fs != kCanonicalSampleRate) {
      throw Error(fmt::format("sample_rate {} is not supported; resample inputs to {} Hz", fs,
                              kCanonicalSampleRate));
    }
    Sources& src = m.sources;
    src.sample_rate = fs;
    src.layout = parse_layout(j);
    m.output_dir = resolve(base, get_or<std::string>(j, "output_dir", "out"));

    src.stimulus = load_stimulus(j.at("stimulus"), base, src.layout, fs, warn);

    if (j.contains("noise_classes")) {
      for (const auto& n : j.at("noise_classes")) {
        src.noise_classes.push_back(fixtures::parse_noise_class(n.get<std::string>()));
      }
    } else {
      src.noise_classes.assign(std::begin(fixtures::kAllNoiseClasses),
                               std::end(fixtures::kAllNoiseClasses));
    }

    for (const auto& c : j.at("cars")) {
      CarSource car;
      car.id = c.at("id").get<std::string>();
      car.ir = load_ir(c.at("ir"), car.id, base, fs, warn);
      for (const auto& [name, spec] : c.at("noises").items()) {
        const NoiseClass nc = fixtures::parse_noise_class(name);
        car.noises.emplace(nc, load_noise(spec, nc, base, fs, warn));
      }
      src.cars.push_back(std::move(car));
    }

    const double gain = get_or(j, "peak_gain_db", kDefaultPeakGainDb);
    const std::string selection = get_or<std::string>(j, "selection", "default");
    if (selection == "default") {
      src.mics = default_selection(gain);
    } else if (selection == "full") {
      src.mics = full_grid(true, gain);
    } else {
      src.mics = select_profiles(full_grid(true, gain), resolve(base, selection));
    }

    if (j.contains("references")) {
      std::istringstream in(csv::read_text(resolve(base, j.at("references").get<std::string>())));
      for (std::string line; std::getline(in, line);) {
        if (!trim(line).empty()) src.references.push_back(trim(line));
      }
    } else {
      src.references = metrics::default_reference_sentences();
    }
    src.validate();
  } catch (const json::exception& e) {
    throw Error(fmt::format("{}: invalid manifest: {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw Error(fmt::format("{}: {}", path.string(), e.what()));
  }
  return m;
}

std::filesystem::path write_synthetic_set(const std::filesystem::path& dir,
                                          const SynthSetOptions& options) {
  namespace fx = fixtures;
  std::filesystem::create_directories(dir);
  const int fs = kCanonicalSampleRate;
  const fx::StimulusLayout layout;
  const auto quiet = [](const std::string&) {};

  write_wav(dir / "stimulus.wav", fx::synth_stimulus(layout, fx::derive_seed(options.seed, 1)),
            WavFormat::Float32, quiet);

  const auto all_cars = fx::default_cars();
  const std::size_t car_count = std::min(options.car_count, all_cars.size());
  if (car_count == 0) throw Error("at least one car is required");
  json cars = json::array();
  for (std::size_t c = 0; c < car_count; ++c) {
    const auto& model = all_cars[c];
    const std::string ir_name = fmt::format("ir_{}.wav", model.id);
    write_wav(dir / ir_name,
              fx::synth_impulse_response(model, options.ir_seconds,
                                         fx::derive_seed(options.seed, 2, c), fs)
                  .audio,
              WavFormat::Float32, quiet);
    json noises = json::object();
    for (NoiseClass nc : fx::kAllNoiseClasses) {
      const std::string name = fmt::format("noise_{}_{}.wav", model.id, fx::to_string(nc));
      write_wav(dir / name,
                fx::synth_noise(nc, options.noise_seconds,
                                fx::derive_seed(options.seed, 3, c * 16 + static_cast<unsigned>(nc)),
                                fs),
                WavFormat::Float32, quiet);
      noises[std::string(fx::to_string(nc))] = name;
    }
    cars.push_back({{"id", model.id}, {"ir", ir_name}, {"noises", noises}});
  }

  const auto selection = default_selection();
  std::vector<MicProfile> mics;
  const std::size_t wanted = std::clamp<std::size_t>(options.max_mics, 1, selection.size());
  for (std::size_t i = 0; i < wanted; ++i) mics.push_back(selection[i * selection.size() / wanted]);
  csv::write_text(dir / "selection.txt", format_selection(mics));

  json manifest = {
      {"sample_rate", fs},
      {"output_dir", "out"},
      {"layout",
       {{"sentence_count", layout.sentence_count},
        {"sentence_seconds", layout.sentence_seconds},
        {"lead_silence_s", layout.lead_silence_s},
        {"trail_silence_s", layout.trail_silence_s}}},
      {"stimulus", "stimulus.wav"},
      {"selection", "selection.txt"},
      {"noise_classes", {"idle", "city", "highway"}},
      {"cars", cars},
  };
  const auto path = dir / "manifest.json";
  csv::write_text(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace carmic::pipeline
