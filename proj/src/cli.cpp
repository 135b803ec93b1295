#include "carmic/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <thread>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "carmic/csv.hpp"
#include "carmic/pipeline.hpp"
#include "carmic/report.hpp"

namespace carmic {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 1;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string manifest = "manifest.json";
};

fs::path dataset_path(const pipeline::ManifestInfo& info) { return info.output_dir / "dataset.csv"; }
fs::path asr_dir(const pipeline::ManifestInfo& info) { return info.output_dir / "asr"; }

std::vector<stats::Filter> parse_filters(const std::vector<std::string>& raw) {
  std::vector<stats::Filter> out;
  for (const auto& f : raw) out.push_back(stats::parse_filter(f));
  return out;
}

/// WER rows when both jobs.csv and hypotheses.csv exist next to the dataset.
std::optional<std::vector<report::WerRow>> load_wer(const pipeline::ManifestInfo& info,
                                                    const metrics::Dataset& rows) {
  const auto jobs_path = asr_dir(info) / "jobs.csv";
  const auto hyp_path = asr_dir(info) / "hypotheses.csv";
  if (!fs::exists(jobs_path) || !fs::exists(hyp_path)) return std::nullopt;
  const auto jobs = metrics::read_jobs(jobs_path);
  const auto hyps = metrics::read_hypotheses(hyp_path);
  std::map<std::string, metrics::ConditionKey> conditions;
  for (const auto& c : metrics::dataset_conditions(rows)) conditions.emplace(c.condition_id, c);
  return report::join_wer(metrics::wer_by_condition(jobs, hyps), conditions);
}

struct Commands {
  explicit Commands(std::ostream& o) : out(o) {}

  GlobalOptions global;
  std::ostream& out;

  // synth
  std::string synth_out = ".";
  std::size_t synth_cars = 3;
  std::size_t synth_mics = pipeline::kDefaultSelectionSize;
  double synth_noise_seconds = 20.0;

  // grid
  bool grid_count = false;
  bool grid_no_peak = false;
  bool grid_selected = false;

  // render
  std::string render_condition;
  std::string render_out;

  // sweep
  bool sweep_renders = false;

  // ingest
  std::string ingest_metrics;
  std::string ingest_hypotheses;

  // anova / plot
  std::string metric;
  std::string group;
  std::string hue;
  std::vector<std::string> filters;
  std::string plot_out;

  // report
  std::string report_out;

  void synth() {
    pipeline::SynthSetOptions o;
    o.seed = global.seed;
    o.car_count = synth_cars;
    o.max_mics = synth_mics;
    o.noise_seconds = synth_noise_seconds;
    out << pipeline::write_synthetic_set(synth_out, o).string() << '\n';
  }

  void grid() {
    std::vector<pipeline::MicProfile> profiles;
    if (grid_selected) {
      profiles = pipeline::load_manifest(global.manifest).sources.mics;
    } else {
      profiles = pipeline::full_grid(grid_no_peak);
    }
    if (grid_count) {
      out << profiles.size() << '\n';
      return;
    }
    for (const auto& p : profiles) out << p.id() << '\n';
  }

  void render() {
    const auto manifest = pipeline::load_manifest(global.manifest);
    const auto conditions = pipeline::enumerate_conditions(manifest.sources);
    const auto& cond = pipeline::find_condition(conditions, render_condition);
    const fs::path target =
        render_out.empty() ? manifest.output_dir / "renders" / (cond.id() + ".wav") : fs::path(render_out);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    write_wav(target, pipeline::render_condition(cond, manifest.sources), WavFormat::Float32);
    out << target.string() << '\n';
  }

  void sweep() {
    const auto manifest = pipeline::load_manifest(global.manifest);
    pipeline::SweepOptions o;
    o.workers = global.workers;
    if (sweep_renders) o.render_dir = manifest.output_dir / "renders";
    const auto rows = pipeline::run_sweep(manifest.sources, o);
    fs::create_directories(manifest.output_dir);
    const auto path = manifest.output_dir / "dataset.csv";
    metrics::write_dataset(path, rows);
    out << fmt::format("{} conditions, {} rows -> {}\n", metrics::dataset_conditions(rows).size(), rows.size(),
                       path.string());
  }

  void asr_export() {
    const auto manifest = pipeline::load_manifest(global.manifest);
    const auto& src = manifest.sources;
    const auto conditions = pipeline::enumerate_conditions(src);
    const auto dir = manifest.output_dir / "asr";
    std::vector<metrics::AsrJob> jobs;
    for (const auto& c : conditions) {
      const auto render_path = manifest.output_dir / "renders" / (c.id() + ".wav");
      if (!fs::exists(render_path)) {
        throw Error(fmt::format("missing render {}; run `sweep --write-renders` first", render_path.string()));
      }
      auto part = metrics::export_condition_sentences(dir, c.id(), read_wav(render_path), src.layout,
                                                      src.references);
      jobs.insert(jobs.end(), part.begin(), part.end());
    }
    for (const auto& j : jobs) {
      if (!fs::exists(dir / j.wav_path)) throw Error(fmt::format("job file {} was not written", j.wav_path));
    }
    metrics::write_jobs(dir / "jobs.csv", jobs);
    out << fmt::format("{} sentence files listed in {}\n", jobs.size(), (dir / "jobs.csv").string());
  }

  void ingest() {
    if (ingest_metrics.empty() && ingest_hypotheses.empty()) {
      throw CLI::ValidationError("ingest needs --metrics and/or --hypotheses");
    }
    const auto info = pipeline::read_manifest_info(global.manifest);
    if (!ingest_metrics.empty()) {
      auto rows = metrics::read_dataset(dataset_path(info));
      std::map<std::string, metrics::ConditionKey> known;
      for (const auto& c : metrics::dataset_conditions(rows)) known.emplace(c.condition_id, c);
      const auto records = metrics::ingest_external_metrics(ingest_metrics, known, info.layout.sentence_count);
      rows = metrics::merge_records(rows, records, known);
      metrics::write_dataset(dataset_path(info), rows);
      out << fmt::format("merged {} external records\n", records.size());
    }
    if (!ingest_hypotheses.empty()) {
      const auto jobs = metrics::read_jobs(asr_dir(info) / "jobs.csv");
      const auto hyps = metrics::read_hypotheses(ingest_hypotheses);
      const auto wer = metrics::wer_by_condition(jobs, hyps);  // validates ids
      const auto target = asr_dir(info) / "hypotheses.csv";
      if (fs::absolute(target) != fs::absolute(fs::path(ingest_hypotheses))) {
        csv::write_text(target, csv::read_text(ingest_hypotheses));
      }
      out << fmt::format("hypotheses for {} conditions -> {}\n", wer.size(), target.string());
    }
  }

  void anova() {
    const auto info = pipeline::read_manifest_info(global.manifest);
    const auto rows = metrics::read_dataset(dataset_path(info));
    const auto key = stats::parse_group_key(group);
    const auto f = parse_filters(filters);
    stats::Grouped g;
    if (metric == "wer") {
      const auto wer = load_wer(info, rows);
      if (!wer) throw Error("no ASR hypotheses ingested; WER is unavailable");
      std::vector<std::pair<metrics::ConditionKey, double>> values;
      for (const auto& w : *wer) values.emplace_back(w.condition, w.counts.rate());
      g = stats::group_condition_values(values, key, f);
    } else {
      g = stats::group_values(rows, metric, key, f);
    }
    if (g.labels.empty()) throw Error(fmt::format("no finite '{}' values match", metric));
    const report::AnovaLine line{metric, key, f, stats::anova_oneway(g.values, g.labels)};
    out << report::anova_csv_header() << '\n' << report::anova_csv_line(line) << '\n';
    for (const auto& s : line.result.groups) {
      out << fmt::format("# {}={}: n={} mean={}\n", group, s.label, s.count, metrics::format_value(s.mean));
    }
  }

  void plot() {
    const auto info = pipeline::read_manifest_info(global.manifest);
    const auto rows = metrics::read_dataset(dataset_path(info));
    report::PlotSpec spec;
    spec.metric = metric;
    spec.x = stats::parse_group_key(group);
    if (!hue.empty()) spec.hue = stats::parse_group_key(hue);
    spec.filters = parse_filters(filters);
    spec.output = plot_out;
    report::emit_boxplot_svg(rows, spec);
    out << plot_out << '\n';
  }

  void make_report() {
    const auto info = pipeline::read_manifest_info(global.manifest);
    const auto rows = metrics::read_dataset(dataset_path(info));
    const fs::path dir = report_out.empty() ? info.output_dir / "report" : fs::path(report_out);
    const auto files = report::emit_report(rows, {info.hash, load_wer(info, rows)}, dir);
    out << fmt::format("{} files indexed in {}\n", files.size(), (dir / "index.txt").string());
  }
};

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Commands cmd(out);
  CLI::App app{"Automotive microphone frequency-response emulation and speech-metric harness", "carmic"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", cmd.global.seed, "Fixture seed");
  app.add_option("--workers", cmd.global.workers, "Parallel render workers")->check(CLI::PositiveNumber);
  app.add_option("--manifest", cmd.global.manifest, "Manifest file (JSON)");

  auto* synth = app.add_subcommand("synth", "Write synthetic stimulus, IRs, noises and a manifest");
  synth->add_option("--out", cmd.synth_out, "Output directory");
  synth->add_option("--cars", cmd.synth_cars, "Number of cars (1-3)")->check(CLI::Range(1, 3));
  synth->add_option("--mics", cmd.synth_mics, "Microphone profiles, evenly spaced over the default selection")
      ->check(CLI::Range(1, static_cast<int>(pipeline::kDefaultSelectionSize)));
  synth->add_option("--noise-seconds", cmd.synth_noise_seconds, "Noise recording length")
      ->check(CLI::Range(1.0, 3600.0));

  auto* grid = app.add_subcommand("grid", "List microphone profiles");
  grid->add_flag("--count", cmd.grid_count, "Print only the number of profiles");
  grid->add_flag("--include-no-peak", cmd.grid_no_peak, "Add the flat (no PK2) profiles");
  grid->add_flag("--selected", cmd.grid_selected, "Use the manifest's selection instead of the full grid");

  auto* render = app.add_subcommand("render", "Render one condition to a float32 WAV");
  render->add_option("--condition", cmd.render_condition, "Condition id, e.g. C0042")->required();
  render->add_option("--out", cmd.render_out, "Output WAV (default <output_dir>/renders/<id>.wav)");

  auto* sweep = app.add_subcommand("sweep", "Render every condition and write dataset.csv");
  sweep->add_flag("--write-renders", cmd.sweep_renders, "Also keep renders/<condition_id>.wav");

  app.add_subcommand("asr-export", "Write per-sentence WAVs and asr/jobs.csv for an external ASR engine");

  auto* ingest = app.add_subcommand("ingest", "Merge external metrics or ASR hypotheses");
  ingest->add_option("--metrics", cmd.ingest_metrics, "CSV: condition_id,sentence_idx,metric,value");
  ingest->add_option("--hypotheses", cmd.ingest_hypotheses, "CSV: condition_id,sentence_idx,hypothesis");

  auto* anova = app.add_subcommand("anova", "One-way ANOVA of a metric over a grouping");
  anova->add_option("--metric", cmd.metric, "Metric name (snr_a, s_mos, ..., wer)")->required();
  anova->add_option("--group", cmd.group, "Grouping column")->required();
  anova->add_option("--filter", cmd.filters, "key=value constraint (repeatable)");

  auto* plot = app.add_subcommand("plot", "Boxplot SVG of a metric");
  plot->add_option("--metric", cmd.metric, "Metric name")->required();
  plot->add_option("--x", cmd.group, "X grouping")->required();
  plot->add_option("--hue", cmd.hue, "Hue grouping");
  plot->add_option("--filter", cmd.filters, "key=value constraint (repeatable)");
  plot->add_option("--out", cmd.plot_out, "Output SVG")->required();

  auto* rep = app.add_subcommand("report", "Write ANOVA, box summaries, WER table, figures and an index");
  rep->add_option("--out", cmd.report_out, "Report directory (default <output_dir>/report)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") cmd.synth();
    else if (name == "grid") cmd.grid();
    else if (name == "render") cmd.render();
    else if (name == "sweep") cmd.sweep();
    else if (name == "asr-export") cmd.asr_export();
    else if (name == "ingest") cmd.ingest();
    else if (name == "anova") cmd.anova();
    else if (name == "plot") cmd.plot();
    else if (name == "report") cmd.make_report();
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace carmic
