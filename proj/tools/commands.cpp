#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cpn/coco_json.hpp"
#include "cpn/pipeline.hpp"
#include "cpn/synth.hpp"

namespace cpn::cli {

namespace fs = std::filesystem;

namespace {

// Runs `body`, mapping library exceptions onto exit codes.
template <typename Fn>
int guarded(const char* cmd, std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const InconsistentIdsError& e) {
    err << cmd << ": " << e.what() << "\n  offending image ids:";
    for (int id : e.offenders()) err << ' ' << id;
    err << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << cmd << ": format error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << cmd << ": i/o error: " << e.what() << '\n';
    return kExitData;
  } catch (const SynthError& e) {
    err << cmd << ": " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << cmd << ": invalid input: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << cmd << ": i/o error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << cmd << ": internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

struct ImageRun {
  std::vector<ImageDetection> detections;
  DetectStats stats;
  double millis = 0;
  std::exception_ptr error;
};

std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

int cmd_detect(const DetectArgs& args, std::ostream& out, std::ostream& err) {
  return guarded("detect", err, [&] {
    PipelineConfig cfg;
    if (args.config) cfg = parse_pipeline_config(read_text_file(*args.config));

    std::vector<CorpusEntry> scenes;
    if (!fs::is_directory(args.corpus)) throw IoError("corpus is not a directory", args.corpus.string());
    if (fs::exists(args.corpus / kManifestFile))
      scenes = read_manifest(args.corpus).scenes;
    else if (!fs::is_empty(args.corpus))
      throw FormatError("corpus has no " + std::string(kManifestFile) + ": " + args.corpus.string());

    const DetectOptions opts{args.bypass_objectness};
    std::vector<ImageRun> runs(scenes.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < scenes.size(); i = next++) {
        auto& run = runs[i];
        try {
          const auto t0 = std::chrono::steady_clock::now();
          const SceneInputs in = load_scene(args.corpus / scenes[i].name);
          const DetectResult r = detect(in.heatmaps, in.features, in.weights, cfg, opts);
          run.detections = to_image_detections(scenes[i].image_id, r.detections);
          run.stats = r.stats;
          run.millis =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        } catch (...) {
          run.error = std::current_exception();
        }
      }
    };
    const std::size_t n_threads =
        std::clamp<std::size_t>(args.workers, 1, std::max<std::size_t>(scenes.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    std::vector<ImageDetection> dump;
    double total = 0, slowest = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (runs[i].error) {
        try {
          std::rethrow_exception(runs[i].error);
        } catch (...) {
          err << "detect: failed on " << scenes[i].name << '\n';
          throw;
        }
      }
      const auto& r = runs[i];
      out << scenes[i].name << "  image " << scenes[i].image_id << "  proposals " << r.stats.proposals
          << "  survivors " << r.stats.survivors << "  detections " << r.detections.size() << "  "
          << fixed(r.millis, 2) << " ms\n";
      total += r.millis;
      slowest = std::max(slowest, r.millis);
      dump.insert(dump.end(), r.detections.begin(), r.detections.end());
    }
    write_text_file(args.out, detections_to_json(dump));
    const double mean = runs.empty() ? 0.0 : total / double(runs.size());
    out << "images " << runs.size() << "  detections " << dump.size() << "  mean " << fixed(mean, 2)
        << " ms  max " << fixed(slowest, 2) << " ms  workers " << n_threads << '\n';
    return int(kExitOk);
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guarded("synth", err, [&] {
    SynthConfig cfg;
    if (args.config) cfg = parse_synth_config(read_text_file(*args.config));
    const auto m = write_corpus(args.out, cfg, args.count, args.seed, args.workers);
    std::size_t boxes_attempts = 0;
    for (const auto& e : m.scenes) boxes_attempts += e.attempts;
    out << "wrote " << m.scenes.size() << " scenes to " << args.out.string() << " (seed "
        << args.seed << ", " << boxes_attempts << " sampling attempts)\n";
    return int(kExitOk);
  });
}

fs::path text_report_path(const fs::path& report) {
  fs::path p = report;
  p.replace_extension(".txt");
  if (p == report) p += ".txt";
  return p;
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded("eval", err, [&] {
    const auto dets = parse_detections(read_text_file(args.dets));
    const auto gts = parse_ground_truth(read_text_file(args.gt));
    const auto proposals =
        args.proposals ? parse_detections(read_text_file(*args.proposals)) : dets;
    const EvalReport report = build_report(dets, proposals, gts);
    const std::string table = render_report_tables(report);
    write_text_file(args.report, report_to_json(report));
    write_text_file(text_report_path(args.report), table);
    out << table;
    return int(kExitOk);
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Corner proposal detection pipeline", "cpn"};
  app.require_subcommand(1);

  DetectArgs detect_args;
  std::string detect_config;
  auto* detect = app.add_subcommand("detect", "Run detection over a corpus and write a JSON dump");
  detect->add_option("--corpus", detect_args.corpus, "Corpus directory")->required();
  detect->add_option("--config", detect_config, "Pipeline config JSON");
  detect->add_option("--out", detect_args.out, "Detection dump to write")->required();
  detect->add_option("--workers", detect_args.workers, "Worker threads")
      ->check(CLI::PositiveNumber);
  detect->add_flag("--no-objectness", detect_args.bypass_objectness,
                   "Skip the binary objectness filter");

  SynthArgs synth_args;
  std::string synth_config;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic oracle corpus");
  synth->add_option("--config", synth_config, "Synth config JSON");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--count", synth_args.count, "Number of scenes")->required();
  synth->add_option("--seed", synth_args.seed, "Corpus seed")->required();
  synth->add_option("--workers", synth_args.workers, "Worker threads")->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  std::string eval_proposals;
  auto* eval = app.add_subcommand("eval", "Evaluate a detection dump against ground truth");
  eval->add_option("--dets", eval_args.dets, "Detection dump")->required();
  eval->add_option("--gt", eval_args.gt, "Ground-truth JSON")->required();
  eval->add_option("--report", eval_args.report, "Report JSON to write")->required();
  eval->add_option("--proposals", eval_proposals, "Class-agnostic proposals for AR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? int(kExitOk) : int(kExitUsage);
  }

  if (*detect) {
    if (!detect_config.empty()) detect_args.config = detect_config;
    return cmd_detect(detect_args, out, err);
  }
  if (*synth) {
    if (!synth_config.empty()) synth_args.config = synth_config;
    return cmd_synth(synth_args, out, err);
  }
  if (!eval_proposals.empty()) eval_args.proposals = eval_proposals;
  return cmd_eval(eval_args, out, err);
}

}  // namespace cpn::cli
