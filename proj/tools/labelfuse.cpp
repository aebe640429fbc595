#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "labelfuse/dataset_ops.hpp"
#include "labelfuse/error.hpp"
#include "labelfuse/evaluation.hpp"
#include "labelfuse/formats.hpp"
#include "labelfuse/manifest_io.hpp"
#include "labelfuse/pipeline.hpp"
#include "labelfuse/random.hpp"
#include "labelfuse/review_server.hpp"
#include "labelfuse/synth.hpp"

namespace fs = std::filesystem;
using namespace labelfuse;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3, kReviewRequired = 4 };

constexpr const char* kOutputs = "Outputs";

struct Globals {
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
  return out;
}

// Records every option of the subcommand that shaped the result. Output
// destinations are left out so that moving an output does not change it.
void echo_config(const CLI::App& sub, DatasetManifest& m, const Globals* g = nullptr) {
  const std::string prefix = "cli." + sub.get_name() + ".";
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_group() == kOutputs || opt->get_name() == "--help") continue;
    std::string value = opt->count() ? join(opt->results()) : opt->get_default_str();
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    if (value.empty()) continue;
    m.metadata[prefix + opt->get_single_name()] = value;
  }
  if (g) m.metadata["cli.seed"] = std::to_string(g->seed);
}

void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + '\n';
  write_text_file(path, text);
}

struct ConvertArgs {
  std::string from, to;
  fs::path input, output;
  std::string annotator;
  int width = 1000, height = 1000;
  std::vector<std::string> classes;
};

DatasetManifest load_any(const ConvertArgs& a) {
  if (a.from == "manifest") return load_manifest(a.input);
  if (a.from == "coco") {
    auto m = parse_coco(read_text_file(a.input), a.annotator, warn);
    if (!a.annotator.empty()) m.provenance = {a.annotator};
    return m;
  }
  if (a.from == "voc") return load_voc_dir(a.input, a.annotator, a.classes, warn);
  return load_yolo_dir(a.input, a.width, a.height, a.classes, a.annotator, warn);
}

int run_convert(const ConvertArgs& a, const CLI::App& sub) {
  DatasetManifest m = load_any(a);
  if (a.to == "manifest") {
    echo_config(sub, m);
    save_manifest(m, a.output);
  } else if (a.to == "coco") {
    write_text_file(a.output, emit_coco(m));
  } else if (a.to == "voc") {
    save_voc_dir(m, a.output);
  } else {
    save_yolo_dir(m, a.output);
  }
  std::cout << "converted " << m.images.size() << " images, " << m.annotation_count() << " labels\n";
  return kOk;
}

struct CombineArgs {
  std::vector<fs::path> inputs;
  fs::path output, tie_queue = "ties.jsonl", decisions, diagnostics;
  double iou = kClusterIoU;
  std::string policy = "interactive";
  std::vector<std::string> priority = default_tie_priority();
};

int run_combine(const CombineArgs& a, const Globals& g, const CLI::App& sub) {
  std::vector<DatasetManifest> inputs;
  for (const auto& p : a.inputs) inputs.push_back(load_manifest(p));
  CombineOptions opts;
  opts.iou_threshold = a.iou;
  opts.tie_policy = tie_policy_from_string(a.policy);
  opts.priority = a.priority;
  opts.workers = g.workers;
  if (!a.decisions.empty() && fs::exists(a.decisions)) opts.decisions = read_decisions(a.decisions, warn);

  auto result = combine_datasets(inputs, opts);
  for (const auto& w : result.warnings) warn(w);
  const auto added = append_tie_queue(a.tie_queue, result.ties);
  if (result.review_required()) {
    std::cerr << "review required: " << result.pending.size() << " ties pending in " << a.tie_queue.string()
              << " (" << added << " newly queued)\n";
    return kReviewRequired;
  }
  echo_config(sub, result.combined);
  save_manifest(result.combined, a.output);
  if (!a.diagnostics.empty()) write_jsonl(a.diagnostics, result.fusion_diagnostics);
  std::cout << "combined " << result.combined.images.size() << " images into "
            << result.combined.annotation_count() << " labels; " << result.ties.size() << " ties resolved\n";
  return kOk;
}

struct ServeArgs {
  fs::path ties = "ties.jsonl", decisions = "decisions.jsonl", images, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> classes{"CP", "MH", "PCH", "MD"};
};

int run_serve(const ServeArgs& a) {
  TieQueue queue(read_tie_queue(a.ties, warn), a.classes, a.decisions, warn);
  ServerOptions opts{a.host, a.port, a.images, a.static_dir};

  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  ReviewServer server(queue, opts);
  const int port = server.start();
  const auto p = queue.progress();
  std::cout << "reviewing " << p.total << " ties (" << p.resolved << " resolved) at http://" << a.host << ':'
            << port << "/\n"
            << std::flush;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server.stop();
  const auto done = queue.progress();
  std::cout << done.resolved << " of " << done.total << " ties resolved\n";
  return kOk;
}

struct FinalizeArgs {
  fs::path input, output, reference, audit;
  double containment = RuleConfig{}.containment_threshold;
  double cp_merge_iou = RuleConfig{}.cp_merge_iou;
  std::optional<double> md_threshold;
  std::vector<std::string> rules;
};

int run_finalize(const FinalizeArgs& a, const Globals& g, const CLI::App& sub) {
  const auto combined = load_manifest(a.input);
  RuleConfig cfg;
  cfg.containment_threshold = a.containment;
  cfg.cp_merge_iou = a.cp_merge_iou;
  cfg.residual_md_area_threshold = a.md_threshold;
  if (!a.rules.empty()) {
    cfg.order.clear();
    for (const auto& r : a.rules) cfg.order.push_back(rule_from_string(r));
  }
  std::optional<DatasetManifest> reference;
  if (!a.reference.empty()) reference = load_manifest(a.reference);

  auto r = finalize_dataset(combined, cfg, reference ? &*reference : nullptr, g.workers);
  echo_config(sub, r.final_manifest);
  save_manifest(r.final_manifest, a.output);
  if (!a.audit.empty()) {
    std::vector<nlohmann::json> rows;
    for (const auto& rec : r.audit) rows.push_back(audit_to_json(rec));
    write_jsonl(a.audit, rows);
  }
  std::cout << "final dataset: " << r.final_manifest.annotation_count() << " labels after " << r.audit.size()
            << " rule actions\n";
  return kOk;
}

struct SplitArgs {
  fs::path input, output;
  std::vector<double> ratios{0.70, 0.15, 0.15};
};

int run_split(const SplitArgs& a, const Globals& g, const CLI::App& sub) {
  auto m = split_dataset(load_manifest(a.input), {a.ratios[0], a.ratios[1], a.ratios[2]}, g.seed);
  echo_config(sub, m, &g);
  save_manifest(m, a.output);
  std::cout << partition_table_tsv(image_partition_table(m));
  return kOk;
}

struct StatsArgs {
  fs::path input, counts, sizes, partitions;
  std::optional<std::string> exclude_partition;
};

int run_stats(const StatsArgs& a) {
  const auto m = load_manifest(a.input);
  const std::pair<const fs::path*, std::string> outputs[]{
      {&a.counts, class_counts_tsv(class_counts(m, a.exclude_partition), m.vocabulary)},
      {&a.sizes, size_distribution_tsv(size_distribution(m))},
      {&a.partitions, partition_table_tsv(image_partition_table(m))}};
  bool any_file = false;
  for (const auto& [path, text] : outputs) {
    if (path->empty()) continue;
    write_text_file(*path, text);
    any_file = true;
  }
  if (!any_file) {
    std::cout << std::get<1>(outputs[0]) << '\n' << std::get<1>(outputs[2]);
  }
  return kOk;
}

struct EvalArgs {
  fs::path predictions, labels, json_out;
  std::optional<std::string> exclude_partition;
  bool post_process = false;
  std::optional<double> md_threshold;
};

int run_eval(const EvalArgs& a) {
  EvalOptions opts;
  opts.exclude_partition = a.exclude_partition;
  if (a.post_process) {
    RuleConfig cfg;
    cfg.residual_md_area_threshold = a.md_threshold;
    opts.post_process_preds = cfg;
  }
  const auto report = eval_report(load_manifest(a.predictions), load_manifest(a.labels), opts);
  std::cout << report_table(report);
  if (!a.json_out.empty()) write_text_file(a.json_out, report_to_json(report).dump(2) + '\n');
  return kOk;
}

struct SynthArgs {
  fs::path out_dir;
  std::size_t images = 50;
  std::vector<std::string> profiles{"over-labeler", "baseline", "md-collapser"};
  bool no_render = false;
  SceneParams scene;
};

AnnotatorProfile profile_by_key(const std::string& key) {
  if (key == "over-labeler") return AnnotatorProfile::over_labeler();
  if (key == "baseline") return AnnotatorProfile::baseline();
  if (key == "md-collapser") return AnnotatorProfile::md_collapser();
  if (key == "identity") return AnnotatorProfile::identity("identity");
  throw ValidationError("unknown annotator profile '" + key + "'");
}

int run_synth(SynthArgs a, const Globals& g, const CLI::App& sub) {
  a.scene.render = !a.no_render;
  std::vector<AnnotatorProfile> profiles;
  for (const auto& key : a.profiles) profiles.push_back(profile_by_key(key));
  auto bench = make_benchmark(a.scene, a.images, g.seed, profiles);
  fs::create_directories(a.out_dir);
  echo_config(sub, bench.ground_truth, &g);
  save_manifest(bench.ground_truth, a.out_dir / "ground_truth.json");
  for (std::size_t j = 0; j < profiles.size(); ++j) {
    echo_config(sub, bench.annotators[j], &g);
    save_manifest(bench.annotators[j], a.out_dir / ("labeler_" + profiles[j].name + ".json"));
  }
  if (a.scene.render) {
    fs::create_directories(a.out_dir / "images");
    for (const auto& s : bench.scenes) write_pgm(s.raster, a.out_dir / "images" / (s.image_id + ".pgm"));
  }
  std::cout << "wrote " << bench.scenes.size() << " scenes with " << bench.ground_truth.annotation_count()
            << " ground-truth labels to " << a.out_dir.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelfuse: multi-labeler consensus for defect bounding-box datasets"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags win");
  Globals g;
  app.add_option("--seed", g.seed, "Seed for split and synth")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for per-image stages")
      ->capture_default_str()
      ->check(CLI::Range(1u, 1024u));

  const std::vector<std::string> formats{"manifest", "yolo", "voc", "coco"};

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "Convert between YOLO, VOC, COCO and canonical manifests");
  convert->add_option("--from", conv.from, "Input format")->required()->check(CLI::IsMember(formats));
  convert->add_option("--to", conv.to, "Output format")->required()->check(CLI::IsMember(formats));
  convert->add_option("-i,--input", conv.input, "Input file (manifest, coco) or directory (yolo, voc)")->required();
  convert->add_option("-o,--output", conv.output, "Output file or directory")->required()->group(kOutputs);
  convert->add_option("--annotator", conv.annotator, "Labeler name recorded on every label");
  convert->add_option("--width", conv.width, "YOLO image width")->capture_default_str();
  convert->add_option("--height", conv.height, "YOLO image height")->capture_default_str();
  convert->add_option("--classes", conv.classes, "Class vocabulary (YOLO index order)")->delimiter(',');

  CombineArgs comb;
  auto* combine = app.add_subcommand("combine", "Cluster, vote and fuse several labelers' manifests");
  combine->add_option("inputs", comb.inputs, "Labeler manifests")->required()->expected(2, -1);
  combine->add_option("-o,--output", comb.output, "Combined manifest")->required()->group(kOutputs);
  combine->add_option("--tie-queue", comb.tie_queue, "Tie queue (JSONL, appended)")->capture_default_str()->group(kOutputs);
  combine->add_option("--decisions", comb.decisions, "Expert decisions log to replay");
  combine->add_option("--diagnostics", comb.diagnostics, "Per-cluster fusion diagnostics (JSONL)")->group(kOutputs);
  combine->add_option("--iou", comb.iou, "Clustering IoU threshold")->capture_default_str();
  combine->add_option("--policy", comb.policy, "Tie policy")
      ->capture_default_str()
      ->check(CLI::IsMember({"interactive", "priority"}));
  combine->add_option("--priority", comb.priority, "Class priority for the headless policy")
      ->delimiter(',')
      ->capture_default_str();

  ServeArgs serve;
  auto* review = app.add_subcommand("review-serve", "Serve the tie queue to the review UI");
  review->add_option("--ties", serve.ties, "Tie queue written by combine")->capture_default_str();
  review->add_option("--decisions", serve.decisions, "Decisions log (appended)")->capture_default_str();
  review->add_option("--images", serve.images, "Directory of <image_id>.pgm rasters");
  review->add_option("--static", serve.static_dir, "Review UI assets served at /");
  review->add_option("--host", serve.host)->capture_default_str();
  review->add_option("--port", serve.port, "0 picks a free port")->capture_default_str();
  review->add_option("--classes", serve.classes, "Classes the expert may choose")->delimiter(',')->capture_default_str();

  FinalizeArgs fin;
  auto* finalize = app.add_subcommand("finalize", "Apply the expert post-processing rules");
  finalize->add_option("-i,--input", fin.input, "Combined manifest")->required();
  finalize->add_option("-o,--output", fin.output, "Final manifest")->required()->group(kOutputs);
  finalize->add_option("--reference", fin.reference, "Dataset whose largest MH/PCH sets the residual-MD threshold");
  finalize->add_option("--audit", fin.audit, "Rule audit trail (JSONL)")->group(kOutputs);
  finalize->add_option("--containment", fin.containment, "Containment fraction for removing holes inside CPs")
      ->capture_default_str();
  finalize->add_option("--cp-merge-iou", fin.cp_merge_iou, "IoU at which overlapping CPs merge")->capture_default_str();
  finalize->add_option("--md-threshold", fin.md_threshold, "Residual-MD area threshold in px^2 (overrides --reference)");
  finalize->add_option("--rules", fin.rules, "Rule order")
      ->delimiter(',')
      ->check(CLI::IsMember({"reclassify-residual-md", "remove-contained", "merge-cp"}));

  SplitArgs spl;
  auto* split = app.add_subcommand("split", "Assign train/val/test splits");
  split->add_option("-i,--input", spl.input)->required();
  split->add_option("-o,--output", spl.output)->required()->group(kOutputs);
  split->add_option("--ratios", spl.ratios, "train,val,test")->delimiter(',')->expected(3)->capture_default_str();

  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "Label counts, size distributions and partition table");
  stats->add_option("-i,--input", st.input)->required();
  stats->add_option("--exclude-partition", st.exclude_partition, "Leave out images with this tag in the counts");
  stats->add_option("--counts", st.counts, "Class counts TSV")->group(kOutputs);
  stats->add_option("--sizes", st.sizes, "Label areas TSV")->group(kOutputs);
  stats->add_option("--partitions", st.partitions, "Partition x split TSV")->group(kOutputs);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score predictions against labels (AP, mAP, fitness)");
  eval->add_option("--predictions", ev.predictions)->required();
  eval->add_option("--labels", ev.labels)->required();
  eval->add_option("--exclude-partition", ev.exclude_partition, "Drop images with this tag from both sides");
  eval->add_flag("--post-process", ev.post_process, "Run the expert rules over the predictions first");
  eval->add_option("--md-threshold", ev.md_threshold, "Residual-MD area threshold for --post-process");
  eval->add_option("--json", ev.json_out, "Machine-readable report")->group(kOutputs);

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Generate synthetic lattice scenes and simulated labelers");
  synth->add_option("-o,--out-dir", syn.out_dir)->required()->group(kOutputs);
  synth->add_option("--images", syn.images)->capture_default_str();
  synth->add_option("--profiles", syn.profiles, "over-labeler, baseline, md-collapser, identity")
      ->delimiter(',')
      ->capture_default_str();
  synth->add_flag("--no-render", syn.no_render, "Skip the PGM rasters");
  synth->add_option("--pch-rate", syn.scene.pch_rate)->capture_default_str();
  synth->add_option("--mh-rate", syn.scene.mh_rate)->capture_default_str();
  synth->add_option("--cp-rate", syn.scene.cp_rate)->capture_default_str();
  synth->add_option("--noise", syn.scene.noise_sigma)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*convert) return run_convert(conv, *convert);
    if (*combine) return run_combine(comb, g, *combine);
    if (*review) return run_serve(serve);
    if (*finalize) return run_finalize(fin, g, *finalize);
    if (*split) return run_split(spl, g, *split);
    if (*stats) return run_stats(st);
    if (*eval) return run_eval(ev);
    if (*synth) return run_synth(syn, g, *synth);
  } catch (const ReviewRequired& e) {
    std::cerr << "review required: " << e.what() << '\n';
    return kReviewRequired;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
