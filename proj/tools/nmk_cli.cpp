// nmk: synthesize or ingest EEG datasets, run evaluation protocols and render
// reports.
//
// Exit codes: 0 success, 1 unexpected failure, 2 ingest file error,
// 64 usage error, 65 dataset unfit for the requested protocol.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "nmk/eval.hpp"
#include "nmk/features.hpp"
#include "nmk/ingest.hpp"
#include "nmk/preprocess.hpp"
#include "nmk/report.hpp"
#include "nmk/synth.hpp"

namespace {

constexpr int kExitIngest = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;

void print_summary(const nmk::Dataset& ds, std::ostream& os) {
  const auto s = nmk::dataset_summary(ds);
  os << "recordings " << s.total() << " (" << s.originals << " original, " << s.augmented << " augmented)\n";
  os << "subjects " << s.per_subject.size();
  for (const auto& [g, n] : s.per_gender) os << ", " << g << " " << n / nmk::kAdsPerSubject;
  os << "\n";
  if (!ds.recordings.empty()) {
    const auto& r = ds.recordings.front();
    os << "samples per recording " << r.samples.size() << " at " << r.sample_rate << " Hz\n";
  }
  os << "products:";
  for (const auto& [p, n] : s.per_product) os << " " << p << "=" << n;
  os << "\nad types:";
  for (const auto& [a, n] : s.per_ad_type) os << " ad" << a << "=" << n;
  os << "\nlabels:";
  for (const auto& [l, n] : s.per_label) os << " " << l << "=" << n;
  os << "\n";
  for (const auto& [k, v] : ds.metadata) os << k << " = " << v << "\n";
}

struct SynthArgs {
  int subjects = 13;
  std::uint64_t seed = 1;
  double separability = 1.0;
  int males = -1;
  std::string out;
};

struct IngestArgs {
  std::string manifest;
  std::string out;
};

struct RunArgs {
  std::string bundle;
  std::string protocol = "sd";
  std::string models = "knn,svm,dt,nb,dl";
  int trials = 5;
  std::uint64_t seed = 1;
  std::string report;
  std::string format = "table";
  int jobs = 1;
  bool shuffle_labels = false;
  bool pooled_gender = false;
  int dl_epochs = 30;
  std::vector<std::size_t> dl_kernels = {128, 32};
};

struct ReportArgs {
  std::string in;
  std::string format = "table";
  bool all_sections = false;
};

struct FeaturesArgs {
  std::string bundle;
  std::string out;
  int jobs = 1;
};

int cmd_synth(const SynthArgs& a) {
  nmk::synth::SynthSpec spec;
  spec.n_subjects = a.subjects;
  spec.seed = a.seed;
  spec.separability = a.separability;
  spec.n_males = a.males;
  const auto ds = nmk::synth::generate(spec);
  nmk::ingest::save_bundle(ds, a.out);
  print_summary(ds, std::cout);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

int cmd_ingest(const IngestArgs& a) {
  try {
    const auto ds = nmk::ingest::load_dataset(nmk::ingest::load_manifest(a.manifest));
    nmk::ingest::save_bundle(ds, a.out);
    print_summary(ds, std::cout);
    std::cout << "wrote " << a.out << "\n";
    return 0;
  } catch (const nmk::Error& e) {
    std::cerr << "ingest: " << e.what() << "\n";
    return kExitIngest;
  }
}

int cmd_run(const RunArgs& a) {
  nmk::eval::EvalConfig cfg;
  try {
    cfg.plan.protocol = nmk::eval::parse_protocol(a.protocol);
    cfg.models = nmk::eval::parse_models(a.models);
  } catch (const nmk::ParameterError& e) {
    std::cerr << "run: " << e.what() << "\n";
    return kExitUsage;
  }
  if (a.dl_kernels.size() != 2) {
    std::cerr << "run: --dl-kernels takes two counts\n";
    return kExitUsage;
  }
  cfg.plan.trials = a.trials;
  cfg.plan.seed = a.seed;
  cfg.plan.pooled_gender = a.pooled_gender;
  cfg.shuffle_labels = a.shuffle_labels;
  cfg.jobs = a.jobs;
  cfg.net.epochs = a.dl_epochs;
  cfg.net.conv1_kernels = a.dl_kernels[0];
  cfg.net.conv2_kernels = a.dl_kernels[1];

  nmk::Dataset ds;
  try {
    ds = nmk::ingest::load_bundle(a.bundle);
  } catch (const nmk::Error& e) {
    std::cerr << "run: " << a.bundle << ": " << e.what() << "\n";
    return kExitData;
  }
  nmk::eval::EvalReport rep;
  try {
    rep = nmk::eval::run(ds, cfg);
  } catch (const nmk::ShapeError& e) {
    std::cerr << "run: dataset unfit for protocol " << a.protocol << ": " << e.what() << "\n";
    return kExitData;
  } catch (const nmk::StratificationError& e) {
    std::cerr << "run: dataset unfit for protocol " << a.protocol << ": " << e.what() << "\n";
    return kExitData;
  } catch (const nmk::DegenerateTrainingError& e) {
    std::cerr << "run: dataset unfit for protocol " << a.protocol << ": " << e.what() << "\n";
    return kExitData;
  } catch (const nmk::ParameterError& e) {
    std::cerr << "run: " << e.what() << "\n";
    return kExitUsage;
  }
  if (!a.report.empty()) nmk::report::save(rep, a.report);
  std::cout << (a.format == "csv" ? nmk::report::to_csv(rep) : nmk::report::to_table(rep));
  return 0;
}

int cmd_report(const ReportArgs& a) {
  const auto rep = nmk::report::load(a.in);
  std::cout << (a.format == "csv" ? nmk::report::to_csv(rep, a.all_sections)
                                  : nmk::report::to_table(rep, a.all_sections));
  return 0;
}

int cmd_features(const FeaturesArgs& a) {
  const auto ds = nmk::ingest::load_bundle(a.bundle);
  std::vector<nmk::features::FeatureVector> vs(ds.recordings.size());
  nmk::parallel_for(ds.recordings.size(), a.jobs, [&](std::size_t i) {
    vs[i] = nmk::features::extract(nmk::preprocess::preprocess_chain(ds.recordings[i]));
  });
  std::vector<nmk::Reaction> labels;
  for (const auto& r : ds.recordings) labels.push_back(r.meta.reaction());
  nmk::binio::write_file_atomic(a.out, nmk::features::feature_csv(vs, labels));
  std::cout << "wrote " << vs.size() << " feature rows to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG consumer-reaction pipeline: synthesize or ingest recordings, evaluate classifiers, render reports"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset bundle");
  synth->add_option("--subjects", sa.subjects, "Number of subjects")->envname("NMK_SUBJECTS")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sa.seed, "Random seed")->envname("NMK_SEED");
  synth->add_option("--separability", sa.separability, "Class separability in [0, 1]")
      ->envname("NMK_SEPARABILITY")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--males", sa.males, "Male subjects (default: 5 of every 13)");
  synth->add_option("--out", sa.out, "Output bundle")->required();

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Load CSV recordings listed in a manifest into a bundle");
  ingest->add_option("--manifest", ia.manifest, "Manifest JSON")->required();
  ingest->add_option("--out", ia.out, "Output bundle")->required();

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run an evaluation protocol on a bundle");
  run->add_option("--bundle", ra.bundle, "Dataset bundle")->required();
  run->add_option("--protocol", ra.protocol, "sd, gender, ad or product")
      ->envname("NMK_PROTOCOL")
      ->check(CLI::IsMember({"sd", "gender", "ad", "product"}));
  run->add_option("--models", ra.models, "Comma-separated subset of knn,svm,dt,nb,dl")->envname("NMK_MODELS");
  run->add_option("--trials", ra.trials, "Trials per split")->envname("NMK_TRIALS")->check(CLI::PositiveNumber);
  run->add_option("--seed", ra.seed, "Random seed")->envname("NMK_SEED");
  run->add_option("--report", ra.report, "Write the report as JSON");
  run->add_option("--format", ra.format, "Standard-output format")->check(CLI::IsMember({"table", "csv"}));
  run->add_option("--jobs", ra.jobs, "Worker threads")->envname("NMK_JOBS")->check(CLI::PositiveNumber);
  run->add_flag("--shuffle-labels", ra.shuffle_labels, "Permute training labels (chance-level control)");
  run->add_flag("--pooled-gender", ra.pooled_gender, "Gender protocol on pooled recordings per gender");
  run->add_option("--dl-epochs", ra.dl_epochs, "Network training epochs")->envname("NMK_DL_EPOCHS")->check(CLI::NonNegativeNumber);
  run->add_option("--dl-kernels", ra.dl_kernels, "Kernel counts of the two convolution layers")
      ->delimiter(',')
      ->expected(2);

  ReportArgs pa;
  auto* rep = app.add_subcommand("report", "Render a saved report");
  rep->add_option("--in", pa.in, "Report JSON")->required();
  rep->add_option("--format", pa.format, "table or csv")->check(CLI::IsMember({"table", "csv"}));
  rep->add_flag("--all-sections", pa.all_sections, "Include per-subject sections");

  FeaturesArgs fa;
  auto* feat = app.add_subcommand("features", "Export the preprocessed feature vectors of a bundle as CSV");
  feat->add_option("--bundle", fa.bundle, "Dataset bundle")->required();
  feat->add_option("--out", fa.out, "Output CSV")->required();
  feat->add_option("--jobs", fa.jobs, "Worker threads")->envname("NMK_JOBS")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*ingest) return cmd_ingest(ia);
    if (*run) return cmd_run(ra);
    if (*rep) return cmd_report(pa);
    if (*feat) return cmd_features(fa);
  } catch (const nmk::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nmk::CorruptBundleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
