#pragma once

// Evaluation protocols.
//
//   subject_dependent  per subject: 20 test originals, the other 60 augmented
//                      to 360 for training; trial means, then subject means
//   gender             the subject-dependent run grouped by gender (or, with
//                      `pooled_gender`, one pooled split per gender)
//   ad_based           per ad type: 60 test originals, the rest train, no
//                      augmentation
//   product_based      per product: same as ad_based
//
// Every trial refits the scaler and retunes each model on its own training
// partition. Test partitions hold originals only; check_hygiene enforces this
// on every split before any model sees it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "nmk/augment.hpp"
#include "nmk/classify.hpp"
#include "nmk/core.hpp"
#include "nmk/deepnet.hpp"
#include "nmk/features.hpp"
#include "nmk/parallel.hpp"
#include "nmk/preprocess.hpp"
#include "nmk/rng.hpp"

namespace nmk::eval {

enum class Protocol : std::uint8_t { subject_dependent = 0, gender = 1, ad_based = 2, product_based = 3 };
enum class ModelId : std::uint8_t { knn = 0, svm = 1, dt = 2, nb = 3, dl = 4 };

inline constexpr std::array<ModelId, 5> kAllModels = {ModelId::knn, ModelId::svm, ModelId::dt, ModelId::nb,
                                                       ModelId::dl};

inline std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::subject_dependent: return "sd";
    case Protocol::gender: return "gender";
    case Protocol::ad_based: return "ad";
    case Protocol::product_based: return "product";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  for (auto p : {Protocol::subject_dependent, Protocol::gender, Protocol::ad_based, Protocol::product_based}) {
    if (s == to_string(p)) return p;
  }
  throw ParameterError("unknown protocol '" + std::string(s) + "' (expected sd, gender, ad or product)");
}

inline std::string_view to_string(ModelId m) {
  constexpr std::array<std::string_view, 5> names = {"knn", "svm", "dt", "nb", "dl"};
  return names[static_cast<std::size_t>(m)];
}

// Column heading used in tables.
inline std::string_view column_name(ModelId m) {
  constexpr std::array<std::string_view, 5> names = {"KNN", "SVM", "DT", "NB", "DL"};
  return names[static_cast<std::size_t>(m)];
}

inline ModelId parse_model(std::string_view s) {
  const auto lower = nmk::detail::lower_trim(s);
  for (auto m : kAllModels) {
    if (lower == to_string(m)) return m;
  }
  throw ParameterError("unknown model '" + std::string(s) + "' (expected knn, svm, dt, nb or dl)");
}

// Comma-separated list, order kept, duplicates rejected.
inline std::vector<ModelId> parse_models(std::string_view list) {
  std::vector<ModelId> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    const auto m = parse_model(list.substr(start, end - start));
    if (std::find(out.begin(), out.end(), m) != out.end()) {
      throw ParameterError("model '" + std::string(to_string(m)) + "' listed twice");
    }
    out.push_back(m);
    start = end + 1;
  }
  return out;
}

inline classify::ModelKind classical_kind(ModelId m) {
  if (m == ModelId::dl) throw ParameterError("dl is not a classical model");
  return static_cast<classify::ModelKind>(static_cast<std::uint8_t>(m));
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Metrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool precision_degenerate = false;  // no positive predictions
  bool recall_degenerate = false;     // no positive truths
  bool f1_degenerate = false;         // precision + recall == 0

  bool degenerate() const { return precision_degenerate || recall_degenerate || f1_degenerate; }
  bool operator==(const Metrics&) const = default;
};

inline Metrics compute_metrics(std::span<const Reaction> predictions, std::span<const Reaction> truths) {
  if (predictions.size() != truths.size()) {
    throw ShapeError("prediction/truth count mismatch: " + std::to_string(predictions.size()) + " vs " +
                     std::to_string(truths.size()));
  }
  if (truths.empty()) throw ShapeError("cannot score an empty prediction set");
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool p = predictions[i] == Reaction::Positive, t = truths[i] == Reaction::Positive;
    (p ? (t ? tp : fp) : (t ? fn : tn)) += 1;
  }
  Metrics m;
  m.accuracy = (tp + tn) / static_cast<double>(truths.size());
  if (tp + fp > 0) m.precision = tp / (tp + fp); else m.precision_degenerate = true;
  if (tp + fn > 0) m.recall = tp / (tp + fn); else m.recall_degenerate = true;
  if (m.precision + m.recall > 0) {
    m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_degenerate = true;
  }
  return m;
}

// Arithmetic mean of each field; flags carry over if any input had them.
inline Metrics mean_metrics(std::span<const Metrics> ms) {
  if (ms.empty()) throw ShapeError("cannot average zero metric sets");
  Metrics out;
  for (const auto& m : ms) {
    out.accuracy += m.accuracy;
    out.precision += m.precision;
    out.recall += m.recall;
    out.f1 += m.f1;
    out.precision_degenerate = out.precision_degenerate || m.precision_degenerate;
    out.recall_degenerate = out.recall_degenerate || m.recall_degenerate;
    out.f1_degenerate = out.f1_degenerate || m.f1_degenerate;
  }
  const double n = static_cast<double>(ms.size());
  out.accuracy /= n;
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ModelResult {
  ModelId model = ModelId::knn;
  Metrics mean;
  std::size_t degenerate_trials = 0;
  std::vector<Metrics> trials;  // empty for sections that average other sections
  bool operator==(const ModelResult&) const = default;
};

struct Section {
  std::string name;
  std::string kind;  // "summary" or "subject"
  std::size_t n_subjects = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<ModelResult> results;
  bool operator==(const Section&) const = default;
};

struct ReactionFraction {
  int ad_type = 1;
  std::size_t positive = 0;
  std::size_t total = 0;
  double fraction = 0;
  bool degenerate = false;  // no recordings for this ad type
  bool operator==(const ReactionFraction&) const = default;
};

struct EvalReport {
  Protocol protocol = Protocol::subject_dependent;
  int trials = 0;
  std::uint64_t seed = 0;
  bool shuffled_labels = false;
  bool pooled_gender = false;
  std::vector<ModelId> models;
  std::vector<Section> sections;
  std::vector<ReactionFraction> reactions;

  const Section& section(std::string_view name) const {
    for (const auto& s : sections)
      if (s.name == name) return s;
    throw ParameterError("report has no section '" + std::string(name) + "'");
  }
  std::vector<const Section*> summaries() const {
    std::vector<const Section*> out;
    for (const auto& s : sections)
      if (s.kind == "summary") out.push_back(&s);
    return out;
  }
  bool operator==(const EvalReport&) const = default;
};

inline const ModelResult& result_for(const Section& s, ModelId m) {
  for (const auto& r : s.results)
    if (r.model == m) return r;
  throw ParameterError("section '" + s.name + "' has no " + std::string(to_string(m)) + " column");
}

// Fraction of Positive ground truth per ad type over the original recordings.
inline std::vector<ReactionFraction> reaction_distribution(const Dataset& ds) {
  std::vector<ReactionFraction> out;
  for (int a = 1; a <= kAdTypes; ++a) {
    ReactionFraction f;
    f.ad_type = a;
    for (const auto& r : ds.recordings) {
      if (r.provenance != Provenance::original || r.meta.ad_type != a) continue;
      ++f.total;
      f.positive += r.meta.reaction() == Reaction::Positive;
    }
    if (f.total == 0) {
      f.degenerate = true;
    } else {
      f.fraction = static_cast<double>(f.positive) / static_cast<double>(f.total);
    }
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SplitPlan {
  Protocol protocol = Protocol::subject_dependent;
  int trials = 5;
  std::uint64_t seed = 1;
  std::size_t sd_test = 20;
  std::size_t ad_test = 60;
  std::size_t product_test = 60;
  std::size_t recordings_per_subject = kAdsPerSubject;
  int augment_copies = 5;
  std::vector<double> noise_fractions = augment::default_fractions();
  bool pooled_gender = false;
};

struct EvalConfig {
  SplitPlan plan;
  std::vector<ModelId> models = {kAllModels.begin(), kAllModels.end()};
  int folds = 3;
  bool shuffle_labels = false;  // permutation test: shuffle training labels
  preprocess::ChainConfig chain{};
  features::ExtractConfig extract{};
  deepnet::NetSpec net{};
  int jobs = 1;
};

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

// A set of original recordings that one protocol splits independently.
struct Pool {
  std::string name;
  std::vector<std::size_t> members;  // dataset indices, originals only
  Gender gender = Gender::male;      // per-subject pools
};

inline bool augments(const SplitPlan& plan) {
  return plan.protocol == Protocol::subject_dependent || plan.protocol == Protocol::gender;
}

inline std::vector<Pool> make_pools(const Dataset& ds, const SplitPlan& plan) {
  std::vector<Pool> pools;
  auto originals = [&](auto pred) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
      const auto& r = ds.recordings[i];
      if (r.provenance == Provenance::original && pred(r)) idx.push_back(i);
    }
    return idx;
  };
  const bool per_subject = plan.protocol == Protocol::subject_dependent ||
                           (plan.protocol == Protocol::gender && !plan.pooled_gender);
  if (per_subject) {
    for (const auto& [subject, gender] : subject_genders(ds)) {
      Pool p{subject, originals([&](const Recording& r) { return r.meta.subject_id == subject; }), gender};
      if (p.members.size() != plan.recordings_per_subject) {
        throw ShapeError("subject " + subject + " has " + std::to_string(p.members.size()) +
                         " original recordings, expected " + std::to_string(plan.recordings_per_subject));
      }
      pools.push_back(std::move(p));
    }
  } else if (plan.protocol == Protocol::gender) {
    for (Gender g : {Gender::male, Gender::female}) {
      Pool p{std::string(to_string(g)), originals([&](const Recording& r) { return r.meta.gender == g; }), g};
      if (!p.members.empty()) pools.push_back(std::move(p));
    }
  } else if (plan.protocol == Protocol::ad_based) {
    for (int a = 1; a <= kAdTypes; ++a) {
      pools.push_back({"ad" + std::to_string(a), originals([&](const Recording& r) { return r.meta.ad_type == a; })});
    }
  } else {
    for (Product pr : kProducts) {
      pools.push_back({std::string(to_string(pr)), originals([&](const Recording& r) { return r.meta.product == pr; })});
    }
  }
  const bool any = std::any_of(pools.begin(), pools.end(), [](const Pool& p) { return !p.members.empty(); });
  if (!any) throw ShapeError("dataset holds no original recordings");
  return pools;
}

inline std::size_t test_size(const SplitPlan& plan, const Pool& pool) {
  switch (plan.protocol) {
    case Protocol::subject_dependent: return plan.sd_test;
    case Protocol::gender:
      if (!plan.pooled_gender) return plan.sd_test;
      // Same test share as the per-subject split.
      return static_cast<std::size_t>(std::lround(static_cast<double>(pool.members.size()) *
                                                  static_cast<double>(plan.sd_test) /
                                                  static_cast<double>(plan.recordings_per_subject)));
    case Protocol::ad_based: return plan.ad_test;
    case Protocol::product_based: return plan.product_test;
  }
  return 0;
}

struct TrialSplit {
  std::vector<std::size_t> test;              // dataset indices
  std::vector<std::size_t> train;             // dataset indices
  std::vector<Recording> augmented;           // noisy copies of train originals
  std::vector<std::size_t> augmented_source;  // dataset index of each copy's original

  std::size_t train_size() const { return train.size() + augmented.size(); }
};

inline std::uint64_t trial_seed(const SplitPlan& plan, std::size_t pool, int trial) {
  return derive_seed(plan.seed, {static_cast<std::uint64_t>(plan.protocol), plan.pooled_gender ? 1u : 0u, pool,
                                 static_cast<std::uint64_t>(trial)});
}

inline TrialSplit split_trial(const Dataset& ds, const SplitPlan& plan, const Pool& pool, std::uint64_t seed) {
  const std::size_t n_test = test_size(plan, pool);
  if (n_test == 0 || n_test >= pool.members.size()) {
    throw ShapeError("pool " + pool.name + " has " + std::to_string(pool.members.size()) +
                     " recordings, too few for a test partition of " + std::to_string(n_test));
  }
  Rng rng(derive_seed(seed, {0x5b1}));
  std::vector<std::size_t> order = pool.members;
  rng.shuffle(order);
  TrialSplit s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  if (augments(plan) && plan.augment_copies > 0) {
    std::vector<Recording> originals;
    originals.reserve(s.train.size());
    for (auto i : s.train) originals.push_back(ds.recordings[i]);
    auto all = augment::augment(originals, plan.augment_copies, plan.noise_fractions, derive_seed(seed, {0xa06}));
    const std::size_t stride = static_cast<std::size_t>(plan.augment_copies) + 1;
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (j % stride == 0) continue;  // the original itself
      s.augmented.push_back(std::move(all[j]));
      s.augmented_source.push_back(s.train[j / stride]);
    }
  }
  return s;
}

// Throws Error when a test partition holds an augmented recording or shares a
// recording with training.
inline void check_hygiene(const Dataset& ds, const TrialSplit& s) {
  using Key = std::tuple<std::string, Product, std::string, int>;
  auto key = [](const Recording& r) { return Key{r.meta.subject_id, r.meta.product, r.meta.brand, r.meta.ad_type}; };
  std::set<std::size_t> test_idx;
  std::set<Key> test_keys;
  for (auto i : s.test) {
    const auto& r = ds.recordings.at(i);
    if (r.provenance != Provenance::original || r.copy_index != 0) {
      throw Error("augmented recording in test partition (dataset index " + std::to_string(i) + ")");
    }
    test_idx.insert(i);
    test_keys.insert(key(r));
  }
  for (auto i : s.train) {
    if (test_idx.count(i) || test_keys.count(key(ds.recordings.at(i)))) {
      throw Error("recording " + std::to_string(i) + " appears in both training and test partitions");
    }
  }
  if (s.augmented.size() != s.augmented_source.size()) throw Error("augmented copies without sources");
  for (std::size_t j = 0; j < s.augmented.size(); ++j) {
    if (s.augmented[j].provenance != Provenance::augmented) throw Error("untagged augmented copy");
    if (test_idx.count(s.augmented_source[j]) || test_keys.count(key(s.augmented[j]))) {
      throw Error("augmented copy of a test recording in training partition");
    }
  }
}

// ---------------------------------------------------------------------------
// Trial evaluation
// ---------------------------------------------------------------------------

struct Processed {
  features::FeatureVector features;
  std::vector<double> signal;  // preprocessed and standardized; empty unless needed
};

inline Processed process(const Recording& rec, const EvalConfig& cfg, bool need_signal) {
  const auto pre = preprocess::preprocess_chain(rec, cfg.chain);
  Processed p;
  p.features = features::extract(pre, cfg.extract);
  if (need_signal) p.signal = deepnet::standardize(pre.samples);
  return p;
}

inline bool uses_dl(const EvalConfig& cfg) {
  return std::find(cfg.models.begin(), cfg.models.end(), ModelId::dl) != cfg.models.end();
}

// Processed form of every original, indexed like the dataset (augmented
// entries stay empty).
inline std::vector<Processed> process_originals(const Dataset& ds, const EvalConfig& cfg) {
  std::vector<Processed> out(ds.recordings.size());
  const bool sig = uses_dl(cfg);
  parallel_for(ds.recordings.size(), cfg.jobs, [&](std::size_t i) {
    if (ds.recordings[i].provenance == Provenance::original) out[i] = process(ds.recordings[i], cfg, sig);
  });
  return out;
}

inline std::vector<Metrics> evaluate_split(const Dataset& ds, const std::vector<Processed>& cache,
                                           const TrialSplit& split, const EvalConfig& cfg, std::uint64_t seed) {
  check_hygiene(ds, split);
  const bool sig = uses_dl(cfg);

  // Training rows: originals first, then copies; group = source original.
  std::vector<const Processed*> train_rows;
  std::vector<Processed> copies;
  copies.reserve(split.augmented.size());
  for (const auto& rec : split.augmented) copies.push_back(process(rec, cfg, sig));
  std::vector<std::size_t> group;
  std::map<std::size_t, Reaction> source_label;
  for (auto i : split.train) {
    train_rows.push_back(&cache[i]);
    group.push_back(i);
    source_label[i] = ds.recordings[i].meta.reaction();
  }
  for (std::size_t j = 0; j < copies.size(); ++j) {
    train_rows.push_back(&copies[j]);
    group.push_back(split.augmented_source[j]);
  }
  if (cfg.shuffle_labels) {
    std::vector<Reaction> labels;
    for (const auto& [i, l] : source_label) labels.push_back(l);
    Rng rng(derive_seed(seed, {0x5ff1e}));
    rng.shuffle(labels);
    std::size_t k = 0;
    for (auto& [i, l] : source_label) l = labels[k++];
  }
  classify::Labels y_train;
  for (auto g : group) y_train.push_back(source_label.at(g));
  classify::Labels y_test;
  for (auto i : split.test) y_test.push_back(ds.recordings[i].meta.reaction());

  std::vector<features::FeatureVector> f_train, f_test;
  for (const auto* p : train_rows) f_train.push_back(p->features);
  for (auto i : split.test) f_test.push_back(cache[i].features);
  const auto scaler = features::fit_scaler(f_train);
  f_train = features::apply_scaler(scaler, f_train);
  f_test = features::apply_scaler(scaler, f_test);
  const auto X_train = classify::Matrix::from_features(f_train);
  const auto X_test = classify::Matrix::from_features(f_test);

  std::vector<Metrics> out;
  for (auto m : cfg.models) {
    const auto model_seed = derive_seed(seed, {0x30de1, static_cast<std::uint64_t>(m)});
    classify::Labels pred;
    if (m == ModelId::dl) {
      auto make = [&](const Processed& p, const features::FeatureVector& f, Reaction label) {
        return deepnet::NetSample{std::vector<double>(f.values.begin(), f.values.end()), p.signal, label};
      };
      std::vector<deepnet::NetSample> train, test;
      for (std::size_t r = 0; r < train_rows.size(); ++r) train.push_back(make(*train_rows[r], f_train[r], y_train[r]));
      for (std::size_t r = 0; r < split.test.size(); ++r) test.push_back(make(cache[split.test[r]], f_test[r], y_test[r]));
      auto spec = cfg.net;
      spec.n_features = features::kNumFeatures;
      spec.signal_length = train.front().signal.size();
      spec.seed = model_seed;
      const auto net = deepnet::train(spec, train, model_seed);
      for (const auto& x : test) pred.push_back(deepnet::predict_label(net.params, x));
    } else {
      const auto kind = classical_kind(m);
      const auto grid = classify::default_grid(kind);
      const auto folds = grid.size() > 1
                             ? classify::stratified_group_folds(y_train, group, cfg.folds, derive_seed(model_seed, {1}))
                             : std::vector<int>{};
      const auto tuned = classify::grid_search(kind, X_train, y_train, grid, folds);
      const auto model = classify::fit(kind, X_train, y_train, tuned.best);
      pred = classify::predict_all(model, X_test);
    }
    out.push_back(compute_metrics(pred, y_test));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocol drivers
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<ModelResult> aggregate_trials(const std::vector<ModelId>& models,
                                                 const std::vector<std::vector<Metrics>>& per_trial) {
  std::vector<ModelResult> out;
  for (std::size_t k = 0; k < models.size(); ++k) {
    ModelResult r;
    r.model = models[k];
    for (const auto& t : per_trial) r.trials.push_back(t[k]);
    r.mean = mean_metrics(r.trials);
    for (const auto& t : r.trials) r.degenerate_trials += t.degenerate();
    out.push_back(std::move(r));
  }
  return out;
}

// Mean of the given sections' model means.
inline Section average_sections(std::string name, const std::vector<const Section*>& parts,
                                const std::vector<ModelId>& models) {
  Section s;
  s.name = std::move(name);
  s.kind = "summary";
  s.n_subjects = parts.size();
  if (parts.empty()) return s;
  s.train_size = parts.front()->train_size;
  s.test_size = parts.front()->test_size;
  for (std::size_t k = 0; k < models.size(); ++k) {
    ModelResult r;
    r.model = models[k];
    std::vector<Metrics> means;
    for (const auto* p : parts) {
      means.push_back(p->results[k].mean);
      r.degenerate_trials += p->results[k].degenerate_trials;
    }
    r.mean = mean_metrics(means);
    s.results.push_back(std::move(r));
  }
  return s;
}

}  // namespace detail

inline EvalReport run(const Dataset& ds, const EvalConfig& cfg) {
  const auto& plan = cfg.plan;
  if (plan.trials < 1) throw ParameterError("need at least one trial");
  if (cfg.models.empty()) throw ParameterError("no models selected");
  const auto pools = make_pools(ds, plan);
  for (const auto& p : pools) {
    const auto n_test = test_size(plan, p);
    if (n_test == 0 || n_test >= p.members.size()) {
      throw ShapeError("pool " + p.name + " has " + std::to_string(p.members.size()) +
                       " recordings, too few for a test partition of " + std::to_string(n_test));
    }
  }

  const auto cache = process_originals(ds, cfg);
  const std::size_t n_tasks = pools.size() * static_cast<std::size_t>(plan.trials);
  std::vector<std::vector<Metrics>> task_metrics(n_tasks);
  std::vector<std::size_t> train_sizes(n_tasks);
  parallel_for(n_tasks, cfg.jobs, [&](std::size_t t) {
    const std::size_t pool = t / static_cast<std::size_t>(plan.trials);
    const int trial = static_cast<int>(t % static_cast<std::size_t>(plan.trials));
    const auto seed = trial_seed(plan, pool, trial);
    const auto split = split_trial(ds, plan, pools[pool], seed);
    train_sizes[t] = split.train_size();
    task_metrics[t] = evaluate_split(ds, cache, split, cfg, seed);
  });

  EvalReport report;
  report.protocol = plan.protocol;
  report.trials = plan.trials;
  report.seed = plan.seed;
  report.shuffled_labels = cfg.shuffle_labels;
  report.pooled_gender = plan.pooled_gender;
  report.models = cfg.models;

  std::vector<Section> pool_sections;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    Section s;
    s.name = pools[p].name;
    s.n_subjects = 0;
    s.test_size = test_size(plan, pools[p]);
    s.train_size = train_sizes[p * static_cast<std::size_t>(plan.trials)];
    std::vector<std::vector<Metrics>> per_trial(task_metrics.begin() + static_cast<std::ptrdiff_t>(p * static_cast<std::size_t>(plan.trials)),
                                                task_metrics.begin() + static_cast<std::ptrdiff_t>((p + 1) * static_cast<std::size_t>(plan.trials)));
    s.results = detail::aggregate_trials(cfg.models, per_trial);
    pool_sections.push_back(std::move(s));
  }

  const bool per_subject = plan.protocol == Protocol::subject_dependent ||
                           (plan.protocol == Protocol::gender && !plan.pooled_gender);
  if (per_subject) {
    for (auto& s : pool_sections) {
      s.kind = "subject";
      s.n_subjects = 1;
    }
    if (plan.protocol == Protocol::subject_dependent) {
      std::vector<const Section*> all;
      for (const auto& s : pool_sections) all.push_back(&s);
      report.sections.push_back(detail::average_sections("all", all, cfg.models));
    } else {
      for (Gender g : {Gender::male, Gender::female}) {
        std::vector<const Section*> members;
        for (std::size_t p = 0; p < pools.size(); ++p)
          if (pools[p].gender == g) members.push_back(&pool_sections[p]);
        if (!members.empty()) report.sections.push_back(detail::average_sections(std::string(to_string(g)), members, cfg.models));
      }
    }
  } else {
    for (std::size_t p = 0; p < pools.size(); ++p) {
      std::set<std::string> subjects;
      for (auto i : pools[p].members) subjects.insert(ds.recordings[i].meta.subject_id);
      pool_sections[p].kind = "summary";
      pool_sections[p].n_subjects = subjects.size();
    }
  }
  for (auto& s : pool_sections) report.sections.push_back(std::move(s));
  if (plan.protocol == Protocol::ad_based) report.reactions = reaction_distribution(ds);
  return report;
}

inline EvalReport run_protocol(const Dataset& ds, EvalConfig cfg, Protocol p) {
  cfg.plan.protocol = p;
  return run(ds, cfg);
}
inline EvalReport run_subject_dependent(const Dataset& ds, const EvalConfig& cfg) {
  return run_protocol(ds, cfg, Protocol::subject_dependent);
}
inline EvalReport run_gender(const Dataset& ds, const EvalConfig& cfg) { return run_protocol(ds, cfg, Protocol::gender); }
inline EvalReport run_ad_based(const Dataset& ds, const EvalConfig& cfg) { return run_protocol(ds, cfg, Protocol::ad_based); }
inline EvalReport run_product_based(const Dataset& ds, const EvalConfig& cfg) {
  return run_protocol(ds, cfg, Protocol::product_based);
}

}  // namespace nmk::eval
