#pragma once

// EvalReport as JSON (the saved form) and as CSV / aligned-text tables with
// rows Acc, F1, P, R and one column per model.

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmk/binio.hpp"
#include "nmk/eval.hpp"
#include "nmk/ingest.hpp"

namespace nmk::report {

using nlohmann::ordered_json;

namespace detail {

inline ordered_json to_json(const eval::Metrics& m) {
  return ordered_json{{"accuracy", m.accuracy},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"f1", m.f1},
                      {"precision_degenerate", m.precision_degenerate},
                      {"recall_degenerate", m.recall_degenerate},
                      {"f1_degenerate", m.f1_degenerate}};
}

inline eval::Metrics metrics_from(const ordered_json& j) {
  eval::Metrics m;
  m.accuracy = j.at("accuracy").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.precision_degenerate = j.at("precision_degenerate").get<bool>();
  m.recall_degenerate = j.at("recall_degenerate").get<bool>();
  m.f1_degenerate = j.at("f1_degenerate").get<bool>();
  return m;
}

}  // namespace detail

inline std::string to_json(const eval::EvalReport& r) {
  ordered_json j;
  j["format"] = "nmk-report-1";
  j["protocol"] = std::string(eval::to_string(r.protocol));
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["shuffled_labels"] = r.shuffled_labels;
  j["pooled_gender"] = r.pooled_gender;
  j["models"] = ordered_json::array();
  for (auto m : r.models) j["models"].push_back(std::string(eval::to_string(m)));
  j["sections"] = ordered_json::array();
  for (const auto& s : r.sections) {
    ordered_json js{{"name", s.name},
                    {"kind", s.kind},
                    {"n_subjects", s.n_subjects},
                    {"train_size", s.train_size},
                    {"test_size", s.test_size},
                    {"results", ordered_json::array()}};
    for (const auto& res : s.results) {
      ordered_json jr{{"model", std::string(eval::to_string(res.model))},
                      {"mean", detail::to_json(res.mean)},
                      {"degenerate_trials", res.degenerate_trials},
                      {"trials", ordered_json::array()}};
      for (const auto& t : res.trials) jr["trials"].push_back(detail::to_json(t));
      js["results"].push_back(std::move(jr));
    }
    j["sections"].push_back(std::move(js));
  }
  j["reaction_distribution"] = ordered_json::array();
  for (const auto& f : r.reactions) {
    j["reaction_distribution"].push_back(ordered_json{{"ad_type", f.ad_type},
                                                      {"positive", f.positive},
                                                      {"total", f.total},
                                                      {"fraction", f.fraction},
                                                      {"degenerate", f.degenerate}});
  }
  return j.dump(2) + "\n";
}

inline eval::EvalReport from_json(std::string_view text) {
  try {
    const auto j = ordered_json::parse(text);
    if (j.value("format", "") != "nmk-report-1") throw FormatError("not an nmk report");
    eval::EvalReport r;
    r.protocol = eval::parse_protocol(j.at("protocol").get<std::string>());
    r.trials = j.at("trials").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.shuffled_labels = j.at("shuffled_labels").get<bool>();
    r.pooled_gender = j.at("pooled_gender").get<bool>();
    for (const auto& m : j.at("models")) r.models.push_back(eval::parse_model(m.get<std::string>()));
    for (const auto& js : j.at("sections")) {
      eval::Section s;
      s.name = js.at("name").get<std::string>();
      s.kind = js.at("kind").get<std::string>();
      s.n_subjects = js.at("n_subjects").get<std::size_t>();
      s.train_size = js.at("train_size").get<std::size_t>();
      s.test_size = js.at("test_size").get<std::size_t>();
      for (const auto& jr : js.at("results")) {
        eval::ModelResult res;
        res.model = eval::parse_model(jr.at("model").get<std::string>());
        res.mean = detail::metrics_from(jr.at("mean"));
        res.degenerate_trials = jr.at("degenerate_trials").get<std::size_t>();
        for (const auto& t : jr.at("trials")) res.trials.push_back(detail::metrics_from(t));
        s.results.push_back(std::move(res));
      }
      r.sections.push_back(std::move(s));
    }
    for (const auto& jf : j.at("reaction_distribution")) {
      eval::ReactionFraction f;
      f.ad_type = jf.at("ad_type").get<int>();
      f.positive = jf.at("positive").get<std::size_t>();
      f.total = jf.at("total").get<std::size_t>();
      f.fraction = jf.at("fraction").get<double>();
      f.degenerate = jf.at("degenerate").get<bool>();
      r.reactions.push_back(f);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  } catch (const ParameterError& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

inline void save(const eval::EvalReport& r, const std::filesystem::path& path) {
  binio::write_file_atomic(path, to_json(r));
}

inline eval::EvalReport load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("cannot open " + path.string());
  return from_json(binio::read_file(path));
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

inline constexpr std::array<const char*, 4> kRowNames = {"Acc", "F1", "P", "R"};

inline double row_value(const eval::Metrics& m, std::size_t row) {
  switch (row) {
    case 0: return m.accuracy;
    case 1: return m.f1;
    case 2: return m.precision;
    default: return m.recall;
  }
}

// Sections rendered as tables: the summaries, which are all sections except
// per-subject breakdowns unless `all_sections` is set.
inline std::vector<const eval::Section*> table_sections(const eval::EvalReport& r, bool all_sections) {
  std::vector<const eval::Section*> out;
  for (const auto& s : r.sections)
    if (all_sections || s.kind == "summary") out.push_back(&s);
  return out;
}

// section,metric,<model>...; values at full round-trip precision. The ad
// protocol appends reaction-distribution rows.
inline std::string to_csv(const eval::EvalReport& r, bool all_sections = false) {
  std::string out = "section,metric";
  for (auto m : r.models) out += "," + std::string(eval::column_name(m));
  out += "\n";
  for (const auto* s : table_sections(r, all_sections)) {
    for (std::size_t row = 0; row < kRowNames.size(); ++row) {
      out += s->name + "," + kRowNames[row];
      for (const auto& res : s->results) out += "," + ingest::detail::format_double(row_value(res.mean, row));
      out += "\n";
    }
  }
  if (!r.reactions.empty()) {
    out += "\nad_type,positive,total,positive_fraction\n";
    for (const auto& f : r.reactions) {
      out += std::to_string(f.ad_type) + "," + std::to_string(f.positive) + "," + std::to_string(f.total) + "," +
             (f.degenerate ? std::string("nan") : ingest::detail::format_double(f.fraction)) + "\n";
    }
  }
  return out;
}

inline std::string to_table(const eval::EvalReport& r, bool all_sections = false) {
  std::ostringstream os;
  char buf[64];
  os << "protocol " << eval::to_string(r.protocol) << ", " << r.trials << " trial" << (r.trials == 1 ? "" : "s")
     << ", seed " << r.seed << (r.shuffled_labels ? ", training labels shuffled" : "") << "\n";
  for (const auto* s : table_sections(r, all_sections)) {
    os << "\n" << s->name;
    if (s->n_subjects > 0) os << " (" << s->n_subjects << " subject" << (s->n_subjects == 1 ? "" : "s") << ")";
    os << "  train " << s->train_size << " / test " << s->test_size << "\n";
    os << "     ";
    for (auto m : r.models) {
      std::snprintf(buf, sizeof(buf), "%8s", std::string(eval::column_name(m)).c_str());
      os << buf;
    }
    os << "\n";
    for (std::size_t row = 0; row < kRowNames.size(); ++row) {
      std::snprintf(buf, sizeof(buf), "%-5s", kRowNames[row]);
      os << buf;
      for (const auto& res : s->results) {
        std::snprintf(buf, sizeof(buf), "%8.3f", row_value(res.mean, row));
        os << buf;
      }
      os << "\n";
    }
  }
  if (!r.reactions.empty()) {
    os << "\npositive reaction fraction per ad type\n";
    for (const auto& f : r.reactions) {
      if (f.degenerate) {
        os << "  ad" << f.ad_type << "  (no recordings)\n";
      } else {
        std::snprintf(buf, sizeof(buf), "  ad%d  %.3f  (%zu/%zu)\n", f.ad_type, f.fraction, f.positive, f.total);
        os << buf;
      }
    }
  }
  return os.str();
}

}  // namespace nmk::report
