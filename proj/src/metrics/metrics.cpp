#include "grhd/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <tuple>
#include <utility>

#include "grhd/common/error.hpp"

namespace grhd::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Ranked {
  double score;
  bool anomaly;
};

std::vector<Ranked> rank_descending(std::span<const double> normal, std::span<const double> anomaly) {
  if (normal.empty() || anomaly.empty()) {
    throw Error(ErrorCode::DegenerateLabels, "need at least one normal and one anomalous clip (got " +
                                                 std::to_string(normal.size()) + " normal, " +
                                                 std::to_string(anomaly.size()) + " anomalous)");
  }
  std::vector<Ranked> all;
  all.reserve(normal.size() + anomaly.size());
  for (const double s : normal) all.push_back({s, false});
  for (const double s : anomaly) all.push_back({s, true});
  for (const auto& r : all) {
    if (!std::isfinite(r.score)) throw Error(ErrorCode::ContractViolation, "non-finite anomaly score");
  }
  std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  return all;
}

// Twice the ROC area in units of 1 / (n m), over FPR in [0, fp_limit / n].
// Whole segments are summed in integers; only the segment cut by the limit is
// interpolated in floating point.
double twice_area(const std::vector<Ranked>& ranked, double fp_limit) {
  std::uint64_t whole = 0;
  double partial = 0.0;
  std::uint64_t fp = 0, tp = 0;
  for (std::size_t i = 0; i < ranked.size();) {
    std::uint64_t d_fp = 0, d_tp = 0;
    std::size_t j = i;
    for (; j < ranked.size() && ranked[j].score == ranked[i].score; ++j) {
      (ranked[j].anomaly ? d_tp : d_fp) += 1;
    }
    i = j;
    if (static_cast<double>(fp + d_fp) <= fp_limit) {
      whole += d_fp * (2 * tp + d_tp);
    } else {
      const double x = fp_limit - static_cast<double>(fp);
      if (x > 0.0) {
        const double tp_cut = static_cast<double>(tp) + static_cast<double>(d_tp) * x / static_cast<double>(d_fp);
        partial = x * (static_cast<double>(tp) + tp_cut);
      }
      break;
    }
    fp += d_fp;
    tp += d_tp;
  }
  return static_cast<double>(whole) + partial;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

// Harmonic mean of the finite values; 0 when any is 0, NaN when none.
double aggregate(const std::vector<double>& values) {
  std::vector<double> valid;
  for (const double v : values) {
    if (std::isnan(v)) continue;
    if (v <= 0.0) return 0.0;
    valid.push_back(v);
  }
  return valid.empty() ? kNaN : harmonic_mean(valid);
}

}  // namespace

double auc(std::span<const double> normal, std::span<const double> anomaly) {
  const auto ranked = rank_descending(normal, anomaly);
  const double pairs2 = 2.0 * static_cast<double>(normal.size()) * static_cast<double>(anomaly.size());
  return twice_area(ranked, static_cast<double>(normal.size())) / pairs2;
}

double pauc(std::span<const double> normal, std::span<const double> anomaly, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidP, "p must lie in (0, 1], got " + std::to_string(p));
  const auto ranked = rank_descending(normal, anomaly);
  const double pairs2 = 2.0 * static_cast<double>(normal.size()) * static_cast<double>(anomaly.size());
  const double area = twice_area(ranked, p * static_cast<double>(normal.size())) / pairs2;
  return std::min(1.0, area / p);
}

double harmonic_mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::NonpositiveValue, "harmonic mean of no values");
  double inv = 0.0;
  for (const double v : values) {
    if (!(v > 0.0)) throw Error(ErrorCode::NonpositiveValue, "harmonic mean needs positive values, got " + std::to_string(v));
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

double nls_score(std::span<const double> logits, std::size_t section_class) {
  if (section_class >= logits.size()) {
    throw Error(ErrorCode::UnknownSection, "section class " + std::to_string(section_class) + " with " +
                                               std::to_string(logits.size()) + " section logits");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (const double z : logits) acc += std::exp(z - mx);
  return mx + std::log(acc) - logits[section_class];
}

std::vector<double> score_nls(const std::vector<std::vector<double>>& logits_sec,
                              std::span<const dataset::ClipMetadata> clips, const dataset::AttributeGroupTable& table) {
  if (logits_sec.size() != clips.size()) throw Error(ErrorCode::ShapeMismatch, "one logit row per clip expected");
  std::vector<double> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto cls = table.section_class(clips[i].section_id);
    if (!cls) {
      throw Error(ErrorCode::UnknownSection,
                  "section " + std::to_string(clips[i].section_id) + " was not seen in training");
    }
    out.push_back(nls_score(logits_sec[i], *cls));
  }
  return out;
}

double score_knn(std::span<const double> embedding, const std::vector<std::vector<double>>& bank, std::size_t k) {
  if (bank.empty()) throw Error(ErrorCode::EmptyBank, "reference bank is empty");
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be at least 1");
  double norm_e = 0.0;
  for (const double v : embedding) norm_e += v * v;
  norm_e = std::sqrt(norm_e);

  std::vector<double> dist;
  dist.reserve(bank.size());
  for (const auto& row : bank) {
    if (row.size() != embedding.size()) throw Error(ErrorCode::ShapeMismatch, "bank row width differs from embedding");
    double dot = 0.0, norm_r = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      dot += row[i] * embedding[i];
      norm_r += row[i] * row[i];
    }
    norm_r = std::sqrt(norm_r);
    const double cosine = (norm_e > 0.0 && norm_r > 0.0) ? dot / (norm_e * norm_r) : 0.0;
    dist.push_back(1.0 - std::clamp(cosine, -1.0, 1.0));
  }
  k = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += dist[i];
  return total / static_cast<double>(k);
}

std::string EvalReport::to_csv() const {
  std::string out = "machine,section,domain,metric,value\n";
  for (const auto& c : cells) {
    out += c.machine + "," + c.section + "," + c.domain + "," + c.metric + "," + format_value(c.value) + "\n";
  }
  return out;
}

EvalReport evaluate(std::span<const ScoredClip> clips, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidP, "p must lie in (0, 1], got " + std::to_string(p));
  EvalReport report;
  report.p = p;

  struct Scores {
    std::vector<double> normal, anomaly;
  };
  // (machine, section) -> per-domain scores
  std::map<std::pair<std::string, int>, std::pair<Scores, Scores>> groups;
  for (const auto& c : clips) {
    if (c.metadata.condition == dataset::Condition::Unknown) {
      ++report.skipped_unlabeled;
      continue;
    }
    auto& [source, target] = groups[{c.metadata.machine_type, c.metadata.section_id}];
    auto& s = c.metadata.domain == dataset::Domain::Source ? source : target;
    (c.metadata.condition == dataset::Condition::Anomaly ? s.anomaly : s.normal).push_back(c.score);
  }

  auto cell = [&](const std::string& machine, const std::string& section, const std::string& domain,
                  const std::string& metric, auto compute) {
    Cell c{machine, section, domain, metric, kNaN, ""};
    try {
      c.value = compute();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateLabels) throw;
      c.note = e.what();
    }
    report.cells.push_back(c);
    return c.value;
  };

  std::map<std::string, std::tuple<std::vector<double>, std::vector<double>, std::vector<double>>> per_machine;
  std::vector<double> all_source, all_target, all_pauc;
  for (const auto& [key, scores] : groups) {
    const auto& [machine, section] = key;
    const auto& [source, target] = scores;
    const std::string sec = std::to_string(section);
    auto& [m_source, m_target, m_pauc] = per_machine[machine];

    const double a_s = cell(machine, sec, "source", "AUC", [&] { return auc(source.normal, source.anomaly); });
    const double a_t = cell(machine, sec, "target", "AUC", [&] { return auc(target.normal, target.anomaly); });
    Scores pooled = source;
    pooled.normal.insert(pooled.normal.end(), target.normal.begin(), target.normal.end());
    pooled.anomaly.insert(pooled.anomaly.end(), target.anomaly.begin(), target.anomaly.end());
    const double pa = cell(machine, sec, "all", "pAUC", [&] { return pauc(pooled.normal, pooled.anomaly, p); });

    m_source.push_back(a_s);
    m_target.push_back(a_t);
    m_pauc.push_back(pa);
    all_source.push_back(a_s);
    all_target.push_back(a_t);
    all_pauc.push_back(pa);
  }

  for (const auto& [machine, values] : per_machine) {
    const auto& [m_source, m_target, m_pauc] = values;
    report.cells.push_back({machine, "ALL", "source", "AUC", aggregate(m_source), ""});
    report.cells.push_back({machine, "ALL", "target", "AUC", aggregate(m_target), ""});
    report.cells.push_back({machine, "ALL", "all", "pAUC", aggregate(m_pauc), ""});
  }

  report.auc_source = aggregate(all_source);
  report.auc_target = aggregate(all_target);
  report.pauc = aggregate(all_pauc);
  report.hauc = aggregate({report.auc_source, report.auc_target, report.pauc});
  if (std::isnan(report.auc_source) || std::isnan(report.auc_target) || std::isnan(report.pauc)) report.hauc = kNaN;
  report.cells.push_back({"ALL", "ALL", "source", "AUC-s", report.auc_source, ""});
  report.cells.push_back({"ALL", "ALL", "target", "AUC-t", report.auc_target, ""});
  report.cells.push_back({"ALL", "ALL", "all", "pAUC", report.pauc, ""});
  report.cells.push_back({"ALL", "ALL", "all", "HAUC", report.hauc, ""});
  return report;
}

}  // namespace grhd::metrics
