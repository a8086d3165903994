// Phone-sequence alignment, the hierarchical detection/diagnosis tally and
// the derived metrics.
//
// Metric convention: the confusion hierarchy labels a *detected
// mispronunciation* TN (split into correct diagnosis CD and diagnosis error
// DE), so precision = TN/(TN+FN) and recall = TN/(TN+FP). This mirrors the
// evaluation structure this module implements and is intentionally NOT the
// textbook positive/negative convention.
#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mddkit/common.hpp"

namespace mddkit {

enum class EditOp { Match, Substitute, Delete, Insert };

struct AlignmentOp {
  EditOp kind;
  int ref_pos;  // -1 for insertions
  int hyp_pos;  // -1 for deletions
};

struct AlignmentResult {
  int distance = 0;
  std::vector<AlignmentOp> ops;
};

// Minimal Levenshtein alignment with unit costs. Backtrace tie order prefers
// the diagonal (match/substitute), then delete, then insert, which makes the
// op sequence deterministic across platforms.
template <class Sym>
inline AlignmentResult align(const std::vector<Sym>& ref, const std::vector<Sym>& hyp) {
  const int n = int(ref.size());
  const int m = int(hyp.size());
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (int i = 0; i <= n; ++i) d[i][0] = i;
  for (int j = 0; j <= m; ++j) d[0][j] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = d[i - 1][j] + 1;
      const int ins = d[i][j - 1] + 1;
      d[i][j] = std::min({sub, del, ins});
    }
  }

  AlignmentResult result;
  result.distance = d[n][m];
  int i = n, j = m;
  while (i > 0 || j > 0) {
    const int sub_cost = (i > 0 && j > 0) ? (ref[i - 1] == hyp[j - 1] ? 0 : 1) : 0;
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + sub_cost) {
      result.ops.push_back({sub_cost == 0 ? EditOp::Match : EditOp::Substitute, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      result.ops.push_back({EditOp::Delete, i - 1, -1});
      --i;
    } else {
      result.ops.push_back({EditOp::Insert, -1, j - 1});
      --j;
    }
  }
  std::reverse(result.ops.begin(), result.ops.end());
  return result;
}

// Corpus phone error rate: 100 * sum of edit distances / sum of ref lengths.
template <class Sym>
inline double per(const std::vector<std::vector<Sym>>& refs,
                  const std::vector<std::vector<Sym>>& hyps) {
  if (refs.size() != hyps.size())
    throw InputError("per: refs and hyps have different corpus sizes");
  long long distance = 0, ref_len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    distance += align(refs[i], hyps[i]).distance;
    ref_len += long(refs[i].size());
  }
  if (ref_len == 0) throw InputError("per: total reference length is zero");
  return 100.0 * double(distance) / double(ref_len);
}

// Marks a deleted phone in the per-position perceived labels.
inline constexpr const char* kDeletionMark = "*del*";

// Human annotation of one utterance: the canonical phones of the prompt and,
// per canonical position, what the speaker actually produced (a phone, or
// the deletion marker). Insertions are out of the annotation's scope.
struct UttAnnotation {
  std::string utt_id;
  std::vector<std::string> canonical;
  std::vector<std::string> perceived;

  void validate() const {
    if (canonical.empty()) throw InputError("annotation has empty canonical sequence");
    if (canonical.size() != perceived.size())
      throw InputError("annotation '" + utt_id + "': canonical/perceived length mismatch");
  }

  // The phones actually uttered: perceived labels with deletions removed.
  std::vector<std::string> spoken() const {
    std::vector<std::string> out;
    for (const auto& p : perceived)
      if (p != kDeletionMark) out.push_back(p);
    return out;
  }

  int mispronunciation_count() const {
    int n = 0;
    for (std::size_t i = 0; i < canonical.size(); ++i)
      if (perceived[i] != canonical[i]) ++n;
    return n;
  }
};

// Hierarchical tallies. TN counts detected mispronunciations and splits into
// correct diagnoses and diagnosis errors; TN = CD + DE always.
struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0, cd = 0, de = 0;

  long scored_positions() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    cd += o.cd;
    de += o.de;
    return *this;
  }
};

// Aligns the hypothesis to the canonical sequence and scores each canonical
// position against the annotation:
//   truth correct (perceived == canonical):  hyp == canonical ? TP : FN
//   truth mispronounced:                     hyp == canonical ? FP : TN,
//     TN splitting into CD (hyp == perceived) / DE (otherwise).
// A canonical position the hypothesis skips counts as the deletion marker.
// Hypothesis insertions are not scored here; they only affect PER.
inline ConfusionCounts mdd_classify(const UttAnnotation& annotation,
                                    const std::vector<std::string>& hypothesis) {
  annotation.validate();
  const AlignmentResult alignment = align(annotation.canonical, hypothesis);

  std::vector<std::string> hyp_at(annotation.canonical.size(), kDeletionMark);
  for (const AlignmentOp& op : alignment.ops) {
    if (op.kind == EditOp::Match || op.kind == EditOp::Substitute)
      hyp_at[op.ref_pos] = hypothesis[op.hyp_pos];
  }

  ConfusionCounts counts;
  for (std::size_t i = 0; i < annotation.canonical.size(); ++i) {
    const bool truth_correct = annotation.perceived[i] == annotation.canonical[i];
    const bool hyp_says_canonical = hyp_at[i] == annotation.canonical[i];
    if (truth_correct) {
      hyp_says_canonical ? ++counts.tp : ++counts.fn;
    } else if (hyp_says_canonical) {
      ++counts.fp;
    } else {
      ++counts.tn;
      hyp_at[i] == annotation.perceived[i] ? ++counts.cd : ++counts.de;
    }
  }
  return counts;
}

struct MetricsReport {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
  double dar = 0.0;
  double per = 0.0;
  // Set when the corresponding denominator was zero and the value was
  // reported as 0 by convention.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  bool dar_undefined = false;
};

inline MetricsReport metrics(const ConfusionCounts& c, double per_percent = 0.0) {
  MetricsReport r;
  r.per = per_percent;
  const double tn = double(c.tn);
  if (c.tn + c.fn > 0)
    r.precision = 100.0 * tn / double(c.tn + c.fn);
  else
    r.precision_undefined = true;
  if (c.tn + c.fp > 0)
    r.recall = 100.0 * tn / double(c.tn + c.fp);
  else
    r.recall_undefined = true;
  if (r.precision + r.recall > 0.0 && !r.precision_undefined && !r.recall_undefined)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  else
    r.f1_undefined = true;
  if (c.cd + c.de > 0)
    r.dar = 100.0 * double(c.cd) / double(c.cd + c.de);
  else
    r.dar_undefined = true;
  return r;
}

// F-1 from precision/recall percentages alone (harmonic mean).
inline double f1_from_precision_recall(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// --- annotation and report I/O -------------------------------------------

// TSV: utt_id <TAB> canonical phones <TAB> perceived phones (with *del*).
inline std::vector<UttAnnotation> read_annotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<UttAnnotation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated columns");
    UttAnnotation a;
    a.utt_id = cols[0];
    a.canonical = split_ws(cols[1]);
    a.perceived = split_ws(cols[2]);
    a.validate();
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_annotations(const std::vector<UttAnnotation>& annotations,
                              const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (const auto& a : annotations) {
    f << a.utt_id << '\t';
    for (std::size_t i = 0; i < a.canonical.size(); ++i)
      f << (i ? " " : "") << a.canonical[i];
    f << '\t';
    for (std::size_t i = 0; i < a.perceived.size(); ++i)
      f << (i ? " " : "") << a.perceived[i];
    f << '\n';
  }
}

// Machine-readable key=value block with counts and all five metrics.
inline std::string format_metrics_kv(const ConfusionCounts& c, const MetricsReport& r,
                                     const std::string& prefix = "") {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << prefix << "tp=" << c.tp << '\n';
  os << prefix << "fp=" << c.fp << '\n';
  os << prefix << "fn=" << c.fn << '\n';
  os << prefix << "tn=" << c.tn << '\n';
  os << prefix << "cd=" << c.cd << '\n';
  os << prefix << "de=" << c.de << '\n';
  os << prefix << "precision=" << r.precision << '\n';
  os << prefix << "recall=" << r.recall << '\n';
  os << prefix << "f1=" << r.f1 << '\n';
  os << prefix << "dar=" << r.dar << '\n';
  os << prefix << "per=" << r.per << '\n';
  os << prefix << "precision_undefined=" << (r.precision_undefined ? 1 : 0) << '\n';
  os << prefix << "recall_undefined=" << (r.recall_undefined ? 1 : 0) << '\n';
  os << prefix << "f1_undefined=" << (r.f1_undefined ? 1 : 0) << '\n';
  os << prefix << "dar_undefined=" << (r.dar_undefined ? 1 : 0) << '\n';
  return os.str();
}

inline std::string format_metrics_table(const ConfusionCounts& c, const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "counts   TP=" << c.tp << " FP=" << c.fp << " FN=" << c.fn << " TN=" << c.tn
     << " (CD=" << c.cd << " DE=" << c.de << ")\n";
  os << "metric      %\n";
  os << "precision  " << std::setw(6) << r.precision << '\n';
  os << "recall     " << std::setw(6) << r.recall << '\n';
  os << "f1         " << std::setw(6) << r.f1 << '\n';
  os << "dar        " << std::setw(6) << r.dar << '\n';
  os << "per        " << std::setw(6) << r.per << '\n';
  return os.str();
}

}  // namespace mddkit
