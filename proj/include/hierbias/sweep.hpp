#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hierbias/config.hpp"
#include "hierbias/eval.hpp"

namespace hierbias {

enum class SweepAxis { NL, EL, DL, DM, FF, NH, KV, CorpusSize, Register };

std::string_view to_string(SweepAxis axis);
/// nl, el, dl, dm, ff, nh, kv, corpus_size, register (case-insensitive).
SweepAxis parse_sweep_axis(std::string_view s);
/// Experiment config key the axis overrides.
std::string axis_key(SweepAxis axis);

/// One knob varies; everything else comes from `base`.
struct SweepSpec {
  SweepAxis axis = SweepAxis::NL;
  /// Register values join concatenated components with '+'.
  std::vector<std::string> values;
  Config base;
  std::vector<Task> tasks{Task::Question};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Runs points concurrently, each in its own directory.
  bool parallel = false;

  void validate() const;
  /// sweep.axis, sweep.values, sweep.tasks, sweep.parallel and seeds; the
  /// whole config becomes the base.
  static SweepSpec from_config(const Config& c);
};

struct SweepResult {
  std::vector<ResultRow> rows;  // checkpoint means, point order
  std::vector<SummaryRow> summary;
  std::vector<FailureRow> failures;
  std::string analysis;
};

/// Run id of a sweep point, e.g. "NL-4-quest".
std::string point_run_id(SweepAxis axis, std::string_view value, Task task);

/// Runs every (value, task) point under out_dir/<run id>/, then writes
/// sweep.csv, sweep_summary.csv, failures.csv and analysis.txt. The
/// corpus_size axis draws nested subsamples of one corpus of the largest
/// size. A failing point is recorded and the sweep continues.
SweepResult run_sweep(const SweepSpec& spec, const Grammar& grammar, const std::filesystem::path& out_dir);

/// Per task, over the gen-split across-seed means: Spearman between size
/// (parameters, or pre-training words on the corpus_size axis) and
/// accuracy, and the slope against sizes normalized to the accuracy range.
std::string analyze_sweep(const std::vector<SummaryRow>& summary, SweepAxis axis);

}  // namespace hierbias
