#include "hierbias/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <optional>
#include <set>
#include <thread>

#include "hierbias/errors.hpp"
#include "hierbias/stats.hpp"
#include "hierbias/text.hpp"

namespace hierbias {

namespace {

constexpr std::pair<SweepAxis, std::string_view> kAxisNames[] = {
    {SweepAxis::NL, "NL"}, {SweepAxis::EL, "EL"}, {SweepAxis::DL, "DL"},
    {SweepAxis::DM, "DM"}, {SweepAxis::FF, "FF"}, {SweepAxis::NH, "NH"},
    {SweepAxis::KV, "KV"}, {SweepAxis::CorpusSize, "corpus_size"}, {SweepAxis::Register, "register"},
};

bool numeric_axis(SweepAxis a) { return a != SweepAxis::Register; }

}  // namespace

std::string_view to_string(SweepAxis axis) {
  for (const auto& [a, name] : kAxisNames) {
    if (a == axis) return name;
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view s) {
  const auto lower = to_lower(s);
  for (const auto& [a, name] : kAxisNames) {
    if (to_lower(name) == lower) return a;
  }
  throw UsageError("unknown sweep axis '" + std::string(s) + "'");
}

std::string axis_key(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::NL: return "arch.nl";
    case SweepAxis::EL: return "arch.el";
    case SweepAxis::DL: return "arch.dl";
    case SweepAxis::DM: return "arch.dm";
    case SweepAxis::FF: return "arch.ff";
    case SweepAxis::NH: return "arch.nh";
    case SweepAxis::KV: return "arch.kv";
    case SweepAxis::CorpusSize: return "pretrain.words";
    case SweepAxis::Register: return "pretrain.corpus";
  }
  return {};
}

void SweepSpec::validate() const {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  if (tasks.empty()) throw UsageError("sweep needs at least one task");
  if (seeds.empty()) throw UsageError("sweep needs at least one seed");
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(v).second) throw UsageError("sweep value '" + v + "' repeats");
    if (v.find_first_of(",\"\n/") != std::string::npos) throw UsageError("bad sweep value '" + v + "'");
    if (numeric_axis(axis) && parse_int(v, "sweep.values") <= 0) throw UsageError("sweep values must be positive");
  }
  if (axis == SweepAxis::CorpusSize && (!base.has("pretrain.corpus") || base.get("pretrain.corpus") == "none")) {
    throw UsageError("a corpus_size sweep needs pretrain.corpus in the base config");
  }
}

SweepSpec SweepSpec::from_config(const Config& c) {
  SweepSpec s;
  s.base = c;
  s.axis = parse_sweep_axis(c.get("sweep.axis"));
  s.values = c.get_list("sweep.values");
  if (c.has("sweep.tasks")) {
    s.tasks.clear();
    for (const auto& t : c.get_list("sweep.tasks")) s.tasks.push_back(parse_task(t));
  }
  if (c.has("seeds")) {
    s.seeds.clear();
    for (const auto& v : c.get_list("seeds")) s.seeds.push_back(static_cast<std::uint64_t>(parse_int(v, "seeds")));
  }
  s.parallel = c.get_bool("sweep.parallel", false);
  s.validate();
  return s;
}

std::string point_run_id(SweepAxis axis, std::string_view value, Task task) {
  return std::string(to_string(axis)) + "-" + std::string(value) + "-" + std::string(to_string(task));
}

namespace {

struct Point {
  std::string value;
  Task task;
  std::string run_id;
  const std::vector<std::string>* corpus = nullptr;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const Grammar& grammar, const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  Config snap = spec.base;
  snap.save(out_dir / "config.snapshot");

  // Corpus-size points share nested subsamples of one corpus.
  std::vector<std::vector<std::string>> subsamples;
  std::vector<std::string> sorted_values = spec.values;
  if (spec.axis == SweepAxis::CorpusSize) {
    std::sort(sorted_values.begin(), sorted_values.end(),
              [](const auto& a, const auto& b) { return parse_int(a, "size") < parse_int(b, "size"); });
    std::vector<std::size_t> sizes;
    for (const auto& v : sorted_values) sizes.push_back(static_cast<std::size_t>(parse_int(v, "sweep.values")));
    Config big = spec.base;
    big.set("pretrain.words", std::to_string(sizes.back()));
    const auto full = ExperimentConfig::from_config(big);
    const auto corpus = build_pretrain_corpus(*full.pretrain, grammar);
    subsamples = subsample_nested(corpus, sizes, derive_seed(full.pretrain->corpus_seed, 0x55));
  }

  std::vector<Point> points;
  for (const auto& v : spec.values) {
    for (auto task : spec.tasks) {
      Point p{v, task, point_run_id(spec.axis, v, task)};
      if (spec.axis == SweepAxis::CorpusSize) {
        const auto idx = std::find(sorted_values.begin(), sorted_values.end(), v) - sorted_values.begin();
        p.corpus = &subsamples[static_cast<std::size_t>(idx)];
      }
      points.push_back(p);
    }
  }

  auto run_point = [&](const Point& p) -> ExperimentResult {
    Config c = spec.base;
    std::string value = p.value;
    if (spec.axis == SweepAxis::Register) std::replace(value.begin(), value.end(), '+', ',');
    c.set(axis_key(spec.axis), value);
    if (spec.axis == SweepAxis::NL) {
      c.set("arch.el", value);
      c.set("arch.dl", value);
    }
    c.set("task", std::string(to_string(p.task)));
    c.set("run_id", p.run_id);
    std::vector<std::string> seeds;
    for (auto s : spec.seeds) seeds.push_back(std::to_string(s));
    std::string joined;
    for (const auto& s : seeds) joined += (joined.empty() ? "" : ",") + s;
    c.set("seeds", joined);
    try {
      const auto cfg = ExperimentConfig::from_config(c);
      return run_experiment(cfg, grammar, out_dir / p.run_id, p.corpus);
    } catch (const std::exception& e) {
      ExperimentResult r;
      r.failures.push_back({p.run_id, 0, "point", e.what()});
      return r;
    }
  };

  std::vector<ExperimentResult> results(points.size());
  if (spec.parallel) {
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < points.size(); start += workers) {
      std::vector<std::future<ExperimentResult>> futures;
      for (std::size_t i = start; i < std::min(points.size(), start + workers); ++i) {
        futures.push_back(std::async(std::launch::async, run_point, std::cref(points[i])));
      }
      for (std::size_t i = 0; i < futures.size(); ++i) results[start + i] = futures[i].get();
    }
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) results[i] = run_point(points[i]);
  }

  SweepResult out;
  for (const auto& r : results) {
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.failures.insert(out.failures.end(), r.failures.begin(), r.failures.end());
  }
  out.summary = summarize(out.rows);
  out.analysis = analyze_sweep(out.summary, spec.axis);

  std::vector<std::string> rows{kResultHeader}, summary{kSummaryHeader}, failures{kFailureHeader};
  for (const auto& r : out.rows) rows.push_back(format_row(r));
  for (const auto& r : out.summary) summary.push_back(format_summary(r));
  for (const auto& r : out.failures) failures.push_back(format_failure(r));
  write_lines(out_dir / "sweep.csv", rows);
  write_lines(out_dir / "sweep_summary.csv", summary);
  write_lines(out_dir / "failures.csv", failures);
  write_file(out_dir / "analysis.txt", out.analysis);
  return out;
}

std::string analyze_sweep(const std::vector<SummaryRow>& summary, SweepAxis axis) {
  const bool by_words = axis == SweepAxis::CorpusSize;
  std::string out = "axis " + std::string(to_string(axis)) + "\n";
  std::vector<Task> tasks;
  for (const auto& s : summary) {
    if (std::find(tasks.begin(), tasks.end(), s.task) == tasks.end()) tasks.push_back(s.task);
  }
  for (auto task : tasks) {
    out += "\ntask " + std::string(to_string(task)) + "\n";
    out += "run_id\tsplit\tparams\tpretrain_words\tseq_acc\ttargeted_acc\n";
    std::vector<double> xs, targeted, seq;
    for (const auto& s : summary) {
      if (s.task != task) continue;
      out += s.run_id + "\t" + std::string(to_string(s.split)) + "\t" + std::to_string(s.params) + "\t" +
             std::to_string(s.pretrain_words) + "\t" + fmt("%.4f", s.seq_mean) + " +- " + fmt("%.4f", s.seq_std) +
             "\t" + fmt("%.4f", s.targeted_mean) + " +- " + fmt("%.4f", s.targeted_std) + "\n";
      if (s.split != Split::Gen) continue;
      xs.push_back(by_words ? static_cast<double>(s.pretrain_words) : static_cast<double>(s.params));
      targeted.push_back(s.targeted_mean);
      seq.push_back(s.seq_mean);
    }
    const std::string xname = by_words ? "pretrain_words" : "params";
    for (const auto& [name, ys] : {std::pair{"targeted_acc", targeted}, std::pair{"seq_acc", seq}}) {
      out += "gen " + std::string(name) + " vs " + xname + ": ";
      try {
        const auto r = spearman(xs, ys);
        out += "spearman " + fmt("%.4f", r.rho) + " (p " + fmt("%.4f", r.p) + ")";
      } catch (const DataError& e) {
        out += std::string("spearman n/a (") + e.what() + ")";
      }
      try {
        out += ", slope " + fmt("%.4f", normalized_slope(xs, ys));
      } catch (const DataError& e) {
        out += std::string(", slope n/a (") + e.what() + ")";
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace hierbias
