#include "doctest.h"

#include <filesystem>

#include "hierbias/errors.hpp"
#include "hierbias/report.hpp"
#include "hierbias/sweep.hpp"
#include "hierbias/text.hpp"

using namespace hierbias;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hierbias_analysis_" + name);
  fs::remove_all(p);
  return p;
}

Config tiny_base() {
  return Config::parse(
      "arch.el = 1\narch.dl = 1\narch.dm = 16\narch.ff = 32\narch.nh = 2\narch.kv = 8\narch.max_len = 48\n"
      "data.train = 120\ndata.test = 30\ndata.gen = 30\n"
      "tokenizer.sentinels = 8\n"
      "finetune.steps = 4\nfinetune.checkpoint_every = 2\nfinetune.batch = 8\n"
      "pretrain.steps = 2\npretrain.batch = 4\n"
      "seeds = 1,2\neval.max_decode_len = 24\n");
}

ResultRow row(const std::string& run, std::int64_t params, std::size_t words, std::uint64_t seed, double tgt) {
  return {run, Task::Question, "arch", params, words ? "simple" : "none", words, seed, Split::Gen, -1, tgt / 2, tgt};
}

}  // namespace

TEST_CASE("sweep spec parsing and validation") {
  CHECK(parse_sweep_axis("nl") == SweepAxis::NL);
  CHECK(parse_sweep_axis("Corpus_Size") == SweepAxis::CorpusSize);
  CHECK_THROWS_AS(parse_sweep_axis("depth"), UsageError);
  CHECK(point_run_id(SweepAxis::DM, "64", Task::Passive) == "DM-64-passiv");

  auto c = tiny_base();
  c.set("sweep.axis", "NL");
  c.set("sweep.values", "1,2");
  c.set("sweep.tasks", "quest,passiv");
  const auto s = SweepSpec::from_config(c);
  CHECK(s.values.size() == 2);
  CHECK(s.tasks.size() == 2);
  c.set("sweep.values", "1,1");
  CHECK_THROWS_AS(SweepSpec::from_config(c), UsageError);
  c.set("sweep.values", "");
  CHECK_THROWS_AS(SweepSpec::from_config(c), UsageError);
  c.set("sweep.axis", "corpus_size");
  c.set("sweep.values", "1000");
  CHECK_THROWS_AS(SweepSpec::from_config(c), UsageError);
}

TEST_CASE("architecture sweep rows and rerun determinism") {
  const auto g = Grammar::builtin();
  auto c = tiny_base();
  c.set("sweep.axis", "NL");
  c.set("sweep.values", "1,2,3");
  const auto spec = SweepSpec::from_config(c);
  const auto a = scratch("nl_a"), b = scratch("nl_b");
  const auto r = run_sweep(spec, g, a);
  CHECK(r.failures.empty());
  CHECK(r.rows.size() == 3 * 1 * 2 * 2);  // values x tasks x seeds x splits
  CHECK(read_lines(a / "sweep.csv").size() == r.rows.size() + 1);
  CHECK(r.summary.size() == 3 * 2);
  CHECK(r.summary[0].params < r.summary[2].params);
  CHECK(r.analysis.find("spearman") != std::string::npos);
  CHECK(fs::exists(a / "analysis.txt"));
  CHECK(fs::exists(a / "NL-2-quest" / "results.csv"));

  run_sweep(spec, g, b);
  CHECK(read_file(a / "sweep.csv") == read_file(b / "sweep.csv"));
  CHECK(read_file(a / "analysis.txt") == read_file(b / "analysis.txt"));
}

TEST_CASE("corpus size sweep uses nested subsamples") {
  const auto g = Grammar::builtin();
  auto c = tiny_base();
  c.set("pretrain.corpus", "simple");
  c.set("sweep.axis", "corpus_size");
  c.set("sweep.values", "4000,2000");
  c.set("seeds", "1");
  const auto dir = scratch("size");
  const auto r = run_sweep(SweepSpec::from_config(c), g, dir);
  CHECK(r.failures.empty());
  REQUIRE(r.rows.size() == 4);
  // Value order is kept; words follow the requested budgets.
  CHECK(r.rows[0].pretrain_words >= 4000);
  CHECK(r.rows[2].pretrain_words >= 2000);
  CHECK(r.rows[2].pretrain_words < r.rows[0].pretrain_words);
  const auto small = read_lines(dir / "corpus_size-2000-quest" / "data" / "quest_train.tsv");
  CHECK(!small.empty());
}

TEST_CASE("a failing sweep point is recorded") {
  const auto g = Grammar::builtin();
  auto c = tiny_base();
  c.set("pretrain.steps", "1");
  c.set("pretrain.words", "2000");
  c.set("sweep.axis", "register");
  c.set("sweep.values", "simple,bogus");
  c.set("seeds", "1");
  const auto r = run_sweep(SweepSpec::from_config(c), g, scratch("bad"));
  CHECK(r.rows.size() == 2);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].run_id == "register-bogus-quest");
}

TEST_CASE("analysis over summary rows") {
  std::vector<ResultRow> rows;
  for (std::uint64_t s : {1, 2}) {
    rows.push_back(row("a", 100, 0, s, 0.1));
    rows.push_back(row("b", 200, 0, s, 0.3));
    rows.push_back(row("c", 400, 0, s, 0.7));
  }
  const auto text = analyze_sweep(summarize(rows), SweepAxis::DM);
  CHECK(text.find("spearman 1.0000") != std::string::npos);
  CHECK(text.find("slope 1.0000") != std::string::npos);
  const auto two = analyze_sweep(summarize({row("a", 1, 0, 1, 0.1), row("b", 2, 0, 1, 0.2)}), SweepAxis::DM);
  CHECK(two.find("spearman n/a") != std::string::npos);
}

TEST_CASE("report panels and bands") {
  std::vector<ResultRow> rows;
  rows.push_back(row("s1", 100, 1000, 1, 0.2));
  rows.push_back(row("s1", 100, 1000, 2, 0.4));
  rows.push_back(row("s2", 100, 100000, 1, 0.6));
  rows.push_back(row("s2", 100, 100000, 2, 0.6));
  const auto panels = build_panels(rows);
  REQUIRE(panels.size() == 1);
  CHECK(panels[0].scale == XScale::Log);
  const auto& t = panels[0].series[0];
  CHECK(t.x == std::vector<double>{3.0, 5.0});
  CHECK(t.mean[0] == doctest::Approx(0.3));
  CHECK(t.std[0] == doctest::Approx(0.141421356));
  CHECK(t.std[1] == 0.0);

  const auto svg = render_svg(panels);
  const auto f = frame_for(panels[0], 0);
  char upper[64];
  std::snprintf(upper, sizeof(upper), "%.2f,%.2f", f.px(3.0), f.py(0.3 + t.std[0]));
  char lower[64];
  std::snprintf(lower, sizeof(lower), "%.2f,%.2f", f.px(3.0), f.py(0.3 - t.std[0]));
  CHECK(svg.find(upper) != std::string::npos);
  CHECK(svg.find(lower) != std::string::npos);
  CHECK(render_report(rows) == svg);
  CHECK(svg.find("(log)") != std::string::npos);
}

TEST_CASE("report edge cases") {
  CHECK_THROWS_AS(render_report({}), DataError);
  CHECK_THROWS_AS(render_report({row("a", 1, 0, 1, 0.5)}, Split::Test), DataError);
  const auto single = render_report({row("a", 1, 0, 1, 0.5)});
  CHECK(single.find("<circle") != std::string::npos);
  CHECK(single.find("<polyline") == std::string::npos);
  // Same parameters for different runs fall back to categories.
  const auto panels = build_panels({row("x", 5, 0, 1, 0.1), row("y", 5, 0, 1, 0.2)});
  CHECK(panels[0].scale == XScale::Categorical);
  CHECK(panels[0].categories == std::vector<std::string>{"x", "y"});
}
