#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "hierbias/errors.hpp"
#include "hierbias/eval.hpp"
#include "hierbias/rng.hpp"
#include "hierbias/text.hpp"

using namespace hierbias;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hierbias_eval_" + name);
  fs::remove_all(p);
  return p;
}

Config tiny_experiment(const std::string& run_id) {
  return Config::parse(
      "run_id = " + run_id +
      "\n"
      "arch.el = 1\narch.dl = 1\narch.dm = 16\narch.ff = 32\narch.nh = 2\narch.kv = 8\narch.max_len = 48\n"
      "data.train = 200\ndata.test = 40\ndata.gen = 40\ndata.seed = 3\n"
      "tokenizer.sentinels = 8\n"
      "finetune.steps = 6\nfinetune.checkpoint_every = 3\nfinetune.batch = 8\n"
      "seeds = 1,2\neval.max_decode_len = 24\n");
}

}  // namespace

TEST_CASE("sequence accuracy") {
  const std::vector<Tokens> a{{"a", "b"}, {"c"}};
  CHECK(sequence_accuracy(a, a) == 1.0);
  CHECK(sequence_accuracy(a, {{"a", "b"}, {"d"}}) == 0.5);
  CHECK(sequence_accuracy({{"a", "b"}}, {{"a", "b", "c"}}) == 0.0);
  CHECK_THROWS_AS(sequence_accuracy(a, {{"a"}}), DataError);
}

TEST_CASE("oracle calibration reproduces the 1/0 pattern") {
  const auto g = Grammar::builtin();
  for (auto task : {Task::Question, Task::Passive}) {
    const auto splits = build_transform_splits(task, g, SplitSizes{500, 200, 200}, 17);
    const auto scores = score_oracles(splits, g);
    CHECK(scores.size() == 6);
    CHECK(oracle_violations(scores).empty());
    for (const auto& s : scores) {
      if (s.hypothesis == Hypothesis::Hierarchical) CHECK(s.targeted_acc == 1.0);
      if (s.hypothesis == Hypothesis::Linear && s.split == Split::Gen) CHECK(s.seq_acc == 0.0);
    }
  }
  OracleScore bad{Task::Question, "move-first", Hypothesis::Linear, Split::Gen, 0.0, 0.25};
  CHECK(oracle_violations({bad}).size() == 1);
}

TEST_CASE("targeted metrics read only the relevant word") {
  const auto g = Grammar::builtin();
  const auto q = build_transform_splits(Task::Question, g, SplitSizes{5, 5, 5}, 2).gen.front();
  Tokens pred = q.target;
  std::fill(pred.begin() + 1, pred.end(), "newt");
  CHECK(main_aux_correct(pred, q));
  CHECK(sequence_accuracy({pred}, {q.target}) == 0.0);
  CHECK(!main_aux_correct({}, q));

  const auto p = build_transform_splits(Task::Passive, g, SplitSizes{5, 5, 5}, 2).gen.front();
  CHECK(object_correct(p.target, p, g));
  // No lexicon noun before the first verb.
  CHECK(!object_correct({"the", "was", p.source.at(p.meta.object_idx)}, p, g));
  CHECK(initial_np_head({"the", "was", "newt"}, g).empty());
}

TEST_CASE("targeted accuracy dominates sequence accuracy") {
  const auto g = Grammar::builtin();
  Rng rng(5);
  for (auto task : {Task::Question, Task::Passive}) {
    const auto ex = build_transform_splits(task, g, SplitSizes{5, 5, 300}, 8).gen;
    std::vector<Tokens> preds;
    for (const auto& e : ex) {
      Tokens t = e.target;
      const auto r = rng.below(4);
      if (r == 1 && t.size() > 2) t.erase(t.begin() + static_cast<long>(rng.below(t.size())));
      if (r == 2) std::swap(t.front(), t.back());
      if (r == 3) t.push_back("?");
      preds.push_back(t);
    }
    std::vector<Tokens> refs;
    for (const auto& e : ex) refs.push_back(e.target);
    CHECK(targeted_accuracy(preds, ex, g) >= sequence_accuracy(preds, refs));
    CHECK(targeted_accuracy(preds, ex, g) < 1.0);
  }
}

TEST_CASE("checkpoint means") {
  EvalResult r;
  r.per_checkpoint = {{500, 0.4, 0.5}, {1000, 0.6, 0.7}};
  finalize_means(r);
  CHECK(r.mean_seq_acc == doctest::Approx(0.5));
  CHECK(r.mean_targeted_acc == doctest::Approx(0.6));
  EvalResult empty;
  CHECK_THROWS_AS(finalize_means(empty), DataError);
  CHECK(mean_std({1, 2, 3}).second == doctest::Approx(1.0));
  CHECK(mean_std({4}).second == 0.0);
}

TEST_CASE("evaluate_checkpoints over a trained run") {
  const auto g = Grammar::builtin();
  auto splits = build_transform_splits(Task::Question, g, SplitSizes{200, 40, 40}, 3);
  const auto tok = word_tokenizer(g, nullptr, 8);
  ArchConfig arch{1, 1, 16, 32, 2, 8, tok.size(), 48, true};
  Transformer<float> model(arch, 1);
  TrainConfig tc = default_config(Phase::Finetune);
  tc.steps = 4;
  tc.checkpoint_every = 2;
  tc.batch = 8;
  tc.max_len = 48;
  const auto dir = scratch("ckpts");
  const auto trained = finetune(model, splits.train, tok, tc, dir);
  CHECK(list_checkpoints(dir).size() == 2);
  CHECK(list_checkpoints(dir)[1].step == 4);

  const auto one = evaluate_checkpoints({trained.checkpoints[0]}, {{Split::Gen, &splits.gen}}, tok, g, 24);
  REQUIRE(one.size() == 1);
  CHECK(one[0].mean_seq_acc == one[0].per_checkpoint[0].seq_acc);
  CHECK(one[0].mean_targeted_acc == one[0].per_checkpoint[0].targeted_acc);

  const auto both = evaluate_checkpoints(trained.checkpoints, {{Split::Gen, &splits.gen}}, tok, g, 24);
  auto reversed = splits.gen;
  std::reverse(reversed.begin(), reversed.end());
  const auto rev = evaluate_checkpoints(trained.checkpoints, {{Split::Gen, &reversed}}, tok, g, 24);
  CHECK(rev[0].mean_targeted_acc == both[0].mean_targeted_acc);
  CHECK(rev[0].mean_seq_acc == both[0].mean_seq_acc);

  CHECK_THROWS_AS(evaluate_checkpoints({}, {{Split::Gen, &splits.gen}}, tok, g, 24), DataError);
  const auto other = word_tokenizer(g, nullptr, 4);
  CHECK_THROWS_AS(evaluate_checkpoints(trained.checkpoints, {{Split::Gen, &splits.gen}}, other, g, 24), DataError);
}

TEST_CASE("experiment config round trip") {
  auto c = tiny_experiment("cfg");
  c.set("pretrain.corpus", "simple,complex");
  c.set("pretrain.words", "5000");
  const auto e = ExperimentConfig::from_config(c);
  CHECK(e.arch.el == 1);
  CHECK(e.seeds == std::vector<std::uint64_t>{1, 2});
  REQUIRE(e.pretrain);
  CHECK(e.pretrain->registers.size() == 2);
  CHECK(e.pretrain_label() == "simple+complex");
  Config back;
  e.write_to(back);
  const auto e2 = ExperimentConfig::from_config(back);
  CHECK(e2.arch == e.arch);
  CHECK(e2.pretrain->words == 5000);
  CHECK(e2.finetune.steps == 6);

  c.set("run_id", "a,b");
  CHECK_THROWS_AS(ExperimentConfig::from_config(c), UsageError);
}

TEST_CASE("run_experiment rows, files and determinism") {
  const auto g = Grammar::builtin();
  const auto cfg = ExperimentConfig::from_config(tiny_experiment("tiny"));
  const auto a = scratch("exp_a"), b = scratch("exp_b");
  const auto r = run_experiment(cfg, g, a);
  CHECK(r.failures.empty());
  CHECK(r.rows.size() == 2 * 2);  // seeds x splits
  CHECK(r.checkpoints.size() == 2 * 2 * 2);
  REQUIRE(r.summary.size() == 2);
  CHECK(r.summary[0].seeds == 2);
  for (const auto* f : {"results.csv", "summary.csv", "failures.csv", "checkpoints.csv", "config.snapshot"}) {
    CHECK(fs::exists(a / f));
  }
  CHECK(read_lines(a / "results.csv")[0] == kResultHeader);
  const auto rows = read_results(a / "results.csv");
  CHECK(rows.size() == 4);
  CHECK(rows[0].step == -1);
  CHECK(rows[0].pretrain_corpus == "none");

  run_experiment(cfg, g, b);
  for (const auto* f : {"results.csv", "summary.csv", "checkpoints.csv"}) CHECK(read_file(a / f) == read_file(b / f));
  CHECK(read_file(a / "seed_2" / "step_6.ckpt") == read_file(b / "seed_2" / "step_6.ckpt"));
}

TEST_CASE("run_experiment with pre-training shares one checkpoint") {
  const auto g = Grammar::builtin();
  auto c = tiny_experiment("pre");
  c.set("pretrain.corpus", "simple");
  c.set("pretrain.words", "3000");
  c.set("pretrain.steps", "3");
  c.set("pretrain.batch", "4");
  c.set("seeds", "4");
  const auto dir = scratch("pre");
  const auto r = run_experiment(ExperimentConfig::from_config(c), g, dir);
  CHECK(r.failures.empty());
  CHECK(fs::exists(dir / "pretrain" / "step_3.ckpt"));
  REQUIRE(!r.rows.empty());
  CHECK(r.rows[0].pretrain_corpus == "simple");
  CHECK(r.rows[0].pretrain_words >= 3000);
}

TEST_CASE("a failing seed is recorded and the others continue") {
  const auto g = Grammar::builtin();
  auto c = tiny_experiment("fail");
  c.set("finetune.lr", "1e30");
  c.set("finetune.clip_norm", "0");
  const auto r = run_experiment(ExperimentConfig::from_config(c), g, scratch("fail"));
  CHECK(r.rows.empty());
  REQUIRE(r.failures.size() == 2);
  CHECK(r.failures[0].stage == "finetune");
  CHECK(r.failures[1].seed == 2);
}
