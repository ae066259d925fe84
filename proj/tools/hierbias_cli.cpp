// hierbias: data generation, training, evaluation and sweeps from the shell.
//
// Exit codes: 0 ok, 1 usage, 2 data or invariant violation, 3 numerical
// failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "hierbias/config.hpp"
#include "hierbias/dataset.hpp"
#include "hierbias/errors.hpp"
#include "hierbias/eval.hpp"
#include "hierbias/report.hpp"
#include "hierbias/sweep.hpp"
#include "hierbias/text.hpp"
#include "hierbias/trainer.hpp"

namespace fs = std::filesystem;
using namespace hierbias;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  Config resolve() const {
    Config c = config_path.empty() ? Config{} : Config::from_file(config_path);
    c.apply_overrides(overrides);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "key = value settings file");
  cmd->add_option("--set", common.overrides, "override a setting (key=value), repeatable");
}

std::vector<Task> parse_tasks(const std::string& s) {
  if (s == "both") return {Task::Question, Task::Passive};
  std::vector<Task> out;
  for (const auto& t : split_list(s)) out.push_back(parse_task(t));
  if (out.empty()) throw UsageError("no task given");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------

int gen_data(const Common& common, const std::string& tasks, std::uint64_t seed, const fs::path& out) {
  Config c = common.resolve();
  c.set("data.seed", std::to_string(seed));
  SplitSizes sizes;
  sizes.n_train = static_cast<std::size_t>(c.get_int("data.train", static_cast<long long>(sizes.n_train)));
  sizes.n_test = static_cast<std::size_t>(c.get_int("data.test", static_cast<long long>(sizes.n_test)));
  sizes.n_gen = static_cast<std::size_t>(c.get_int("data.gen", static_cast<long long>(sizes.n_gen)));
  const auto grammar = Grammar::builtin();
  for (auto task : parse_tasks(tasks)) {
    const auto splits = build_transform_splits(task, grammar, sizes, seed);
    write_splits(splits, out);
    std::cout << to_string(task) << ": " << splits.train.size() << " train, " << splits.test.size() << " test, "
              << splits.gen.size() << " gen\n";
  }
  c.set("task", tasks);
  c.save(out / "config.snapshot");
  return 0;
}

int gen_corpus(const Common& common, const std::string& reg, std::size_t words, std::uint64_t seed,
               const std::string& source, const fs::path& out) {
  Config c = common.resolve();
  CorpusSpec spec{parse_register(reg), words, seed, {}};
  if (!source.empty()) spec.source_path = source;
  const auto lines = synth_corpus(spec, Grammar::builtin());
  write_lines(out, lines);
  const auto st = corpus_stats(lines);
  std::cout << "words " << st.words << "\nsentences " << st.sentences << "\nmean_length " << fmt(st.mean_length)
            << "\nmedian_length " << fmt(st.median_length) << "\ntype_token_ratio " << fmt(st.type_token_ratio)
            << "\nvocab_size " << st.vocab_size << "\n";
  c.set("corpus.register", reg);
  c.set("corpus.words", std::to_string(words));
  c.set("corpus.seed", std::to_string(seed));
  if (!source.empty()) c.set("corpus.source", source);
  c.save(fs::path(out.string() + ".snapshot"));
  return 0;
}

int train_tokenizer(const Common& common, const std::vector<std::string>& corpora, const fs::path& out) {
  Config c = common.resolve();
  TokenizerConfig tc;
  tc.mode = parse_tokenizer_mode(c.get_string("tokenizer.mode", "word"));
  tc.vocab_size = static_cast<int>(c.get_int("tokenizer.vocab_size", tc.vocab_size));
  tc.num_sentinels = static_cast<int>(c.get_int("tokenizer.sentinels", tc.num_sentinels));
  std::vector<std::string> lines;
  for (const auto& path : corpora) {
    if (!fs::exists(path)) throw DataError("corpus not found: " + path);
    const auto part = read_lines(path);
    lines.insert(lines.end(), part.begin(), part.end());
  }
  const auto tok = tc.mode == TokenizerMode::Word ? word_tokenizer(Grammar::builtin(), &lines, tc.num_sentinels)
                                                  : Tokenizer::train_subword(lines, tc);
  tok.save(out);
  c.set("tokenizer.mode", std::string(to_string(tc.mode)));
  c.save(fs::path(out.string() + ".snapshot"));
  std::cout << "ids " << tok.size() << "\n";
  return 0;
}

Transformer<float> initial_model(const ArchConfig& arch, const Tokenizer& tok, const std::string& init,
                                 std::uint64_t seed) {
  if (!init.empty()) {
    const auto ckpt = load_checkpoint(init);
    if (ckpt.tokenizer_fingerprint != tok.fingerprint()) {
      throw DataError("checkpoint " + init + " was trained with a different tokenizer");
    }
    return Transformer<float>::from_checkpoint(ckpt);
  }
  ArchConfig a = arch;
  a.vocab = tok.size();
  return Transformer<float>(a, derive_seed(seed, 0x1417));
}

void print_result(const TrainResult& r) {
  for (const auto& ck : r.checkpoints) std::cout << "checkpoint " << ck.path.string() << "\n";
  if (!r.losses.empty()) std::cout << "final loss " << fmt(r.losses.back()) << "\n";
}

int pretrain_cmd(const Common& common, const fs::path& corpus, const fs::path& tok_path, const fs::path& out,
                 std::optional<std::uint64_t> seed, const std::string& init) {
  Config c = common.resolve();
  if (seed) c.set("pretrain.seed", std::to_string(*seed));
  const auto arch = arch_from_config(c);
  auto tc = TrainConfig::from_config(c, Phase::Pretrain);
  tc.max_len = arch.max_len;
  if (!fs::exists(corpus)) throw DataError("corpus not found: " + corpus.string());
  const auto tok = Tokenizer::load(tok_path);
  auto model = initial_model(arch, tok, init, tc.seed);
  print_result(pretrain(model, read_lines(corpus), tok, tc, out, &c));
  return 0;
}

int finetune_cmd(const Common& common, const fs::path& data, const std::string& task, const fs::path& tok_path,
                 const fs::path& out, std::optional<std::uint64_t> seed, const std::string& init) {
  Config c = common.resolve();
  if (seed) c.set("finetune.seed", std::to_string(*seed));
  const auto arch = arch_from_config(c);
  auto tc = TrainConfig::from_config(c, Phase::Finetune);
  tc.max_len = arch.max_len;
  const auto tok = Tokenizer::load(tok_path);
  const auto train = read_split(data, parse_task(task), Split::Train);
  auto model = initial_model(arch, tok, init, tc.seed);
  c.set("task", task);
  print_result(finetune(model, train, tok, tc, out, &c));
  return 0;
}

int eval_cmd(const Common& common, const fs::path& run, const fs::path& data, const std::string& task_name,
             const fs::path& tok_path, const fs::path& out) {
  // Seed and pre-training labels come from the run's own snapshot.
  Config c;
  if (fs::exists(run / "config.snapshot")) c = Config::from_file(run / "config.snapshot");
  c.merge(common.resolve());
  const auto task = parse_task(task_name);
  const auto tok = Tokenizer::load(tok_path);
  const auto grammar = Grammar::builtin();
  const int max_decode = static_cast<int>(c.get_int("eval.max_decode_len", 64));
  std::vector<Split> splits;
  for (const auto& s : c.get_list("eval.splits")) splits.push_back(parse_split(s));
  if (splits.empty()) splits = {Split::Test, Split::Gen};

  const auto ckpts = list_checkpoints(run);
  if (ckpts.empty()) throw DataError("no checkpoints in " + run.string());
  std::vector<std::vector<TransformExample>> owned;
  for (auto s : splits) owned.push_back(read_split(data, task, s));
  std::vector<std::pair<Split, const std::vector<TransformExample>*>> sets;
  for (std::size_t i = 0; i < splits.size(); ++i) sets.emplace_back(splits[i], &owned[i]);

  const auto seed = static_cast<std::uint64_t>(c.get_int("finetune.seed", 0));
  const auto evals = evaluate_checkpoints(ckpts, sets, tok, grammar, max_decode, seed);
  const auto ckpt = load_checkpoint(ckpts.back().path);
  const std::string run_id = run.filename().empty() ? run.parent_path().filename().string() : run.filename().string();
  std::vector<std::string> rows{kResultHeader};
  for (const auto& ev : evals) {
    ResultRow base{run_id, task, ckpt.arch.fingerprint(), count_params(ckpt.arch),
                   c.get_string("pretrain.corpus", "none"), static_cast<std::size_t>(c.get_int("pretrain.words", 0)),
                   seed, ev.split, -1, ev.mean_seq_acc, ev.mean_targeted_acc};
    for (const auto& p : ev.per_checkpoint) {
      ResultRow r = base;
      r.step = p.step;
      r.seq_acc = p.seq_acc;
      r.targeted_acc = p.targeted_acc;
      rows.push_back(format_row(r));
    }
    rows.push_back(format_row(base));
    std::cout << to_string(ev.split) << ": checkpoint-mean seq_acc " << fmt(ev.mean_seq_acc) << ", targeted_acc "
              << fmt(ev.mean_targeted_acc) << "\n";
  }
  fs::create_directories(out);
  write_lines(out / "eval.csv", rows);

  // Predictions of the last checkpoint, for inspection.
  const auto model = Transformer<float>::from_checkpoint(ckpt);
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto preds = predict(model, owned[i], tok, max_decode);
    std::vector<std::string> lines{"source\ttarget\tprediction\ttargeted_correct"};
    for (std::size_t k = 0; k < preds.size(); ++k) {
      lines.push_back(join_words(owned[i][k].source) + "\t" + join_words(owned[i][k].target) + "\t" +
                      join_words(preds[k]) + "\t" + (targeted_correct(preds[k], owned[i][k], grammar) ? "1" : "0"));
    }
    write_lines(out / ("predictions_" + std::string(to_string(splits[i])) + ".tsv"), lines);
  }
  c.set("task", task_name);
  c.set("eval.run", run.string());
  c.save(out / "config.snapshot");
  return 0;
}

int oracle_check(const Common& common, const std::string& data, const std::string& tasks,
                 std::optional<std::uint64_t> seed) {
  Config c = common.resolve();
  const auto grammar = Grammar::builtin();
  std::vector<std::string> violations;
  std::cout << "task\trule\thypothesis\tsplit\tseq_acc\ttargeted_acc\n";
  for (auto task : parse_tasks(tasks)) {
    TransformSplits splits;
    if (!data.empty()) {
      splits.task = task;
      splits.train = read_split(data, task, Split::Train);
      splits.test = read_split(data, task, Split::Test);
      splits.gen = read_split(data, task, Split::Gen);
    } else {
      if (!seed) throw UsageError("oracle-check needs --data or --seed");
      SplitSizes sizes;
      sizes.n_train = static_cast<std::size_t>(c.get_int("data.train", static_cast<long long>(sizes.n_train)));
      sizes.n_test = static_cast<std::size_t>(c.get_int("data.test", static_cast<long long>(sizes.n_test)));
      sizes.n_gen = static_cast<std::size_t>(c.get_int("data.gen", static_cast<long long>(sizes.n_gen)));
      splits = build_transform_splits(task, grammar, sizes, *seed);
    }
    for (const auto& split : {Split::Train, Split::Test, Split::Gen}) {
      for (const auto& ex : splits.get(split)) validate_example(ex, grammar);
    }
    const auto scores = score_oracles(splits, grammar);
    for (const auto& s : scores) {
      std::cout << to_string(s.task) << '\t' << s.rule << '\t'
                << (s.hypothesis == Hypothesis::Hierarchical ? "hierarchical" : "linear") << '\t'
                << to_string(s.split) << '\t' << fmt(s.seq_acc) << '\t' << fmt(s.targeted_acc) << '\n';
    }
    const auto v = oracle_violations(scores);
    violations.insert(violations.end(), v.begin(), v.end());
  }
  for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
  return violations.empty() ? 0 : 2;
}

int experiment_cmd(const Common& common, const fs::path& out) {
  const auto cfg = ExperimentConfig::from_config(common.resolve());
  const auto r = run_experiment(cfg, Grammar::builtin(), out);
  for (const auto& s : r.summary) std::cout << format_summary(s) << "\n";
  for (const auto& f : r.failures) std::cerr << "failed: " << format_failure(f) << "\n";
  return r.rows.empty() ? 2 : 0;
}

int sweep_cmd(const Common& common, const fs::path& out) {
  const auto spec = SweepSpec::from_config(common.resolve());
  const auto r = run_sweep(spec, Grammar::builtin(), out);
  std::cout << r.analysis;
  for (const auto& f : r.failures) std::cerr << "failed: " << format_failure(f) << "\n";
  return r.rows.empty() ? 2 : 0;
}

int report_cmd(const fs::path& results, const fs::path& out, const std::string& split) {
  write_file(out, render_report(read_results(results), parse_split(split)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical generalization testbed"};
  app.require_subcommand(1);
  Common common;
  std::function<int()> action;

  std::string tasks = "both", task = "quest", reg = "simple", source, data, tok, init, run, split = "gen";
  std::string out;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> opt_seed;
  std::size_t words = 100000;
  std::vector<std::string> corpora;

  auto* gd = app.add_subcommand("gen-data", "generate train/test/gen splits");
  add_common(gd, common);
  gd->add_option("--task", tasks, "quest, passiv or both");
  gd->add_option("--seed", seed, "generation seed")->required();
  gd->add_option("--out", out, "output directory")->required();
  gd->callback([&] { action = [&] { return gen_data(common, tasks, seed, out); }; });

  auto* gc = app.add_subcommand("gen-corpus", "synthesize a pre-training corpus");
  add_common(gc, common);
  gc->add_option("--register", reg, "simple, complex or external");
  gc->add_option("--words", words, "word budget");
  gc->add_option("--seed", seed, "generation seed")->required();
  gc->add_option("--source", source, "text file for the external register");
  gc->add_option("--out", out, "output file")->required();
  gc->callback([&] { action = [&] { return gen_corpus(common, reg, words, seed, source, out); }; });

  auto* tt = app.add_subcommand("train-tokenizer", "build a word or subword tokenizer");
  add_common(tt, common);
  tt->add_option("--corpus", corpora, "corpus file(s)")->required();
  tt->add_option("--out", out, "tokenizer file")->required();
  tt->callback([&] { action = [&] { return train_tokenizer(common, corpora, out); }; });

  auto* pt = app.add_subcommand("pretrain", "span-denoising pre-training");
  add_common(pt, common);
  pt->add_option("--corpus", source, "corpus file")->required();
  pt->add_option("--tokenizer", tok, "tokenizer file")->required();
  pt->add_option("--out", out, "run directory")->required();
  pt->add_option("--seed", opt_seed, "initialization and data-order seed");
  pt->add_option("--init", init, "checkpoint to continue from");
  pt->callback([&] { action = [&] { return pretrain_cmd(common, source, tok, out, opt_seed, init); }; });

  auto* ft = app.add_subcommand("finetune", "fine-tune on a transformation task");
  add_common(ft, common);
  ft->add_option("--data", data, "split directory")->required();
  ft->add_option("--task", task, "quest or passiv");
  ft->add_option("--tokenizer", tok, "tokenizer file")->required();
  ft->add_option("--out", out, "run directory")->required();
  ft->add_option("--seed", opt_seed, "fine-tuning seed");
  ft->add_option("--init", init, "pre-trained checkpoint");
  ft->callback([&] { action = [&] { return finetune_cmd(common, data, task, tok, out, opt_seed, init); }; });

  auto* ev = app.add_subcommand("eval", "evaluate every checkpoint of a run");
  add_common(ev, common);
  ev->add_option("--run", run, "run directory with step_N.ckpt files")->required();
  ev->add_option("--data", data, "split directory")->required();
  ev->add_option("--task", task, "quest or passiv");
  ev->add_option("--tokenizer", tok, "tokenizer file")->required();
  ev->add_option("--out", out, "output directory")->required();
  ev->callback([&] { action = [&] { return eval_cmd(common, run, data, task, tok, out); }; });

  auto* oc = app.add_subcommand("oracle-check", "score the rule oracles on a dataset");
  add_common(oc, common);
  oc->add_option("--data", data, "split directory (generated from --seed when absent)");
  oc->add_option("--task", tasks, "quest, passiv or both");
  oc->add_option("--seed", opt_seed, "generation seed");
  oc->callback([&] { action = [&] { return oracle_check(common, data, tasks, opt_seed); }; });

  auto* ex = app.add_subcommand("experiment", "pre-train (optional), fine-tune and evaluate over seeds");
  add_common(ex, common);
  ex->add_option("--out", out, "output directory")->required();
  ex->callback([&] { action = [&] { return experiment_cmd(common, out); }; });

  auto* sw = app.add_subcommand("sweep", "run one experiment per value of one knob");
  add_common(sw, common);
  sw->add_option("--out", out, "output directory")->required();
  sw->callback([&] { action = [&] { return sweep_cmd(common, out); }; });

  auto* rp = app.add_subcommand("report", "render results as SVG");
  rp->add_option("--results", source, "results or sweep CSV")->required();
  rp->add_option("--out", out, "SVG file")->required();
  rp->add_option("--split", split, "split to plot");
  rp->callback([&] { action = [&] { return report_cmd(source, out, split); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
