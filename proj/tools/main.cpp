// Command-line front end: train/evaluate the three text-classification
// architectures, inspect parameter counts, and run the data-pipeline and
// statistics utilities. Machine-readable output (TSV/CSV) goes to stdout,
// human summaries to stderr. Exit codes: 0 success, 1 runtime error, 2 usage
// error.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "textnn/checkpoint.hpp"
#include "textnn/data.hpp"
#include "textnn/stats.hpp"
#include "textnn/train.hpp"

namespace fs = std::filesystem;

namespace {

std::string shape_tsv(const textnn::Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t consumed = 0;
    const double v = std::stod(item, &consumed);
    while (consumed < item.size() && std::isspace(static_cast<unsigned char>(item[consumed])))
      ++consumed;
    if (consumed != item.size())
      throw textnn::ContractError("cannot parse number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::map<std::string, std::string> read_kv_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw textnn::IoError("cannot open '" + path.string() + "' for reading");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw textnn::IoError("malformed key=value line '" + line + "' in '" + path.string() + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// Everything needed to score documents with a finished run.
struct LoadedRun {
  textnn::Model model;
  textnn::Corpus corpus;
  textnn::Vocab vocab;
  textnn::SplitPlan plan;
  std::size_t batch_size = 64;
  std::size_t max_len = 400;
};

LoadedRun load_run(const fs::path& run_dir, const fs::path& data_dir) {
  const textnn::CheckpointData ckpt = textnn::load_checkpoint(run_dir / "model.ckpt");
  LoadedRun run{textnn::model_from_checkpoint(ckpt),
                textnn::load_corpus(data_dir),
                textnn::load_vocab(run_dir / "vocab.txt"),
                textnn::load_split(run_dir / "split.txt")};
  const auto kv = read_kv_file(run_dir / "config.txt");
  if (auto it = kv.find("batch_size"); it != kv.end()) run.batch_size = std::stoull(it->second);
  if (auto it = kv.find("max_len"); it != kv.end()) run.max_len = std::stoull(it->second);
  return run;
}

const std::vector<std::string>& split_ids(const textnn::SplitPlan& plan, const std::string& name) {
  if (name == "train") return plan.train_ids;
  if (name == "val") return plan.val_ids;
  if (name == "test") return plan.test_ids;
  throw textnn::ContractError("unknown split '" + name + "' (expected train, val or test)");
}

int run_count_params(const std::string& arch, std::size_t vocab, std::size_t classes,
                     std::size_t dim, std::size_t pointwise, bool stacked) {
  const textnn::ArchSpec spec = textnn::make_arch(arch, vocab, classes, dim, pointwise, stacked);
  const textnn::ParamCountTable table = textnn::count_params(spec);
  for (const textnn::ParamCountRow& row : table.rows)
    std::cout << row.name << '\t' << shape_tsv(row.shape) << '\t' << row.count << '\n';
  std::cout << "total\t-\t" << table.total << '\n';
  std::cerr << arch << ": " << table.total << " trainable parameters (embedding "
            << table.embedding << ", other " << table.non_embedding() << ")\n";
  return 0;
}

void print_eval_result(const textnn::EvalResult& ev, const textnn::Corpus& corpus) {
  std::cout << "accuracy_pct\t" << fmt17(ev.accuracy_pct) << '\n';
  std::cout << "mean_loss\t" << fmt17(ev.mean_loss) << '\n';
  for (std::size_t i = 0; i < corpus.classes.size(); ++i) {
    std::size_t total = 0;
    for (std::size_t v : ev.confusion[i]) total += v;
    std::cout << "class\t" << corpus.classes[i] << '\t' << ev.confusion[i][i] << '\t' << total
              << '\n';
  }
  std::cerr << "accuracy " << ev.accuracy_pct << "% over " << ev.total() << " documents, mean loss "
            << ev.mean_loss << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-classification CNN toolkit"};
  app.require_subcommand(1);

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train an architecture on a corpus directory");
  textnn::RunConfig cfg;
  std::string clock_name = "real";
  train_cmd->set_config("--config", "", "key=value file with defaults for these options");
  train_cmd->add_option("--data", cfg.data_dir, "corpus root directory")->required();
  train_cmd->add_option("--out", cfg.out_dir, "run output directory")->required();
  train_cmd->add_option("--arch", cfg.arch, "base | optimized | lightweight")
      ->check(CLI::IsMember({"base", "optimized", "lightweight"}));
  train_cmd->add_option("--seed", cfg.seed, "rng seed");
  train_cmd->add_option("--epochs", cfg.epochs, "training epochs");
  train_cmd->add_option("--batch-size", cfg.batch_size, "documents per step");
  train_cmd->add_option("--eval-every", cfg.eval_every, "validation cadence in steps");
  train_cmd->add_option("--max-len", cfg.max_len, "tokens per document after pad/truncate");
  train_cmd->add_option("--min-freq", cfg.min_freq, "minimum token frequency for the vocabulary");
  train_cmd->add_option("--dim", cfg.embedding_dim, "embedding dimension");
  train_cmd->add_option("--pointwise-channels", cfg.pointwise_channels,
                        "lightweight pointwise projection width")
      ->check(CLI::IsMember({120, 128}));
  train_cmd->add_flag("--stacked-pair", cfg.stacked_pair,
                      "optimized only: replace the height-5 branch with two stacked height-3 stages");
  train_cmd->add_flag("--stratify", cfg.stratify, "split each class with the same ratios");
  train_cmd->add_option("--optimizer", cfg.optimizer, "adam | sgd | swats")
      ->check(CLI::IsMember({"adam", "sgd", "swats"}));
  train_cmd->add_option("--switch-step", cfg.switch_step, "swats: switch to SGD at this step");
  train_cmd->add_option("--lr", cfg.adam_lr, "Adam learning rate");
  train_cmd->add_option("--sgd-lr", cfg.sgd_lr, "SGD learning rate");
  train_cmd->add_option("--decay", cfg.decay, "staircase lr decay coefficient in (0,1]");
  train_cmd->add_option("--decay-interval", cfg.decay_interval,
                        "steps per decay rung (0 = one epoch)");
  train_cmd->add_option("--dropout", cfg.dropout, "dropout rate in [0,1)");
  train_cmd->add_option("--l2", cfg.l2, "L2 coefficient (negative = architecture default)");
  train_cmd->add_option("--leaky-alpha", cfg.leaky_alpha, "leaky ReLU slope");
  train_cmd->add_option("--clock", clock_name, "real | fixed (fixed zeroes elapsed_s)")
      ->check(CLI::IsMember({"real", "fixed"}));

  // --- eval / confusion ------------------------------------------------------
  fs::path run_dir, data_dir;
  std::string eval_split = "val";
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--run", run_dir, "training output directory")->required();
    cmd->add_option("--data", data_dir, "corpus root directory")->required();
    cmd->add_option("--split", eval_split, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));
  };
  auto* eval_cmd = app.add_subcommand("eval", "score one split of a finished run");
  add_run_options(eval_cmd);
  auto* confusion_cmd =
      app.add_subcommand("confusion", "per-class confusion counts for one split");
  add_run_options(confusion_cmd);

  // --- count-params ----------------------------------------------------------
  auto* count_cmd = app.add_subcommand("count-params", "per-layer trainable parameter table");
  std::string count_arch_pos, count_arch_flag;
  std::size_t count_vocab = 0, count_classes = 0, count_dim = 200, count_pointwise = 120;
  bool count_stacked = false;
  count_cmd->add_option("architecture", count_arch_pos, "base | optimized | lightweight");
  count_cmd->add_option("--arch", count_arch_flag, "base | optimized | lightweight");
  count_cmd->add_option("--vocab", count_vocab, "vocabulary size")->required();
  count_cmd->add_option("--classes", count_classes, "number of classes")->required();
  count_cmd->add_option("--dim", count_dim, "embedding dimension");
  count_cmd->add_option("--pointwise-channels", count_pointwise,
                        "lightweight pointwise projection width")
      ->check(CLI::IsMember({120, 128}));
  count_cmd->add_flag("--stacked-pair", count_stacked,
                      "optimized only: two stacked height-3 stages instead of height 5");

  // --- split -------------------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "deterministic train/val/test split of a corpus");
  fs::path split_input, split_out;
  std::uint64_t split_seed = 0;
  bool split_stratify = false;
  split_cmd->add_option("--input", split_input, "corpus root directory")->required();
  split_cmd->add_option("--seed", split_seed, "rng seed");
  split_cmd->add_option("--out", split_out, "plan file (default: stdout)");
  split_cmd->add_flag("--stratify", split_stratify, "split each class with the same ratios");

  // --- vocab ---------------------------------------------------------------------
  auto* vocab_cmd =
      app.add_subcommand("vocab", "vocabulary from the train side of a seeded split");
  fs::path vocab_input, vocab_out;
  std::uint64_t vocab_seed = 0;
  std::size_t vocab_min_freq = 1;
  bool vocab_stratify = false;
  vocab_cmd->add_option("--input", vocab_input, "corpus root directory")->required();
  vocab_cmd->add_option("--seed", vocab_seed, "rng seed (must match the training split)");
  vocab_cmd->add_option("--min-freq", vocab_min_freq, "minimum token frequency");
  vocab_cmd->add_option("--out", vocab_out, "vocab file (default: stdout)");
  vocab_cmd->add_flag("--stratify", vocab_stratify, "split each class with the same ratios");

  // --- ttest ----------------------------------------------------------------------
  auto* ttest_cmd = app.add_subcommand("ttest", "two-sided Welch t-test on two samples");
  std::string sample_a, sample_b;
  double alpha = 0.05;
  ttest_cmd->add_option("--a", sample_a, "comma-separated sample values")->required();
  ttest_cmd->add_option("--b", sample_b, "comma-separated sample values")->required();
  ttest_cmd->add_option("--alpha", alpha, "significance level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*train_cmd) {
      cfg.clock = clock_name == "fixed" ? textnn::ClockMode::Fixed : textnn::ClockMode::Real;
      const textnn::TrainResult result = textnn::train(cfg);
      std::cout << "metrics\t" << result.metrics_path.string() << '\n'
                << "checkpoint\t" << result.checkpoint_path.string() << '\n'
                << "total_steps\t" << result.total_steps << '\n'
                << "vocab_size\t" << result.vocab_size << '\n'
                << "num_classes\t" << result.num_classes << '\n'
                << "final_val_accuracy_pct\t" << fmt17(result.final_val_accuracy_pct) << '\n'
                << "final_val_loss\t" << fmt17(result.final_val_loss) << '\n';
      std::cerr << "trained " << cfg.arch << " for " << result.total_steps << " steps; final val accuracy "
                << result.final_val_accuracy_pct << "%\n";
      return 0;
    }
    if (*eval_cmd || *confusion_cmd) {
      LoadedRun run = load_run(run_dir, data_dir);
      const std::vector<textnn::Document> docs =
          textnn::select_docs(run.corpus, split_ids(run.plan, eval_split));
      const textnn::EvalResult ev =
          textnn::evaluate(run.model, docs, run.corpus, run.vocab, run.batch_size, run.max_len);
      if (*confusion_cmd) {
        std::cout << "true\\pred";
        for (const std::string& c : run.corpus.classes) std::cout << '\t' << c;
        std::cout << '\n';
        for (std::size_t i = 0; i < run.corpus.classes.size(); ++i) {
          std::cout << run.corpus.classes[i];
          for (std::size_t v : ev.confusion[i]) std::cout << '\t' << v;
          std::cout << '\n';
        }
        std::cerr << "confusion over " << ev.total() << " documents, trace " << ev.trace() << "\n";
      } else {
        print_eval_result(ev, run.corpus);
      }
      return 0;
    }
    if (*count_cmd) {
      if (!count_arch_pos.empty() && !count_arch_flag.empty() && count_arch_pos != count_arch_flag) {
        std::cerr << "count-params: positional architecture '" << count_arch_pos
                  << "' conflicts with --arch '" << count_arch_flag << "'\n";
        return 2;
      }
      const std::string arch = !count_arch_flag.empty() ? count_arch_flag : count_arch_pos;
      if (arch.empty()) {
        std::cerr << "count-params: an architecture is required (positional or --arch)\n";
        return 2;
      }
      return run_count_params(arch, count_vocab, count_classes, count_dim, count_pointwise,
                              count_stacked);
    }
    if (*split_cmd) {
      const textnn::Corpus corpus = textnn::load_corpus(split_input);
      const textnn::SplitPlan plan = textnn::split(corpus, split_seed, split_stratify);
      if (split_out.empty()) {
        std::cout << "seed\t" << plan.seed << '\n';
        for (const std::string& id : plan.train_ids) std::cout << "train\t" << id << '\n';
        for (const std::string& id : plan.val_ids) std::cout << "val\t" << id << '\n';
        for (const std::string& id : plan.test_ids) std::cout << "test\t" << id << '\n';
        for (const std::string& w : plan.warnings) std::cout << "warning\t" << w << '\n';
      } else {
        textnn::save_split(plan, split_out);
      }
      std::cerr << "split " << corpus.docs.size() << " documents: train " << plan.train_ids.size()
                << ", val " << plan.val_ids.size() << ", test " << plan.test_ids.size() << "\n";
      for (const std::string& w : plan.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }
    if (*vocab_cmd) {
      const textnn::Corpus corpus = textnn::load_corpus(vocab_input);
      const textnn::SplitPlan plan = textnn::split(corpus, vocab_seed, vocab_stratify);
      const textnn::Vocab vocab =
          textnn::build_vocab(textnn::select_docs(corpus, plan.train_ids), vocab_min_freq);
      if (vocab_out.empty()) {
        for (std::size_t i = 0; i < vocab.tokens.size(); ++i)
          std::cout << vocab.tokens[i] << '\t' << vocab.freq[i] << '\n';
      } else {
        textnn::save_vocab(vocab, vocab_out);
      }
      std::cerr << "vocabulary of " << vocab.size() << " entries (including pad/unk)\n";
      return 0;
    }
    if (*ttest_cmd) {
      const textnn::TTestResult r =
          textnn::t_test(parse_number_list(sample_a), parse_number_list(sample_b), alpha);
      std::cout << "t\t" << fmt17(r.t) << '\n'
                << "p\t" << fmt17(r.p) << '\n'
                << "df\t" << fmt17(r.df) << '\n'
                << "reject\t" << (r.reject ? 1 : 0) << '\n';
      std::cerr << "t=" << r.t << ", p=" << r.p << (r.reject ? " -> reject" : " -> no rejection")
                << " at alpha=" << alpha << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
