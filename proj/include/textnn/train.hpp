#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "textnn/arch.hpp"
#include "textnn/checkpoint.hpp"
#include "textnn/data.hpp"
#include "textnn/optim.hpp"

namespace textnn {

// With Fixed, every elapsed_s field is 0.000 so repeated runs produce
// byte-identical metrics files; Real records wall-clock seconds.
enum class ClockMode { Real, Fixed };

struct RunConfig {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::string arch = "base";
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::size_t eval_every = 100;
  std::size_t max_len = 400;
  std::size_t min_freq = 1;
  std::size_t embedding_dim = 200;
  std::size_t pointwise_channels = 120;
  bool stacked_pair = false;
  bool stratify = false;
  std::string optimizer = "adam";  // adam | sgd | swats
  std::uint64_t switch_step = 0;   // swats only: adam while step < S
  double adam_lr = 1e-3;
  double sgd_lr = 1e-2;
  double decay = 0.95;
  std::uint64_t decay_interval = 0;  // 0 = one epoch of steps, resolved at start
  double dropout = 0.5;
  double l2 = -1.0;  // negative = architecture default (0.001 for optimized, else 0)
  double leaky_alpha = 0.1;
  ClockMode clock = ClockMode::Real;

  void validate() const {
    if (arch != "base" && arch != "optimized" && arch != "lightweight")
      throw ContractError("config: unknown architecture '" + arch + "'");
    if (optimizer != "adam" && optimizer != "sgd" && optimizer != "swats")
      throw ContractError("config: unknown optimizer '" + optimizer + "'");
    if (epochs < 1) throw ContractError("config: epochs must be >= 1");
    if (batch_size < 1) throw ContractError("config: batch_size must be >= 1");
    if (eval_every < 1) throw ContractError("config: eval_every must be >= 1");
    if (max_len < 1) throw ContractError("config: max_len must be >= 1");
    if (embedding_dim < 1) throw ContractError("config: embedding_dim must be >= 1");
    if (pointwise_channels < 1) throw ContractError("config: pointwise_channels must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ContractError("config: dropout must lie in [0, 1)");
    if (!(decay > 0.0) || decay > 1.0) throw ContractError("config: decay must lie in (0, 1]");
    if (!(adam_lr > 0.0) || !(sgd_lr > 0.0)) throw ContractError("config: learning rates must be > 0");
  }
};

inline constexpr const char* kMetricsHeader = "step,split,loss,accuracy_pct,lr,elapsed_s,phase";

struct MetricsRow {
  std::uint64_t step = 0;
  std::string split;
  double loss = 0.0;
  double accuracy_pct = 0.0;
  double lr = 0.0;
  double elapsed_s = 0.0;
  std::string phase;
};

inline std::string format_metrics_row(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%s,%.17g,%.17g,%.17g,%.3f,%s",
                static_cast<unsigned long long>(row.step), row.split.c_str(), row.loss,
                row.accuracy_pct, row.lr, row.elapsed_s, row.phase.c_str());
  return buf;
}

// --- evaluation -----------------------------------------------------------------

struct EvalResult {
  double accuracy_pct = 0.0;
  double mean_loss = 0.0;
  // confusion[i][j] = documents of true class i predicted as class j
  std::vector<std::vector<std::size_t>> confusion;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : confusion)
      for (std::size_t v : row) n += v;
    return n;
  }
  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) n += confusion[i][i];
    return n;
  }
};

// Inference pass over a document list: per-class confusion counts, accuracy
// and mean per-document cross-entropy. Argmax ties resolve to the lowest
// class index. Document order does not affect any output (per-document
// losses are summed in sorted order).
inline EvalResult evaluate(Model& model, const std::vector<Document>& docs, const Corpus& corpus,
                           const Vocab& vocab, std::size_t batch_size, std::size_t max_len) {
  if (docs.empty()) throw ContractError("evaluate: empty document set");
  const std::size_t k = corpus.classes.size();
  EvalResult result;
  result.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::vector<double> losses;
  losses.reserve(docs.size());
  Rng unused(0);  // inference never draws from it
  for (const Batch& batch : batches(docs, corpus, vocab, batch_size, max_len)) {
    SoftmaxXentResult r = model.run_batch(batch.tokens, batch.labels, Mode::Infer, unused);
    const auto& probs = r.probs.value();
    for (std::size_t row = 0; row < batch.tokens.batch; ++row) {
      std::size_t pred = 0;
      double best = probs[row * k];
      for (std::size_t j = 1; j < k; ++j)
        if (probs[row * k + j] > best) {
          best = probs[row * k + j];
          pred = j;
        }
      const auto truth = static_cast<std::size_t>(batch.labels[row]);
      ++result.confusion[truth][pred];
      losses.push_back(-std::log(probs[row * k + truth]));
    }
  }
  std::sort(losses.begin(), losses.end());
  double sum = 0.0;
  for (double v : losses) sum += v;
  result.mean_loss = sum / static_cast<double>(losses.size());
  result.accuracy_pct =
      100.0 * static_cast<double>(result.trace()) / static_cast<double>(result.total());
  return result;
}

inline std::vector<std::vector<std::size_t>> confusion_matrix(Model& model,
                                                              const std::vector<Document>& docs,
                                                              const Corpus& corpus,
                                                              const Vocab& vocab,
                                                              std::size_t batch_size,
                                                              std::size_t max_len) {
  return evaluate(model, docs, corpus, vocab, batch_size, max_len).confusion;
}

// --- training -------------------------------------------------------------------

struct TrainResult {
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
  std::uint64_t total_steps = 0;
  double final_val_accuracy_pct = 0.0;
  double final_val_loss = 0.0;
  std::size_t vocab_size = 0;
  std::size_t num_classes = 0;
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline std::string resolved_config_text(const RunConfig& cfg, std::size_t vocab_size,
                                        std::size_t num_classes, std::size_t steps_per_epoch,
                                        std::uint64_t decay_interval) {
  std::ostringstream out;
  out << "arch=" << cfg.arch << '\n'
      << "seed=" << cfg.seed << '\n'
      << "epochs=" << cfg.epochs << '\n'
      << "batch_size=" << cfg.batch_size << '\n'
      << "eval_every=" << cfg.eval_every << '\n'
      << "max_len=" << cfg.max_len << '\n'
      << "min_freq=" << cfg.min_freq << '\n'
      << "embedding_dim=" << cfg.embedding_dim << '\n'
      << "pointwise_channels=" << cfg.pointwise_channels << '\n'
      << "stacked_pair=" << (cfg.stacked_pair ? 1 : 0) << '\n'
      << "stratify=" << (cfg.stratify ? 1 : 0) << '\n'
      << "optimizer=" << cfg.optimizer << '\n'
      << "switch_step=" << cfg.switch_step << '\n'
      << "adam_lr=" << fmt_double(cfg.adam_lr) << '\n'
      << "sgd_lr=" << fmt_double(cfg.sgd_lr) << '\n'
      << "decay=" << fmt_double(cfg.decay) << '\n'
      << "decay_interval=" << decay_interval << '\n'
      << "dropout=" << fmt_double(cfg.dropout) << '\n'
      << "l2=" << fmt_double(cfg.l2) << '\n'
      << "leaky_alpha=" << fmt_double(cfg.leaky_alpha) << '\n'
      << "clock=" << (cfg.clock == ClockMode::Fixed ? "fixed" : "real") << '\n'
      << "vocab_size=" << vocab_size << '\n'
      << "num_classes=" << num_classes << '\n'
      << "steps_per_epoch=" << steps_per_epoch << '\n';
  return out.str();
}

}  // namespace detail

// Full training run: load corpus, split, build vocab from the train side
// only, train for epochs x batches steps, evaluate on the validation split
// every eval_every steps and at the final step, and persist every artifact
// (config, vocab, classes, split plan, metrics CSV, checkpoint) under
// cfg.out_dir. Deterministic for a fixed config with clock=fixed.
inline TrainResult train(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.data_dir);
  const SplitPlan plan = split(corpus, cfg.seed, cfg.stratify);
  const std::vector<Document> train_docs = select_docs(corpus, plan.train_ids);
  const std::vector<Document> val_docs = select_docs(corpus, plan.val_ids);
  if (train_docs.empty()) throw ContractError("train: empty training split");
  if (val_docs.empty()) throw ContractError("train: empty validation split");
  const Vocab vocab = build_vocab(train_docs, cfg.min_freq);

  ArchSpec spec = make_arch(cfg.arch, vocab.size(), corpus.classes.size(), cfg.embedding_dim,
                            cfg.pointwise_channels, cfg.stacked_pair);
  spec.dropout_rate = cfg.dropout;
  spec.leaky_alpha = cfg.leaky_alpha;
  if (cfg.l2 >= 0.0) spec.l2_coeff = cfg.l2;

  const bool has_bn = spec.bn_on_embedding || spec.bn_per_branch;
  if (has_bn && cfg.batch_size == 1)
    throw ContractError("config: batch_size 1 is incompatible with batch normalization");
  if (has_bn && train_docs.size() % cfg.batch_size == 1 && train_docs.size() > cfg.batch_size)
    throw ContractError("config: " + std::to_string(train_docs.size()) +
                        " training documents with batch_size " + std::to_string(cfg.batch_size) +
                        " leave a single-document final batch, which batch normalization "
                        "rejects; choose a different batch size");

  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);
  Model model(spec, init_rng);
  if (cfg.max_len < model.min_seq_len())
    throw ContractError("config: max_len " + std::to_string(cfg.max_len) +
                        " is shorter than the architecture's minimum sequence length " +
                        std::to_string(model.min_seq_len()));

  const std::size_t steps_per_epoch = (train_docs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg.epochs) * steps_per_epoch;

  OptimizerState opt;
  opt.phase = cfg.optimizer == "sgd" ? Phase::Sgd : Phase::Adam;
  opt.switch_step = cfg.optimizer == "swats" ? cfg.switch_step
                                             : std::numeric_limits<std::uint64_t>::max();
  opt.adam_lr = cfg.adam_lr;
  opt.sgd_lr = cfg.sgd_lr;
  opt.decay_coeff = cfg.decay;
  opt.decay_interval = cfg.decay_interval ? cfg.decay_interval : steps_per_epoch;

  fs::create_directories(cfg.out_dir);
  const fs::path metrics_path = cfg.out_dir / "metrics.csv";
  const fs::path ckpt_path = cfg.out_dir / "model.ckpt";
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot open '" + metrics_path.string() + "' for writing");
  metrics << kMetricsHeader << '\n';

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start, &cfg]() {
    if (cfg.clock == ClockMode::Fixed) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  TrainResult result;
  std::uint64_t last_logged = 0;
  bool logged_any = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const Batch& batch :
         batches(train_docs, corpus, vocab, cfg.batch_size, cfg.max_len, &shuffle_rng)) {
      model.zero_grads();
      SoftmaxXentResult r = model.run_batch(batch.tokens, batch.labels, Mode::Train, dropout_rng);
      const double loss = r.loss.item();
      if (!std::isfinite(loss))
        throw ContractError("training diverged at step " + std::to_string(opt.step + 1) +
                            ": loss is not finite (" + std::to_string(loss) + ")");
      backward(r.loss);
      double lr_used = 0.0;
      if (cfg.optimizer == "adam")
        lr_used = adam_step(model.params(), opt);
      else if (cfg.optimizer == "sgd")
        lr_used = sgd_momentum_step(model.params(), opt);
      else
        lr_used = swats_step(model.params(), opt);
      const std::uint64_t step = opt.step;
      if ((step % cfg.eval_every == 0 || step == total_steps) &&
          (!logged_any || step > last_logged)) {
        const EvalResult ev =
            evaluate(model, val_docs, corpus, vocab, cfg.batch_size, cfg.max_len);
        MetricsRow row{step,    "val",     ev.mean_loss,          ev.accuracy_pct,
                       lr_used, elapsed(), phase_name(opt.phase)};
        metrics << format_metrics_row(row) << '\n';
        last_logged = step;
        logged_any = true;
        result.final_val_accuracy_pct = ev.accuracy_pct;
        result.final_val_loss = ev.mean_loss;
      }
    }
  }
  metrics.flush();
  if (!metrics) throw IoError("write failure on '" + metrics_path.string() + "'");
  metrics.close();

  save_checkpoint(model, &opt, ckpt_path);
  save_vocab(vocab, cfg.out_dir / "vocab.txt");
  save_split(plan, cfg.out_dir / "split.txt");
  std::ostringstream classes;
  for (const std::string& c : corpus.classes) classes << c << '\n';
  detail::write_text_file(cfg.out_dir / "classes.txt", classes.str());
  detail::write_text_file(
      cfg.out_dir / "config.txt",
      detail::resolved_config_text(cfg, vocab.size(), corpus.classes.size(), steps_per_epoch,
                                   opt.decay_interval));

  result.metrics_path = metrics_path;
  result.checkpoint_path = ckpt_path;
  result.total_steps = total_steps;
  result.vocab_size = vocab.size();
  result.num_classes = corpus.classes.size();
  return result;
}

}  // namespace textnn
