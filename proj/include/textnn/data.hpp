#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "textnn/layers.hpp"
#include "textnn/rng.hpp"

namespace textnn {

struct Document {
  std::string id;     // stable identifier, unique within a corpus
  std::string label;  // class name
  std::vector<std::string> tokens;
};

struct Corpus {
  std::vector<Document> docs;
  std::vector<std::string> classes;  // sorted unique labels

  int class_index(const std::string& label) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label)
      throw ContractError("unknown class label '" + label + "'");
    return static_cast<int>(it - classes.begin());
  }
};

// --- cleaning -----------------------------------------------------------------

// Tokenization rule table (normative for this library):
//   - A-Z        -> kept, lowercased
//   - a-z, 0-9   -> kept
//   - whitespace (space, \t, \n, \r, \f, \v) -> token separator; runs collapse
//   - every other byte (punctuation, control, non-ASCII) -> removed in place,
//     joining its neighbours ("re-enter" -> "reenter")
// Total function: no input is an error; invalid encodings are just bytes here.
inline std::vector<std::string> clean(const std::string& raw) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : raw) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v') {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
    } else if (ch >= 'a' && ch <= 'z') {
      current.push_back(static_cast<char>(ch));
    } else if (ch >= 'A' && ch <= 'Z') {
      current.push_back(static_cast<char>(ch - 'A' + 'a'));
    } else if (ch >= '0' && ch <= '9') {
      current.push_back(static_cast<char>(ch));
    }
    // anything else: dropped
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

// --- vocabulary ---------------------------------------------------------------

inline constexpr std::uint32_t kPadIndex = 0;
inline constexpr std::uint32_t kUnkIndex = 1;

struct Vocab {
  // tokens[i] is the token at index i; slots 0/1 are the reserved pad/unk
  // markers. freq is parallel (0 for the reserved slots).
  std::vector<std::string> tokens;
  std::vector<std::uint64_t> freq;
  std::unordered_map<std::string, std::uint32_t> index;

  std::size_t size() const { return tokens.size(); }

  std::uint32_t lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kUnkIndex : it->second;
  }
};

// Counts tokens over the training documents and keeps those with
// freq >= min_freq, ordered by (freq desc, token asc) from index 2. The
// result depends only on the multiset of documents, not their order.
inline Vocab build_vocab(const std::vector<Document>& train_docs, std::size_t min_freq = 1) {
  if (train_docs.empty()) throw ContractError("build_vocab: empty training set");
  std::map<std::string, std::uint64_t> counts;
  for (const Document& doc : train_docs)
    for (const std::string& tok : doc.tokens) ++counts[tok];
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= std::max<std::size_t>(min_freq, 1)) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab;
  vocab.tokens = {"<pad>", "<unk>"};
  vocab.freq = {0, 0};
  vocab.index.reserve(kept.size() + 2);
  vocab.index.emplace("<pad>", kPadIndex);
  vocab.index.emplace("<unk>", kUnkIndex);
  for (const auto& [tok, n] : kept) {
    vocab.index.emplace(tok, static_cast<std::uint32_t>(vocab.tokens.size()));
    vocab.tokens.push_back(tok);
    vocab.freq.push_back(n);
  }
  return vocab;
}

// --- splits -------------------------------------------------------------------

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> warnings;  // e.g. classes with fewer than 3 documents
};

namespace detail {
// Shared rounding rule: of n shuffled ids, the last ceil(n/10) are test; of
// the remainder, the last ceil(rem/5) are validation.
inline void cut_ids(const std::vector<std::string>& shuffled, SplitPlan& plan) {
  const std::size_t n = shuffled.size();
  const std::size_t n_test = (n + 9) / 10;
  const std::size_t rem = n - n_test;
  const std::size_t n_val = (rem + 4) / 5;
  const std::size_t n_train = rem - n_val;
  plan.train_ids.insert(plan.train_ids.end(), shuffled.begin(), shuffled.begin() + n_train);
  plan.val_ids.insert(plan.val_ids.end(), shuffled.begin() + n_train, shuffled.begin() + rem);
  plan.test_ids.insert(plan.test_ids.end(), shuffled.begin() + rem, shuffled.end());
}
}  // namespace detail

// Deterministic shuffle-and-cut: 9:1 into (rest, test), then rest 8:2 into
// (train, val). With stratify, the same rule is applied per class and the
// pieces concatenated in class order.
inline SplitPlan split(const Corpus& corpus, std::uint64_t seed, bool stratify = false) {
  if (corpus.docs.empty()) throw ContractError("split: empty corpus");
  SplitPlan plan;
  plan.seed = seed;
  std::map<std::string, std::size_t> per_class;
  for (const Document& d : corpus.docs) ++per_class[d.label];
  for (const auto& [label, n] : per_class)
    if (n < 3)
      plan.warnings.push_back("class '" + label + "' has only " + std::to_string(n) +
                              " document(s); splits cannot cover train/val/test");
  Rng rng(seed);
  if (stratify) {
    for (const std::string& cls : corpus.classes) {
      std::vector<std::string> ids;
      for (const Document& d : corpus.docs)
        if (d.label == cls) ids.push_back(d.id);
      shuffle(ids, rng);
      detail::cut_ids(ids, plan);
    }
  } else {
    std::vector<std::string> ids;
    ids.reserve(corpus.docs.size());
    for (const Document& d : corpus.docs) ids.push_back(d.id);
    shuffle(ids, rng);
    detail::cut_ids(ids, plan);
  }
  return plan;
}

// --- batching -----------------------------------------------------------------

struct Batch {
  TokenBatch tokens;
  std::vector<int> labels;
  std::vector<std::size_t> doc_indices;  // positions into the source doc list
};

// Fixed-length index matrices: truncate past max_len, right-pad with the pad
// index, map unknown tokens to the unk index. With an rng, document order is
// shuffled once per call; otherwise input order is kept.
inline std::vector<Batch> batches(const std::vector<Document>& docs, const Corpus& corpus,
                                  const Vocab& vocab, std::size_t batch_size, std::size_t max_len,
                                  Rng* shuffle_rng = nullptr) {
  if (batch_size < 1) throw ContractError("batches: batch_size must be >= 1");
  if (max_len < 1) throw ContractError("batches: max_len must be >= 1");
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_rng) shuffle(order, *shuffle_rng);
  std::vector<Batch> out;
  out.reserve((docs.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, docs.size() - start);
    Batch batch;
    batch.tokens.batch = b;
    batch.tokens.seq_len = max_len;
    batch.tokens.indices.assign(b * max_len, kPadIndex);
    batch.labels.reserve(b);
    batch.doc_indices.reserve(b);
    for (std::size_t r = 0; r < b; ++r) {
      const Document& doc = docs[order[start + r]];
      const std::size_t n = std::min(doc.tokens.size(), max_len);
      for (std::size_t t = 0; t < n; ++t)
        batch.tokens.indices[r * max_len + t] = vocab.lookup(doc.tokens[t]);
      batch.labels.push_back(corpus.class_index(doc.label));
      batch.doc_indices.push_back(order[start + r]);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

// --- corpus loading -----------------------------------------------------------

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return buf.str();
}

inline void finalize_classes(Corpus& corpus) {
  for (const Document& d : corpus.docs) corpus.classes.push_back(d.label);
  std::sort(corpus.classes.begin(), corpus.classes.end());
  corpus.classes.erase(std::unique(corpus.classes.begin(), corpus.classes.end()),
                       corpus.classes.end());
}

}  // namespace detail

// Two layouts are accepted:
//   root/<class>/<name>.txt        — one subdirectory per class
//   root/<class>__<name>.txt       — flat directory, label before "__"
// Files are visited in sorted path order so corpus order is reproducible.
inline Corpus load_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("corpus root '" + root.string() + "' is not a directory");
  std::vector<fs::path> subdirs, files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) subdirs.push_back(entry.path());
    else if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::sort(files.begin(), files.end());
  Corpus corpus;
  if (!subdirs.empty()) {
    for (const fs::path& dir : subdirs) {
      const std::string label = dir.filename().string();
      std::vector<fs::path> class_files;
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
          class_files.push_back(entry.path());
      std::sort(class_files.begin(), class_files.end());
      for (const fs::path& f : class_files)
        corpus.docs.push_back(
            {label + "/" + f.stem().string(), label, clean(detail::read_file(f))});
    }
  } else {
    for (const fs::path& f : files) {
      const std::string stem = f.stem().string();
      const std::size_t sep = stem.find("__");
      if (sep == std::string::npos || sep == 0)
        throw ContractError("flat corpus file '" + f.filename().string() +
                            "' does not follow the <label>__<id>.txt convention");
      corpus.docs.push_back({stem, stem.substr(0, sep), clean(detail::read_file(f))});
    }
  }
  if (corpus.docs.empty())
    throw ContractError("no .txt documents found under '" + root.string() + "'");
  detail::finalize_classes(corpus);
  return corpus;
}

// --- plain-text persistence -----------------------------------------------------

// Vocab file: one "token<TAB>freq" line per index, starting at index 0.
inline void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < vocab.tokens.size(); ++i)
    out << vocab.tokens[i] << '\t' << vocab.freq[i] << '\n';
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Vocab vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError("malformed vocab line '" + line + "' in '" + path.string() + "'");
    vocab.index.emplace(line.substr(0, tab), static_cast<std::uint32_t>(vocab.tokens.size()));
    vocab.tokens.push_back(line.substr(0, tab));
    vocab.freq.push_back(std::stoull(line.substr(tab + 1)));
  }
  if (vocab.tokens.size() < 2 || vocab.tokens[0] != "<pad>" || vocab.tokens[1] != "<unk>")
    throw IoError("vocab file '" + path.string() + "' lacks the reserved pad/unk rows");
  return vocab;
}

// Split plan file: "seed<TAB>value", then one "<split><TAB><id>" line per
// document, then optional "warning<TAB>text" lines.
inline void save_split(const SplitPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "seed\t" << plan.seed << '\n';
  for (const std::string& id : plan.train_ids) out << "train\t" << id << '\n';
  for (const std::string& id : plan.val_ids) out << "val\t" << id << '\n';
  for (const std::string& id : plan.test_ids) out << "test\t" << id << '\n';
  for (const std::string& w : plan.warnings) out << "warning\t" << w << '\n';
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline SplitPlan load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  SplitPlan plan;
  std::string line;
  bool have_seed = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError("malformed split line '" + line + "' in '" + path.string() + "'");
    const std::string kind = line.substr(0, tab);
    const std::string rest = line.substr(tab + 1);
    if (kind == "seed") {
      plan.seed = std::stoull(rest);
      have_seed = true;
    } else if (kind == "train") {
      plan.train_ids.push_back(rest);
    } else if (kind == "val") {
      plan.val_ids.push_back(rest);
    } else if (kind == "test") {
      plan.test_ids.push_back(rest);
    } else if (kind == "warning") {
      plan.warnings.push_back(rest);
    } else {
      throw IoError("unknown split row kind '" + kind + "' in '" + path.string() + "'");
    }
  }
  if (!have_seed) throw IoError("split file '" + path.string() + "' lacks a seed row");
  return plan;
}

// Materializes the documents named by one side of a split plan, preserving
// plan order. Unknown ids are contract violations (plan/corpus mismatch).
inline std::vector<Document> select_docs(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> by_id;
  by_id.reserve(corpus.docs.size());
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) by_id.emplace(corpus.docs[i].id, i);
  std::vector<Document> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ContractError("split id '" + id + "' does not exist in the corpus");
    out.push_back(corpus.docs[it->second]);
  }
  return out;
}

}  // namespace textnn
