#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "textnn/data.hpp"
#include "textnn/rng.hpp"

namespace testsup {

// Synthetic labeled corpus: each class has its own small token pool, mixed
// with shared filler tokens, so any working classifier can separate the
// classes while the vocabulary stays overlapping.
inline textnn::Corpus synthetic_corpus(std::size_t n_classes, std::size_t n_per_class,
                                       std::uint64_t seed, std::size_t len_lo = 6,
                                       std::size_t len_hi = 12) {
  textnn::Rng rng(seed);
  textnn::Corpus corpus;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::string label = "cls" + std::to_string(c);
    for (std::size_t d = 0; d < n_per_class; ++d) {
      textnn::Document doc;
      doc.label = label;
      doc.id = label + "/doc" + std::to_string(d);
      const std::size_t len = len_lo + rng.below(len_hi - len_lo + 1);
      for (std::size_t t = 0; t < len; ++t) {
        if (rng.uniform01() < 0.7)
          doc.tokens.push_back("w" + std::to_string(c) + "x" + std::to_string(rng.below(5)));
        else
          doc.tokens.push_back("shared" + std::to_string(rng.below(10)));
      }
      corpus.docs.push_back(std::move(doc));
    }
  }
  textnn::detail::finalize_classes(corpus);
  return corpus;
}

// 3,482 one-token documents over 10 classes, for split arithmetic.
inline textnn::Corpus corpus_3482(std::uint64_t seed = 11) {
  textnn::Rng rng(seed);
  textnn::Corpus corpus;
  for (std::size_t i = 0; i < 3482; ++i) {
    const std::string label = "cls" + std::to_string(i % 10);
    corpus.docs.push_back({label + "/doc" + std::to_string(i / 10), label,
                           {"tok" + std::to_string(rng.below(50))}});
  }
  textnn::detail::finalize_classes(corpus);
  return corpus;
}

inline std::filesystem::path make_temp_dir(const std::string& tag = "scratch") {
  std::string tmpl =
      (std::filesystem::temp_directory_path() / ("textnn_" + tag + "_XXXXXX")).string();
  if (!mkdtemp(tmpl.data())) throw textnn::IoError("mkdtemp failed for " + tmpl);
  return tmpl;
}

// Materializes a corpus on disk in the one-subdirectory-per-class layout.
inline void write_corpus_dir(const textnn::Corpus& corpus, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (const textnn::Document& doc : corpus.docs) {
    const std::size_t slash = doc.id.find('/');
    const std::string stem = slash == std::string::npos ? doc.id : doc.id.substr(slash + 1);
    fs::create_directories(root / doc.label);
    std::ofstream out(root / doc.label / (stem + ".txt"), std::ios::binary);
    for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
      if (t) out << ' ';
      out << doc.tokens[t];
    }
    out << '\n';
  }
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs the installed CLI binary with the given argument string, capturing
// both streams and the exit code.
inline CliResult run_cli(const std::string& args) {
  namespace fs = std::filesystem;
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path();
  const fs::path out_path = dir / ("textnn_cli_out_" + std::to_string(++counter));
  const fs::path err_path = dir / ("textnn_cli_err_" + std::to_string(counter));
  const std::string cmd = std::string(TEXTNN_CLI_PATH) + " " + args + " >" + out_path.string() +
                          " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  fs::remove(out_path);
  fs::remove(err_path);
  return result;
}

// Pulls the value of a "key<TAB>value" line out of TSV output.
inline std::string tsv_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "\t", 0) == 0) return line.substr(line.rfind('\t') + 1);
  }
  return "";
}

}  // namespace testsup
