#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "support/fixtures.hpp"
#include "textnn/stats.hpp"

using testsup::run_cli;
using testsup::tsv_value;

TEST_CASE("count-params accepts the positional architecture form") {
  testsup::CliResult r = run_cli("count-params base --vocab 82448 --classes 10");
  REQUIRE(r.exit_code == 0);
  REQUIRE(tsv_value(r.out, "total") == "16801034");
  REQUIRE(r.out.find("embedding\t82448x200\t16489600\n") != std::string::npos);
}

TEST_CASE("count-params accepts the --arch flag form") {
  testsup::CliResult r = run_cli("count-params --arch optimized --vocab 82448 --classes 10");
  REQUIRE(r.exit_code == 0);
  REQUIRE(tsv_value(r.out, "total") == "16733570");
}

TEST_CASE("count-params flags disagreement between the two forms as usage") {
  testsup::CliResult r =
      run_cli("count-params base --arch optimized --vocab 100 --classes 2");
  REQUIRE(r.exit_code == 2);
  REQUIRE(r.out.empty());
}

TEST_CASE("count-params without any architecture is usage") {
  testsup::CliResult r = run_cli("count-params --vocab 100 --classes 2");
  REQUIRE(r.exit_code == 2);
}

TEST_CASE("an unknown architecture name is a runtime error") {
  testsup::CliResult r = run_cli("count-params resnet --vocab 100 --classes 2");
  REQUIRE(r.exit_code == 1);
  REQUIRE(r.err.find("resnet") != std::string::npos);
}

TEST_CASE("unknown flags are usage errors") {
  testsup::CliResult r = run_cli("count-params base --vocab 100 --classes 2 --frobnicate");
  REQUIRE(r.exit_code == 2);
}

TEST_CASE("a bare invocation demands a subcommand") {
  REQUIRE(run_cli("").exit_code == 2);
}

TEST_CASE("ttest output round-trips the library result") {
  testsup::CliResult r = run_cli("ttest --a 2.1,2.5,2.3,1.9 --b 2.0,2.6,2.2,2.1");
  REQUIRE(r.exit_code == 0);
  const textnn::TTestResult expect =
      textnn::t_test({2.1, 2.5, 2.3, 1.9}, {2.0, 2.6, 2.2, 2.1});
  REQUIRE(std::strtod(tsv_value(r.out, "t").c_str(), nullptr) == expect.t);
  REQUIRE(std::strtod(tsv_value(r.out, "p").c_str(), nullptr) == expect.p);
  REQUIRE(std::strtod(tsv_value(r.out, "df").c_str(), nullptr) == expect.df);
  REQUIRE(tsv_value(r.out, "reject") == "0");
}

TEST_CASE("ttest rejects undersized samples with a runtime error") {
  testsup::CliResult r = run_cli("ttest --a 1 --b 1,2,3");
  REQUIRE(r.exit_code == 1);
}

TEST_CASE("split runs are deterministic and write identical plan files") {
  const auto data = testsup::make_temp_dir("cli_split_data");
  testsup::write_corpus_dir(testsup::synthetic_corpus(3, 8, 91), data);
  const auto dir = testsup::make_temp_dir("cli_split_out");
  const auto f1 = dir / "plan1.txt";
  const auto f2 = dir / "plan2.txt";
  REQUIRE(run_cli("split --input " + data.string() + " --seed 7 --out " + f1.string()).exit_code ==
          0);
  REQUIRE(run_cli("split --input " + data.string() + " --seed 7 --out " + f2.string()).exit_code ==
          0);
  const std::string plan = testsup::slurp(f1);
  REQUIRE_FALSE(plan.empty());
  REQUIRE(plan == testsup::slurp(f2));

  testsup::CliResult to_stdout = run_cli("split --input " + data.string() + " --seed 7");
  REQUIRE(to_stdout.exit_code == 0);
  REQUIRE(to_stdout.out == plan);
  REQUIRE(to_stdout.out.rfind("seed\t7\n", 0) == 0);

  std::filesystem::remove_all(data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("vocab prints the reserved rows first") {
  const auto data = testsup::make_temp_dir("cli_vocab_data");
  testsup::write_corpus_dir(testsup::synthetic_corpus(2, 6, 92), data);
  testsup::CliResult r = run_cli("vocab --input " + data.string() + " --seed 7");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.out.rfind("<pad>\t0\n<unk>\t0\n", 0) == 0);
  std::filesystem::remove_all(data);
}

TEST_CASE("train, eval and confusion cooperate end to end") {
  const auto data = testsup::make_temp_dir("cli_train_data");
  testsup::write_corpus_dir(testsup::synthetic_corpus(2, 12, 93), data);
  const auto out = testsup::make_temp_dir("cli_train_out");

  testsup::CliResult tr = run_cli(
      "train --data " + data.string() + " --out " + out.string() +
      " --arch base --dim 16 --seed 3 --epochs 2 --batch-size 8 --eval-every 2 --max-len 16"
      " --clock fixed");
  INFO(tr.err);
  REQUIRE(tr.exit_code == 0);
  // 24 docs -> test 3, val 5, train 16 -> 2 steps/epoch -> 4 total
  REQUIRE(tsv_value(tr.out, "total_steps") == "4");
  REQUIRE(tsv_value(tr.out, "num_classes") == "2");
  REQUIRE(std::filesystem::exists(out / "metrics.csv"));
  REQUIRE(std::filesystem::exists(out / "model.ckpt"));

  testsup::CliResult ev =
      run_cli("eval --run " + out.string() + " --data " + data.string() + " --split val");
  INFO(ev.err);
  REQUIRE(ev.exit_code == 0);
  const double acc = std::strtod(tsv_value(ev.out, "accuracy_pct").c_str(), nullptr);
  REQUIRE(acc >= 0.0);
  REQUIRE(acc <= 100.0);
  const double loss = std::strtod(tsv_value(ev.out, "mean_loss").c_str(), nullptr);
  REQUIRE(loss > 0.0);

  testsup::CliResult cm =
      run_cli("confusion --run " + out.string() + " --data " + data.string() + " --split val");
  REQUIRE(cm.exit_code == 0);
  REQUIRE(cm.out.rfind("true\\pred\tcls0\tcls1\n", 0) == 0);

  // the final eval row of the metrics file agrees with a fresh eval pass
  const std::string metrics = testsup::slurp(out / "metrics.csv");
  const std::size_t last_nl = metrics.find_last_of('\n', metrics.size() - 2);
  const std::string last_row = metrics.substr(last_nl + 1);
  REQUIRE(last_row.rfind("4,val,", 0) == 0);

  std::filesystem::remove_all(data);
  std::filesystem::remove_all(out);
}

TEST_CASE("train surfaces config contract violations as runtime errors") {
  const auto data = testsup::make_temp_dir("cli_badcfg_data");
  testsup::write_corpus_dir(testsup::synthetic_corpus(2, 6, 94), data);
  const auto out = testsup::make_temp_dir("cli_badcfg_out");
  testsup::CliResult r = run_cli("train --data " + data.string() + " --out " + out.string() +
                                 " --arch base --dim 16 --max-len 3 --clock fixed");
  REQUIRE(r.exit_code == 1);
  REQUIRE(r.err.find("max_len") != std::string::npos);
  std::filesystem::remove_all(data);
  std::filesystem::remove_all(out);
}

TEST_CASE("train validates enum-like flags at parse time") {
  REQUIRE(run_cli("train --data x --out y --arch vgg").exit_code == 2);
  REQUIRE(run_cli("train --data x --out y --optimizer rprop").exit_code == 2);
  REQUIRE(run_cli("train --data x --out y --clock sometimes").exit_code == 2);
  REQUIRE(run_cli("train --data x --out y --pointwise-channels 64").exit_code == 2);
}
