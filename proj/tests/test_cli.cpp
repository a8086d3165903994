#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "mddkit/cli.hpp"

using namespace mddkit;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> slurp_dir(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream f(entry.path(), std::ios::binary);
    out[fs::relative(entry.path(), dir).string()] =
        std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }
  return out;
}

std::map<std::string, std::string> parse_kv(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

struct TempDir {
  std::string path;
  explicit TempDir(std::string p) : path(std::move(p)) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_cli({"no-such-subcommand"}) == 1);
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"synth"}) == 1);                      // missing required --out
  CHECK(run_cli({"synth", "--bogus-flag", "x"}) == 1); // unknown flag
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("missing input files exit with code 2") {
  CHECK(run_cli({"eval-mdd", "--annotations", "nope.tsv", "--hyps", "also_nope.tsv"}) == 2);
  TempDir out("cli_tmp_decode");
  CHECK(run_cli({"decode", "--data", "missing_dir", "--model", "missing_ckpt", "--out",
                 "cli_tmp_decode/h.tsv"}) == 2);
}

TEST_CASE("synth is byte-identical for identical seeds") {
  TempDir a("cli_tmp_synth_a"), b("cli_tmp_synth_b");
  CHECK(run_cli({"synth", "--out", a.path, "--seed", "7", "--utts", "10"}) == 0);
  CHECK(run_cli({"synth", "--out", b.path, "--seed", "7", "--utts", "10"}) == 0);
  const auto fa = slurp_dir(a.path);
  const auto fb = slurp_dir(b.path);
  REQUIRE(!fa.empty());
  CHECK(fa == fb);
  CHECK(fa.count("effective_config.txt") == 1);
  CHECK(fa.count("transcripts.tsv") == 1);
}

TEST_CASE("eval-mdd on the perfect-hypothesis fixture reports 100 recall") {
  TempDir dir("cli_tmp_eval");
  REQUIRE(run_cli({"synth", "--out", dir.path, "--seed", "3", "--utts", "12", "--p-train",
                   "0.3", "--p-dev", "0.3", "--p-test", "0.3"}) == 0);
  // hypothesis := spoken sequence derived from the annotations
  const auto annotations = read_annotations((fs::path(dir.path) / "annotations.tsv").string());
  std::vector<std::pair<std::string, std::vector<std::string>>> hyps;
  for (const auto& a : annotations) hyps.emplace_back(a.utt_id, a.spoken());
  const std::string hyp_path = (fs::path(dir.path) / "hyps.tsv").string();
  write_hypotheses(hyps, hyp_path);

  const std::string report_prefix = (fs::path(dir.path) / "report").string();
  REQUIRE(run_cli({"eval-mdd", "--annotations",
                   (fs::path(dir.path) / "annotations.tsv").string(), "--hyps", hyp_path,
                   "--out", report_prefix}) == 0);
  const auto kv = parse_kv(report_prefix + ".kv");
  CHECK(kv.at("recall") == "100.0000");
  CHECK(kv.at("precision") == "100.0000");
  CHECK(kv.at("dar") == "100.0000");
  CHECK(kv.at("per") == "0.0000");
  CHECK(kv.at("fp") == "0");
  CHECK(kv.at("fn") == "0");
  CHECK(kv.at("de") == "0");
}

TEST_CASE("export-filters writes the documented CSV") {
  TempDir dir("cli_tmp_export");
  fs::create_directories(dir.path);
  const std::string csv = (fs::path(dir.path) / "filters.csv").string();
  REQUIRE(run_cli({"export-filters", "--out", csv, "--filters", "4", "--kernel", "101",
                   "--nfft", "512"}) == 0);
  std::ifstream f(csv);
  std::string header;
  std::getline(f, header);
  CHECK(header == "filter_id,freq_hz,magnitude");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == 4 * 257 + 257);
}

TEST_CASE("grad-check subcommand passes at the documented tolerance") {
  CHECK(run_cli({"grad-check", "--seed", "5"}) == 0);
}

TEST_CASE("train then decode then eval runs end to end") {
  TempDir data("cli_tmp_train_data"), run("cli_tmp_train_run");
  REQUIRE(run_cli({"synth", "--out", data.path, "--seed", "11", "--utts", "14", "--min-phones",
                   "2", "--max-phones", "3"}) == 0);
  REQUIRE(run_cli({"train", "--data", data.path, "--out", run.path, "--frontend", "fbank",
                   "--epochs", "2", "--batch-size", "4", "--seed", "11"}) == 0);
  CHECK(fs::exists(fs::path(run.path) / "checkpoint.bin"));
  CHECK(fs::exists(fs::path(run.path) / "checkpoint.cfg"));
  CHECK(fs::exists(fs::path(run.path) / "train_log.txt"));

  const std::string hyp_path = (fs::path(run.path) / "hyps.tsv").string();
  REQUIRE(run_cli({"decode", "--data", data.path, "--model",
                   (fs::path(run.path) / "checkpoint").string(), "--out", hyp_path, "--split",
                   "test", "--beam", "2", "--max-len", "6"}) == 0);
  CHECK(fs::exists(hyp_path));

  REQUIRE(run_cli({"eval-mdd", "--annotations",
                   (fs::path(data.path) / "annotations.tsv").string(), "--hyps", hyp_path}) ==
          2);  // hyps cover the test split only; annotations cover everything

  // restrict annotations to the test split and score again
  const Corpus corpus = load_corpus_dir(data.path);
  std::vector<UttAnnotation> test_annotations;
  for (const CorpusUtt* u : corpus.split("test"))
    test_annotations.push_back({u->utt_id, u->canonical, u->perceived});
  const std::string test_ann = (fs::path(run.path) / "test_annotations.tsv").string();
  write_annotations(test_annotations, test_ann);
  CHECK(run_cli({"eval-mdd", "--annotations", test_ann, "--hyps", hyp_path}) == 0);
}
