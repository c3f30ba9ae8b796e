#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = GLSTM_CLI;
const std::string kData = GLSTM_DATA_DIR;
const std::string kToy = kData + "/toy/corpus.jsonl";
const std::string kToyKb = kData + "/toy/kb.tsv";
const std::string kSynth = kData + "/synthetic/corpus.jsonl";
const std::string kSynthKbs = " --kb " + kData + "/synthetic/kb_ternary.tsv --kb " + kData + "/synthetic/kb_binary.tsv";
const std::string kSynthEmb = kData + "/synthetic/embeddings.txt";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> records(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("glstm_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // Runs the CLI with stdout and stderr captured; returns the exit status.
  int run(const std::string& args) {
    const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + path("stdout").string() + "\" 2> \"" +
                            path("stderr").string() + "\"";
    const int status = std::system(cmd.c_str());
    out_ = slurp(path("stdout"));
    err_ = slurp(path("stderr"));
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
  std::string out_, err_;
};

std::size_t count_label(const std::vector<json>& recs, int label) {
  std::size_t n = 0;
  for (const auto& r : recs) n += r["label"].get<int>() == label;
  return n;
}

}  // namespace

TEST_F(Cli, BuildDatasetIsDeterministic) {
  const std::string base = "build-dataset --corpus " + kToy + " --kb " + kToyKb + " --folds 2 --seed 4 --out ";
  ASSERT_EQ(run(base + path("a.jsonl").string()), 0) << err_;
  ASSERT_EQ(run(base + path("b.jsonl").string()), 0) << err_;
  EXPECT_FALSE(slurp(path("a.jsonl")).empty());
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
}

TEST_F(Cli, WiderWindowGivesAtLeastAsManyCandidates) {
  auto candidates = [&](int k) {
    EXPECT_EQ(run("build-dataset --corpus " + kToy + " --kb " + kToyKb + " --folds 2 --k-sentences " + std::to_string(k) +
                  " --out " + path("i.jsonl").string()),
              0)
        << err_;
    const auto at = err_.find("candidates ");
    return std::stoul(err_.substr(at + 11));
  };
  const auto k1 = candidates(1), k3 = candidates(3);
  EXPECT_GE(k3, k1);
  EXPECT_GT(k3, 0u);
}

TEST_F(Cli, RatioOneBalancesWhenNegativesSuffice) {
  ASSERT_EQ(run("build-dataset --corpus " + kToy + " --kb " + kToyKb + " --folds 2 --neg-ratio 1 --out " +
                path("i.jsonl").string()),
            0)
      << err_;
  const auto recs = records(path("i.jsonl"));
  EXPECT_GT(count_label(recs, 1), 0u);
  EXPECT_EQ(count_label(recs, 1), count_label(recs, 0));
}

TEST_F(Cli, FoldsFollowDocuments) {
  ASSERT_EQ(run("build-dataset --corpus " + kSynth + kSynthKbs + " --out " + path("i.jsonl").string()), 0) << err_;
  std::map<std::string, int> fold;
  std::set<int> folds;
  for (const auto& r : records(path("i.jsonl"))) {
    const auto [it, fresh] = fold.emplace(r["doc_id"].get<std::string>(), r["fold"].get<int>());
    EXPECT_EQ(it->second, r["fold"].get<int>());
    folds.insert(r["fold"].get<int>());
  }
  EXPECT_EQ(folds.size(), 5u);
}

TEST_F(Cli, TrainEvalAndExtract) {
  const auto inst = path("i.jsonl").string(), ckpt = path("m.ckpt").string();
  ASSERT_EQ(run("build-dataset --corpus " + kSynth + kSynthKbs + " --out " + inst), 0) << err_;
  ASSERT_EQ(run("train --corpus " + kSynth + " --instances " + inst + " --out " + ckpt + " --embeddings " + kSynthEmb +
                " --dev-fraction 0 --hidden 32 --multitask drug-gene-mutation drug-gene"),
            0)
      << err_;
  ASSERT_EQ(run("eval --checkpoint " + ckpt + " --corpus " + kSynth + " --instances " + inst + " --out " +
                path("metrics.jsonl").string()),
            0)
      << err_;
  const auto metrics = records(path("metrics.jsonl"));
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_EQ(metrics[0]["task"], "drug-gene-mutation");
  EXPECT_GE(metrics[0]["accuracy"].get<double>(), 0.95);

  ASSERT_EQ(run("extract --checkpoint " + ckpt + " --corpus " + kToy + " --threshold 0.5 --out " + path("lo.jsonl").string()), 0)
      << err_;
  ASSERT_EQ(run("extract --checkpoint " + ckpt + " --corpus " + kToy + " --threshold 0.9 --out " + path("hi.jsonl").string()), 0)
      << err_;
  const auto lo = records(path("lo.jsonl")), hi = records(path("hi.jsonl"));
  std::set<std::string> lo_set;
  for (const auto& r : lo) {
    lo_set.insert(r.dump());
    EXPECT_GE(r["probability"].get<double>(), 0.5);
    EXPECT_FALSE(r["provenance"].empty());
  }
  for (const auto& r : hi) EXPECT_TRUE(lo_set.count(r.dump())) << r.dump();
  EXPECT_LE(hi.size(), lo.size());

  // An explicit flag that contradicts the checkpoint is refused.
  EXPECT_EQ(run("eval --checkpoint " + ckpt + " --corpus " + kSynth + " --instances " + inst + " --variant embed"), 1);
  EXPECT_NE(err_.find("checkpoint/config mismatch"), std::string::npos) << err_;
  EXPECT_EQ(run("extract --checkpoint " + ckpt + " --corpus " + kToy + " --edges chain"), 1);
  EXPECT_NE(err_.find("checkpoint/config mismatch"), std::string::npos) << err_;
}

TEST_F(Cli, CrossvalWritesFoldAndMeanRecords) {
  const auto inst = path("i.jsonl").string();
  ASSERT_EQ(run("build-dataset --corpus " + kSynth + kSynthKbs + " --out " + inst), 0) << err_;
  ASSERT_EQ(run("crossval --corpus " + kSynth + " --instances " + inst + " --epochs 1 --hidden 4 --word-dim 8 --out " +
                path("cv.jsonl").string()),
            0)
      << err_;
  const auto recs = records(path("cv.jsonl"));
  ASSERT_EQ(recs.size(), 6u);
  double mean = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(recs[f]["record"], "fold");
    mean += recs[f]["accuracy"].get<double>() / 5;
  }
  EXPECT_EQ(recs[5]["record"], "mean");
  EXPECT_NEAR(recs[5]["accuracy"].get<double>(), mean, 1e-12);
}

TEST_F(Cli, MalformedInputReportsTheLine) {
  std::ofstream(path("bad.jsonl")) << slurp(kToy).substr(0, slurp(kToy).find('\n') + 1) << "{\"doc_id\": oops}\n";
  EXPECT_EQ(run("build-dataset --corpus " + path("bad.jsonl").string() + " --kb " + kToyKb), 1);
  EXPECT_NE(err_.find("line 2"), std::string::npos) << err_;
  EXPECT_EQ(err_.rfind("error: ", 0), 0u) << err_;

  EXPECT_EQ(run("build-dataset --corpus " + path("missing.jsonl").string() + " --kb " + kToyKb), 1);
  EXPECT_NE(err_.find("missing.jsonl"), std::string::npos) << err_;

  std::ofstream(path("kb.tsv")) << "drug-gene-mutation\tdrug\tgene\tmutation\nonly\ttwo\n";
  EXPECT_EQ(run("build-dataset --corpus " + kToy + " --kb " + path("kb.tsv").string()), 1);
  EXPECT_NE(err_.find("line 2"), std::string::npos) << err_;

  std::ofstream(path("kb2.tsv")) << "r\tdrug\tprotein\n";
  EXPECT_EQ(run("build-dataset --corpus " + kToy + " --kb " + path("kb2.tsv").string()), 1);
  EXPECT_NE(err_.find("protein"), std::string::npos) << err_;
}

TEST_F(Cli, GradcheckPasses) {
  EXPECT_EQ(run("gradcheck --variant both --instances 3"), 0) << out_ << err_;
  EXPECT_NE(out_.find("full: PASS"), std::string::npos) << out_;
  EXPECT_NE(out_.find("embed: PASS"), std::string::npos) << out_;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(run("train --corpus " + kToy), 0);
  EXPECT_NE(run("no-such-command"), 0);
  EXPECT_NE(run("gradcheck --variant sideways"), 0);
}
