#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "blindsweep/cli.hpp"

using namespace blindsweep;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "blindsweep");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.status = cli::run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("blindsweep_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    phantom::write_text_file(dir_ / name, text);
    return path(name);
  }

  fs::path dir_;
};

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = phantom::read_text_file(e.path());
  return out;
}

const char* kSmallCorpus = "n_patients=8\nn_cases=12\nfixed_duration_s=0.5\n";

}  // namespace

TEST_F(CliTest, UnknownSubcommandPrintsUsageAndExitsTwo) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("frobnicate"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).status, 2);
  EXPECT_EQ(run({"generate", "--protocol", "diagonal"}).status, 2);
  EXPECT_EQ(run({"generate", "--device", "phone"}).status, 2);
  EXPECT_EQ(run({"generate", "--seed", "abc"}).status, 2);
  EXPECT_EQ(run({"generate", "--config", write("bad.cfg", "speed=3\n"), "--out", path("c")}).status, 2);
  EXPECT_EQ(run({"train", "--config", write("t.cfg", "model=ga\n")}).status, 2);
  EXPECT_EQ(run({"generate", "--config", path("missing.cfg")}).status, 2);
  EXPECT_EQ(run({"--help"}).status, 0);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  ASSERT_EQ(run({"generate", "--config", write("g.cfg", kSmallCorpus), "--out", path("corpus")}).status, 0);
  const auto cfg = write("e.cfg", "corpus=" + path("corpus") + "\npredictions=" + path("nowhere.csv") + "\n");
  const auto r = run({"eval", "--config", cfg, "--out", path("rep")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("nowhere.csv"), std::string::npos);
}

TEST_F(CliTest, GenerateTwiceIsByteIdentical) {
  const auto cfg = write("g.cfg", std::string(kSmallCorpus) + "materialize=true\n");
  ASSERT_EQ(run({"generate", "--config", cfg, "--seed", "1", "--out", path("a")}).status, 0);
  ASSERT_EQ(run({"generate", "--config", cfg, "--seed", "1", "--out", path("b")}).status, 0);
  const auto a = tree_contents(path("a")), b = tree_contents(path("b"));
  EXPECT_GT(a.size(), 12u);
  EXPECT_EQ(a, b);
  ASSERT_EQ(run({"generate", "--config", cfg, "--seed", "2", "--out", path("c")}).status, 0);
  EXPECT_NE(a.at("corpus.csv"), tree_contents(path("c")).at("corpus.csv"));
}

TEST_F(CliTest, GenerateHonoursDeviceOperatorAndProtocol) {
  const auto cfg = write("g.cfg", std::string(kSmallCorpus) + "materialize=true\n");
  ASSERT_EQ(run({"generate", "--config", cfg, "--device", "low_cost", "--operator", "novice", "--protocol", "mr", "--out",
                 path("c")})
                .status,
            0);
  const auto corpus = pipeline::load_corpus(path("c"));
  ASSERT_EQ(corpus.cases.size(), 12u);
  for (const auto& c : corpus.cases) {
    EXPECT_EQ(c.device(), phantom::Device::low_cost);
    EXPECT_EQ(c.operator_(), phantom::Operator::novice);
    EXPECT_EQ(c.sweep_count(), 2);
    EXPECT_NE(c.record(), nullptr);
  }
}

TEST_F(CliTest, EvalReportsHandComputedMae) {
  fs::create_directories(path("corpus"));
  write("corpus/corpus.csv",
        "patient_id,visit_id,ga_days,presentation,device,operator,seed,split\n"
        "A,A-V1,100,cephalic,standard,sonographer,1,test\n"
        "B,B-V1,150,breech,standard,sonographer,2,test\n"
        "C,C-V1,200,cephalic,low_cost,sonographer,3,test\n"
        "D,D-V1,120,cephalic,standard,sonographer,4,train\n");
  write("corpus/render.cfg", "fixed_duration_s=0.5\n");
  write("pred.csv",
        "visit_id,ga_days,n_clips,p_noncephalic,min_feedback,median_feedback,max_feedback\n"
        "A-V1,101,4,0.2,1,2,3\n"
        "B-V1,148,4,0.9,1,2,3\n"
        "C-V1,203,4,0.1,1,2,3\n");
  const auto cfg = write("e.cfg", "corpus=" + path("corpus") + "\npredictions=" + path("pred.csv") + "\nbiometry=none\n");
  const auto r = run({"eval", "--config", cfg, "--out", path("rep")});
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream table(phantom::read_text_file(path("rep/ga_table.csv")));
  std::string header, all;
  std::getline(table, header);
  std::getline(table, all);
  const auto fields = pipeline::split_csv_line(all);
  EXPECT_EQ(fields[0], "all");
  EXPECT_EQ(fields[1], "3");
  EXPECT_EQ(fields[2], "2.0000");
  EXPECT_NE(r.out.find("blind_sweep_mae=2.0000"), std::string::npos);
  EXPECT_NE(r.out.find("median_predictor_mae="), std::string::npos);
}

TEST_F(CliTest, PipelineIsBitStableAcrossRuns) {
  ASSERT_EQ(run({"generate", "--config", write("g.cfg", kSmallCorpus), "--seed", "4", "--out", path("corpus")}).status,
            0);
  auto once = [&](const std::string& tag) {
    const auto out = path(tag);
    for (const char* kind : {"ga", "presentation"}) {
      const auto cfg = write(tag + "_" + kind + ".cfg", "corpus=" + path("corpus") + "\nmodel=" + kind +
                                                             "\nsize=tiny\nsteps=6\nbatch_size=2\nlog_every=3\n");
      EXPECT_EQ(run({"train", "--config", cfg, "--seed", "9", "--out", out}).status, 0);
    }
    const auto icfg = write(tag + "_i.cfg", "corpus=" + path("corpus") + "\nga_model=" + out + "/model_ga.uwts\n" +
                                                "presentation_model=" + out + "/model_presentation.uwts\n");
    EXPECT_EQ(run({"infer", "--config", icfg, "--out", out}).status, 0);
    const auto ecfg = write(tag + "_e.cfg", "corpus=" + path("corpus") + "\npredictions=" + out + "/estimates.csv\n" +
                                                "clips=" + out + "/clips.csv\nbiometry=none\n");
    EXPECT_EQ(run({"eval", "--config", ecfg, "--seed", "3", "--out", out}).status, 0);
    return tree_contents(out);
  };
  const auto a = once("a"), b = once("b");
  for (const char* f : {"model_ga.uwts", "model_presentation.uwts", "train_ga.log", "train_presentation.log",
                        "estimates.csv", "clips.csv", "ga_table.csv", "presentation_table.csv"})
    ASSERT_TRUE(a.count(f)) << f;
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.at("train_ga.log").rfind("step,lr,loss,tune_metric\n", 0), 0u);
}

TEST_F(CliTest, ReducedProtocolUsesOnlyMiddleAndRightSweeps) {
  ASSERT_EQ(run({"generate", "--config", write("g.cfg", kSmallCorpus), "--out", path("corpus")}).status, 0);
  const auto cfg = write("t.cfg", "corpus=" + path("corpus") + "\nmodel=ga\nsize=tiny\nsteps=0\n");
  ASSERT_EQ(run({"train", "--config", cfg, "--out", path("m")}).status, 0);
  const auto icfg = write("i.cfg", "corpus=" + path("corpus") + "\nga_model=" + path("m/model_ga.uwts") + "\n");
  ASSERT_EQ(run({"infer", "--config", icfg, "--protocol", "mr", "--out", path("mr")}).status, 0);
  const auto clips = phantom::read_text_file(path("mr/clips.csv"));
  std::istringstream in(clips);
  std::string line;
  std::getline(in, line);
  int n = 0;
  while (std::getline(in, line)) {
    const auto sweep = pipeline::split_csv_line(line)[1];
    EXPECT_TRUE(sweep == "M" || sweep == "R") << sweep;
    ++n;
  }
  EXPECT_GT(n, 0);
}

TEST_F(CliTest, BenchRejectsModelsWithOtherPreprocessing) {
  ASSERT_EQ(run({"generate", "--config", write("g.cfg", kSmallCorpus), "--out", path("corpus")}).status, 0);
  for (const char* kind : {"ga", "presentation"})
    ASSERT_EQ(run({"train", "--config",
                   write(std::string(kind) + ".cfg",
                         "corpus=" + path("corpus") + "\nmodel=" + kind + "\nsize=tiny\nsteps=0\n"),
                   "--out", path("m")})
                  .status,
              0);
  const auto cfg = write("b.cfg", "ga_model=" + path("m/model_ga.uwts") + "\npresentation_model=" +
                                      path("m/model_presentation.uwts") + "\nrepetitions=2\nduration_s=0.5\n");
  EXPECT_EQ(run({"bench", "--config", cfg}).status, 2);
}

TEST_F(CliTest, BenchReportsLatencyForDeskModels) {
  ASSERT_EQ(run({"generate", "--config", write("g.cfg", "n_patients=8\nn_cases=12\n"), "--out", path("corpus")}).status,
            0);
  for (const char* kind : {"ga", "presentation"})
    ASSERT_EQ(run({"train", "--config",
                   write(std::string(kind) + ".cfg", "corpus=" + path("corpus") + "\nmodel=" + kind + "\nsteps=0\n"),
                   "--out", path("m")})
                  .status,
              0);
  const auto cfg = write("b.cfg", "ga_model=" + path("m/model_ga.uwts") + "\npresentation_model=" +
                                      path("m/model_presentation.uwts") + "\nrepetitions=2\nduration_s=1.0\n");
  const auto r = run({"bench", "--config", cfg, "--out", path("bench")});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("mean_s="), std::string::npos);
  EXPECT_NE(r.out.find("sd_s="), std::string::npos);
  EXPECT_NE(r.out.find("repetitions=2"), std::string::npos);
  EXPECT_NE(r.out.find("warning=fewer than 10 repetitions"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("bench/latency.txt")));
}
