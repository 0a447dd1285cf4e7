#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cli.hpp"
#include "files.hpp"
#include "ircr/data.hpp"
#include "ircr/tensor_io.hpp"

namespace fs = std::filesystem;

namespace {

int ircr_run(std::vector<std::string> args) {
  args.insert(args.begin(), "ircr");
  return ircr::cli::run(args);
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = testfs::scratch("ircr_cli_test"); }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(ircr_run({}), 2);
  EXPECT_EQ(ircr_run({"frobnicate"}), 2);
  EXPECT_EQ(ircr_run({"gen-data", "--out", at("x")}), 2);
  EXPECT_EQ(ircr_run({"gen-data", "--n-scenes", "2", "--out", at("x"), "--bogus"}), 2);
  EXPECT_EQ(ircr_run({"eval", "--checkpoint", at("none"), "--data", at("none"), "--out", at("e.csv")}), 2);
  EXPECT_FALSE(fs::exists(at("x")));
  EXPECT_FALSE(fs::exists(at("e.csv")));
}

TEST_F(Cli, GenDataIsDeterministic) {
  ASSERT_EQ(ircr_run({"gen-data", "--seed", "7", "--n-scenes", "4", "--out", at("a")}), 0);
  ASSERT_EQ(ircr_run({"gen-data", "--seed", "7", "--n-scenes", "4", "--out", at("b")}), 0);
  EXPECT_EQ(testfs::snapshot(at("a")), testfs::snapshot(at("b")));
  EXPECT_EQ(ircr::data::load_dataset(at("a")).size(), 4u);
  ASSERT_EQ(ircr_run({"gen-data", "--seed", "7", "--n-scenes", "8", "--labeled-ratio", "0.25", "--out", at("c")}), 0);
  std::size_t labeled = 0;
  for (const auto& s : ircr::data::load_dataset(at("c"))) labeled += s.labeled;
  EXPECT_EQ(labeled, 2u);
}

TEST_F(Cli, PipelineAndFailureCleanup) {
  ASSERT_EQ(ircr_run({"gen-data", "--seed", "1", "--n-scenes", "4", "--size", "32", "--labeled-ratio", "0.5", "--out",
                      at("train")}),
            0);
  ASSERT_EQ(ircr_run({"fit-priors", "--seed", "2", "--n-scenes", "6", "--out", at("bank.txt")}), 0);
  ASSERT_EQ(ircr_run({"train", "--data", at("train"), "--priors", at("bank.txt"), "--out", at("ckpt"), "--epochs", "1",
                      "--lr", "1e-3"}),
            0);
  EXPECT_TRUE(fs::exists(at("ckpt/manifest.json")));
  const auto log = testfs::lines(testfs::slurp(at("ckpt/run_log.csv")));
  ASSERT_EQ(log.size(), 2u);  // header and one step: 2 scenes per side fit one batch of 4
  EXPECT_EQ(log[0], "step,L_sup,L_dice,L_ce,L_mse,L_msge,L_miac,L_piac,L_total,matched_pairs,rejected_instances,lr");

  ASSERT_EQ(ircr_run({"eval", "--checkpoint", at("ckpt"), "--data", at("train"), "--out", at("eval.csv")}), 0);
  const auto rows = testfs::lines(testfs::slurp(at("eval.csv")));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "image_id,aji,dice,f1_obj,tp,fp,fn");
  EXPECT_EQ(rows[5].rfind("mean,", 0), 0u);

  ASSERT_EQ(ircr_run({"match-debug", "--checkpoint", at("ckpt"), "--data", at("train"), "--id", "0", "--out",
                      at("m.csv"), "--svg", at("m.svg")}),
            0);
  EXPECT_EQ(testfs::lines(testfs::slurp(at("m.csv")))[0], "teacher_id,student_id,distance,kept");
  EXPECT_EQ(testfs::slurp(at("m.svg")).rfind("<svg", 0), 0u);

  ASSERT_EQ(ircr_run({"report", "--run-log", at("ckpt/run_log.csv"), "--eval", "1/2=" + at("eval.csv"), "--out",
                      at("report")}),
            0);
  EXPECT_TRUE(fs::exists(at("report/loss_curves.svg")));
  EXPECT_TRUE(fs::exists(at("report/metrics_by_ratio.svg")));

  // failures leave nothing behind
  EXPECT_EQ(ircr_run({"eval", "--checkpoint", at("ckpt"), "--data", at("missing_dir_is_usage"), "--out", at("x.csv")}),
            2);
  EXPECT_EQ(ircr_run({"score", "--priors", at("bank.txt"), "--data", at("train"), "--id", "99", "--out", at("s.csv")}),
            1);
  EXPECT_EQ(ircr_run({"report", "--run-log", at("eval.csv"), "--out", at("bad_report")}), 1);
  EXPECT_FALSE(fs::exists(at("s.csv")));
  EXPECT_FALSE(fs::exists(at("bad_report")));
  for (const auto& e : fs::directory_iterator(dir_))
    EXPECT_EQ(e.path().filename().string().find(".partial"), std::string::npos) << e.path();
}

TEST_F(Cli, ScoreFarOutsideBank) {
  ASSERT_EQ(ircr_run({"fit-priors", "--seed", "3", "--n-scenes", "10", "--out", at("bank.txt")}), 0);
  ircr::InstanceLabelMap l(64, 64);
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c < 60; ++c) l.at(r, c) = (r % 2 == 0 || c == 0) ? 1 : 0;  // huge comb
  l.at(40, 62) = 2;                                                                     // one-pixel speck
  ircr::io::save(at("labels"), l);
  ircr::io::save(at("h"), ircr::Tensor::plane(64, 64, 0.05));
  ASSERT_EQ(ircr_run({"score", "--priors", at("bank.txt"), "--labels", at("labels"), "--intensity", at("h"), "--out",
                      at("s.csv")}),
            0);
  const auto rows = testfs::lines(testfs::slurp(at("s.csv")));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "instance_id,area,solidity,circularity,intensity,extent,p_z,kept");
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_NE(rows[i].find(",false"), std::string::npos) << rows[i];
    const auto cells = rows[i];
    const auto last_comma = cells.rfind(',');
    const auto prev_comma = cells.rfind(',', last_comma - 1);
    EXPECT_LT(std::stod(cells.substr(prev_comma + 1, last_comma - prev_comma - 1)), 0.35);
  }
}
