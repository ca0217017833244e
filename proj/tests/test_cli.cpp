#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "geoctx/dataio.hpp"
#include "support.hpp"

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  static int counter = 0;
  const auto log = std::filesystem::temp_directory_path() / ("geoctx_cli_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(GEOCTX_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  std::filesystem::remove(log);
  return r;
}

bool has_line(const std::string& text, const std::string& prefix, const std::string& value) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    std::istringstream fields(line.substr(prefix.size()));
    std::string v;
    fields >> v;
    if (v == value) return true;
  }
  return false;
}

}  // namespace

TEST(Cli, MaskStatsCounts) {
  const CliRun gca = run("mask stats --mode gca -n 3 -k 16 -M 500 -T 10000");
  EXPECT_EQ(gca.code, 0);
  EXPECT_TRUE(has_line(gca.out, "closed_form", "69500")) << gca.out;
  EXPECT_TRUE(has_line(gca.out, "enumerated", "69500"));
  const CliRun causal = run("mask stats --mode causal -M 500 -T 10000");
  EXPECT_EQ(causal.code, 0);
  EXPECT_TRUE(has_line(causal.out, "closed_form", "5060000")) << causal.out;
}

TEST(Cli, MaskRender) {
  const CliRun r = run("mask stats --mode gca -n 2 -k 2 -M 4 -T 6 --render");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("5  FFccFF"), std::string::npos) << r.out;
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("mask stats --mode dense").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("seq foldback --len 5 --strides 0:1 -T 4").code, 1);
}

TEST(Cli, GridAndFoldbackExamples) {
  const CliRun g = run("seq grid -H 1 -W 2 -T 6 --seed 7");
  EXPECT_EQ(g.code, 0);
  EXPECT_EQ(g.out, "0\n1\n0\n1\n0\n1\n");
  const CliRun f = run("seq foldback --len 5 --strides 1:1 -T 8 --seed 0");
  EXPECT_EQ(f.code, 0);
  std::istringstream in(f.out);
  std::vector<int> v;
  for (int x; in >> x;) v.push_back(x);
  ASSERT_EQ(v.size(), 8u);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_EQ(std::abs(v[i] - v[i - 1]), 1);
  EXPECT_EQ(run("seq grid -H 4 -W 4 -T 50 --seed 3").out, run("seq grid -H 4 -W 4 -T 50 --seed 3").out);
}

TEST(Cli, EvalTrajIdenticalAndDisjoint) {
  const auto dir = geoctx::testing::scratch_dir("cli_traj");
  const geoctx::Trajectory t = geoctx::testing::wavy_trajectory(30, 2);
  geoctx::io::write_trajectory(dir / "a.txt", t);
  const CliRun r = run("eval traj " + (dir / "a.txt").string() + " " + (dir / "a.txt").string() +
                    " --metrics ate,rpe,auc3,auc30");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has_line(r.out, "auc3", "100")) << r.out;
  EXPECT_TRUE(has_line(r.out, "auc30", "100"));
  geoctx::Trajectory shifted;
  for (std::size_t i = 0; i < t.size(); ++i) shifted.push_back(t.ids[i] + 1000, t.poses[i]);
  geoctx::io::write_trajectory(dir / "b.txt", shifted);
  EXPECT_EQ(run("eval traj " + (dir / "a.txt").string() + " " + (dir / "b.txt").string()).code, 3);
}

TEST(Cli, MissingAndMalformedFilesExitTwo) {
  const auto dir = geoctx::testing::scratch_dir("cli_bad");
  std::ofstream(dir / "bad.txt") << "0 0 0 0 5 0 0 0\n";
  EXPECT_EQ(run("eval traj " + (dir / "bad.txt").string() + " " + (dir / "bad.txt").string()).code, 2);
  EXPECT_EQ(run("eval traj " + (dir / "none.txt").string() + " " + (dir / "none.txt").string()).code, 2);
  std::ofstream(dir / "empty.xyz") << "# nothing\n";
  std::ofstream(dir / "one.xyz") << "0 0 0\n";
  EXPECT_EQ(run("eval recon " + (dir / "empty.xyz").string() + " " + (dir / "one.xyz").string()).code, 2);
}

TEST(Cli, SynthRoomReconAgainstItself) {
  const auto dir = geoctx::testing::scratch_dir("cli_room");
  const CliRun s = run("synth room --dims 4,4,4 --frames 6 --width 32 --height 24 --out " + (dir / "room").string());
  ASSERT_EQ(s.code, 0) << s.out;
  const CliRun r = run("eval recon " + (dir / "room").string() + " " + (dir / "room").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has_line(r.out, "f1", "100")) << r.out;
}

TEST(Cli, StreamRunIsDeterministicAndRejectsSmallOverlap) {
  const auto dir = geoctx::testing::scratch_dir("cli_stream");
  ASSERT_EQ(run("synth room --frames 30 --width 56 --height 28 --out " + (dir / "room").string()).code, 0);
  const std::string base = "stream run " + (dir / "room").string() + " --window 4 --anchors 2 --seed 5 --out ";
  ASSERT_EQ(run(base + (dir / "o1").string()).code, 0);
  ASSERT_EQ(run(base + (dir / "o2").string()).code, 0);
  std::ifstream a(dir / "o1" / "trajectory.txt"), b(dir / "o2" / "trajectory.txt");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_FALSE(sa.str().empty());
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_TRUE(std::filesystem::exists(dir / "o1" / "report.json"));
  EXPECT_EQ(run("stream run " + (dir / "room").string() + " --mode vo --vo-overlap 2 --out " + (dir / "o3").string()).code, 1);
  EXPECT_FALSE(std::filesystem::exists(dir / "o3" / "trajectory.txt"));
}
