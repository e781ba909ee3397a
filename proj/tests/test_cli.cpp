#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "wavray/data.hpp"

namespace fs = std::filesystem;
using testing_support::scratch_dir;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  static const fs::path dir = scratch_dir("cli_io");
  const std::string cmd = std::string("\"") + WAVRAY_CLI + "\" " + args + " >" + (dir / "out").string() + " 2>" +
                          (dir / "err").string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "out");
  r.err = slurp(dir / "err");
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Drops the throughput column, which depends on wall time.
std::string without_rate(const std::string& row) { return row.substr(0, row.rfind(',')); }

const fs::path& small_data() {
  static const fs::path manifest = [] {
    const auto dir = scratch_dir("cli_data");
    const auto r = run("synth --per-class 4 --out " + dir.string());
    EXPECT_EQ(r.code, 0) << r.err;
    return dir / "manifest.csv";
  }();
  return manifest;
}

std::string quick_train(const fs::path& out, const std::string& extra = "") {
  return "train --config " + std::string(WAVRAY_CONFIGS) + "/desk.cfg --data " + small_data().string() +
         " --out " + out.string() + " --epochs 2 --batch 4 " + extra;
}

}  // namespace

TEST(Cli, SynthWritesManifest) {
  const auto dir = scratch_dir("cli_synth");
  const auto r = run("synth --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir / "manifest.csv"));
  EXPECT_EQ(rows.size(), 193u);
  EXPECT_EQ(rows.front(), "path,label");
  EXPECT_EQ(run("synth --classes 50 --out " + dir.string()).code, 1);
  EXPECT_EQ(run("synth --placement corner --out " + dir.string()).code, 1);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --bogus").code, 1);
  EXPECT_EQ(run("--help").code, 0);
  const auto r = run("train --data /nonexistent/manifest.csv --out " + scratch_dir("cli_missing").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("manifest"), std::string::npos) << r.err;
}

TEST(Cli, TrainEvalRoundTrip) {
  const auto dir = scratch_dir("cli_train");
  const auto t = run(quick_train(dir, "--rays 1"));
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"config.cfg", "metrics.csv", "origins.csv", "final.wrnc"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto logged = lines(slurp(dir / "metrics.csv"));
  ASSERT_EQ(logged.size(), 3u);

  const auto e = run("eval --checkpoint " + (dir / "final.wrnc").string() + " --data " + small_data().string());
  ASSERT_EQ(e.code, 0) << e.err;
  const auto printed = lines(e.out);
  ASSERT_EQ(printed.size(), 2u);
  EXPECT_EQ(printed[0], logged[0]);
  EXPECT_EQ(without_rate(printed[1]), without_rate(logged[2]));
  // three classes, so top-5 is always a hit
  EXPECT_NE(printed[1].find(",1,"), std::string::npos);

  const auto x = run("export-maps --checkpoint " + (dir / "final.wrnc").string() + " --image " +
                     (small_data().parent_path() / "img_0_0000.ppm").string() + " --out " + (dir / "maps").string());
  ASSERT_EQ(x.code, 0) << x.err;
  std::size_t pgm = 0;
  for (const auto& f : fs::directory_iterator(dir / "maps")) pgm += f.path().extension() == ".pgm";
  EXPECT_EQ(pgm, 13u);
}

TEST(Cli, RepeatedSeedGivesSameLogs) {
  const auto a = scratch_dir("cli_seed_a"), b = scratch_dir("cli_seed_b");
  ASSERT_EQ(run(quick_train(a, "--seed 4")).code, 0);
  ASSERT_EQ(run(quick_train(b, "--seed 4")).code, 0);
  const auto la = lines(slurp(a / "metrics.csv")), lb = lines(slurp(b / "metrics.csv"));
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(without_rate(la[i]), without_rate(lb[i]));
  EXPECT_EQ(wavray::read_file(a / "final.wrnc"), wavray::read_file(b / "final.wrnc"));
  EXPECT_EQ(slurp(a / "config.cfg"), slurp(b / "config.cfg"));
  EXPECT_NE(slurp(a / "config.cfg").find("seed = 4"), std::string::npos);
}

TEST(Cli, RejectsBadCheckpoints) {
  const auto dir = scratch_dir("cli_corrupt");
  ASSERT_EQ(run(quick_train(dir)).code, 0);
  auto bytes = wavray::read_file(dir / "final.wrnc");
  bytes[bytes.size() / 2] ^= 0x01;
  wavray::write_file_atomic(dir / "bad.wrnc", bytes);
  const auto r = run("eval --checkpoint " + (dir / "bad.wrnc").string() + " --data " + small_data().string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("checksum"), std::string::npos) << r.err;

  // rays 0 has nothing to export
  const auto x = run("export-maps --checkpoint " + (dir / "final.wrnc").string() + " --image " +
                     (small_data().parent_path() / "img_0_0000.ppm").string() + " --out " + (dir / "maps").string());
  EXPECT_EQ(x.code, 1);
}

TEST(Cli, DivergenceExitCode) {
  const auto r = run(quick_train(scratch_dir("cli_diverge"), "--lr 1e30 --warmup 0"));
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, GradcheckAndParamCount) {
  const auto g = run("gradcheck --scope block");
  EXPECT_EQ(g.code, 0) << g.out << g.err;
  EXPECT_NE(g.out.find("ray_layer"), std::string::npos);
  EXPECT_EQ(run("gradcheck --scope nothing").code, 1);

  const auto p = run("param-count --table1 --rays 3");
  ASSERT_EQ(p.code, 0);
  EXPECT_NE(p.out.find("total"), std::string::npos);
  EXPECT_NE(p.out.find("12274187"), std::string::npos) << p.out;
}
