#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "znext/znext.hpp"

namespace fs = std::filesystem;
using namespace znext;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("znext_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunResult run(const std::string& args) {
  static int n = 0;
  const fs::path log = fs::temp_directory_path() / ("znext_cli_" + std::to_string(::getpid()) + "_" +
                                                    std::to_string(n++) + ".log");
  const std::string cmd = std::string(ZNEXT_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(log);
  fs::remove(log);
  return r;
}

std::string slurp(const fs::path& p) { return read_file(p); }

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

const char* kTinyModel =
    " --levels 2 --channels 8 --heads 2 --groups 2 --input-side 32 --epochs 1 --batch-size 2 --lr 1e-3";

}  // namespace

TEST(Cli, SynthWritesCountImagesAndManifest) {
  auto d = scratch("synth");
  auto r = run("synth --out " + d.string() + " --count 3 --side 32 --seed 4");
  ASSERT_EQ(r.code, 0) << r.out;
  auto m = read_manifest(d / "manifest.txt");
  EXPECT_FALSE(m.clips);
  EXPECT_EQ(m.entries.size(), 3u);
  EXPECT_NE(r.out.find("seed=4"), std::string::npos);
}

TEST(Cli, SynthSameSeedSameBytes) {
  auto a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(run("synth --out " + a.string() + " --count 2 --side 32 --seed 9").code, 0);
  ASSERT_EQ(run("synth --out " + b.string() + " --count 2 --side 32 --seed 9").code, 0);
  auto ma = read_manifest(a / "manifest.txt");
  for (const auto& e : ma.entries) {
    EXPECT_EQ(slurp(a / e.images[0]), slurp(b / e.images[0]));
    EXPECT_EQ(slurp(a / e.masks[0]), slurp(b / e.masks[0]));
  }
}

TEST(Cli, SynthClipLenWritesClipManifest) {
  auto d = scratch("synth_clip");
  ASSERT_EQ(run("synth --out " + d.string() + " --count 2 --side 32 --clip-len 5").code, 0);
  auto m = read_manifest(d / "manifest.txt");
  EXPECT_TRUE(m.clips);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].images.size(), 5u);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("bogus").code, 1);
  EXPECT_EQ(run("synth").code, 1);
  EXPECT_EQ(run("gradcheck --module nope").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, TrainRejectsGroupsBelowTwo) {
  auto d = scratch("train_g1");
  ASSERT_EQ(run("synth --out " + d.string() + " --count 2 --side 32").code, 0);
  auto r = run("train --data " + (d / "manifest.txt").string() + " --out " + (d / "m.ckpt").string() +
               kTinyModel + " --groups 1");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("groups"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(d / "m.ckpt"));
}

TEST(Cli, TrainRejectsUnknownSetKey) {
  auto d = scratch("train_key");
  ASSERT_EQ(run("synth --out " + d.string() + " --count 2 --side 32").code, 0);
  auto r = run("train --data " + (d / "manifest.txt").string() + " --out " + (d / "m.ckpt").string() +
               kTinyModel + " --set nonsense=1");
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Cli, TrainImageManifestWithClipModelIsDataError) {
  auto d = scratch("train_clip_mismatch");
  ASSERT_EQ(run("synth --out " + d.string() + " --count 2 --side 32").code, 0);
  auto r = run("train --data " + (d / "manifest.txt").string() + " --out " + (d / "m.ckpt").string() +
               kTinyModel + " --clip-len 3");
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST(Cli, MissingManifestIsDataErrorNamingPath) {
  auto d = scratch("missing");
  auto r = run("train --data " + (d / "nothere.txt").string() + " --out " + (d / "m.ckpt").string() + kTinyModel);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("nothere.txt"), std::string::npos) << r.out;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("pipeline"));
    const fs::path& d = *dir_;
    ASSERT_EQ(run("synth --out " + (d / "data").string() + " --count 3 --side 32 --seed 2").code, 0);
    auto r = run("train --data " + (d / "data" / "manifest.txt").string() + " --out " + (d / "a.ckpt").string() +
                 kTinyModel + " --seed 5 --ual off");
    ASSERT_EQ(r.code, 0) << r.out;
    train_out_ = new std::string(r.out);
  }
  static void TearDownTestSuite() {
    delete dir_;
    delete train_out_;
  }
  static fs::path* dir_;
  static std::string* train_out_;
};

fs::path* CliPipeline::dir_ = nullptr;
std::string* CliPipeline::train_out_ = nullptr;

TEST_F(CliPipeline, TrainEchoesResolvedConfig) {
  EXPECT_NE(train_out_->find("seed = 5"), std::string::npos);
  EXPECT_NE(train_out_->find("ual = off"), std::string::npos);
  EXPECT_NE(train_out_->find("groups = 2"), std::string::npos);
  EXPECT_TRUE(fs::exists(*dir_ / "a.ckpt.cfg"));
}

TEST_F(CliPipeline, UalOffLogsZeroLambda) {
  std::istringstream in(slurp(*dir_ / "a.ckpt.csv"));
  std::string header, line;
  std::getline(in, header);
  ASSERT_NE(header.find("lambda"), std::string::npos);
  std::size_t col = 0;
  {
    std::istringstream hs(header);
    std::string tok;
    while (std::getline(hs, tok, ',') && tok != "lambda") ++col;
  }
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    for (std::size_t i = 0; i <= col; ++i) std::getline(ls, tok, ',');
    EXPECT_EQ(std::stod(tok), 0.0) << line;
    ++rows;
  }
  EXPECT_GT(rows, 0u);
}

TEST_F(CliPipeline, SameSeedSameCheckpointBytes) {
  const fs::path& d = *dir_;
  auto r = run("train --data " + (d / "data" / "manifest.txt").string() + " --out " + (d / "b.ckpt").string() +
               kTinyModel + " --seed 5 --ual off");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(d / "a.ckpt"), slurp(d / "b.ckpt"));
}

TEST_F(CliPipeline, PredictWritesOneByteMapPerImage) {
  const fs::path& d = *dir_;
  auto r = run("predict --ckpt " + (d / "a.ckpt").string() + " --data " + (d / "data" / "manifest.txt").string() +
               " --out " + (d / "pred").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_ext(d / "pred", ".pgm"), 3u);
  auto m = read_manifest(d / "data" / "manifest.txt");
  for (const auto& e : m.entries) {
    auto raster = read_pnm_raster(d / "pred" / (e.name + ".pgm"));
    auto mask = read_mask(m.resolve(e.masks[0]));
    EXPECT_EQ(raster.channels, 1u);
    EXPECT_EQ(raster.height, mask.height);
    EXPECT_EQ(raster.width, mask.width);
  }
}

TEST_F(CliPipeline, PredictDigestMismatchNeedsForce) {
  const fs::path& d = *dir_;
  const fs::path cfg = d / "other.cfg";
  write_file(cfg, slurp(d / "a.ckpt.cfg") + "temporal_shift = false\n");
  const std::string base = "predict --ckpt " + (d / "a.ckpt").string() + " --data " +
                           (d / "data" / "manifest.txt").string() + " --config " + cfg.string();
  auto r = run(base + " --out " + (d / "pred_mismatch").string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("--force"), std::string::npos) << r.out;
  auto f = run(base + " --out " + (d / "pred_forced").string() + " --force");
  EXPECT_EQ(f.code, 0) << f.out;
}

TEST_F(CliPipeline, EvalOnGroundTruthIsPerfect) {
  const fs::path& d = *dir_;
  auto m = read_manifest(d / "data" / "manifest.txt");
  fs::create_directories(d / "gt");
  for (const auto& e : m.entries) fs::copy_file(m.resolve(e.masks[0]), d / "gt" / (e.name + ".pgm"),
                                                fs::copy_options::overwrite_existing);
  auto r = run("eval --pred " + (d / "gt").string() + " --gt " + (d / "gt").string() + " --out " +
               (d / "self.csv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(slurp(d / "self.csv"));
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string tok;
    while (std::getline(hs, tok, ',')) cols.push_back(tok);
  }
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    for (const auto& c : cols) {
      std::getline(ls, tok, ',');
      if (c == "mae") {
        EXPECT_EQ(std::stod(tok), 0.0) << line;
      }
      if (c == "m_dice" || c == "m_iou") {
        EXPECT_EQ(std::stod(tok), 1.0) << line;
      }
    }
    ++rows;
  }
  EXPECT_EQ(rows, 4u);  // three images and the mean row
}

TEST_F(CliPipeline, EvalSummaryIsMeanOfRows) {
  const fs::path& d = *dir_;
  ASSERT_EQ(run("predict --ckpt " + (d / "a.ckpt").string() + " --data " +
                (d / "data" / "manifest.txt").string() + " --out " + (d / "pred2").string())
                .code,
            0);
  fs::create_directories(d / "gt2");
  auto m = read_manifest(d / "data" / "manifest.txt");
  for (const auto& e : m.entries)
    fs::copy_file(m.resolve(e.masks[0]), d / "gt2" / (e.name + ".pgm"), fs::copy_options::overwrite_existing);
  auto r = run("eval --pred " + (d / "pred2").string() + " --gt " + (d / "gt2").string() + " --out " +
               (d / "r.csv").string() + " --curves " + (d / "curves").string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(slurp(d / "r.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    std::getline(ls, tok, ',');
    names.push_back(tok);
    rows.emplace_back();
    while (std::getline(ls, tok, ',')) rows.back().push_back(std::stod(tok));
  }
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(names.back(), "mean");
  EXPECT_TRUE(std::is_sorted(names.begin(), names.end() - 1));
  for (std::size_t c = 0; c < rows[0].size(); ++c) {
    const double mean = (rows[0][c] + rows[1][c] + rows[2][c]) / 3.0;
    EXPECT_NEAR(rows[3][c], mean, 1e-8) << "column " << c;
  }
  EXPECT_EQ(count_ext(d / "curves", ".csv"), 4u);
}

TEST_F(CliPipeline, EvalMissingMaskNamesFile) {
  const fs::path& d = *dir_;
  fs::create_directories(d / "pred3");
  fs::create_directories(d / "gt3");
  Image p(1, 8, 8, 0.5);
  write_image(d / "pred3" / "lonely.pgm", p);
  auto r = run("eval --pred " + (d / "pred3").string() + " --gt " + (d / "gt3").string() + " --out " +
               (d / "x.csv").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("lonely"), std::string::npos) << r.out;
}

TEST(Cli, ClipOfOneMatchesImagePathBytes) {
  auto d = scratch("clip1");
  ASSERT_EQ(run("synth --out " + (d / "img").string() + " --count 2 --side 32 --seed 6").code, 0);
  auto r = run("train --data " + (d / "img" / "manifest.txt").string() + " --out " + (d / "m.ckpt").string() +
               kTinyModel + " --seed 1");
  ASSERT_EQ(r.code, 0) << r.out;
  // Same frames as one-frame clips.
  auto m = read_manifest(d / "img" / "manifest.txt");
  Manifest clips = m;
  clips.clips = true;
  clips.dir = d / "img";
  write_manifest(d / "img" / "clips.txt", clips);
  ASSERT_EQ(run("predict --ckpt " + (d / "m.ckpt").string() + " --data " + (d / "img" / "manifest.txt").string() +
                " --out " + (d / "p_img").string())
                .code,
            0);
  auto rc = run("predict --ckpt " + (d / "m.ckpt").string() + " --data " + (d / "img" / "clips.txt").string() +
                " --out " + (d / "p_clip").string());
  ASSERT_EQ(rc.code, 0) << rc.out;
  for (const auto& e : m.entries)
    EXPECT_EQ(slurp(d / "p_img" / (e.name + ".pgm")), slurp(d / "p_clip" / (e.name + "_f000.pgm")));
}

TEST(Cli, GradcheckPassesAndListsCases) {
  auto r = run("gradcheck --module mhsiu --seed 2");
  EXPECT_EQ(r.code, 0) << r.out;
  for (const auto& c : gradcheck_registry())
    if (c.group == "mhsiu") {
      EXPECT_NE(r.out.find(c.name), std::string::npos) << c.name;
    }
  EXPECT_NE(r.out.find("all passed"), std::string::npos);
}

TEST(Cli, GradcheckCorruptOpFails) {
  std::string name;
  for (const auto& c : gradcheck_registry())
    if (c.group == "tensor") {
      name = c.name;
      break;
    }
  ASSERT_FALSE(name.empty());
  auto r = run("gradcheck --module tensor --corrupt-op " + name);
  EXPECT_NE(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(run("gradcheck --module tensor --corrupt-op no_such_case").code, 1);
}
