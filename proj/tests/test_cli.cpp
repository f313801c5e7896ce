#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "rollcs/io.hpp"
#include "rollcs/metrics_eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

const fs::path kDir = fs::temp_directory_path() / "rollcs_cli_test";

Run run(const std::string& args) {
  fs::create_directories(kDir);
  const auto err_file = (kDir / "stderr.txt").string();
  const std::string cmd = std::string(ROLLCS_CLI_PATH) + " " + args + " > " + (kDir / "stdout.txt").string() +
                          " 2> " + err_file;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(err_file);
  std::stringstream ss;
  ss << is.rdbuf();
  r.err = ss.str();
  return r;
}

std::string p(const std::string& name) { return (kDir / name).string(); }

}  // namespace

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("simulate --no-such-flag").code, 2);
  const auto r = run("simulate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--out-frame"), std::string::npos);
}

TEST(Cli, PsfWritesStatistics) {
  const auto r = run("psf --rows 64 --pupil-frac 0.25 --seed 3 --out " + p("psf.rcs") + " --report " +
                     p("psf.json") + " --pgm " + p("psf.pgm") + " --size 32");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = rollcs::io::read_json(p("psf.json"));
  EXPECT_EQ(rep["rows"], 64);
  EXPECT_GT(rep["grain_fwhm_px"].get<double>(), 2.0);
  EXPECT_TRUE(rep.contains("coverage"));
  EXPECT_EQ(rollcs::io::read_image(p("psf.rcs")).rows(), 64u);
}

TEST(Cli, SimulateReconstructEvaluateBlinking) {
  auto r = run("simulate --scene blinking --rows 16 --rows-per-bin 1 --seed 5 --snr 200 "
               "--source 3,4,4 --source 10,12,2 --out-frame " + p("b/frame.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto side = rollcs::io::read_json(p("b/frame.rcs.json"));
  EXPECT_EQ(side["dims"]["bins"], 16);
  EXPECT_EQ(side["schedule"]["row_to_bin"].size(), 16u);
  EXPECT_TRUE(side["seeds"].contains("noise"));
  EXPECT_EQ(side["blinking_sources"].size(), 2u);

  r = run("reconstruct --frame " + p("b/frame.rcs") + " --sidecar " + p("b/frame.rcs.json") +
          " --tau-rel 1e-3 --max-iters 150 --out " + p("b/rec.rcs") + " --pgm-dir " + p("b/pgm"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = rollcs::io::read_json(p("b/rec.rcs.report.json"));
  EXPECT_EQ(rep["objective_trace"].size(), rep["iterations_run"].get<std::size_t>());
  EXPECT_TRUE(rep.contains("wall_time_s"));
  EXPECT_TRUE(rep["pgm"]["scaling"].contains("hi"));
  EXPECT_TRUE(fs::exists(p("b/pgm/bin_0015.pgm")));
  EXPECT_EQ(rollcs::io::load_video(p("b/rec.rcs")).dims().bins, 16u);

  r = run("evaluate --truth " + p("b/frame.rcs.truth.rcs") + " --estimate " + p("b/rec.rcs") +
          " --sidecar " + p("b/frame.rcs.json") + " --out " + p("b/eval.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = rollcs::io::read_json(p("b/eval.json"));
  EXPECT_TRUE(ev.contains("psnr_db"));
  ASSERT_EQ(ev["frequencies"].size(), 2u);
  EXPECT_EQ(ev["frequencies"][0]["truth_bin"], 4);
  EXPECT_EQ(ev["frequencies"][1]["truth_bin"], 8);
}

TEST(Cli, ConfigFileAndOverride) {
  {
    std::ofstream os(p("sim.json"));
    os << json{{"scene", "spikes"}, {"rows", 8}, {"rows_per_bin", 2}, {"spikes", 5}, {"seed", 9},
               {"out-frame", p("c/frame.rcs")}}
              .dump();
  }
  auto r = run("simulate --config " + p("sim.json") + " --rows 12");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto side = rollcs::io::read_json(p("c/frame.rcs.json"));
  EXPECT_EQ(side["dims"]["rows"], 12);
  EXPECT_EQ(side["spikes"], 5);
  EXPECT_EQ(side["dims"]["bins"], 6);

  {
    std::ofstream os(p("bad.json"));
    os << json{{"no_such_key", 1}}.dump();
  }
  r = run("simulate --config " + p("bad.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
}

TEST(Cli, RefusesLongExposure) {
  const auto r = run("simulate --rows 8 --row-period 1e-5 --exposure 2e-5 --out-frame " + p("e/frame.rcs"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("exposure"), std::string::npos);
  EXPECT_FALSE(fs::exists(p("e/frame.rcs")));
}

TEST(Cli, MissingFileNamesPath) {
  const auto r = run("reconstruct --frame " + p("nope.rcs") + " --psf " + p("psf.rcs") + " --out " + p("x.rcs"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.rcs"), std::string::npos);
}

TEST(Cli, SweepCsvAndJson) {
  const auto r = run("sweep --rows 8 --cols 8 --bins 4 --k 1 --k 200 --trials 10 --max-iters 100 --csv " +
                     p("s/sweep.csv") + " --json " + p("s/sweep.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream is(p("s/sweep.csv"));
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "k,m,n,trials,success_rate");
  const auto j = rollcs::io::read_json(p("s/sweep.json"));
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["n"], 256);
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, PsfSynthDeterministicWithCoverage) {
  const std::string args = "psf --synth --size 108 --pupil-frac 0.25 --seed 7 --out ";
  auto r = run(args + p("d/psf_a.rcs") + " --report " + p("d/psf_a.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run(args + p("d/psf_b.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(p("d/psf_a.rcs")), slurp(p("d/psf_b.rcs")));
  const auto rep = rollcs::io::read_json(p("d/psf_a.json"));
  EXPECT_TRUE(rep["coverage"]["pass"].get<bool>());
  EXPECT_EQ(rep["rows"], 216);
}

TEST(Cli, PsfLoadOneHotReportsCoverageFail) {
  {
    std::ofstream os(p("point.pgm"));
    os << "P2\n5 5\n255\n0 0 0 0 0\n0 0 0 0 0\n0 0 200 0 0\n0 0 0 0 0\n0 0 0 0 0\n";
  }
  const auto r = run("psf --load " + p("point.pgm") + " --size 5 --rows-per-bin 1 --out " + p("point.rcs") +
                     " --report " + p("point.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = rollcs::io::read_json(p("point.json"));
  EXPECT_FALSE(rep["coverage"]["pass"].get<bool>());
  const auto psf = rollcs::io::read_image(p("point.rcs"));
  EXPECT_EQ(psf(2, 2), 1.0);
  EXPECT_EQ(psf.sum(), 1.0);

  const auto missing = run("psf --load " + p("absent.pgm") + " --out " + p("x.rcs"));
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("absent.pgm"), std::string::npos);
}

TEST(Cli, SimulatePaperScaleFrameDims) {
  const auto r = run("simulate --size 108 --bins 54 --rows-per-bin 2 --snr 256 --seed 1 --out-frame " +
                     p("paper/frame.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto f = rollcs::io::read_image(p("paper/frame.rcs"));
  EXPECT_EQ(f.rows(), 108u);
  EXPECT_EQ(f.cols(), 108u);
  const auto side = rollcs::io::read_json(p("paper/frame.rcs.json"));
  EXPECT_EQ(side["snr"], 256.0);
  EXPECT_NEAR(side["effective_fps"].get<double>(), 104166.67, 0.01);
  EXPECT_EQ(run("simulate --size 108 --bins 50 --rows-per-bin 2 --out-frame " + p("paper/bad.rcs")).code, 2);
}

TEST(Cli, NoiselessFrameEqualsForwardModel) {
  const auto r = run("simulate --size 24 --rows-per-bin 3 --glyph-size 4 --seed 2 --out-frame " + p("n/frame.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto side = rollcs::io::read_json(p("n/frame.rcs.json"));
  const auto psf = rollcs::load_psf(p("n/frame.rcs.psf.rcs"), {}, false);
  const rollcs::ForwardOperator op(psf, rollcs::io::schedule_from_json(side), {24, 24, 8});
  const auto want = op.forward(rollcs::io::load_video(p("n/frame.rcs.truth.rcs")));
  const auto got = rollcs::io::read_image(p("n/frame.rcs"));
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-12);
}

TEST(Cli, SimulateReproducibleFromSidecar) {
  const std::string args = "simulate --scene glyphs --size 16 --rows-per-bin 2 --snr 50 --seed 77 --out-frame ";
  ASSERT_EQ(run(args + p("r1/frame.rcs")).code, 0);
  ASSERT_EQ(run(args + p("r2/frame.rcs")).code, 0);
  EXPECT_EQ(slurp(p("r1/frame.rcs")), slurp(p("r2/frame.rcs")));
  EXPECT_EQ(slurp(p("r1/frame.rcs.truth.rcs")), slurp(p("r2/frame.rcs.truth.rcs")));

  // replay from sidecar alone
  const auto frame = slurp(p("r1/frame.rcs"));
  const auto truth = slurp(p("r1/frame.rcs.truth.rcs"));
  const auto psf = slurp(p("r1/frame.rcs.psf.rcs"));
  fs::copy_file(p("r1/frame.rcs.json"), p("r1/replay.json"), fs::copy_options::overwrite_existing);
  fs::remove(p("r1/frame.rcs"));
  const auto r = run("simulate --config " + p("r1/replay.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(p("r1/frame.rcs")), frame);
  EXPECT_EQ(slurp(p("r1/frame.rcs.truth.rcs")), truth);
  EXPECT_EQ(slurp(p("r1/frame.rcs.psf.rcs")), psf);
}

TEST(Cli, ReconstructDeltaPsfIdentity) {
  rollcs::Image delta(9, 9);
  delta(4, 4) = 1.0;
  rollcs::io::save_image(p("delta.rcs"), delta);
  rollcs::Image frame(6, 5);
  for (std::size_t i = 0; i < frame.size(); ++i) frame.values()[i] = 0.1 + 0.05 * static_cast<double>(i);
  rollcs::io::save_image(p("id_frame.rcs"), frame);
  auto r = run("reconstruct --frame " + p("id_frame.rcs") + " --psf " + p("delta.rcs") +
               " --rows-per-bin 6 --tau 0 --max-iters 200 --out " + p("id_rec.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  auto v = rollcs::io::load_video(p("id_rec.rcs"));
  ASSERT_EQ(v.dims().bins, 1u);
  for (std::size_t i = 0; i < frame.size(); ++i) EXPECT_NEAR(v.values()[i], frame.values()[i], 1e-9);

  // one row per bin: each bin reproduces its own row
  r = run("reconstruct --frame " + p("id_frame.rcs") + " --psf " + p("delta.rcs") +
          " --rows-per-bin 1 --tau 0 --max-iters 200 --out " + p("id_rec2.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  v = rollcs::io::load_video(p("id_rec2.rcs"));
  ASSERT_EQ(v.dims().bins, 6u);
  for (std::size_t row = 0; row < 6; ++row)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(v(row, c, row), frame(row, c), 1e-9);
}

TEST(Cli, ReconstructWarnsOnDenseSolution) {
  ASSERT_EQ(run("simulate --size 16 --rows-per-bin 2 --snr 5 --seed 3 --out-frame " + p("w/frame.rcs")).code, 0);
  const auto r = run("reconstruct --frame " + p("w/frame.rcs") + " --sidecar " + p("w/frame.rcs.json") +
                     " --tau 0 --allow-negative --max-iters 100 --out " + p("w/rec.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = rollcs::io::read_json(p("w/rec.rcs.report.json"));
  EXPECT_GT(rep["fraction_above_1pct_of_max"].get<double>(), 0.5);
  ASSERT_EQ(rep["warnings"].size(), 1u);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Cli, ReconstructDimsMismatchNamesFiles) {
  ASSERT_EQ(run("simulate --size 16 --rows-per-bin 2 --seed 3 --out-frame " + p("m/frame.rcs")).code, 0);
  rollcs::io::save_image(p("m/small.rcs"), rollcs::Image(12, 16, 1.0));
  const auto r = run("reconstruct --frame " + p("m/small.rcs") + " --sidecar " + p("m/frame.rcs.json") +
                     " --out " + p("m/rec.rcs"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("small.rcs"), std::string::npos);
  EXPECT_NE(r.err.find("12x16"), std::string::npos);
  EXPECT_NE(r.err.find("frame.rcs.json"), std::string::npos);
}

TEST(Cli, EvaluateTrivialCases) {
  const auto truth = rollcs::gen_random_spikes({4, 4, 2}, 5, 1);
  rollcs::io::save_video(p("ev_truth.rcs"), truth);
  rollcs::io::save_video(p("ev_zero.rcs"), rollcs::VideoTensor({4, 4, 2}));
  rollcs::io::save_video(p("ev_other.rcs"), rollcs::VideoTensor({4, 4, 3}));
  auto r = run("evaluate --truth " + p("ev_truth.rcs") + " --estimate " + p("ev_truth.rcs") + " --out " +
               p("ev_same.json") + " --csv " + p("ev_same.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(rollcs::io::read_json(p("ev_same.json"))["psnr_db"], 200.0);
  EXPECT_EQ(slurp(p("ev_same.csv")).substr(0, 13), "metric,value\n");
  r = run("evaluate --truth " + p("ev_truth.rcs") + " --estimate " + p("ev_zero.rcs") + " --out " + p("ev_zero.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(rollcs::io::read_json(p("ev_zero.json"))["relative_error"], 1.0);
  r = run("evaluate --truth " + p("ev_truth.rcs") + " --estimate " + p("ev_other.rcs"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("ev_other.rcs"), std::string::npos);
}

TEST(Cli, PaperScaleRoundTrip) {
  // the desk-scale acceptance scene through the command line
  auto r = run("simulate --size 108 --bins 54 --rows-per-bin 2 --pupil-frac 1.0 --psf-seed 7 --scene-seed 11 "
               "--noise-seed 12 --glyphs 54 --glyph-size 5 --snr 256 --out-frame " + p("rt/frame.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("reconstruct --frame " + p("rt/frame.rcs") + " --sidecar " + p("rt/frame.rcs.json") +
          " --tau-rel 1e-4 --max-iters 300 --out " + p("rt/rec.rcs"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("evaluate --truth " + p("rt/frame.rcs.truth.rcs") + " --estimate " + p("rt/rec.rcs") + " --out " +
          p("rt/eval.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = rollcs::io::read_json(p("rt/eval.json"));
  EXPECT_LT(ev["relative_error"].get<double>(), 0.15);
  EXPECT_GT(ev["support_f1"].get<double>(), 0.9);
}
