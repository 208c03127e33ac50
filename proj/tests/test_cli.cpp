#include <gtest/gtest.h>

#include <cstdlib>

#include "boxcap/dataio.hpp"
#include "boxcap/image.hpp"
#include "boxcap/inference.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace boxcap;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

Result run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + BOXCAP_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = testutil::slurp(log);
  return r;
}

const char* kSmallConfig = R"(layers=1
width=16
heads=2
grid=4
max_caption_len=10
max_info_len=16
neighbors=top1
use_image=true
use_info=true
use_location=true
warmup=2
batch_size=4
lr=0.003
seed=5
checkpoint_every=0
schedule_scale=1
clip_norm=1
beta1=0.9
beta2=0.999
adam_eps=1e-08
)";

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Dataset plus a trained checkpoint shared by the slower tests.
void small_run(const fs::path& dir, int steps) {
  testutil::spit(dir / "small.cfg", std::string(kSmallConfig) + "steps=" + std::to_string(steps) + "\n");
  ASSERT_EQ(run("synth --n 8 --seed 3 --inline-images --out " + q(dir / "data.jsonl"), dir).status, 0);
  const Result r = run("train --config " + q(dir / "small.cfg") + " --data " + q(dir / "data.jsonl") + " --out " +
                           q(dir / "run"),
                       dir);
  ASSERT_EQ(r.status, 0) << r.output;
}

}  // namespace

TEST(Cli, SynthIsDeterministic) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("synth --n 100 --seed 7 --inline-images --out " + q(dir / "a.jsonl"), dir).status, 0);
  ASSERT_EQ(run("synth --n 100 --seed 7 --inline-images --out " + q(dir / "b.jsonl"), dir).status, 0);
  EXPECT_EQ(testutil::slurp(dir / "a.jsonl"), testutil::slurp(dir / "b.jsonl"));
  ASSERT_EQ(run("synth --n 3 --seed 7 --out " + q(dir / "png" / "c.jsonl"), dir).status, 0);
  EXPECT_EQ(dataio::load_dataset(dir / "png" / "c.jsonl", dataio::Split::kTrain).cards.size(), 3u);
}

TEST(Cli, SynthZeroIsAUsageError) {
  const auto dir = testutil::scratch_dir();
  const Result r = run("synth --n 0 --out " + q(dir / "a.jsonl"), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(fs::exists(dir / "a.jsonl"));
}

TEST(Cli, StatsOfAThousandCards) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("synth --n 1000 --seed 1 --inline-images --out " + q(dir / "a.jsonl"), dir).status, 0);
  const Result r = run("stats --data " + q(dir / "a.jsonl"), dir);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto at = r.output.find("captions_per_card_mean=");
  ASSERT_NE(at, std::string::npos);
  const double mean = std::stod(r.output.substr(at + 23));
  EXPECT_GE(mean, 3.0);
  EXPECT_LE(mean, 6.0);
}

TEST(Cli, ScheduleDump) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("schedule-dump --max-step 6000 --out " + q(dir / "s.csv"), dir).status, 0);
  std::istringstream in(testutil::slurp(dir / "s.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,p1,p2,p3");
  double prev3 = -1;
  int rows = 0;
  while (std::getline(in, line)) {
    long long step;
    double p1, p2, p3;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf", &step, &p1, &p2, &p3), 4) << line;
    EXPECT_NEAR(p1 + p2 + p3, 1.0, 2e-9);
    EXPECT_GE(p3, prev3);
    prev3 = p3;
    if (step == 5000) {
      EXPECT_NEAR(p1, 0.36411, 1e-4);
      EXPECT_NEAR(p2, 0.62175, 1e-4);
      EXPECT_NEAR(p3, 0.01414, 1e-4);
    }
    ++rows;
  }
  EXPECT_EQ(rows, 6000);
}

TEST(Cli, MissingConfigKeyIsNamed) {
  const auto dir = testutil::scratch_dir();
  testutil::spit(dir / "bad.cfg", kSmallConfig);  // no steps
  ASSERT_EQ(run("synth --n 4 --seed 3 --inline-images --out " + q(dir / "d.jsonl"), dir).status, 0);
  const Result r =
      run("train --config " + q(dir / "bad.cfg") + " --data " + q(dir / "d.jsonl") + " --out " + q(dir / "o"), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("missing config key 'steps'"), std::string::npos) << r.output;
}

TEST(Cli, EvalOfReferencesIsPerfect) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("synth --n 6 --seed 2 --inline-images --out " + q(dir / "d.jsonl"), dir).status, 0);
  const auto data = dataio::load_dataset(dir / "d.jsonl", dataio::Split::kTrain);
  std::vector<inference::Prediction> preds;
  for (const auto& c : data.cards) preds.push_back({c.id, c.boxes(), c.captions()});
  inference::write_predictions(preds, dir / "p.jsonl");
  const Result r = run("eval --predictions " + q(dir / "p.jsonl") + " --references " + q(dir / "d.jsonl") +
                           " --out " + q(dir / "report.txt"),
                       dir);
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string report = testutil::slurp(dir / "report.txt");
  EXPECT_EQ(report.rfind("B@1=100.0000\n", 0), 0u) << report;

  preds.pop_back();
  inference::write_predictions(preds, dir / "short.jsonl");
  const Result bad = run("eval --predictions " + q(dir / "short.jsonl") + " --references " + q(dir / "d.jsonl") +
                             " --out " + q(dir / "r2.txt"),
                         dir);
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.output.find("no prediction for card id"), std::string::npos) << bad.output;
}

TEST(Cli, GenerateEvalRenderAndResume) {
  const auto dir = testutil::scratch_dir();
  small_run(dir, 4);
  const fs::path ckpt = dir / "run" / "model.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));

  const std::string gen = "generate --checkpoint " + q(ckpt) + " --data " + q(dir / "data.jsonl");
  ASSERT_EQ(run(gen + " --out " + q(dir / "greedy.jsonl"), dir).status, 0);
  ASSERT_EQ(run(gen + " --beam 1 --out " + q(dir / "beam1.jsonl"), dir).status, 0);
  ASSERT_EQ(run(gen + " --beam 3 --out " + q(dir / "beam3.jsonl"), dir).status, 0);
  EXPECT_EQ(testutil::slurp(dir / "greedy.jsonl"), testutil::slurp(dir / "beam1.jsonl"));
  const auto data = dataio::load_dataset(dir / "data.jsonl", dataio::Split::kTrain);
  const auto preds = inference::read_predictions(dir / "greedy.jsonl");
  ASSERT_EQ(preds.size(), data.cards.size());
  std::size_t boxes = 0, captions = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    boxes += data.cards[i].items.size();
    captions += preds[i].captions.size();
  }
  EXPECT_EQ(captions, boxes);

  const Result ev = run("eval --predictions " + q(dir / "greedy.jsonl") + " --references " + q(dir / "data.jsonl") +
                            " --checkpoint " + q(ckpt) + " --out " + q(dir / "report.txt"),
                        dir);
  ASSERT_EQ(ev.status, 0) << ev.output;
  EXPECT_NE(testutil::slurp(dir / "report.txt").find("clusters=4"), std::string::npos);

  const std::string id = data.cards[0].id;
  ASSERT_EQ(run("render --data " + q(dir / "data.jsonl") + " --card " + id + " --predictions " +
                    q(dir / "greedy.jsonl") + " --out " + q(dir / "card.png"),
                dir)
                .status,
            0);
  const Image img = read_png(dir / "card.png");
  EXPECT_EQ(img.height(), data.cards[0].image.height());
  EXPECT_EQ(img.width(), data.cards[0].image.width());
  EXPECT_NE(run("render --data " + q(dir / "data.jsonl") + " --card nope --out " + q(dir / "x.png"), dir).status, 0);

  testutil::spit(dir / "long.cfg", std::string(kSmallConfig) + "steps=6\n");
  const Result res = run("train --config " + q(dir / "long.cfg") + " --data " + q(dir / "data.jsonl") + " --out " +
                             q(dir / "run") + " --resume " + q(ckpt),
                         dir);
  ASSERT_EQ(res.status, 0) << res.output;
  EXPECT_NE(res.output.find("resuming at step 4"), std::string::npos) << res.output;
  const std::string log = testutil::slurp(dir / "run" / "loss.csv");
  EXPECT_NE(log.find("\n5,CG,"), std::string::npos);
  EXPECT_NE(log.find("\n6,CG,"), std::string::npos);
  EXPECT_EQ(log.find("step,task", 1), std::string::npos);
}
