#include <gtest/gtest.h>

#include <map>
#include <random>

#include "boxcap/curriculum.hpp"
#include "boxcap/synth.hpp"
#include "oracles.hpp"

using namespace boxcap;
using namespace boxcap::curriculum;
using dataio::Card;
using dataio::TextBox;

namespace {

Card card_of(const std::string& id, std::vector<std::pair<TextBox, std::string>> items) {
  Card c;
  c.id = id;
  c.image = Image(8, 8, 0.5);
  for (auto& [b, s] : items) c.items.push_back({b, s});
  return c;
}

}  // namespace

TEST(Schedule, WorkedValues) {
  const Schedule s = schedule(5000);
  EXPECT_NEAR(s.p1, 0.36411, 1e-5);
  EXPECT_NEAR(s.p3, 0.014142, 1e-6);
  EXPECT_NEAR(s.p2, 0.62175, 1e-5);

  const Schedule first = schedule(1);
  EXPECT_NEAR(first.p3, 2.828e-6, 1e-9);
  EXPECT_NEAR(first.p1, 0.9999972, 1e-7);
  EXPECT_EQ(first.p2, 0.0);

  const Schedule late = schedule(353554);
  EXPECT_EQ(late.p3, 1.0);
  EXPECT_EQ(late.p1, 0.0);
  EXPECT_EQ(late.p2, 0.0);
}

TEST(Schedule, MatchesClosedFormAtCheckpoints) {
  for (std::int64_t step : {1, 100, 5000, 353554}) {
    const auto want = oracle::schedule(static_cast<double>(step));
    const Schedule s = schedule(step);
    EXPECT_NEAR(s.p1, want[0], 1e-9) << step;
    EXPECT_NEAR(s.p2, want[1], 1e-9) << step;
    EXPECT_NEAR(s.p3, want[2], 1e-9) << step;
  }
}

TEST(Schedule, SumsToOneAndMonotone) {
  Schedule prev = schedule(1);
  for (std::int64_t step = 1; step <= 1000000; ++step) {
    const Schedule s = schedule(step);
    ASSERT_EQ(s.p1 + s.p2 + s.p3, 1.0) << step;
    ASSERT_GE(s.p1, 0.0);
    ASSERT_LE(s.p1, 1.0);
    ASSERT_GE(s.p2, 0.0);
    ASSERT_LE(s.p2, 1.0);
    ASSERT_GE(s.p3, 0.0);
    ASSERT_LE(s.p3, 1.0);
    ASSERT_LE(s.p1, prev.p1) << step;
    ASSERT_GE(s.p3, prev.p3) << step;
    prev = s;
  }
}

TEST(Schedule, StepBelowOneIsAnError) {
  EXPECT_THROW(schedule(0), std::invalid_argument);
  EXPECT_THROW(schedule(-3), std::invalid_argument);
}

TEST(CmSample, ForcedPositive) {
  const auto cards = synth::synth_cards(4, 1).cards;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const CmSample s = make_cm_sample(cards, 2, 1, rng, schedule(10), 0.0);
    EXPECT_EQ(s.label, 1);
    EXPECT_EQ(s.caption, cards[2].items[1].caption);
    EXPECT_EQ(s.level, Level::kPositive);
  }
}

TEST(CmSample, LevelThreeOnDiagonalPicksANeighbor) {
  std::vector<Card> cards = {card_of("a", {{{0, 0, .2, .2}, "one x"}, {{.4, .4, .6, .6}, "two x"}, {{.8, .8, 1, 1}, "three x"}})};
  const Schedule only3{0.0, 0.0, 1.0};
  std::mt19937_64 rng(2);
  std::map<std::string, int> seen;
  for (int i = 0; i < 400; ++i) {
    const CmSample s = make_cm_sample(cards, 0, 1, rng, only3, 1.0);
    EXPECT_EQ(s.label, 0);
    EXPECT_EQ(s.level, Level::kLevel3);
    ++seen[s.caption];
  }
  EXPECT_EQ(seen.size(), 2u);
  EXPECT_GT(seen["one x"], 150);
  EXPECT_GT(seen["three x"], 150);
}

TEST(CmSample, LevelTwoUsesOtherBoxesOfTheCard) {
  std::vector<Card> cards = {card_of("a", {{{0, 0, .2, .2}, "one x"}, {{.4, .4, .6, .6}, "two x"}, {{.8, .8, 1, 1}, "three x"}}),
                             card_of("b", {{{0, 0, .2, .2}, "other x"}, {{.4, .4, .6, .6}, "other y"}})};
  const Schedule only2{0.0, 1.0, 0.0};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const CmSample s = make_cm_sample(cards, 0, 0, rng, only2, 1.0);
    EXPECT_EQ(s.level, Level::kLevel2);
    EXPECT_TRUE(s.caption == "two x" || s.caption == "three x") << s.caption;
  }
}

TEST(CmSample, LevelOneComesFromAnotherCard) {
  std::vector<Card> cards = {card_of("a", {{{0, 0, .2, .2}, "one x"}, {{.4, .4, .6, .6}, "two x"}}),
                             card_of("b", {{{0, 0, .2, .2}, "other x"}, {{.4, .4, .6, .6}, "other y"}})};
  const Schedule only1{1.0, 0.0, 0.0};
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const CmSample s = make_cm_sample(cards, 0, 1, rng, only1, 1.0);
    EXPECT_EQ(s.level, Level::kLevel1);
    EXPECT_TRUE(s.caption == "other x" || s.caption == "other y");
  }
}

TEST(CmSample, FallbacksWhenNegativesAreUnavailable) {
  // A card with two or more boxes always has a neighbor, so Level-III is made to fail
  // through equal strings: every caption on card "a" equals the ground truth.
  std::vector<Card> cards = {card_of("a", {{{0, 0, .2, .2}, "same x"}, {{.4, .4, .6, .6}, "same x"}, {{.8, .8, 1, 1}, "same x"}}),
                             card_of("b", {{{0, 0, .2, .2}, "other x"}, {{.4, .4, .6, .6}, "same x"}})};
  std::mt19937_64 rng(5);
  for (const Schedule& mix : {Schedule{0, 0, 1}, Schedule{0, 1, 0}}) {
    for (int i = 0; i < 100; ++i) {
      const CmSample s = make_cm_sample(cards, 0, 1, rng, mix, 1.0);
      EXPECT_EQ(s.label, 0);
      EXPECT_EQ(s.level, Level::kLevel1);
      EXPECT_EQ(s.caption, "other x");
    }
  }
  // Nothing anywhere differs: the only honest answer is a positive pair.
  std::vector<Card> same = {cards[0]};
  const CmSample s = make_cm_sample(same, 0, 0, rng, Schedule{1, 0, 0}, 1.0);
  EXPECT_EQ(s.label, 1);
  EXPECT_EQ(s.caption, "same x");
}

TEST(CmSample, NegativeNeverEqualsGroundTruth) {
  const auto cards = synth::synth_cards(40, 6).cards;
  std::mt19937_64 rng(6);
  for (std::int64_t step : {1, 5000, 200000}) {
    const Schedule mix = schedule(step);
    for (std::size_t c = 0; c < cards.size(); ++c)
      for (std::size_t b = 0; b < cards[c].items.size(); ++b)
        for (int rep = 0; rep < 5; ++rep) {
          const CmSample s = make_cm_sample(cards, c, b, rng, mix);
          if (s.label == 0) {
            EXPECT_NE(s.caption, cards[c].items[b].caption);
          }
        }
  }
}

TEST(CmSample, LevelFrequenciesFollowTheSchedule) {
  const auto cards = synth::synth_cards(50, 7).cards;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick_card(0, cards.size() - 1);
  for (std::int64_t step : {1, 5000, 100000}) {
    const Schedule mix = schedule(step);
    std::map<Level, int> n;
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) {
      const std::size_t c = pick_card(rng);
      const std::size_t b = std::uniform_int_distribution<std::size_t>(0, cards[c].items.size() - 1)(rng);
      ++n[make_cm_sample(cards, c, b, rng, mix).level];
    }
    EXPECT_NEAR(n[Level::kPositive] / double(kDraws), 0.4, 0.01) << step;
    EXPECT_NEAR(n[Level::kLevel1] / double(kDraws), 0.6 * mix.p1, 0.01) << step;
    EXPECT_NEAR(n[Level::kLevel2] / double(kDraws), 0.6 * mix.p2, 0.01) << step;
    EXPECT_NEAR(n[Level::kLevel3] / double(kDraws), 0.6 * mix.p3, 0.01) << step;
  }
}

TEST(CmSample, BadArguments) {
  std::vector<Card> cards = {card_of("a", {{{0, 0, .2, .2}, "one x"}})};
  std::mt19937_64 rng(8);
  EXPECT_THROW(make_cm_sample(cards, 0, 0, rng, schedule(1)), std::invalid_argument);
  EXPECT_THROW(make_cm_sample(cards, 1, 0, rng, schedule(1)), std::out_of_range);
}

TEST(CmSample, LevelNames) {
  EXPECT_EQ(to_string(Level::kLevel1), "I");
  EXPECT_EQ(to_string(Level::kLevel3), "III");
}
