#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cmcforge/error.hpp"
#include "cmcforge/harness.hpp"

using namespace cmcforge;

TEST(SignTest, BinomialTail) {
  EXPECT_DOUBLE_EQ(sign_test_p(5, 5), 1.0 / 32);
  EXPECT_DOUBLE_EQ(sign_test_p(4, 5), 6.0 / 32);
  EXPECT_DOUBLE_EQ(sign_test_p(0, 5), 1.0);
  EXPECT_DOUBLE_EQ(sign_test_p(0, 0), 1.0);
}

TEST(Spearman, RanksWithTies) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 6, 8, 100}, down{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(x, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, down), -1.0);
  // Average ranks: y ranks (1.5, 1.5, 3, 4, 5).
  const std::vector<double> tied{1, 1, 2, 3, 4};
  EXPECT_NEAR(spearman(x, tied), 0.9746794344808963, 1e-12);
  const std::vector<double> flat{2, 2, 2, 2, 2};
  EXPECT_TRUE(std::isnan(spearman(x, flat)));
}

TEST(PairedTrend, StatisticsAndHoldsRule) {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const std::vector<double> base{10, 10, 10, 10, 10};
  const std::vector<double> better{11, 12, 10.5, 11, 13};
  const TrendResult t = paired_trend("a", better, "b", base, seeds, Metric::kMiou2d);
  EXPECT_EQ(t.positives, 5);
  EXPECT_DOUBLE_EQ(t.sign_p, 1.0 / 32);
  EXPECT_DOUBLE_EQ(t.mean_improvement, 1.5);
  EXPECT_TRUE(t.significant());
  EXPECT_TRUE(t.holds());

  const std::vector<double> mixed{10.5, 9.5, 10.4, 10.0, 10.1};
  const TrendResult m = paired_trend("a", mixed, "b", base, seeds, Metric::kMiou2d);
  EXPECT_EQ(m.ties, 1);
  EXPECT_FALSE(m.significant());
  EXPECT_TRUE(m.holds());  // mean +0.1, worst -0.5
  const std::vector<double> regress{12, 12, 12, 12, 8.5};
  EXPECT_FALSE(paired_trend("a", regress, "b", base, seeds, Metric::kMiou2d).holds());
}

TEST(SeedRange, Parses) {
  EXPECT_EQ(parse_seed_range("1..5"), (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(parse_seed_range("7"), (std::vector<std::uint64_t>{7}));
  EXPECT_THROW(parse_seed_range("5..1"), ConfigError);
  EXPECT_THROW(parse_seed_range("x"), ConfigError);
}

TEST(Suites, DefinitionsAreConsistent) {
  for (const std::string& name : suite_names()) {
    const Suite s = suite_definition(name);
    EXPECT_FALSE(s.comparisons.empty()) << name;
    for (const Comparison& c : s.comparisons) {
      int found = 0;
      for (const Variant& v : s.variants) found += (v.name == c.variant) + (v.name == c.baseline);
      EXPECT_EQ(found, 2) << name << ": " << c.variant << " vs " << c.baseline;
    }
  }
  EXPECT_THROW(suite_definition("nope"), ConfigError);
}

TEST(RenderTable, AlignsColumns) {
  const std::string t = render_table("a,bb\n# comment\n100,2\n");
  EXPECT_NE(t.find("a    bb"), std::string::npos);
  EXPECT_EQ(t.find("comment"), std::string::npos);
}
