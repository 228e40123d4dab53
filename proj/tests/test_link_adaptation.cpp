#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "crdql/link_adaptation.hpp"

using namespace crdql;

TEST(Throughput, BelowLowestThresholdIsZero) {
  const AmcTable t = default_amc_table();
  EXPECT_EQ(throughput(db_to_linear(-6.5), t), 0.0);
  EXPECT_EQ(throughput(0.0, t), 0.0);
}

TEST(Throughput, SaturatesAtTopRow) {
  const AmcTable t = default_amc_table();
  EXPECT_NEAR(throughput(db_to_linear(20.0), t), 1.08, 1e-12);
  EXPECT_NEAR(throughput(db_to_linear(45.0), t), 1.08, 1e-12);
}

TEST(Throughput, StepLookup) {
  const AmcTable t = default_amc_table();
  EXPECT_NEAR(throughput(db_to_linear(-6.0), t), 0.15 * 0.18, 1e-12);
  EXPECT_NEAR(throughput(db_to_linear(10.7), t), 2.41 * 0.18, 1e-12);
}

TEST(Throughput, NondecreasingSweep) {
  const AmcTable t = default_amc_table();
  double prev = 0.0;
  for (double db = -20.0; db <= 30.0; db += 0.05) {
    const double v = throughput(db_to_linear(db), t);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Throughput, EmptyTableIsConfigError) {
  AmcTable t;
  EXPECT_THROW(throughput(1.0, t), ConfigError);
}

TEST(RelativeThroughputChange, ZeroDbGivesMinusQuarter) {
  const AmcTable t = default_amc_table();  // xi = 4, gap = 1
  EXPECT_NEAR(relative_throughput_change(0.0, t), -0.25, 1e-12);
  EXPECT_NEAR(relative_throughput_change_linear(1.0, t), -0.25, 1e-12);
}

TEST(RelativeThroughputChange, NoInterferenceIsZero) {
  const AmcTable t = default_amc_table();
  EXPECT_EQ(relative_throughput_change_linear(0.0, t), 0.0);
  EXPECT_NEAR(relative_throughput_change(-300.0, t), 0.0, 1e-15);
}

TEST(RelativeThroughputChange, MagnitudeStrictlyIncreasing) {
  const AmcTable t = default_amc_table();
  double prev = -1.0;
  for (double db = -30.0; db <= 30.0; db += 0.5) {
    const double v = std::fabs(relative_throughput_change(db, t));
    EXPECT_GT(v, prev);
    EXPECT_LE(relative_throughput_change(db, t), 0.0);
    prev = v;
  }
}

// With a dense Shannon-gap table (efficiency log2(1 + snr/gap)), the step map
// measured loss under added interference tracks the closed form.
TEST(RelativeThroughputChange, MatchesDenseShannonTable) {
  AmcTable t;
  t.xi = 0.0;
  for (double db = -10.0; db <= 40.0; db += 0.01) t.rows.push_back({db, std::log2(1.0 + db_to_linear(db))});
  const double snr0_db = 30.0;
  const double xi = std::log2(1.0 + db_to_linear(snr0_db));
  t.xi = xi;
  for (double i_db : {-10.0, -3.0, 0.0, 3.0, 10.0}) {
    // Interference i_db relative to noise; SNR drops by a factor (1 + I/N).
    const double sinr = db_to_linear(snr0_db) / (1.0 + db_to_linear(i_db));
    const double measured = throughput(sinr, t) / throughput(db_to_linear(snr0_db), t) - 1.0;
    const double formula = relative_throughput_change(i_db, t);
    EXPECT_NEAR(measured, formula, 0.05 * std::fabs(formula)) << "I = " << i_db << " dB";
  }
}

TEST(AmcTable, DefaultIsValid) {
  const AmcTable t = default_amc_table();
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.rows.size(), 15u);
  EXPECT_EQ(t.rows.front().snr_threshold_db, -6.0);
  EXPECT_EQ(t.rows.back().snr_threshold_db, 20.0);
  EXPECT_EQ(t.max_efficiency(), 6.0);
}

TEST(AmcTable, ValidateRejectsDisorder) {
  AmcTable t = default_amc_table();
  std::swap(t.rows[2], t.rows[3]);
  EXPECT_THROW(t.validate(), ConfigError);
  t = default_amc_table();
  t.rows[4].spectral_efficiency = 0.1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = default_amc_table();
  t.xi = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(AmcCsv, ShippedFileMatchesDefaults) {
  const auto rows = load_amc_csv(std::string(CRDQL_SOURCE_DIR) + "/data/amc_default.csv");
  const auto def = default_amc_rows();
  ASSERT_EQ(rows.size(), def.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].snr_threshold_db, def[i].snr_threshold_db);
    EXPECT_EQ(rows[i].spectral_efficiency, def[i].spectral_efficiency);
  }
}

TEST(AmcCsv, CommentsAndBlankLines) {
  std::istringstream in("# note\n\nsnr_db, spectral_efficiency\n-1,0.5\n# mid\n3,1.5\n");
  const auto rows = parse_amc_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].snr_threshold_db, 3.0);
  EXPECT_EQ(rows[1].spectral_efficiency, 1.5);
}

TEST(AmcCsv, Errors) {
  std::istringstream empty("");
  EXPECT_THROW(parse_amc_csv(empty), ConfigError);
  std::istringstream bad_header("snr,eff\n1,2\n");
  EXPECT_THROW(parse_amc_csv(bad_header), ConfigError);
  std::istringstream bad_number("snr_db,spectral_efficiency\n1,abc\n");
  EXPECT_THROW(parse_amc_csv(bad_number), ConfigError);
  std::istringstream one_field("snr_db,spectral_efficiency\n1\n");
  EXPECT_THROW(parse_amc_csv(one_field), ConfigError);
  EXPECT_THROW(load_amc_csv("/nonexistent/amc.csv"), ConfigError);
}
