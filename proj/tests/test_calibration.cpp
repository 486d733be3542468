#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "agentmon/calibration.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace agentmon;

namespace {

std::vector<CalibrationPoint> points_from(const std::vector<double>& se,
                                          const std::vector<double>& re) {
    std::vector<CalibrationPoint> out;
    for (std::size_t i = 0; i < se.size(); ++i) {
        out.push_back({se[i], re[i], "t", static_cast<int>(i + 1)});
    }
    return out;
}

}  // namespace

TEST(CalibrationFit, CollinearPoints) {
    auto pts = points_from({0, 1, 2}, {1, 2, 3});
    CalibrationModel m = fit(pts, 2.0);
    auto want = oracle::least_squares({0, 1, 2}, {1, 2, 3});
    EXPECT_NEAR(m.a, static_cast<double>(want.a), 1e-12);
    EXPECT_NEAR(m.b, static_cast<double>(want.b), 1e-12);
    EXPECT_DOUBLE_EQ(m.a, 1.0);
    EXPECT_DOUBLE_EQ(m.b, 1.0);
    EXPECT_DOUBLE_EQ(m.sigma, 0.0);
    EXPECT_EQ(m.n_fit, 3u);
    EXPECT_FALSE(m.degenerate);
}

TEST(CalibrationFit, ConstantReGivesZeroSlope) {
    auto pts = points_from({0, 1, 2, 3}, {0.5, 0.5, 0.5, 0.5});
    CalibrationModel m = fit(pts, 2.0);
    EXPECT_DOUBLE_EQ(m.a, 0.0);
    EXPECT_DOUBLE_EQ(m.b, 0.5);
    EXPECT_FALSE(m.degenerate);
}

TEST(CalibrationFit, NegativeSlopeClampsToZero) {
    auto pts = points_from({0, 1, 2}, {2, 1, 0});
    CalibrationModel m = fit(pts, 2.0);
    auto want = oracle::least_squares({0, 1, 2}, {2, 1, 0});  // oracle applies the same clamp
    EXPECT_DOUBLE_EQ(m.a, 0.0);
    EXPECT_DOUBLE_EQ(m.b, 1.0);
    EXPECT_NEAR(m.b, static_cast<double>(want.b), 1e-12);
    EXPECT_FALSE(m.degenerate);
}

TEST(CalibrationFit, DegenerateDesignFlagged) {
    auto pts = points_from({0.7, 0.7, 0.7}, {1.0, 2.0, 3.0});
    CalibrationModel m = fit(pts, 2.0);
    EXPECT_TRUE(m.degenerate);
    EXPECT_DOUBLE_EQ(m.a, 0.0);
    EXPECT_DOUBLE_EQ(m.b, 2.0);
}

TEST(CalibrationFit, InsufficientData) {
    auto pts = points_from({1.0}, {1.0});
    EXPECT_THROW(fit(pts, 2.0), InsufficientData);
    EXPECT_THROW(fit(std::vector<CalibrationPoint>{}, 2.0), InsufficientData);
}

TEST(CalibrationPredictResidual, Examples) {
    CalibrationModel unit{1.0, 1.0, 0.0, 2.0, 0, false};
    EXPECT_DOUBLE_EQ(predict(unit, 2.0), 3.0);
    CalibrationModel constant{0.0, 0.7, 0.0, 2.0, 0, false};
    EXPECT_DOUBLE_EQ(predict(constant, -3.0), 0.7);
    EXPECT_DOUBLE_EQ(predict(constant, 42.0), 0.7);
    CalibrationModel half{0.5, 0.1, 0.0, 2.0, 0, false};
    EXPECT_DOUBLE_EQ(predict(half, 0.0), 0.1);

    CalibrationModel slope1{1.0, 0.0, 0.0, 2.0, 0, false};
    EXPECT_DOUBLE_EQ(residual(slope1, 1.0, 2.5), 1.5);
    EXPECT_DOUBLE_EQ(residual(unit, 2.0, predict(unit, 2.0)), 0.0);
    CalibrationModel b1{0.0, 1.0, 0.0, 2.0, 0, false};
    EXPECT_DOUBLE_EQ(residual(b1, 5.0, 0.0), -1.0);
}

TEST(CalibrationGate, ThresholdRule) {
    CalibrationModel m{1.0, 0.0, 0.5, 2.0, 0, false};  // tau = 1.0
    EXPECT_TRUE(is_anomaly(m, 1.5));
    EXPECT_TRUE(is_anomaly(m, -1.5));
    EXPECT_FALSE(is_anomaly(m, 0.0));
    EXPECT_FALSE(is_anomaly(m, 1.0));   // boundary |eps| == tau is not anomalous
    EXPECT_FALSE(is_anomaly(m, -1.0));
    EXPECT_TRUE(is_anomaly(m, 1.0000001));

    CalibrationModel zero_sigma{1.0, 0.0, 0.0, 2.0, 0, false};
    EXPECT_TRUE(is_anomaly(zero_sigma, 1e-9));
    EXPECT_FALSE(is_anomaly(zero_sigma, 0.0));
}

TEST(CalibrationProperty, MatchesOracleOnRandomInstances) {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> n_dist(2, 200);
    std::uniform_real_distribution<double> se_dist(0.0, 3.0);
    std::uniform_real_distribution<double> coeff(-2.0, 2.0);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (int trial = 0; trial < 500; ++trial) {
        int n = n_dist(rng);
        std::vector<double> se(n), re(n);
        double a = coeff(rng), b = coeff(rng);
        for (int i = 0; i < n; ++i) {
            se[i] = se_dist(rng);
            re[i] = a * se[i] + b + noise(rng);
        }
        auto m = fit(points_from(se, re), 2.0);
        auto want = oracle::least_squares(se, re);
        ASSERT_NEAR(m.a, static_cast<double>(want.a), 1e-8) << "trial " << trial;
        ASSERT_NEAR(m.b, static_cast<double>(want.b), 1e-8);
        ASSERT_NEAR(m.sigma, static_cast<double>(want.sigma), 1e-8);
        ASSERT_GE(m.a, 0.0);

        // residual orthogonality holds whenever the slope was not clamped
        if (m.a > 0.0) {
            double sum_eps = 0.0, sum_eps_se = 0.0;
            for (int i = 0; i < n; ++i) {
                double eps = residual(m, se[i], re[i]);
                sum_eps += eps;
                sum_eps_se += eps * se[i];
            }
            ASSERT_NEAR(sum_eps, 0.0, 1e-8);
            ASSERT_NEAR(sum_eps_se, 0.0, 1e-8);
        }
    }
}

TEST(CalibrationProperty, ScaleCovariance) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> se_dist(0.0, 2.0);
    std::normal_distribution<double> noise(0.0, 0.2);
    std::vector<double> se(50), re(50);
    for (int i = 0; i < 50; ++i) {
        se[i] = se_dist(rng);
        re[i] = 0.8 * se[i] + 0.3 + noise(rng);
    }
    const double c = 3.7;
    std::vector<double> re_scaled(50);
    for (int i = 0; i < 50; ++i) re_scaled[i] = c * re[i];

    auto m1 = fit(points_from(se, re), 2.0);
    auto m2 = fit(points_from(se, re_scaled), 2.0);
    EXPECT_NEAR(m2.a, c * m1.a, 1e-9);
    EXPECT_NEAR(m2.b, c * m1.b, 1e-9);
    EXPECT_NEAR(m2.sigma, c * m1.sigma, 1e-9);
    for (int i = 0; i < 50; ++i) {
        bool d1 = is_anomaly(m1, residual(m1, se[i], re[i]));
        bool d2 = is_anomaly(m2, residual(m2, se[i], re_scaled[i]));
        EXPECT_EQ(d1, d2);
    }
}

TEST(CalibrationProperty, GaussianFalsePositiveRate) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> se_dist(0.0, 3.0);
    std::normal_distribution<double> noise(0.0, 0.25);
    const int n = 10000;
    std::vector<double> se(n), re(n);
    for (int i = 0; i < n; ++i) {
        se[i] = se_dist(rng);
        re[i] = 0.9 * se[i] + 0.2 + noise(rng);
    }
    auto m = fit(points_from(se, re), 2.0);
    int flagged = 0;
    for (int i = 0; i < n; ++i) {
        if (is_anomaly(m, residual(m, se[i], re[i]))) ++flagged;
    }
    double rate = static_cast<double>(flagged) / n;  // expected ~ 4.55% for k = 2
    EXPECT_GE(rate, 0.02);
    EXPECT_LE(rate, 0.08);
}

TEST(CalibrationProperty, Deterministic) {
    auto pts = points_from({0.1, 0.9, 1.7, 2.2}, {0.3, 1.1, 1.6, 2.4});
    CalibrationModel m1 = fit(pts, 2.0);
    CalibrationModel m2 = fit(pts, 2.0);
    EXPECT_EQ(m1, m2);  // bit-identical
}

TEST(CalibrationFit, SigmaHoldoutOption) {
    std::vector<double> se{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<double> re{0, 1, 2, 3, 4, 5, 6, 7, 8, 19};  // outlier lives in the tail
    auto full = fit(points_from(se, re), 2.0);
    auto holdout = fit(points_from(se, re), 2.0, 0.2);  // fit on 8, sigma on last 2
    EXPECT_EQ(holdout.n_fit, 8u);
    EXPECT_DOUBLE_EQ(holdout.a, 1.0);
    EXPECT_DOUBLE_EQ(holdout.b, 0.0);
    EXPECT_GT(holdout.sigma, full.sigma);  // the held-out tail contains the outlier
}

TEST(CalibrationPersistence, RoundTrip) {
    auto dir = testutil::unique_temp_dir("calib");
    CalibrationModel m = fit(points_from({0, 1, 2}, {1, 2, 3}), 2.0);
    std::string path = (dir / "calibration.json").string();
    save_calibration_file(m, path, {"logs/a.jsonl"}, "2026-01-01T00:00:00Z");
    CalibrationModel back = load_calibration_file(path);
    EXPECT_EQ(back, m);

    write_file(path, "not json");
    EXPECT_THROW(load_calibration_file(path), ParseError);
    write_file(path, "{\"a\": -1, \"b\": 0, \"sigma\": 0, \"k\": 2, \"n_fit\": 3}");
    EXPECT_THROW(load_calibration_file(path), SchemaViolation);
}
