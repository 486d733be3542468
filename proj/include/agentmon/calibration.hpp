#pragma once
// Linear calibration between searching entropy and reasoning entropy, fitted
// on steps harvested from successful trajectories, plus the residual anomaly
// gate tau = k*sigma.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "agentmon/jsonio.hpp"
#include "agentmon/util.hpp"

namespace agentmon {

struct CalibrationModel {
    double a = 0.0;      // slope, constrained >= 0
    double b = 0.0;      // intercept
    double sigma = 0.0;  // residual standard deviation on the fit set (population form)
    double k = 2.0;      // threshold multiplier
    std::size_t n_fit = 0;
    bool degenerate = false;  // all se values identical; slope forced to 0

    double tau() const { return k * sigma; }

    bool operator==(const CalibrationModel&) const = default;
};

struct CalibrationPoint {
    double se = 0.0;
    double re = 0.0;
    std::string trajectory_id;  // provenance
    int session_index = 0;
};

// Least squares of re on se with the slope clamped to a >= 0. When the
// unconstrained slope is negative the optimum on the boundary is a = 0,
// b = mean(re). sigma is computed over the same points (population form,
// divide by n); set sigma_holdout_fraction > 0 to instead estimate sigma on
// the deterministic tail split of that size.
inline CalibrationModel fit(std::span<const CalibrationPoint> points, double k = 2.0,
                            double sigma_holdout_fraction = 0.0) {
    if (points.size() < 2) {
        throw InsufficientData("calibration fit needs at least 2 points, got " +
                               std::to_string(points.size()));
    }
    if (!(k > 0.0)) throw SchemaViolation("calibration k must be positive");
    if (sigma_holdout_fraction < 0.0 || sigma_holdout_fraction >= 1.0) {
        throw SchemaViolation("sigma_holdout_fraction must be in [0, 1)");
    }

    std::size_t n_sigma_holdout =
        static_cast<std::size_t>(sigma_holdout_fraction * static_cast<double>(points.size()));
    std::span<const CalibrationPoint> fit_set = points.first(points.size() - n_sigma_holdout);
    std::span<const CalibrationPoint> sigma_set =
        n_sigma_holdout >= 2 ? points.last(n_sigma_holdout) : points;
    if (fit_set.size() < 2) throw InsufficientData("holdout leaves fewer than 2 fit points");

    double mean_se = 0.0, mean_re = 0.0;
    for (const auto& p : fit_set) {
        mean_se += p.se;
        mean_re += p.re;
    }
    mean_se /= static_cast<double>(fit_set.size());
    mean_re /= static_cast<double>(fit_set.size());

    double sxx = 0.0, sxy = 0.0;
    bool all_se_identical = true;
    for (const auto& p : fit_set) {
        sxx += (p.se - mean_se) * (p.se - mean_se);
        sxy += (p.se - mean_se) * (p.re - mean_re);
        if (p.se != fit_set.front().se) all_se_identical = false;
    }

    CalibrationModel m;
    m.k = k;
    m.n_fit = fit_set.size();
    if (all_se_identical || sxx == 0.0) {
        m.degenerate = true;
        m.a = 0.0;
        m.b = mean_re;
    } else {
        double slope = sxy / sxx;
        if (slope < 0.0) {
            m.a = 0.0;
            m.b = mean_re;
        } else {
            m.a = slope;
            m.b = mean_re - slope * mean_se;
        }
    }

    double ss = 0.0;
    for (const auto& p : sigma_set) {
        double eps = p.re - (m.a * p.se + m.b);
        ss += eps * eps;
    }
    m.sigma = std::sqrt(ss / static_cast<double>(sigma_set.size()));
    return m;
}

inline double predict(const CalibrationModel& m, double se) { return m.a * se + m.b; }

// Positive residual: unusually uncertain reasoning given clear evidence.
// Negative residual: unusually confident reasoning despite ambiguous evidence.
inline double residual(const CalibrationModel& m, double se, double re) {
    return re - predict(m, se);
}

// Strict inequality: |epsilon| == tau is not anomalous. With sigma == 0 any
// nonzero residual fires; a silent gate would hide a broken calibration.
inline bool is_anomaly(const CalibrationModel& m, double epsilon) {
    return std::abs(epsilon) > m.tau();
}

// ---------------------------------------------------------------------------
// persistence: single JSON document {a, b, sigma, k, n_fit, degenerate,
// fitted_at, source_log_paths}

inline std::string calibration_to_string(const CalibrationModel& m,
                                         const std::vector<std::string>& source_log_paths = {},
                                         const std::string& fitted_at = "") {
    json j;
    j["schema_version"] = "1";
    j["a"] = m.a;
    j["b"] = m.b;
    j["sigma"] = m.sigma;
    j["k"] = m.k;
    j["n_fit"] = m.n_fit;
    j["degenerate"] = m.degenerate;
    j["fitted_at"] = fitted_at;
    j["source_log_paths"] = source_log_paths;
    return j.dump(2) + "\n";
}

inline CalibrationModel calibration_from_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid calibration file: ") + e.what());
    }
    std::string version = field_or<std::string>(j, "schema_version", "1");
    if (version != "1") throw UnsupportedVersion("unsupported calibration schema version '" + version + "'");
    CalibrationModel m;
    m.a = require_as<double>(j, "a", "calibration");
    m.b = require_as<double>(j, "b", "calibration");
    m.sigma = require_as<double>(j, "sigma", "calibration");
    m.k = require_as<double>(j, "k", "calibration");
    m.n_fit = require_as<std::size_t>(j, "n_fit", "calibration");
    m.degenerate = field_or<bool>(j, "degenerate", false);
    if (m.a < 0.0 || m.sigma < 0.0 || !(m.k > 0.0)) {
        throw SchemaViolation("calibration file violates a>=0, sigma>=0, k>0");
    }
    return m;
}

inline void save_calibration_file(const CalibrationModel& m, const std::string& path,
                                  const std::vector<std::string>& source_log_paths = {},
                                  const std::string& fitted_at = "") {
    write_file(path, calibration_to_string(m, source_log_paths, fitted_at));
}

inline CalibrationModel load_calibration_file(const std::string& path) {
    return calibration_from_string(read_file(path));
}

}  // namespace agentmon
