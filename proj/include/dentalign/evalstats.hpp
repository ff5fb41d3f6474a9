#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dentalign/errors.hpp"
#include "dentalign/fdi.hpp"
#include "dentalign/stats.hpp"

namespace dentalign {

// DSC for one code over a shared carrier: 2|A∩B| / (|A|+|B|). nullopt when
// the code is absent from both masks.
inline std::optional<double> dice(const std::vector<std::uint16_t>& pred,
                                  const std::vector<std::uint16_t>& gt, int code) {
    if (pred.size() != gt.size()) {
        throw ShapeError("dice: carriers of size " + std::to_string(pred.size()) + " vs " +
                         std::to_string(gt.size()));
    }
    std::int64_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool in_a = pred[i] == code;
        const bool in_b = gt[i] == code;
        a += in_a;
        b += in_b;
        both += in_a && in_b;
    }
    if (a + b == 0) return std::nullopt;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

struct CiResult {
    double mean, low, high;
};

// mean ± t_{(1+level)/2, n-1} * s / sqrt(n)
inline CiResult confidence_interval(const std::vector<double>& values, double level = 0.95) {
    const auto n = static_cast<std::int64_t>(values.size());
    if (n < 2) throw CardinalityError("confidence_interval requires n >= 2, got " + std::to_string(n));
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double s = std::sqrt(ss / static_cast<double>(n - 1));
    if (s == 0.0) return {mean, mean, mean};
    const double q = stats::student_t_quantile(0.5 * (1.0 + level), static_cast<double>(n - 1));
    const double half = q * s / std::sqrt(static_cast<double>(n));
    return {mean, mean - half, mean + half};
}

struct TTestResult {
    double t, p;
};

// two-sided paired t-test on per-case values
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw CardinalityError("paired_t_test requires equal lengths");
    const auto n = static_cast<std::int64_t>(a.size());
    if (n < 2) throw CardinalityError("paired_t_test requires n >= 2");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    double mean = 0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double v : d) ss += (v - mean) * (v - mean);
    if (ss == 0.0) {
        throw DegenerateTestError("paired differences are all identical");
    }
    const double s = std::sqrt(ss / static_cast<double>(n - 1));
    const double t = mean / (s / std::sqrt(static_cast<double>(n)));
    return {t, stats::student_t_two_sided_p(t, static_cast<double>(n - 1))};
}

// ---- report assembly ---------------------------------------------------------

using CaseDice = std::map<int, std::optional<double>>;  // FDI code -> DSC or Absent

struct ReportRow {
    std::string label;
    std::int64_t n = 0;
    double mean = 0, ci_low = 0, ci_high = 0;  // percent, CI unclamped
};

struct DiceReport {
    std::vector<ReportRow> per_code;
    std::vector<ReportRow> per_group;  // T1..T8
    std::optional<ReportRow> overall;
    std::vector<std::string> warnings;
};

namespace detail {

inline ReportRow make_row(std::string label, const std::vector<double>& values) {
    ReportRow row;
    row.label = std::move(label);
    row.n = static_cast<std::int64_t>(values.size());
    if (values.size() == 1) {
        row.mean = row.ci_low = row.ci_high = 100.0 * values[0];
    } else {
        const CiResult ci = confidence_interval(values);
        row.mean = 100.0 * ci.mean;
        row.ci_low = 100.0 * ci.low;
        row.ci_high = 100.0 * ci.high;
    }
    return row;
}

}  // namespace detail

// Absent entries are excluded from every mean; groups pool their codes'
// per-case values; overall pools all tooth codes.
inline DiceReport build_report(const std::vector<CaseDice>& cases) {
    if (cases.size() < 2) throw CardinalityError("build_report requires at least 2 cases");
    DiceReport report;
    std::map<int, std::vector<double>> group_values;
    std::vector<double> overall_values;

    for (int code : fdi::all_tooth_codes()) {
        std::vector<double> values;
        for (const auto& c : cases) {
            auto it = c.find(code);
            if (it != c.end() && it->second.has_value()) values.push_back(*it->second);
        }
        if (values.empty()) {
            bool seen = false;
            for (const auto& c : cases) seen = seen || c.count(code);
            if (seen) report.warnings.push_back("code " + std::to_string(code) + " has no scorable cases");
            continue;
        }
        report.per_code.push_back(detail::make_row(std::to_string(code), values));
        auto& gv = group_values[group_of(code).id];
        gv.insert(gv.end(), values.begin(), values.end());
        overall_values.insert(overall_values.end(), values.begin(), values.end());
    }

    for (const auto& [gid, values] : group_values) {
        const ToothGroup g = group_of(10 + gid);  // any code with this position digit
        report.per_group.push_back(detail::make_row("T" + std::to_string(gid) + " (" + g.name + ")", values));
    }
    if (!overall_values.empty()) {
        report.overall = detail::make_row("Total", overall_values);
    }
    return report;
}

inline void write_report_csv(const DiceReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << "label,n,mean,ci_low,ci_high\n";
    char buf[160];
    auto emit = [&](const ReportRow& r) {
        std::snprintf(buf, sizeof buf, "%s,%lld,%.17g,%.17g,%.17g\n", r.label.c_str(),
                      static_cast<long long>(r.n), r.mean, r.ci_low, r.ci_high);
        os << buf;
    };
    if (report.overall) emit(*report.overall);
    for (const auto& r : report.per_group) emit(r);
    for (const auto& r : report.per_code) emit(r);
}

// Human-readable table in the column order Total, T1..T8; CI clamped to
// [0, 100] for display only.
inline std::string format_report_table(const DiceReport& report) {
    auto cell = [](const ReportRow& r) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.2f (%.2f, %.2f)", r.mean, std::max(0.0, r.ci_low),
                      std::min(100.0, r.ci_high));
        return std::string(buf);
    };
    std::ostringstream os;
    os << "group          | dsc% (95% ci)\n";
    os << "---------------+----------------------\n";
    if (report.overall) os << "Total          | " << cell(*report.overall) << "\n";
    for (const auto& r : report.per_group) {
        std::string name = r.label.substr(0, 14);
        name.resize(14, ' ');
        os << name << " | " << cell(r) << "\n";
    }
    return os.str();
}

}  // namespace dentalign
