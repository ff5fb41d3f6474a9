#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dentalign/svgplot.hpp"

using namespace dentalign;

namespace {

std::string tmp_file(const std::string& name, const std::string& contents = "") {
    auto dir = std::filesystem::temp_directory_path() / "dentalign_svg_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / name).string();
    if (!contents.empty()) {
        std::ofstream os(path);
        os << contents;
    }
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0, pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace

TEST(SvgPlot, TwoPointSeriesIsOnePolylineWithTwoCoordinates) {
    const std::string csv = tmp_file("two.csv", "step,loss\n0,1.5\n1,0.75\n");
    const std::string out = tmp_file("two.svg");
    emit_plot(csv, PlotKind::kLossCurve, out);
    const std::string svg = slurp(out);
    EXPECT_EQ(count_occurrences(svg, "<polyline"), 1u);
    const auto at = svg.find("points=\"");
    ASSERT_NE(at, std::string::npos);
    const auto end = svg.find('"', at + 8);
    const std::string pts = svg.substr(at + 8, end - at - 8);
    EXPECT_EQ(count_occurrences(pts, ","), 2u);  // two x,y pairs
    EXPECT_EQ(count_occurrences(pts, " "), 1u);
}

TEST(SvgPlot, DeterministicBytes) {
    const std::string csv = tmp_file("det.csv", "x,a,b\n0,1,4\n1,2,3\n2,0.5,2.5\n");
    const std::string out1 = tmp_file("det1.svg");
    const std::string out2 = tmp_file("det2.svg");
    emit_plot(csv, PlotKind::kScaleCurve, out1);
    emit_plot(csv, PlotKind::kScaleCurve, out2);
    EXPECT_EQ(slurp(out1), slurp(out2));
    EXPECT_EQ(count_occurrences(slurp(out1), "<circle"), 6u);  // markers on both series
}

TEST(SvgPlot, EmptyDataRowsRejected) {
    const std::string csv = tmp_file("empty.csv", "step,loss\n");
    EXPECT_THROW(emit_plot(csv, PlotKind::kLossCurve, tmp_file("never.svg")), FormatError);
}

TEST(SvgPlot, MalformedLineReportsLineNumber) {
    const std::string csv = tmp_file("bad.csv", "step,loss\n0,1.5\nnot-a-number,2\n");
    try {
        emit_plot(csv, PlotKind::kLossCurve, tmp_file("never2.svg"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(SvgPlot, ColumnCountMismatchRejected) {
    const std::string csv = tmp_file("cols.csv", "step,loss\n0,1.5,9\n");
    EXPECT_THROW(emit_plot(csv, PlotKind::kLossCurve, tmp_file("never3.svg")), FormatError);
}

TEST(SvgPlot, GroupBarsWithWhiskers) {
    const std::string csv = tmp_file(
        "bars.csv", "label,n,mean,ci_low,ci_high\nT1 (Central Incisor),4,92.5,90,95\nT2,4,88,84,91\n");
    const std::string out = tmp_file("bars.svg");
    emit_plot(csv, PlotKind::kGroupBars, out);
    const std::string svg = slurp(out);
    EXPECT_EQ(count_occurrences(svg, "<rect x="), 2u);
    EXPECT_GE(count_occurrences(svg, "<line"), 4u);  // axes + whiskers

    const std::string no_mean = tmp_file("nomean.csv", "label,value\na,1\n");
    EXPECT_THROW(emit_plot(no_mean, PlotKind::kGroupBars, tmp_file("never4.svg")), FormatError);
}
