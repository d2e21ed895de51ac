#include "fzrisk/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"

namespace fzrisk {

AlphaLevel::AlphaLevel(double value) : value_(value) {
    if (!(value > 0.0 && value < 0.5))
        throw ValidationError(strprintf("alpha=%g outside (0, 0.5)", value));
}

void validate(const ReturnSeries& series) {
    if (!series.dates.empty() && series.dates.size() != series.values.size())
        throw ValidationError(strprintf(
            "return series has %zu dates for %zu values",
            series.dates.size(), series.values.size()));
    for (size_t t = 0; t < series.values.size(); ++t)
        if (!std::isfinite(series.values[t]))
            throw ValidationError(strprintf("non-finite return at row %zu", t));
}

void validate(const RiskPath& path) {
    if (path.v.size() != path.e.size())
        throw ValidationError(strprintf("risk path has %zu v values for %zu e values",
                                        path.v.size(), path.e.size()));
    for (size_t t = 0; t < path.v.size(); ++t) {
        double v = path.v[t];
        double e = path.e[t];
        if (!std::isfinite(v) || !std::isfinite(e))
            throw ValidationError(strprintf("non-finite risk path entry at t=%zu", t));
        if (!(v < 0.0))
            throw ValidationError(strprintf("v=%g not negative at t=%zu", v, t));
        if (!(e <= v))
            throw ValidationError(strprintf("e=%g exceeds v=%g at t=%zu", e, v, t));
    }
}

SampleSplit split(const ReturnSeries& series, size_t in_sample_end) {
    validate(series);
    size_t n = series.values.size();
    if (in_sample_end == 0 || in_sample_end >= n)
        throw ValidationError(strprintf(
            "split point %zu outside (0, %zu)", in_sample_end, n));
    SampleSplit out;
    out.in_sample_end = in_sample_end;
    out.in_sample.values.assign(series.values.begin(),
                                series.values.begin() + static_cast<long>(in_sample_end));
    out.out_sample.values.assign(series.values.begin() + static_cast<long>(in_sample_end),
                                 series.values.end());
    if (!series.dates.empty()) {
        out.in_sample.dates.assign(series.dates.begin(),
                                   series.dates.begin() + static_cast<long>(in_sample_end));
        out.out_sample.dates.assign(series.dates.begin() + static_cast<long>(in_sample_end),
                                    series.dates.end());
    }
    return out;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

std::string strip(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

ReturnSeries load_returns(const std::string& path, const std::string& column,
                          ReturnScale scale) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open returns file: " + path);

    // '#'-prefixed lines are comments (tools write provenance there)
    std::string line;
    do {
        if (!std::getline(in, line))
            throw ParseError("empty returns file: " + path);
    } while (!strip(line).empty() && strip(line)[0] == '#');

    auto header = split_csv_line(line);
    long value_col = -1;
    long date_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        std::string name = strip(header[i]);
        if (name == column)
            value_col = static_cast<long>(i);
        else if (lower(name) == "date" && date_col < 0)
            date_col = static_cast<long>(i);
    }
    if (value_col < 0)
        throw ParseError(strprintf("column \"%s\" not found in %s",
                                   column.c_str(), path.c_str()));

    ReturnSeries series;
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (strip(line).empty() || strip(line)[0] == '#')
            continue;
        auto cells = split_csv_line(line);
        if (static_cast<size_t>(value_col) >= cells.size())
            throw ParseError(strprintf("row %zu of %s is missing column \"%s\"",
                                       row, path.c_str(), column.c_str()));
        std::string cell = strip(cells[static_cast<size_t>(value_col)]);
        double x = 0.0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
            throw ParseError(strprintf("row %zu of %s: cannot parse \"%s\" as a number",
                                       row, path.c_str(), cell.c_str()));
        if (!std::isfinite(x))
            throw ParseError(strprintf("row %zu of %s: non-finite return", row, path.c_str()));
        if (scale == ReturnScale::Decimal)
            x *= 100.0;
        series.values.push_back(x);
        if (date_col >= 0 && static_cast<size_t>(date_col) < cells.size())
            series.dates.push_back(strip(cells[static_cast<size_t>(date_col)]));
    }
    if (series.values.empty())
        throw ParseError("no data rows in " + path);
    if (!series.dates.empty() && series.dates.size() != series.values.size())
        throw ParseError("date column is incomplete in " + path);
    return series;
}

void write_returns(const std::string& path, const ReturnSeries& series,
                   const std::string& comment) {
    validate(series);
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write returns file: " + path);
    if (!comment.empty())
        out << "# " << comment << '\n';
    bool dated = !series.dates.empty();
    out << (dated ? "date,return\n" : "return\n");
    for (size_t t = 0; t < series.values.size(); ++t) {
        if (dated)
            out << series.dates[t] << ',';
        out << format_roundtrip(series.values[t]) << '\n';
    }
    if (!out)
        throw IoError("failed writing returns file: " + path);
}

void write_risk_path(const std::string& path, const RiskPath& risk,
                     std::span<const std::string> dates,
                     const std::string& comment) {
    validate(risk);
    if (!dates.empty() && dates.size() != risk.size())
        throw ValidationError("date labels do not match risk path length");
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write risk path file: " + path);
    if (!comment.empty())
        out << "# " << comment << '\n';
    out << (dates.empty() ? "v,e\n" : "date,v,e\n");
    for (size_t t = 0; t < risk.size(); ++t) {
        if (!dates.empty())
            out << dates[t] << ',';
        out << format_roundtrip(risk.v[t]) << ',' << format_roundtrip(risk.e[t]) << '\n';
    }
    if (!out)
        throw IoError("failed writing risk path file: " + path);
}

} // namespace fzrisk
