#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fzrisk {

// ====================== basic types ======================

// Tail probability level. Risk is measured in the left tail, so the
// level must lie strictly between 0 and 0.5.
class AlphaLevel {
public:
    explicit AlphaLevel(double value);
    double value() const { return value_; }

private:
    double value_;
};

// A series of returns in percent units (a 1% loss is -1.0), with
// optional ISO date labels of the same length.
struct ReturnSeries {
    std::vector<double> values;
    std::vector<std::string> dates; // empty, or one label per value
};

// Validates the ReturnSeries contract: finite values, dates either
// empty or matching values in length.
void validate(const ReturnSeries& series);

// Paired per-period forecasts of the alpha-quantile (v) and the tail
// mean below it (e). Both are negative and e_t <= v_t at every t.
struct RiskPath {
    std::vector<double> v;
    std::vector<double> e;

    size_t size() const { return v.size(); }
};

// Validates the RiskPath ordering and sign contract, reporting the
// first offending index.
void validate(const RiskPath& path);

// In-sample / out-of-sample partition of a return series.
struct SampleSplit {
    ReturnSeries in_sample;
    ReturnSeries out_sample;
    size_t in_sample_end = 0; // number of in-sample observations
};

// Splits a series so that the first in_sample_end observations are
// in-sample. Requires 0 < in_sample_end < series length.
SampleSplit split(const ReturnSeries& series, size_t in_sample_end);

// ====================== CSV I/O ======================

// Unit convention of an input file. Percent data is used as-is;
// decimal data is multiplied by 100 on load.
enum class ReturnScale { Percent, Decimal };

// Loads a return series from a headered CSV file. The return column is
// selected by name; a column named "date" (case-insensitive) is picked
// up as labels when present. Lines starting with '#' are skipped.
ReturnSeries load_returns(const std::string& path,
                          const std::string& column = "return",
                          ReturnScale scale = ReturnScale::Percent);

// Writes a return series as CSV using shortest round-trip number
// formatting, so that load_returns recovers the values bit-exactly.
// A nonempty comment is emitted as a leading "# ..." line.
void write_returns(const std::string& path, const ReturnSeries& series,
                   const std::string& comment = "");

// Writes a risk path as CSV with columns v,e (plus a leading date
// column when labels are supplied).
void write_risk_path(const std::string& path, const RiskPath& risk,
                     std::span<const std::string> dates = {},
                     const std::string& comment = "");

} // namespace fzrisk
