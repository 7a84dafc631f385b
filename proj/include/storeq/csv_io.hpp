#pragma once

#include <string>
#include <vector>

namespace storeq {

struct HourlySeries {
    std::string first_timestamp;
    std::vector<double> values;  // one per hour, no gaps
};

// Strict ingestion of an hourly two-column CSV (timestamp, value). The
// timestamp is ISO-8601 ("YYYY-MM-DDTHH:MM:SS", 'T' or space separator,
// seconds optional); consecutive rows must be exactly one hour apart. Gaps
// raise a DataError listing the missing hours.
HourlySeries read_hourly_csv(const std::string& path);

// Plot-ready CSV: header row, '.' decimal, '\n' newlines; the first column
// is formatted with 6 decimals (time in hours), the rest with 10 significant
// digits.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

}  // namespace storeq
