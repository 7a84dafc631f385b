#include "storeq/csv_io.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "storeq/errors.hpp"

namespace storeq {

namespace {

// Seconds since epoch for an ISO-8601 timestamp, treated as wall-clock time
// without zone conversion (only hour differences matter here).
long long parse_timestamp(const std::string& text, std::size_t line_no) {
    std::tm tm{};
    int year, month, day, hour, minute = 0, second = 0;
    char sep;
    int consumed = 0;
    const int got = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d%n", &year, &month, &day, &sep,
                                &hour, &minute, &second, &consumed);
    if (got < 6 || (sep != 'T' && sep != ' ') ||
        static_cast<std::size_t>(consumed) != text.size()) {
        // retry without seconds
        consumed = 0;
        const int got2 = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d%n", &year, &month, &day, &sep,
                                     &hour, &minute, &consumed);
        second = 0;
        if (got2 < 6 || (sep != 'T' && sep != ' ') ||
            static_cast<std::size_t>(consumed) != text.size()) {
            std::ostringstream msg;
            msg << "line " << line_no << ": malformed timestamp '" << text << "'";
            throw DataError(msg.str());
        }
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour < 0 || hour > 23 || minute < 0 ||
        minute > 59 || second < 0 || second > 60) {
        std::ostringstream msg;
        msg << "line " << line_no << ": timestamp fields out of range in '" << text << "'";
        throw DataError(msg.str());
    }
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = minute;
    tm.tm_sec = second;
    return static_cast<long long>(timegm(&tm));
}

std::string format_timestamp(long long epoch) {
    std::time_t t = static_cast<std::time_t>(epoch);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[72];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

double parse_value(const std::string& text, std::size_t line_no) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || text.empty()) {
        std::ostringstream msg;
        msg << "line " << line_no << ": malformed value '" << text << "'";
        throw DataError(msg.str());
    }
    return v;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

HourlySeries read_hourly_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    HourlySeries out;
    std::string line;
    std::size_t line_no = 0;
    long long prev_epoch = 0;
    bool have_prev = false;
    std::vector<std::string> missing;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string row = trim(line);
        if (row.empty()) continue;
        if (line_no == 1) continue;  // header row is mandatory
        const auto comma = row.find(',');
        if (comma == std::string::npos) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected 'timestamp,value'";
            throw DataError(msg.str());
        }
        const std::string ts = trim(row.substr(0, comma));
        const std::string val = trim(row.substr(comma + 1));
        const long long epoch = parse_timestamp(ts, line_no);
        if (epoch % 3600 != 0) {
            std::ostringstream msg;
            msg << "line " << line_no << ": timestamp '" << ts << "' is not on the hour";
            throw DataError(msg.str());
        }
        if (have_prev) {
            if (epoch <= prev_epoch) {
                std::ostringstream msg;
                msg << "line " << line_no << ": timestamps not strictly increasing at '" << ts
                    << "'";
                throw DataError(msg.str());
            }
            for (long long e = prev_epoch + 3600; e < epoch; e += 3600) {
                if (missing.size() < 24) missing.push_back(format_timestamp(e));
            }
        } else {
            out.first_timestamp = ts;
        }
        out.values.push_back(parse_value(val, line_no));
        prev_epoch = epoch;
        have_prev = true;
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "gaps in hourly series; missing hours:";
        for (const std::string& m : missing) msg << ' ' << m;
        if (missing.size() == 24) msg << " ...";
        throw DataError(msg.str());
    }
    if (out.values.empty()) throw DataError("'" + path + "' holds no data rows");
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
    if (header.size() != columns.size())
        throw ConfigError("write_csv: header and column counts differ");
    if (columns.empty()) throw ConfigError("write_csv: no columns");
    const std::size_t rows = columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != rows) throw ConfigError("write_csv: ragged columns");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c) out << ',';
        out << header[c];
    }
    out << '\n';
    char buf[40];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c) out << ',';
            if (c == 0) std::snprintf(buf, sizeof(buf), "%.6f", columns[c][r]);
            else std::snprintf(buf, sizeof(buf), "%.10g", columns[c][r]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace storeq
