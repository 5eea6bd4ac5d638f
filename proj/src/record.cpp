#include "asrl/record.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "asrl/errors.hpp"

namespace asrl {

void write_log_header(std::ostream& os) { os << kLogCsvHeader << "\n"; }

void write_log_row(std::ostream& os, const TrainRecord& rec) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%llu",
                  static_cast<unsigned long long>(rec.g_iter), rec.j_d, rec.j_g, rec.l1_metric,
                  static_cast<unsigned long long>(rec.wall_ms));
    os << buf << "\n";
}

namespace {

[[noreturn]] void bad_line(std::size_t lineno, const std::string& why) {
    throw IoError("log.csv line " + std::to_string(lineno) + ": " + why);
}

}  // namespace

std::vector<TrainRecord> read_log_csv(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) bad_line(1, "missing header");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kLogCsvHeader)
        bad_line(lineno, "expected header \"" + std::string(kLogCsvHeader) + "\"");

    std::vector<TrainRecord> out;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        TrainRecord rec;
        unsigned long long iter = 0, wall = 0;
        char tail = 0;
        const int got = std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%llu%c", &iter, &rec.j_d,
                                    &rec.j_g, &rec.l1_metric, &wall, &tail);
        if (got != 5) bad_line(lineno, "want 5 comma-separated fields, got \"" + line + "\"");
        rec.g_iter = iter;
        rec.wall_ms = wall;
        out.push_back(rec);
    }
    return out;
}

}  // namespace asrl
