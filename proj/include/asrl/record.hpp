#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace asrl {

// One training-log row, emitted every log_every generator iterations.
struct TrainRecord {
    std::uint64_t g_iter = 0;
    double j_d = 0.0;
    double j_g = 0.0;
    double l1_metric = 0.0;
    std::uint64_t wall_ms = 0;
};

inline constexpr const char* kLogCsvHeader = "g_iter,j_d,j_g,l1_metric,wall_ms";

// Doubles are printed with %.17g so a parsed log reproduces the exact values
// and equal runs produce byte-identical files.
void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, const TrainRecord& rec);

// Throws IoError naming the 1-based line of the first malformed row (or a
// wrong header).
std::vector<TrainRecord> read_log_csv(std::istream& is);

}  // namespace asrl
