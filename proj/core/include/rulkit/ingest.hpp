#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rulkit {

inline constexpr std::size_t kSamplesPerRecord = 2560;
inline constexpr double kSampleRateHz = 25600.0;

// One 0.1 s two-channel vibration snapshot. The timestamp is taken from the
// first row of the source file, in seconds since midnight.
struct VibrationRecord {
    double timestamp = 0.0;
    std::vector<double> horizontal;
    std::vector<double> vertical;
};

// A named run-to-failure sequence of records.
struct BearingRun {
    std::string name;
    std::vector<VibrationRecord> records;
};

// Per-channel normalization statistics (population standard deviation).
struct ChannelStats {
    double mean = 0.0;
    double stddev = 1.0;
};

struct NormStats {
    ChannelStats horizontal;
    ChannelStats vertical;
};

// Parses one record file: kSamplesPerRecord rows of
// "hour,min,sec,usec,horizontal,vertical", comma or semicolon delimited
// (detected from the first line). Throws MalformedRecordError on anything
// else.
VibrationRecord parse_record(std::istream& in);
VibrationRecord load_record(const std::filesystem::path& path);

// Writes a record in the same six-column layout, with per-row timestamps
// advancing at the sampling rate.
void serialize_record(std::ostream& out, const VibrationRecord& rec, char delim = ',');

// Loads every "acc*.csv" in a bearing directory, ordered by the numeric file
// suffix. Throws NoDataError when the directory holds no record files.
std::vector<VibrationRecord> load_bearing(const std::filesystem::path& dir);

NormStats fit_norm_stats(const std::vector<const VibrationRecord*>& records);
NormStats fit_norm_stats(const std::vector<VibrationRecord>& records);

VibrationRecord normalize(const VibrationRecord& rec, const NormStats& stats);

}  // namespace rulkit
