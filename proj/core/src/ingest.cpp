#include "rulkit/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

double parse_field(const std::string& field, std::size_t row) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(end[-1]))) --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw MalformedRecordError("row " + std::to_string(row + 1) + ": bad numeric field '" +
                                   field + "'");
    return value;
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace

VibrationRecord parse_record(std::istream& in) {
    VibrationRecord rec;
    rec.horizontal.reserve(kSamplesPerRecord);
    rec.vertical.reserve(kSamplesPerRecord);

    std::string line;
    char delim = ',';
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row == 0) delim = line.find(';') != std::string::npos ? ';' : ',';
        const auto fields = split(line, delim);
        if (fields.size() != 6)
            throw MalformedRecordError("row " + std::to_string(row + 1) + ": expected 6 fields, got " +
                                       std::to_string(fields.size()));
        const double hour = parse_field(fields[0], row);
        const double minute = parse_field(fields[1], row);
        const double second = parse_field(fields[2], row);
        const double micros = parse_field(fields[3], row);
        if (row == 0) rec.timestamp = hour * 3600.0 + minute * 60.0 + second + micros * 1e-6;
        rec.horizontal.push_back(parse_field(fields[4], row));
        rec.vertical.push_back(parse_field(fields[5], row));
        ++row;
    }
    if (row != kSamplesPerRecord)
        throw MalformedRecordError("expected " + std::to_string(kSamplesPerRecord) +
                                   " rows, got " + std::to_string(row));
    return rec;
}

VibrationRecord load_record(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open record: " + path.string());
    try {
        return parse_record(in);
    } catch (const MalformedRecordError& e) {
        throw MalformedRecordError(path.string() + ": " + e.what());
    }
}

void serialize_record(std::ostream& out, const VibrationRecord& rec, char delim) {
    if (rec.horizontal.size() != kSamplesPerRecord || rec.vertical.size() != kSamplesPerRecord)
        throw MalformedRecordError("serialize_record: record must hold " +
                                   std::to_string(kSamplesPerRecord) + " samples per channel");
    std::ostringstream buf;
    buf.precision(17);
    for (std::size_t i = 0; i < kSamplesPerRecord; ++i) {
        const double t = rec.timestamp + static_cast<double>(i) / kSampleRateHz;
        const int hour = static_cast<int>(t / 3600.0);
        const int minute = static_cast<int>((t - hour * 3600.0) / 60.0);
        const double sec_frac = t - hour * 3600.0 - minute * 60.0;
        const int second = static_cast<int>(sec_frac);
        const double micros = std::round((sec_frac - second) * 1e6);
        buf << hour << delim << minute << delim << second << delim << micros << delim
            << rec.horizontal[i] << delim << rec.vertical[i] << '\n';
    }
    out << buf.str();
}

std::vector<VibrationRecord> load_bearing(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("not a bearing directory: " + dir.string());

    // Collect acc*.csv files keyed by their numeric suffix.
    std::vector<std::pair<long long, std::filesystem::path>> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("acc", 0) != 0) continue;
        if (entry.path().extension() != ".csv") continue;
        const std::string stem = entry.path().stem().string();
        std::size_t digits_start = stem.size();
        while (digits_start > 0 && std::isdigit(static_cast<unsigned char>(stem[digits_start - 1])))
            --digits_start;
        if (digits_start == stem.size()) continue;  // no numeric suffix
        files.emplace_back(std::stoll(stem.substr(digits_start)), entry.path());
    }
    if (files.empty()) throw NoDataError("no acc*.csv records in " + dir.string());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<VibrationRecord> records;
    records.reserve(files.size());
    for (const auto& [num, path] : files) records.push_back(load_record(path));
    return records;
}

NormStats fit_norm_stats(const std::vector<const VibrationRecord*>& records) {
    if (records.empty()) throw NoDataError("fit_norm_stats: no records");
    auto channel_stats = [&](auto select) {
        std::size_t n = 0;
        double sum = 0.0;
        for (const auto* rec : records)
            for (double v : select(*rec)) {
                sum += v;
                ++n;
            }
        if (n == 0) throw NoDataError("fit_norm_stats: empty channel");
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (const auto* rec : records)
            for (double v : select(*rec)) {
                const double d = v - mean;
                sq += d * d;
            }
        const double stddev = std::sqrt(sq / static_cast<double>(n));
        if (stddev == 0.0) throw DegenerateDataError("fit_norm_stats: constant channel");
        return ChannelStats{mean, stddev};
    };
    NormStats stats;
    stats.horizontal =
        channel_stats([](const VibrationRecord& r) -> const std::vector<double>& {
            return r.horizontal;
        });
    stats.vertical = channel_stats(
        [](const VibrationRecord& r) -> const std::vector<double>& { return r.vertical; });
    return stats;
}

NormStats fit_norm_stats(const std::vector<VibrationRecord>& records) {
    std::vector<const VibrationRecord*> ptrs;
    ptrs.reserve(records.size());
    for (const auto& r : records) ptrs.push_back(&r);
    return fit_norm_stats(ptrs);
}

VibrationRecord normalize(const VibrationRecord& rec, const NormStats& stats) {
    VibrationRecord out;
    out.timestamp = rec.timestamp;
    out.horizontal.reserve(rec.horizontal.size());
    out.vertical.reserve(rec.vertical.size());
    for (double v : rec.horizontal)
        out.horizontal.push_back((v - stats.horizontal.mean) / stats.horizontal.stddev);
    for (double v : rec.vertical)
        out.vertical.push_back((v - stats.vertical.mean) / stats.vertical.stddev);
    return out;
}

}  // namespace rulkit
