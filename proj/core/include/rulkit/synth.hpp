#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rulkit/ingest.hpp"

namespace rulkit {

// Synthetic run-to-failure corpus: broadband noise plus a characteristic tone,
// with amplitude growing quadratically toward end of life. Each bearing gets
// its own seeded jitter of tone frequency and noise level.
struct CorpusSpec {
    std::size_t bearings = 7;
    std::size_t records_per_bearing = 200;
    std::size_t condition = 1;  // names become Bearing<condition>_<i>
    double sample_rate = 25600.0;
    double noise_std = 0.3;
    double tone_freq = 1600.0;
    double tone_amp = 0.5;
    double growth = 3.0;  // amplitude multiplier reaches 1 + growth at the end
    std::uint64_t seed = 15;
};

std::vector<BearingRun> make_corpus(const CorpusSpec& spec);

// Writes the corpus in the on-disk dataset layout:
// <root>/Bearing<c>_<i>/acc_00001.csv ...
void write_corpus(const std::filesystem::path& root, const std::vector<BearingRun>& corpus);

}  // namespace rulkit
